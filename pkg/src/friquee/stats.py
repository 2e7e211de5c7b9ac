"""Parametric fits (GGD, AGGD, wrapped Cauchy) and sample statistics.

All estimators use moment matching. The GGD/AGGD shape is recovered by
looking up the generalized moment ratio in a precomputed table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

SHAPE_MIN = 0.05
SHAPE_MAX = 10.0
SHAPE_STEP = 0.001

# Samples whose RMS (or std) falls below this are treated as numerically zero.
NUMERIC_FLOOR = 1e-9


class DegenerateSample(ValueError):
    """The sample carries no usable spread (empty, constant, zero or non-finite)."""


class OneSidedSample(DegenerateSample):
    """AGGD fit needs at least one strictly negative and one strictly positive value."""


def _ratio(shape):
    # rho(a) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)), via log-gamma to avoid overflow
    shape = np.asarray(shape, dtype=np.float64)
    return np.exp(
        2.0 * special.gammaln(2.0 / shape)
        - special.gammaln(1.0 / shape)
        - special.gammaln(3.0 / shape)
    )


_SHAPES = np.round(np.arange(SHAPE_MIN, SHAPE_MAX + SHAPE_STEP / 2, SHAPE_STEP), 6)
_RATIOS = _ratio(_SHAPES)


def moment_ratio(shape: float) -> float:
    """The GGD ratio E[|x|]^2 / E[x^2] for a given shape."""
    return float(_ratio(shape))


def invert_ratio(r: float) -> tuple[float, bool]:
    """Nearest table shape for ratio ``r``; second item flags endpoint saturation."""
    if not np.isfinite(r):
        raise DegenerateSample("moment ratio is not finite")
    if r <= _RATIOS[0]:
        return float(_SHAPES[0]), True
    if r >= _RATIOS[-1]:
        return float(_SHAPES[-1]), True
    i = int(np.searchsorted(_RATIOS, r))
    if r - _RATIOS[i - 1] <= _RATIOS[i] - r:
        i -= 1
    return float(_SHAPES[i]), False


def _as_sample(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise DegenerateSample("empty sample")
    if not np.all(np.isfinite(x)):
        raise DegenerateSample("sample contains non-finite values")
    return x


@dataclass(frozen=True)
class GgdFit:
    alpha: float
    sigma: float
    saturated: bool = False

    @property
    def variance(self) -> float:
        return self.sigma**2

    @property
    def beta(self) -> float:
        return ggd_beta(self.alpha, self.sigma)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        b = self.beta
        a = self.alpha
        return a / (2.0 * b * special.gamma(1.0 / a)) * np.exp(-((np.abs(x) / b) ** a))

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        a = self.alpha
        half = 0.5 * special.gammainc(1.0 / a, (np.abs(x) / self.beta) ** a)
        return 0.5 + np.sign(x) * half


@dataclass(frozen=True)
class AggdFit:
    nu: float
    eta: float
    sigma_l: float
    sigma_r: float
    saturated: bool = False

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        bl = ggd_beta(self.nu, self.sigma_l)
        br = ggd_beta(self.nu, self.sigma_r)
        c = self.nu / ((bl + br) * special.gamma(1.0 / self.nu))
        scale = np.where(x < 0, bl, br)
        return c * np.exp(-((np.abs(x) / scale) ** self.nu))


@dataclass(frozen=True)
class WrappedCauchyFit:
    location: float
    concentration: float

    def pdf(self, theta):
        rho = self.concentration
        theta = np.asarray(theta, dtype=np.float64)
        return (1 - rho**2) / (2 * np.pi * (1 + rho**2 - 2 * rho * np.cos(theta - self.location)))


@dataclass(frozen=True)
class SampleStats:
    mean: float
    std: float
    skewness: float
    kurtosis: float
    degenerate: bool = False


def ggd_beta(shape: float, sigma: float) -> float:
    """Scale of a GGD with standard deviation ``sigma``."""
    return float(sigma * np.sqrt(special.gamma(1.0 / shape) / special.gamma(3.0 / shape)))


def fit_ggd(samples) -> GgdFit:
    """Zero-mean GGD fit by matching E|x| and E[x^2]."""
    x = _as_sample(samples)
    second = float(np.mean(x * x))
    if np.sqrt(second) < NUMERIC_FLOOR:
        raise DegenerateSample("sample is numerically zero")
    first = float(np.mean(np.abs(x)))
    alpha, saturated = invert_ratio(first * first / second)
    return GgdFit(alpha=alpha, sigma=float(np.sqrt(second)), saturated=saturated)


def fit_aggd(samples) -> AggdFit:
    """Zero-mode AGGD fit; zeros belong to neither side."""
    x = _as_sample(samples)
    neg = x[x < 0]
    pos = x[x > 0]
    if neg.size == 0 or pos.size == 0:
        raise OneSidedSample(f"sample has {neg.size} negative and {pos.size} positive values")
    sigma_l = float(np.sqrt(np.mean(neg * neg)))
    sigma_r = float(np.sqrt(np.mean(pos * pos)))
    if max(sigma_l, sigma_r) < NUMERIC_FLOOR:
        raise OneSidedSample("sample is numerically zero")
    gamma_hat = sigma_l / sigma_r
    second = float(np.mean(x * x))
    first = float(np.mean(np.abs(x)))
    r_hat = first * first / second
    big_r = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    nu, saturated = invert_ratio(big_r)
    bl = ggd_beta(nu, sigma_l)
    br = ggd_beta(nu, sigma_r)
    eta = (br - bl) * float(np.exp(special.gammaln(2.0 / nu) - special.gammaln(1.0 / nu)))
    return AggdFit(nu=nu, eta=eta, sigma_l=sigma_l, sigma_r=sigma_r, saturated=saturated)


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def fit_wrapped_cauchy(angles) -> WrappedCauchyFit:
    """Location from the mean resultant direction; concentration equals its length."""
    theta = _as_sample(angles)
    c = float(np.mean(np.cos(theta)))
    s = float(np.mean(np.sin(theta)))
    r = min(np.hypot(c, s), 1.0 - 1e-12)
    return WrappedCauchyFit(location=float(wrap_angle(np.arctan2(s, c))), concentration=float(r))


def sample_stats(samples) -> SampleStats:
    """Mean, std, skewness and non-excess kurtosis from central moments."""
    x = _as_sample(samples)
    if x.size < 4:
        raise DegenerateSample("need at least 4 samples")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    std = np.sqrt(m2)
    if std < NUMERIC_FLOOR * max(1.0, abs(mean)):
        return SampleStats(mean=mean, std=float(std), skewness=0.0, kurtosis=0.0, degenerate=True)
    d2 = d * d
    m3 = float(np.mean(d2 * d))
    m4 = float(np.mean(d2 * d2))
    return SampleStats(mean=mean, std=float(std), skewness=m3 / m2**1.5, kurtosis=m4 / (m2 * m2))


GOODNESS_BINS = 99


def ggd_goodness(samples, fit: GgdFit, bins: int = GOODNESS_BINS) -> float:
    """One minus the total-variation distance between the binned sample and the fit.

    Bins span [-4 sigma, 4 sigma]; mass outside that range is compared as one
    extra cell so the score stays in [0, 1].
    """
    x = _as_sample(samples)
    if fit.sigma <= 0 or fit.alpha <= 0:
        raise DegenerateSample("invalid fit")
    edges = np.linspace(-4 * fit.sigma, 4 * fit.sigma, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    emp = counts / x.size
    model = np.diff(fit.cdf(edges))
    l1 = np.sum(np.abs(emp - model)) + abs((1.0 - emp.sum()) - (1.0 - model.sum()))
    return float(np.clip(1.0 - 0.5 * l1, 0.0, 1.0))
