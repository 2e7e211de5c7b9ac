"""Complex steerable pyramid and the 82-value magnitude/phase statistics block.

The pyramid is built in the Fourier domain with polar-separable filters:
raised-cosine radial windows in log2 frequency and cos^(K-1) angular lobes
restricted to one half-plane, so each oriented subband is analytic
(complex-valued). Lowpass bands are decimated by cropping the spectrum; the
crop is rescaled so coefficient amplitudes (and mean-square power) are
comparable across scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .maps import TooSmall, gaussian_1d, separable
from .stats import NUMERIC_FLOOR, DegenerateSample, fit_ggd, fit_wrapped_cauchy

N_SCALES = 3
N_ORIENTATIONS = 6
MIN_SIZE = 64
BLOCK_SIZE = 82

# Subband coefficients are smooth, so energy pooling needs a wider window than
# the 7x7 pixel-domain one; narrower pools saturate the GGD shape.
POOL_RADIUS = 12
POOL_STD = 4.0


@dataclass(frozen=True)
class ComplexPyramid:
    subbands: list[list[np.ndarray]]  # [scale][orientation], complex
    highpass: np.ndarray
    lowpass: np.ndarray

    def band_energy(self, scale: int, orientation: int) -> float:
        """Mean-square power of the real part of a subband."""
        c = self.subbands[scale][orientation]
        return 0.5 * float(np.mean(np.abs(c) ** 2))

    def total_energy(self) -> float:
        bands = sum(
            self.band_energy(s, k) for s in range(len(self.subbands)) for k in range(len(self.subbands[s]))
        )
        return bands + float(np.mean(self.highpass**2)) + float(np.mean(self.lowpass**2))


def _polar_grid(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """log2 radius (Nyquist = 0) and angle on an fftshift-ed grid."""
    h, w = shape
    y = (np.arange(h) - h // 2) / (h / 2)
    x = (np.arange(w) - w // 2) / (w / 2)
    xx, yy = np.meshgrid(x, y)
    rad = np.hypot(xx, yy)
    rad[h // 2, w // 2] = rad[h // 2, w // 2 - 1] if w > 1 else 1.0
    return np.log2(rad), np.arctan2(yy, xx)


def _raised_cosine(log_rad: np.ndarray, edge: float) -> tuple[np.ndarray, np.ndarray]:
    """(high, low) windows with a one-octave transition ending at ``edge``; high^2 + low^2 = 1."""
    t = np.clip(log_rad - edge + 1.0, 0.0, 1.0)
    return np.sin(0.5 * np.pi * t), np.cos(0.5 * np.pi * t)


def _angle_masks(angle: np.ndarray, n_orient: int) -> list[np.ndarray]:
    order = n_orient - 1
    const = (2.0 ** (2 * order)) * factorial(order) ** 2 / (n_orient * factorial(2 * order))
    masks = []
    for b in range(n_orient):
        d = np.mod(angle - np.pi * b / n_orient + np.pi, 2 * np.pi) - np.pi
        masks.append(2.0 * np.sqrt(const) * np.cos(d) ** order * (np.abs(d) < np.pi / 2))
    return masks


def _crop_centre(dft: np.ndarray) -> np.ndarray:
    h, w = dft.shape
    lh, lw = (h + 1) // 2, (w + 1) // 2
    r0 = h // 2 - lh // 2
    c0 = w // 2 - lw // 2
    return dft[r0 : r0 + lh, c0 : c0 + lw]


def _ifft(dft_shifted: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.ifftshift(dft_shifted))


def build_pyramid(plane, n_scales: int = N_SCALES, n_orient: int = N_ORIENTATIONS) -> ComplexPyramid:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2D plane, got shape {plane.shape}")
    if min(plane.shape) < MIN_SIZE:
        raise TooSmall(f"pyramid needs at least {MIN_SIZE}x{MIN_SIZE}, got {plane.shape}")

    dft = np.fft.fftshift(np.fft.fft2(plane))
    log_rad, angle = _polar_grid(plane.shape)
    hi0, lo0 = _raised_cosine(log_rad, 0.0)
    highpass = _ifft(dft * hi0).real
    lodft = dft * lo0

    lift = (-1j) ** (n_orient - 1)
    subbands = []
    for s in range(n_scales):
        edge = -1.0 - s
        himask, lomask = _raised_cosine(log_rad, edge)
        dc = (log_rad.shape[0] // 2, log_rad.shape[1] // 2)
        bands = []
        for amask in _angle_masks(angle, n_orient):
            banddft = lift * lodft * amask * himask
            banddft[dc] = 0.0
            bands.append(_ifft(banddft))
        subbands.append(bands)

        lodft = lodft * lomask
        n_before = lodft.size
        lodft = _crop_centre(lodft)
        lodft = lodft * (lodft.size / n_before)
        log_rad = _crop_centre(log_rad)
        angle = _crop_centre(angle)

    lowpass = _ifft(lodft).real
    return ComplexPyramid(subbands=subbands, highpass=highpass, lowpass=lowpass)


def slot_names() -> list[str]:
    """Names of the 82 block entries, in output order."""
    names = []
    for s in range(N_SCALES):
        for k in range(N_ORIENTATIONS):
            names += [f"s{s}.o{k}.norm_alpha", f"s{s}.o{k}.norm_scale"]
    names += [f"s{s}.o{k}.phase_conc" for s in range(N_SCALES) for k in range(N_ORIENTATIONS)]
    names += [f"s{s}.o{k}.log_energy" for s in range(N_SCALES) for k in range(N_ORIENTATIONS)]
    names += [f"s{s}.entropy" for s in range(N_SCALES)]
    names += [f"s{s}.mag_corr" for s in range(N_SCALES)]
    names += ["hp_fraction"]
    names += [f"pc{s}{s + 1}.phase_conc" for s in range(N_SCALES - 1)]
    names += ["lp_fraction"]
    assert len(names) == BLOCK_SIZE
    return names


@dataclass
class SteerableBlock:
    values: np.ndarray
    names: list[str]
    degenerate: list[str] = field(default_factory=list)


def _is_flat(c: np.ndarray) -> bool:
    return float(np.sqrt(np.mean(np.abs(c) ** 2))) < NUMERIC_FLOOR


def _normalized_components(c: np.ndarray) -> np.ndarray:
    """Real and imaginary parts of coefficients divided by the pooled local RMS magnitude."""
    energy = np.abs(c) ** 2
    local = separable(energy, gaussian_1d(POOL_RADIUS, POOL_STD))
    z = c / np.sqrt(local + 1e-3 * float(np.mean(energy)))
    return np.concatenate([z.real.ravel(), z.imag.ravel()])


def _mean_pairwise_corr(mags: list[np.ndarray]) -> float | None:
    flat = [m.ravel() - m.mean() for m in mags]
    norms = [np.sqrt(np.dot(f, f)) for f in flat]
    vals = []
    for i in range(len(flat)):
        for j in range(i + 1, len(flat)):
            if norms[i] > NUMERIC_FLOOR and norms[j] > NUMERIC_FLOOR:
                vals.append(float(np.dot(flat[i], flat[j]) / (norms[i] * norms[j])))
    return float(np.mean(vals)) if vals else None


def steerable_features(plane) -> SteerableBlock:
    """82 magnitude/phase statistics; rejected estimators leave a 0 and are listed as degenerate."""
    plane = np.asarray(plane, dtype=np.float64)
    pyr = build_pyramid(plane - plane.mean())
    out: dict[str, float] = {}
    degenerate: list[str] = []

    def put(name: str, value: float | None) -> None:
        if value is None or not np.isfinite(value):
            out[name] = 0.0
            degenerate.append(name)
        else:
            out[name] = float(value)

    for s in range(N_SCALES):
        for k in range(N_ORIENTATIONS):
            c = pyr.subbands[s][k]
            flat = _is_flat(c)
            if flat:
                put(f"s{s}.o{k}.norm_alpha", None)
                put(f"s{s}.o{k}.norm_scale", None)
                put(f"s{s}.o{k}.phase_conc", None)
                put(f"s{s}.o{k}.log_energy", None)
                continue
            try:
                fit = fit_ggd(_normalized_components(c))
                put(f"s{s}.o{k}.norm_alpha", fit.alpha)
                put(f"s{s}.o{k}.norm_scale", fit.sigma)
            except DegenerateSample:
                put(f"s{s}.o{k}.norm_alpha", None)
                put(f"s{s}.o{k}.norm_scale", None)
            rel = np.angle(c[:, 1:] * np.conj(c[:, :-1]))
            put(f"s{s}.o{k}.phase_conc", fit_wrapped_cauchy(rel).concentration)
            put(f"s{s}.o{k}.log_energy", np.log(pyr.band_energy(s, k)))

    energies = np.array([[pyr.band_energy(s, k) for k in range(N_ORIENTATIONS)] for s in range(N_SCALES)])
    for s in range(N_SCALES):
        tot = energies[s].sum()
        if tot < NUMERIC_FLOOR**2:
            put(f"s{s}.entropy", None)
        else:
            p = energies[s] / tot
            p = p[p > 0]
            put(f"s{s}.entropy", float(-np.sum(p * np.log(p))))
    for s in range(N_SCALES):
        put(f"s{s}.mag_corr", _mean_pairwise_corr([np.abs(c) for c in pyr.subbands[s]]))

    total = pyr.total_energy()
    ok = total > NUMERIC_FLOOR**2
    put("hp_fraction", float(np.mean(pyr.highpass**2)) / total if ok else None)

    for s in range(N_SCALES - 1):
        concs = []
        for k in range(N_ORIENTATIONS):
            child = pyr.subbands[s][k]
            parent = pyr.subbands[s + 1][k]
            if _is_flat(child) or _is_flat(parent):
                continue
            h, w = child.shape
            up = parent[np.arange(h) // 2][:, np.arange(w) // 2]
            # parent phase doubled to match the child's frequency
            rel = np.angle(child * np.conj(up * up))
            concs.append(fit_wrapped_cauchy(rel).concentration)
        put(f"pc{s}{s + 1}.phase_conc", float(np.mean(concs)) if concs else None)

    put("lp_fraction", float(np.mean(pyr.lowpass**2)) / total if ok else None)

    names = slot_names()
    return SteerableBlock(values=np.array([out[n] for n in names]), names=names, degenerate=degenerate)
