"""Spatial feature maps: divisive normalization, paired products, DoG, Laplacian.

Every filter uses mirror (half-sample symmetric) borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

BORDER = "reflect"

WINDOW_RADIUS = 3
WINDOW_STD = 7.0 / 6.0

DOG_SIGMA1 = 1.16
DOG_SIGMA2 = 1.5 * DOG_SIGMA1

LOWPASS_RADIUS = 2
LOWPASS_STD = 1.0


class TooSmall(ValueError):
    """Input plane is smaller than the filter support requires."""


def gaussian_1d(radius: int, std: float) -> np.ndarray:
    """Sampled Gaussian on [-radius, radius], normalized to unit sum."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * std * std))
    return k / k.sum()


def normalization_window() -> np.ndarray:
    """The 7x7 circularly symmetric weighting window (unit sum)."""
    g = gaussian_1d(WINDOW_RADIUS, WINDOW_STD)
    return np.outer(g, g)


def _check_size(plane: np.ndarray, min_size: int, what: str) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"{what}: expected a 2D plane, got shape {plane.shape}")
    if min(plane.shape) < min_size:
        raise TooSmall(f"{what}: plane {plane.shape} smaller than {min_size}x{min_size}")
    return plane


def separable(plane: np.ndarray, kernel_1d: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(plane, kernel_1d, axis=0, mode=BORDER)
    return ndimage.correlate1d(out, kernel_1d, axis=1, mode=BORDER)


@dataclass(frozen=True)
class NormalizedField:
    nlc: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray


def normalize(plane) -> NormalizedField:
    """Local mean removal and division by (local deviation + 1).

    The deviation at (i, j) is the window-weighted RMS of the neighbourhood
    about the local mean at (i, j).
    """
    plane = _check_size(plane, 2 * WINDOW_RADIUS + 1, "normalize")
    w = gaussian_1d(WINDOW_RADIUS, WINDOW_STD)
    # recentre before squaring to limit cancellation in E[x^2] - mu^2
    offset = float(np.mean(plane))
    centred = plane - offset
    mu_c = separable(centred, w)
    var = separable(centred * centred, w) - mu_c * mu_c
    sigma = np.sqrt(np.maximum(var, 0.0))
    return NormalizedField(nlc=(centred - mu_c) / (sigma + 1.0), mu=mu_c + offset, sigma=sigma)


@dataclass(frozen=True)
class PairedProducts:
    horizontal: np.ndarray
    vertical: np.ndarray
    main_diagonal: np.ndarray
    anti_diagonal: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "h": self.horizontal,
            "v": self.vertical,
            "d1": self.main_diagonal,
            "d2": self.anti_diagonal,
        }


def paired_products(nlc) -> PairedProducts:
    """Products of each coefficient with its right, lower, lower-right and lower-left neighbours."""
    x = _check_size(nlc, 2, "paired_products")
    return PairedProducts(
        horizontal=x[:, :-1] * x[:, 1:],
        vertical=x[:-1, :] * x[1:, :],
        main_diagonal=x[:-1, :-1] * x[1:, 1:],
        anti_diagonal=x[:-1, 1:] * x[1:, :-1],
    )


def dog_kernel(sigma1: float = DOG_SIGMA1, sigma2: float = DOG_SIGMA2) -> np.ndarray:
    """Difference of isotropic Gaussians, unnormalized as printed (nonzero DC)."""
    radius = int(np.ceil(3 * sigma2))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    return (np.exp(-r2 / (2 * sigma1**2)) / sigma1 - np.exp(-r2 / (2 * sigma2**2)) / sigma2) / np.sqrt(
        2 * np.pi
    )


def dog_filter(plane) -> np.ndarray:
    k = dog_kernel()
    plane = _check_size(plane, k.shape[0] + 1, "dog_filter")
    return ndimage.correlate(plane, k, mode=BORDER)


def dog_sigma_chain(sigma_field) -> tuple[np.ndarray, np.ndarray]:
    """Normalized DoG of a sigma field, and the normalized sigma field of that result."""
    dog_sigma = normalize(dog_filter(sigma_field)).nlc
    dog_sigma_prime = normalize(normalize(dog_sigma).sigma).nlc
    return dog_sigma, dog_sigma_prime


def lowpass(plane) -> np.ndarray:
    return separable(np.asarray(plane, dtype=np.float64), gaussian_1d(LOWPASS_RADIUS, LOWPASS_STD))


def laplacian(plane) -> np.ndarray:
    """Band-pass residual (plane minus its low-pass), decimated by two."""
    plane = _check_size(plane, 2 * (2 * LOWPASS_RADIUS + 1), "laplacian")
    return (plane - lowpass(plane))[::2, ::2]


def downsample2(plane) -> np.ndarray:
    plane = _check_size(plane, 4, "downsample2")
    return lowpass(plane)[::2, ::2]
