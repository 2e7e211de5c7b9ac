"""Channel maps derived from an RGB image.

Images are float arrays of shape (H, W, 3) with values in [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import normalize

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# sRGB (D65) linear RGB -> XYZ
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# image of RGB white under the matrix (D65 up to rounding), so grays map to a* = b* = 0
D65_WHITE = _RGB_TO_XYZ.sum(axis=1)

RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
LOG_FLOOR = 1e-4

# rows: l_hat, BY, RG
OPPONENT_MATRIX = np.array(
    [
        [1 / np.sqrt(3), 1 / np.sqrt(3), 1 / np.sqrt(3)],
        [1 / np.sqrt(6), 1 / np.sqrt(6), -2 / np.sqrt(6)],
        [1 / np.sqrt(2), -1 / np.sqrt(2), 0.0],
    ]
)


def as_rgb(image) -> np.ndarray:
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    if rgb.min(initial=0.0) < 0 or rgb.max(initial=0.0) > 255:
        raise ValueError("RGB values must lie in [0, 255]")
    return rgb


def to_luma(rgb) -> np.ndarray:
    """BT.601 luma in [0, 255]."""
    rgb = as_rgb(rgb)
    return rgb[..., 0] * LUMA_WEIGHTS[0] + rgb[..., 1] * LUMA_WEIGHTS[1] + rgb[..., 2] * LUMA_WEIGHTS[2]


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    delta = 6.0 / 29.0
    return np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)


def to_lab(rgb) -> np.ndarray:
    """CIELAB (D65, 2 degree observer) for an sRGB image."""
    lin = _srgb_to_linear(as_rgb(rgb) / 255.0)
    xyz = lin @ _RGB_TO_XYZ.T / D65_WHITE
    f = _lab_f(xyz)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def to_chroma(rgb) -> np.ndarray:
    lab = to_lab(rgb)
    return np.hypot(lab[..., 1], lab[..., 2])


def to_log_lms(rgb) -> np.ndarray:
    """Natural log of the cone responses, shape (H, W, 3), floored at LOG_FLOOR."""
    lms = (as_rgb(rgb) / 255.0) @ RGB_TO_LMS.T
    return np.log(np.maximum(lms, LOG_FLOOR))


def to_lms_hat(rgb) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Divisively normalized log L, M, S planes."""
    log_lms = to_log_lms(rgb)
    return tuple(normalize(log_lms[..., k]).nlc for k in range(3))


def opponents(l_hat, m_hat, s_hat) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (BY, RG, l_hat_achromatic)."""
    l_hat, m_hat, s_hat = (np.asarray(p, dtype=np.float64) for p in (l_hat, m_hat, s_hat))
    if not (l_hat.shape == m_hat.shape == s_hat.shape):
        raise ValueError("opponent planes must share a shape")
    achromatic = (l_hat + m_hat + s_hat) / np.sqrt(3)
    by = (l_hat + m_hat - 2 * s_hat) / np.sqrt(6)
    rg = (l_hat - m_hat) / np.sqrt(2)
    return by, rg, achromatic


def to_hsi(rgb) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hue in [0, 2 pi), saturation in [0, 1], and a mask of pixels with defined hue.

    Hue is set to 0 where it is undefined (R == G == B); those pixels are
    excluded by the mask.
    """
    rgb = as_rgb(rgb)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    intensity = (r + g + b) / 3.0
    lo = np.minimum(np.minimum(r, g), b)
    with np.errstate(invalid="ignore", divide="ignore"):
        hi = np.maximum(np.maximum(r, g), b)
        saturation = np.where((intensity > 0) & (hi > lo), 1.0 - lo / intensity, 0.0)
        num = 0.5 * ((r - g) + (r - b))
        den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
        defined = den > 0
        theta = np.arccos(np.clip(np.where(defined, num / np.where(defined, den, 1.0), 1.0), -1.0, 1.0))
    hue = np.where(b <= g, theta, 2 * np.pi - theta)
    hue = np.where(defined, hue, 0.0)
    hue = np.where(hue >= 2 * np.pi, 0.0, hue)
    return hue, np.clip(saturation, 0.0, 1.0), defined


def yellow_map(rgb) -> np.ndarray:
    rgb = as_rgb(rgb)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return (r + g) / 2 - np.abs(r - g) / 2 - b


@dataclass(frozen=True)
class ChannelSet:
    luma: np.ndarray
    chroma: np.ndarray
    m_hat_source: np.ndarray
    s_hat_source: np.ndarray
    rg: np.ndarray
    by: np.ndarray
    hue: np.ndarray
    hue_mask: np.ndarray
    saturation: np.ndarray
    yellow: np.ndarray


def channel_set(rgb) -> ChannelSet:
    rgb = as_rgb(rgb)
    log_lms = to_log_lms(rgb)
    l_hat, m_hat, s_hat = (normalize(log_lms[..., k]).nlc for k in range(3))
    by, rg, _ = opponents(l_hat, m_hat, s_hat)
    hue, saturation, mask = to_hsi(rgb)
    return ChannelSet(
        luma=to_luma(rgb),
        chroma=to_chroma(rgb),
        m_hat_source=log_lms[..., 1],
        s_hat_source=log_lms[..., 2],
        rg=rg,
        by=by,
        hue=hue,
        hue_mask=mask,
        saturation=saturation,
        yellow=yellow_map(rgb),
    )
