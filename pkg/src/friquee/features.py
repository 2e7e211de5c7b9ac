"""Assembly of the 564-value feature vector and its named layout.

Blocks, in order: luma (155), yellow (2), chroma (163), lms (240), hsi (4).
Slots whose estimator rejects its sample hold 0 and are listed in
``FeatureVector.degenerate``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import color, maps, steerable
from .stats import DegenerateSample, fit_aggd, fit_ggd, ggd_goodness, sample_stats

LAYOUT_VERSION = "friquee-564/1"
MIN_IMAGE_SIZE = 128
N_FEATURES = 564
BLOCK_SIZES = {"luma": 155, "yellow": 2, "chroma": 163, "lms": 240, "hsi": 4}

PAIR_DIRECTIONS = ("h", "v", "d1", "d2")
MOMENTS = ("kurtosis", "skewness")


@dataclass(frozen=True)
class Slot:
    name: str
    block: str
    space: str
    map: str
    model: str
    statistic: str
    scale: int | None


@dataclass(frozen=True)
class LayoutDescriptor:
    version: str
    slots: tuple[Slot, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.slots)

    def block_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for s in self.slots:
            sizes[s.block] = sizes.get(s.block, 0) + 1
        return sizes

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    layout_version: str
    degenerate: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


# ---------------------------------------------------------------------------
# Layout. Each group helper yields (suffix, map, model, statistic, scale) and is
# shared by the extractor through the same name strings.


def _ggd_group(map_name, scale, params=("alpha", "variance")):
    tag = f"{map_name}.scale{scale}" if scale is not None else map_name
    return [(f"{tag}.{p}", map_name, "ggd", p, scale) for p in params] + [
        (f"{tag}.{m}", map_name, "sample", m, scale) for m in MOMENTS
    ]


def _aggd_group(map_name, scale, params):
    tag = f"{map_name}.scale{scale}" if scale is not None else map_name
    return [(f"{tag}.{p}", map_name, "aggd", p, scale) for p in params] + [
        (f"{tag}.{m}", map_name, "sample", m, scale) for m in MOMENTS
    ]


def _sigma_stats_group(scale):
    return [(f"sigma.scale{scale}.{m}", "sigma", "sample", m, scale) for m in ("mean", "kurtosis", "skewness")]


def _dog_group():
    return [
        ("dog_sigma.alpha", "dog_sigma", "ggd", "alpha", 0),
        ("dog_sigma.std", "dog_sigma", "ggd", "std", 0),
        ("dog_sigma.skewness", "dog_sigma", "sample", "skewness", 0),
        ("dog_sigma.kurtosis", "dog_sigma", "sample", "kurtosis", 0),
        ("dog_sigma_prime.kurtosis", "dog_sigma_prime", "sample", "kurtosis", 0),
        ("dog_sigma_prime.skewness", "dog_sigma_prime", "sample", "skewness", 0),
    ]


def _laplacian_group():
    return _aggd_group("laplacian", None, ("nu", "var_l", "var_r"))


def _steer_group():
    return [(f"steer.{n}", "steerable", "steerable", n, None) for n in steerable.slot_names()]


def _channel_groups(with_pairs: bool, sigma_ggd: bool):
    groups = []
    for s in (0, 1):
        groups += _ggd_group("nlc", s)
    if with_pairs:
        for s in (0, 1):
            for d in PAIR_DIRECTIONS:
                groups += _aggd_group(f"pp_{d}", s, ("nu", "eta", "var_l", "var_r"))
    if sigma_ggd:
        for s in (0, 1):
            groups += _ggd_group("sigma_nlc", s, ("alpha", "std"))
    for s in (0, 1):
        groups += _sigma_stats_group(s)
    groups += _dog_group()
    groups += _laplacian_group()
    groups += _steer_group()
    return groups


def _slots(prefix, block, space, groups):
    return [Slot(f"{prefix}.{suffix}", block, space, m, model, stat, sc) for suffix, m, model, stat, sc in groups]


@lru_cache(maxsize=1)
def layout() -> LayoutDescriptor:
    slots = []
    slots += _slots("luma", "luma", "luminance", _channel_groups(with_pairs=True, sigma_ggd=False))
    slots += [
        Slot("yellow.nlc.goodness", "yellow", "rgb", "yellow_nlc", "goodness", "goodness", 0),
        Slot("yellow.sigma_nlc.goodness", "yellow", "rgb", "yellow_sigma_nlc", "goodness", "goodness", 0),
    ]
    slots += _slots("chroma", "chroma", "cielab", _channel_groups(with_pairs=True, sigma_ggd=True))
    for opp in ("rg", "by"):
        slots += _slots("lms", "lms", "lms.opponent", _aggd_group(opp, None, ("nu", "var_l", "var_r")))
    for ch in ("m", "s"):
        slots += _slots(f"lms.{ch}", "lms", f"lms.{ch}", _channel_groups(with_pairs=False, sigma_ggd=True))
    for comp in ("hue", "saturation"):
        slots += [Slot(f"hsi.{comp}.{st}", "hsi", "hsi", comp, "sample", st, 0) for st in ("mean", "std")]
    desc = LayoutDescriptor(version=LAYOUT_VERSION, slots=tuple(slots))
    assert desc.block_sizes() == BLOCK_SIZES, desc.block_sizes()
    assert len(set(desc.names)) == N_FEATURES
    return desc


# ---------------------------------------------------------------------------
# Extraction


class _Recorder:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.values: dict[str, float] = {}
        self.degenerate: list[str] = []

    def put(self, suffix: str, value: float | None) -> None:
        name = f"{self.prefix}.{suffix}"
        if value is None or not np.isfinite(value):
            self.values[name] = 0.0
            self.degenerate.append(name)
        else:
            self.values[name] = float(value)

    def moments(self, tag: str, samples) -> None:
        st = sample_stats(samples)
        for m in MOMENTS:
            self.put(f"{tag}.{m}", None if st.degenerate else getattr(st, m))

    def ggd(self, tag: str, samples, params=("alpha", "variance")) -> None:
        try:
            fit = fit_ggd(samples)
            got = {"alpha": fit.alpha, "variance": fit.variance, "std": fit.sigma}
        except DegenerateSample:
            got = {}
        for p in params:
            self.put(f"{tag}.{p}", got.get(p))
        self.moments(tag, samples)

    def aggd(self, tag: str, samples, params) -> None:
        try:
            fit = fit_aggd(samples)
            got = {"nu": fit.nu, "eta": fit.eta, "var_l": fit.sigma_l**2, "var_r": fit.sigma_r**2}
        except DegenerateSample:
            got = {}
        for p in params:
            self.put(f"{tag}.{p}", got.get(p))
        self.moments(tag, samples)

    def merge(self, other: "_Recorder") -> None:
        self.values.update(other.values)
        self.degenerate.extend(other.degenerate)


def _check_image(rgb) -> np.ndarray:
    rgb = color.as_rgb(rgb)
    if min(rgb.shape[:2]) < MIN_IMAGE_SIZE:
        raise maps.TooSmall(f"image {rgb.shape[:2]} smaller than {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    return rgb


def _channel_features(rec: _Recorder, plane: np.ndarray, with_pairs: bool, sigma_ggd: bool) -> None:
    scales = [plane, maps.downsample2(plane)]
    fields = [maps.normalize(p) for p in scales]
    for s, f in enumerate(fields):
        rec.ggd(f"nlc.scale{s}", f.nlc)
    if with_pairs:
        for s, f in enumerate(fields):
            for d, prod in maps.paired_products(f.nlc).as_dict().items():
                rec.aggd(f"pp_{d}.scale{s}", prod, ("nu", "eta", "var_l", "var_r"))
    if sigma_ggd:
        for s, f in enumerate(fields):
            rec.ggd(f"sigma_nlc.scale{s}", maps.normalize(f.sigma).nlc, ("alpha", "std"))
    for s, f in enumerate(fields):
        st = sample_stats(f.sigma)
        rec.put(f"sigma.scale{s}.mean", st.mean)
        rec.put(f"sigma.scale{s}.kurtosis", None if st.degenerate else st.kurtosis)
        rec.put(f"sigma.scale{s}.skewness", None if st.degenerate else st.skewness)

    dog_sigma, dog_sigma_prime = maps.dog_sigma_chain(fields[0].sigma)
    try:
        fit = fit_ggd(dog_sigma)
        rec.put("dog_sigma.alpha", fit.alpha)
        rec.put("dog_sigma.std", fit.sigma)
    except DegenerateSample:
        rec.put("dog_sigma.alpha", None)
        rec.put("dog_sigma.std", None)
    st = sample_stats(dog_sigma)
    rec.put("dog_sigma.skewness", None if st.degenerate else st.skewness)
    rec.put("dog_sigma.kurtosis", None if st.degenerate else st.kurtosis)
    st = sample_stats(dog_sigma_prime)
    rec.put("dog_sigma_prime.kurtosis", None if st.degenerate else st.kurtosis)
    rec.put("dog_sigma_prime.skewness", None if st.degenerate else st.skewness)

    rec.aggd("laplacian", maps.laplacian(plane), ("nu", "var_l", "var_r"))

    block = steerable.steerable_features(plane)
    for n, v in zip(block.names, block.values):
        rec.put(f"steer.{n}", None if n in block.degenerate else v)


def _finish(rec: _Recorder, block: str) -> tuple[np.ndarray, list[str]]:
    names = [s.name for s in layout().slots if s.block == block]
    if list(rec.values) != names:
        missing = set(names) ^ set(rec.values)
        raise AssertionError(f"{block} extractor out of sync with layout: {sorted(missing)[:5]}")
    return np.array([rec.values[n] for n in names]), rec.degenerate


def _luma(rgb: np.ndarray) -> _Recorder:
    rec = _Recorder("luma")
    _channel_features(rec, color.to_luma(rgb), with_pairs=True, sigma_ggd=False)
    return rec


def _yellow(rgb: np.ndarray) -> _Recorder:
    rec = _Recorder("yellow")
    field = maps.normalize(color.yellow_map(rgb))
    for tag, coeffs in (("nlc", field.nlc), ("sigma_nlc", maps.normalize(field.sigma).nlc)):
        try:
            rec.put(f"{tag}.goodness", ggd_goodness(coeffs, fit_ggd(coeffs)))
        except DegenerateSample:
            rec.put(f"{tag}.goodness", None)
    return rec


def _chroma(rgb: np.ndarray) -> _Recorder:
    rec = _Recorder("chroma")
    _channel_features(rec, color.to_chroma(rgb), with_pairs=True, sigma_ggd=True)
    return rec


def _lms(rgb: np.ndarray) -> _Recorder:
    log_lms = color.to_log_lms(rgb)
    hats = [maps.normalize(log_lms[..., k]).nlc for k in range(3)]
    by, rg, _ = color.opponents(*hats)
    out = _Recorder("lms")
    for tag, plane in (("rg", rg), ("by", by)):
        out.aggd(tag, plane, ("nu", "var_l", "var_r"))
    for tag, k in (("m", 1), ("s", 2)):
        rec = _Recorder(f"lms.{tag}")
        _channel_features(rec, log_lms[..., k], with_pairs=False, sigma_ggd=True)
        out.merge(rec)
    return out


def _hsi(rgb: np.ndarray) -> _Recorder:
    rec = _Recorder("hsi")
    hue, sat, mask = color.to_hsi(rgb)
    if mask.any():
        rec.put("hue.mean", float(np.mean(hue[mask])))
        rec.put("hue.std", float(np.std(hue[mask])))
    else:
        rec.put("hue.mean", None)
        rec.put("hue.std", None)
    rec.put("saturation.mean", float(np.mean(sat)))
    rec.put("saturation.std", float(np.std(sat)))
    return rec


def extract_luma_features(rgb) -> np.ndarray:
    return _finish(_luma(_check_image(rgb)), "luma")[0]


def extract_yellow_features(rgb) -> np.ndarray:
    return _finish(_yellow(_check_image(rgb)), "yellow")[0]


def extract_chroma_features(rgb) -> np.ndarray:
    return _finish(_chroma(_check_image(rgb)), "chroma")[0]


def extract_lms_features(rgb) -> np.ndarray:
    return _finish(_lms(_check_image(rgb)), "lms")[0]


def extract_hsi_features(rgb) -> np.ndarray:
    return _finish(_hsi(_check_image(rgb)), "hsi")[0]


_BLOCKS = (("luma", _luma), ("yellow", _yellow), ("chroma", _chroma), ("lms", _lms), ("hsi", _hsi))


class ExtractionError(RuntimeError):
    pass


def extract_all(rgb) -> FeatureVector:
    rgb = _check_image(rgb)
    parts = []
    degenerate: list[str] = []
    for block, fn in _BLOCKS:
        try:
            values, deg = _finish(fn(rgb), block)
        except (maps.TooSmall, ValueError) as exc:
            raise ExtractionError(f"{block} block failed: {exc}") from exc
        parts.append(values)
        degenerate += deg
    values = np.concatenate(parts)
    return FeatureVector(
        values=values, names=layout().names, layout_version=LAYOUT_VERSION, degenerate=tuple(degenerate)
    )
