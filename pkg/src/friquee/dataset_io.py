"""Manifests, image decoding, synthetic distortions and the on-disk feature cache."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .features import LAYOUT_VERSION
from .maps import gaussian_1d

MANIFEST_COLUMNS = ("path", "score", "score_std", "content_group", "polarity")
SUPPORTED_FORMATS = {"PNG", "JPEG", "BMP"}

CACHE_MAGIC = b"FQCH"
CACHE_VERSION = 1
DIGEST_BYTES = 32


class ManifestError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("manifest rejected:\n  " + "\n  ".join(diagnostics))
        self.diagnostics = diagnostics


class DuplicateRow(ManifestError):
    pass


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    path: Path
    score: float  # higher is better, whatever the file polarity
    score_std: float | None
    content_group: str
    polarity: str  # "MOS" or "DMOS", as written in the file
    raw_score: float


def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def load_manifest(path, check_paths: bool = True) -> list[ManifestRow]:
    """Read and validate a manifest CSV. DMOS scores are negated so higher is better."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError([f"missing columns: {', '.join(missing)}"])
        records = list(reader)

    rows, errors, seen = [], [], {}
    polarities = set()
    for lineno, rec in enumerate(records, start=2):
        where = f"line {lineno}"
        try:
            p = Path(rec["path"].strip())
            p = p if p.is_absolute() else base / p
            if check_paths and not (p.is_file() and os.access(p, os.R_OK)):
                raise ValueError(f"unreadable image {p}")
            raw = _parse_float(rec["score"])
            std_text = (rec["score_std"] or "").strip()
            std = _parse_float(std_text) if std_text else None
            if std is not None and std < 0:
                raise ValueError("negative score_std")
            pol = (rec["polarity"] or "").strip().upper()
            if pol not in ("MOS", "DMOS"):
                raise ValueError(f"polarity must be MOS or DMOS, got {rec['polarity']!r}")
            group = (rec["content_group"] or "").strip() or str(p)
        except (ValueError, TypeError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        key = str(p.resolve())
        if key in seen:
            raise DuplicateRow([f"{where}: duplicate of line {seen[key]} ({p})"])
        seen[key] = lineno
        polarities.add(pol)
        rows.append(
            ManifestRow(
                path=p,
                score=-raw if pol == "DMOS" else raw,
                score_std=std,
                content_group=group,
                polarity=pol,
                raw_score=raw,
            )
        )
    if len(polarities) > 1:
        errors.append("mixed MOS and DMOS polarity")
    if errors:
        raise ManifestError(errors)
    return rows


def write_manifest(rows, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            rel = os.path.relpath(r.path, path.parent) if Path(r.path).is_absolute() else r.path
            std = "" if r.score_std is None else repr(float(r.score_std))
            w.writerow([rel, repr(float(r.raw_score)), std, r.content_group, r.polarity])


def decode_image(path) -> np.ndarray:
    """Decode a PNG, JPEG or BMP into an (H, W, 3) float array with values in [0, 255]."""
    try:
        with Image.open(path) as im:
            if im.format not in SUPPORTED_FORMATS:
                raise DecodeError(f"{path}: unsupported format {im.format}")
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                scale = 255.0 / 65535.0 if im.mode != "I" or arr.max(initial=0) > 255 else 1.0
                gray = np.clip(arr * scale, 0.0, 255.0)
                return np.repeat(gray[..., None], 3, axis=2)
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.float64)
    except DecodeError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on bad input
        raise DecodeError(f"{path}: {exc}") from exc


def encode_png(rgb) -> bytes:
    arr = np.clip(np.rint(np.asarray(rgb, dtype=np.float64)), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def add_white_noise(rgb, sigma: float, seed: int) -> np.ndarray:
    """Per-channel additive Gaussian noise, clipped to [0, 255]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return rgb.copy()
    rng = np.random.default_rng(seed)
    return np.clip(rgb + rng.normal(0.0, sigma, size=rgb.shape), 0.0, 255.0)


def blur_kernel(sigma: float) -> np.ndarray:
    return gaussian_1d(max(1, int(math.ceil(4 * sigma))), sigma)


def gaussian_blur(rgb, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirror borders, applied to each channel."""
    from .maps import separable

    rgb = np.asarray(rgb, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return rgb.copy()
    k = blur_kernel(sigma)
    planes = rgb[..., None] if rgb.ndim == 2 else rgb
    out = np.stack([separable(planes[..., c], k) for c in range(planes.shape[2])], axis=2)
    return out[..., 0] if rgb.ndim == 2 else out


def pixel_digest(rgb) -> bytes:
    """SHA-256 over the shape and the decoded float64 pixel values."""
    arr = np.ascontiguousarray(rgb, dtype="<f8")
    h = hashlib.sha256()
    h.update(struct.pack("<3I", *(arr.shape + (1,) * (3 - arr.ndim))))
    h.update(arr.tobytes())
    return h.digest()


# ---------------------------------------------------------------------------
# feature cache


@dataclass(frozen=True)
class FeatureCacheRecord:
    digest: bytes
    layout_version: str
    values: np.ndarray

    def encode(self) -> bytes:
        layout = self.layout_version.encode("utf-8")
        vals = np.ascontiguousarray(self.values, dtype="<f8")
        return b"".join(
            [
                self.digest,
                struct.pack("<H", len(layout)),
                layout,
                struct.pack("<I", vals.size),
                vals.tobytes(),
            ]
        )


class CorruptCache(ValueError):
    pass


def _parse_records(data: bytes) -> list[FeatureCacheRecord]:
    if data[:4] != CACHE_MAGIC:
        raise CorruptCache("bad magic")
    if len(data) < 8 or struct.unpack_from("<I", data, 4)[0] != CACHE_VERSION:
        raise CorruptCache("unsupported cache version")
    pos, out = 8, []
    while pos < len(data):
        try:
            digest = data[pos : pos + DIGEST_BYTES]
            pos += DIGEST_BYTES
            (n_layout,) = struct.unpack_from("<H", data, pos)
            pos += 2
            layout = data[pos : pos + n_layout].decode("utf-8")
            pos += n_layout
            (n_vals,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + 8 * n_vals > len(data) or len(digest) != DIGEST_BYTES:
                raise CorruptCache("truncated record")
            vals = np.frombuffer(data, dtype="<f8", count=n_vals, offset=pos).astype(np.float64)
            pos += 8 * n_vals
        except (struct.error, UnicodeDecodeError) as exc:
            raise CorruptCache(str(exc)) from exc
        out.append(FeatureCacheRecord(digest=digest, layout_version=layout, values=vals))
    return out


class FeatureCache:
    """Append-only record file keyed by pixel digest.

    One writer at a time; readers only parse the appended region. Records
    whose layout version differs from the requested one are misses. A file
    that fails to parse is replaced by an empty cache with a warning.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._index: dict[tuple[bytes, str], FeatureCacheRecord] = {}
        self._load()

    def _reset(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(CACHE_MAGIC + struct.pack("<I", CACHE_VERSION))
        self._index = {}

    def _load(self) -> None:
        if not self.path.exists() or self.path.stat().st_size == 0:
            self._reset()
            return
        try:
            records = _parse_records(self.path.read_bytes())
        except CorruptCache as exc:
            warnings.warn(f"feature cache {self.path} is corrupt ({exc}); rebuilding", stacklevel=3)
            self._reset()
            return
        self._index = {(r.digest, r.layout_version): r for r in records}

    def __len__(self) -> int:
        return len(self._index)

    def get(self, digest: bytes, layout_version: str = LAYOUT_VERSION) -> FeatureCacheRecord | None:
        return self._index.get((digest, layout_version))

    def put(self, record: FeatureCacheRecord) -> None:
        key = (record.digest, record.layout_version)
        old = self._index.get(key)
        if old is not None and np.array_equal(old.values, record.values):
            return
        with open(self.path, "ab") as fh:
            fh.write(record.encode())
        self._index[key] = record

    def records(self) -> list[FeatureCacheRecord]:
        return list(self._index.values())


# ---------------------------------------------------------------------------
# synthetic corpus

NOISE_SIGMAS = (5.0, 10.0, 20.0, 35.0, 55.0)
BLUR_SIGMAS = (0.7, 1.2, 2.0, 3.0, 4.5)
SEVERITY_SCORES = (85.0, 70.0, 55.0, 40.0, 25.0)


def build_distortion_corpus(bases, out_dir, seed: int = 0) -> Path:
    """Write noise and blur versions of each base image plus a MOS manifest.

    ``bases`` maps a content name to an RGB array. Every distorted image gets
    the score of its severity level, and all versions of one base share a
    content group. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for b, (name, rgb) in enumerate(sorted(bases.items())):
        for level, (ns, bs, score) in enumerate(zip(NOISE_SIGMAS, BLUR_SIGMAS, SEVERITY_SCORES), start=1):
            for kind, img in (
                ("noise", add_white_noise(rgb, ns, seed=seed * 1000 + b * 10 + level)),
                ("blur", gaussian_blur(rgb, bs)),
            ):
                path = out_dir / f"{name}_{kind}{level}.png"
                path.write_bytes(encode_png(img))
                rows.append(
                    ManifestRow(
                        path=path, score=score, score_std=None, content_group=name, polarity="MOS", raw_score=score
                    )
                )
    manifest = out_dir / "manifest.csv"
    write_manifest(rows, manifest)
    return manifest
