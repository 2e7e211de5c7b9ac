"""Command-line interface: extract, train, predict, evaluate, hist, distort."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import color, maps
from .dataset_io import (
    DecodeError,
    FeatureCache,
    FeatureCacheRecord,
    ManifestError,
    add_white_noise,
    decode_image,
    encode_png,
    gaussian_blur,
    load_manifest,
    pixel_digest,
)
from .evaluation import SplitPlan, SvrTrainer, evaluate_matrix, ttest_matrix, write_significance_csv
from .features import LAYOUT_VERSION, ExtractionError, extract_all
from .regressor import VersionError, load_model, predict, save_model, train
from .stats import DegenerateSample, OneSidedSample, fit_aggd, fit_ggd

CACHE_ENV = "FRIQUEE_CACHE"
DEFAULT_CACHE = "friquee_cache.fqch"

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "manifest": 3,
    "decode": 4,
    "version": 5,
    "extraction": 6,
    "io": 7,
}

HIST_MAPS = ("nlc", "dog_sigma", "dog_sigma_prime", "chroma", "chroma_sigma", "rg", "by", "yellow", "yellow_sigma")


class CliError(Exception):
    def __init__(self, category: str, message: str, details=None):
        super().__init__(message)
        self.category = category
        self.details = details


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# feature plumbing shared by extract / train / evaluate


def _extract_worker(rgb):
    try:
        fv = extract_all(rgb)
        return fv.values, None
    except (ExtractionError, ValueError) as exc:
        return None, str(exc)


def manifest_features(rows, cache: FeatureCache, jobs: int = 1, skip_bad: bool = False, progress: bool = True):
    """Feature matrix for manifest rows, filling the cache for misses.

    Returns (matrix, kept rows, summary dict). Failed rows raise unless
    ``skip_bad`` is set, in which case they are dropped and reported.
    """
    digests, pending, failed = [], [], []
    for i, row in enumerate(rows):
        try:
            rgb = decode_image(row.path)
        except DecodeError as exc:
            failed.append({"path": str(row.path), "error": str(exc)})
            digests.append(None)
            continue
        d = pixel_digest(rgb)
        digests.append(d)
        if cache.get(d) is None:
            pending.append((i, d, rgb))

    hits = sum(1 for d in digests if d is not None) - len(pending)
    arrays = [p[2] for p in pending]
    if jobs > 1 and len(arrays) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_worker, arrays))
    else:
        results = []
        for k, a in enumerate(arrays):
            results.append(_extract_worker(a))
            if progress:
                _log(f"extract {k + 1}/{len(arrays)}")
    # results are appended in manifest order regardless of --jobs
    seen = set()
    for (i, d, _), (values, err) in zip(pending, results):
        if values is None:
            failed.append({"path": str(rows[i].path), "error": err})
            digests[i] = None
        elif d not in seen:
            cache.put(FeatureCacheRecord(digest=d, layout_version=LAYOUT_VERSION, values=values))
            seen.add(d)

    if failed and not skip_bad:
        raise CliError("extraction", f"{len(failed)} row(s) failed", details=failed)
    kept = [r for r, d in zip(rows, digests) if d is not None]
    X = np.vstack([cache.get(d).values for d in digests if d is not None]) if kept else np.zeros((0, 564))
    summary = {
        "rows": len(rows),
        "cache_hits": hits,
        "extracted": len(pending) - sum(1 for v, _ in results if v is None),
        "skipped": failed,
    }
    return X, kept, summary


def _cache_path(arg) -> str:
    return arg or os.environ.get(CACHE_ENV) or DEFAULT_CACHE


def _load_rows(path, skip_bad: bool = False):
    try:
        # with --skip-bad, unreadable paths are dropped later as decode failures
        return load_manifest(path, check_paths=not skip_bad)
    except ManifestError as exc:
        raise CliError("manifest", str(exc), details=exc.diagnostics) from exc
    except OSError as exc:
        raise CliError("io", str(exc)) from exc


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args) -> int:
    rows = _load_rows(args.manifest, args.skip_bad)
    cache = FeatureCache(_cache_path(args.cache))
    _, _, summary = manifest_features(rows, cache, jobs=args.jobs, skip_bad=args.skip_bad)
    summary["cache"] = str(cache.path)
    _emit(summary)
    return 0


def _fixed_params(args):
    given = [args.C, args.gamma, args.epsilon]
    if all(v is None for v in given):
        return None
    if any(v is None for v in given):
        raise CliError("usage", "train: --C, --gamma and --epsilon must be given together")
    return tuple(given)


def cmd_train(args) -> int:
    rows = _load_rows(args.manifest, args.skip_bad)
    cache = FeatureCache(_cache_path(args.cache))
    X, kept, _ = manifest_features(rows, cache, jobs=args.jobs, skip_bad=args.skip_bad)
    try:
        model = train(
            X,
            [r.score for r in kept],
            seed=args.seed,
            groups=[r.content_group for r in kept],
            layout_version=LAYOUT_VERSION,
            params=_fixed_params(args),
        )
    except ValueError as exc:
        raise CliError("usage", f"train: {exc}") from exc
    save_model(model, args.model_out)
    _emit(
        {
            "model": str(args.model_out),
            "C": model.C,
            "gamma": model.gamma,
            "epsilon": model.epsilon,
            "n_train": model.n_train,
            "n_support": int(len(model.dual_coef)),
        }
    )
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.image:
        try:
            fv = extract_all(decode_image(args.image))
        except DecodeError as exc:
            raise CliError("decode", str(exc)) from exc
        _emit({"path": str(args.image), "score": predict(model, fv)})
        return 0
    rows = _load_rows(args.manifest, args.skip_bad)
    cache = FeatureCache(_cache_path(args.cache))
    X, kept, _ = manifest_features(rows, cache, jobs=args.jobs, skip_bad=args.skip_bad)
    preds = predict(model, X, layout_version=LAYOUT_VERSION) if len(kept) else []
    _emit([{"path": str(r.path), "score": float(p)} for r, p in zip(kept, preds)])
    return 0


def cmd_evaluate(args) -> int:
    if args.compare:
        per = {}
        for p in args.compare:
            with open(p) as fh:
                per[Path(p).stem] = json.load(fh)["srocc"]
        try:
            names, matrix = ttest_matrix(per)
        except ValueError as exc:
            raise CliError("usage", f"evaluate: {exc}") from exc
        if args.significance_out:
            write_significance_csv(names, matrix, args.significance_out)
        _emit({"algorithms": names, "matrix": matrix.tolist()})
        return 0
    if not args.manifest:
        raise CliError("usage", "evaluate: --manifest or --compare is required")
    rows = _load_rows(args.manifest, args.skip_bad)
    cache = FeatureCache(_cache_path(args.cache))
    X, kept, _ = manifest_features(rows, cache, jobs=args.jobs, skip_bad=args.skip_bad)
    try:
        plan = SplitPlan.make(
            [r.content_group for r in kept], iterations=args.iterations, train_fraction=args.train_frac, seed=args.seed
        )
    except ValueError as exc:
        raise CliError("usage", f"evaluate: {exc}") from exc
    report = evaluate_matrix(
        X,
        [r.score for r in kept],
        [r.content_group for r in kept],
        SvrTrainer(),
        plan,
        score_std=[r.score_std for r in kept],
        jobs=args.jobs,
        polarity=kept[0].polarity if kept else "MOS",
    )
    text = report.to_json()
    if args.report_out:
        Path(args.report_out).write_text(text)
    sys.stdout.write(text)
    return 0


def hist_samples(rgb, map_name: str) -> tuple[np.ndarray, str]:
    """Coefficients for a named map and the parametric model that describes them."""
    if map_name not in HIST_MAPS:
        raise CliError("usage", f"unknown map {map_name!r}; choose from {', '.join(HIST_MAPS)}")
    if map_name in ("nlc", "dog_sigma", "dog_sigma_prime"):
        field = maps.normalize(color.to_luma(rgb))
        if map_name == "nlc":
            return field.nlc, "ggd"
        dog, dog_prime = maps.dog_sigma_chain(field.sigma)
        return (dog if map_name == "dog_sigma" else dog_prime), "ggd"
    if map_name in ("rg", "by"):
        cs = color.channel_set(rgb)
        return (cs.rg if map_name == "rg" else cs.by), "aggd"
    source = color.to_chroma(rgb) if map_name.startswith("chroma") else color.yellow_map(rgb)
    field = maps.normalize(source)
    if map_name.endswith("_sigma"):
        return maps.normalize(field.sigma).nlc, "ggd"
    return field.nlc, "ggd"


def histogram_table(samples, model: str, bins: int = 99):
    """(centres, empirical density, fitted density, parameter dict) on a symmetric range.

    The range covers every sample, so the empirical density integrates to one.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    half = float(np.max(np.abs(x))) if x.size else 0.0
    half = half * (1 + 1e-9) if half > 0 else 1.0
    counts, edges = np.histogram(x, bins=bins, range=(-half, half))
    width = edges[1] - edges[0]
    centres = 0.5 * (edges[:-1] + edges[1:])
    empirical = counts / (x.size * width)
    params: dict[str, object] = {"model": model}
    fitted = np.zeros_like(centres)
    try:
        if model == "ggd":
            fit = fit_ggd(x)
            params.update(alpha=fit.alpha, sigma=fit.sigma, saturated=fit.saturated)
        else:
            fit = fit_aggd(x)
            params.update(nu=fit.nu, eta=fit.eta, sigma_l=fit.sigma_l, sigma_r=fit.sigma_r, saturated=fit.saturated)
        fitted = fit.pdf(centres)
    except (DegenerateSample, OneSidedSample) as exc:
        params["degenerate"] = str(exc)
    return centres, empirical, fitted, params


def cmd_hist(args) -> int:
    try:
        rgb = decode_image(args.image)
    except DecodeError as exc:
        raise CliError("decode", str(exc)) from exc
    samples, model = hist_samples(rgb, args.map)
    centres, emp, fit, params = histogram_table(samples, model, args.bins)
    lines = [f"# map={args.map} " + " ".join(f"{k}={v}" for k, v in params.items())]
    lines.append("bin_center,empirical_density,fitted_density")
    lines += [f"{float(c)!r},{float(e)!r},{float(f)!r}" for c, e, f in zip(centres, emp, fit)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_distort(args) -> int:
    try:
        rgb = decode_image(args.image)
    except DecodeError as exc:
        raise CliError("decode", str(exc)) from exc
    if args.sigma < 0:
        raise CliError("usage", "distort: --sigma must be non-negative")
    if args.kind == "noise":
        out = add_white_noise(rgb, args.sigma, args.seed)
    else:
        out = gaussian_blur(rgb, args.sigma)
    Path(args.out).write_bytes(encode_png(out))
    _emit({"out": str(args.out), "kind": args.kind, "sigma": args.sigma})
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="friquee", description="Blind image quality features and predictor.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, manifest_required=True):
        sp.add_argument("--manifest", required=manifest_required)
        sp.add_argument("--cache", help=f"feature cache file (default ${CACHE_ENV} or {DEFAULT_CACHE})")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--skip-bad", action="store_true", help="drop rows that fail to decode or extract")

    sp = sub.add_parser("extract", help="populate the feature cache")
    common(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="fit a quality model")
    common(sp)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--C", type=float, help="skip the grid search and use this penalty (with --gamma, --epsilon)")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="score images with a trained model")
    common(sp, manifest_required=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--image")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="repeated random-split evaluation")
    common(sp, manifest_required=False)
    sp.add_argument("--iterations", type=int, default=50)
    sp.add_argument("--train-frac", type=float, default=0.8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report-out")
    sp.add_argument("--compare", nargs="+", help="report JSON files to compare by paired t-test")
    sp.add_argument("--significance-out", help="CSV path for the significance matrix")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("hist", help="histogram and fitted density of a coefficient map")
    sp.add_argument("--image", required=True)
    sp.add_argument("--map", required=True)
    sp.add_argument("--bins", type=int, default=99)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_hist)

    sp = sub.add_parser("distort", help="apply synthetic noise or blur")
    sp.add_argument("--image", required=True)
    sp.add_argument("--kind", choices=("noise", "blur"), required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_distort)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "predict" and bool(args.image) == bool(args.manifest):
            raise CliError("usage", "predict: give exactly one of --image or --manifest")
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.category, "message": str(exc)}
        if exc.details is not None:
            err["details"] = exc.details
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_CODES[exc.category]
    except VersionError as exc:
        print(json.dumps({"error": "version", "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["version"]
    except (OSError, ValueError) as exc:
        category = "io" if isinstance(exc, OSError) else "internal"
        print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
