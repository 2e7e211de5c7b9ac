"""Repeated random-split protocol, correlation metrics and paired significance tests."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

SIGNIFICANCE_LEVEL = 0.05


class UndefinedCorrelation(ValueError):
    """One of the inputs has zero (rank) variance."""


class NotAvailable(ValueError):
    """A metric cannot be computed from the supplied data (reported as "-")."""


class IterationError(RuntimeError):
    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"iteration {iteration} failed: {cause!r}")
        self.iteration = iteration


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError("need at least 3 pairs")
    return a, b


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if na == 0 or nb == 0:
        raise UndefinedCorrelation("zero variance")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def srocc(a, b) -> float:
    """Spearman rank correlation; ties get average ranks."""
    a, b = _pair(a, b)
    return _pearson(sps.rankdata(a), sps.rankdata(b))


def plcc(a, b) -> float:
    """Pearson correlation on raw values (no nonlinear remapping)."""
    return _pearson(*_pair(a, b))


def srocc_or_none(a, b) -> float | None:
    try:
        return srocc(a, b)
    except UndefinedCorrelation:
        return None


def outlier_ratio(pred, mos, mos_std) -> float:
    """Fraction of predictions further than two standard deviations from the subjective score."""
    if mos_std is None:
        raise NotAvailable("no score standard deviations")
    pred, mos = _pair(pred, mos)
    std = np.array([np.nan if s is None else s for s in np.asarray(mos_std, dtype=object).ravel()], dtype=np.float64)
    if std.shape != mos.shape or np.any(~np.isfinite(std)):
        raise NotAvailable("score standard deviation missing for some rows")
    return float(np.mean(np.abs(pred - mos) > 2.0 * std))


# ---------------------------------------------------------------------------
# split protocol


@dataclass(frozen=True)
class SplitPlan:
    iterations: int
    train_fraction: float
    seed: int
    splits: tuple[tuple[np.ndarray, np.ndarray], ...]

    @classmethod
    def make(cls, groups: Sequence, iterations: int = 50, train_fraction: float = 0.8, seed: int = 0) -> "SplitPlan":
        """Random content-grouped splits; each iteration draws from its own seeded generator."""
        if not 0.0 < train_fraction < 1.0:
            raise ValueError("train fraction must lie in (0, 1)")
        groups = np.asarray([str(g) for g in groups])
        uniq = np.unique(groups)
        n_train_groups = int(round(train_fraction * len(uniq)))
        if n_train_groups < 1 or n_train_groups >= len(uniq):
            raise ValueError(f"{len(uniq)} content groups cannot be split at fraction {train_fraction}")
        splits = []
        for it in range(iterations):
            rng = np.random.default_rng([seed, it])
            chosen = set(uniq[rng.permutation(len(uniq))[:n_train_groups]])
            in_train = np.array([g in chosen for g in groups])
            splits.append((np.flatnonzero(in_train), np.flatnonzero(~in_train)))
        return cls(iterations=iterations, train_fraction=train_fraction, seed=seed, splits=tuple(splits))


@dataclass
class ExperimentReport:
    srocc: list[float]
    plcc: list[float]
    outlier_ratio: list[float] | None
    iterations: int
    train_fraction: float
    seed: int
    n_images: int
    polarity: str = "MOS"
    median_srocc: float = field(init=False)
    std_srocc: float = field(init=False)
    median_plcc: float = field(init=False)
    std_plcc: float = field(init=False)
    mean_outlier_ratio: float | None = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.srocc, dtype=np.float64)
        p = np.asarray(self.plcc, dtype=np.float64)
        self.median_srocc = float(np.median(s))
        self.std_srocc = float(np.std(s))
        self.median_plcc = float(np.median(p))
        self.std_plcc = float(np.std(p))
        self.mean_outlier_ratio = None if self.outlier_ratio is None else float(np.mean(self.outlier_ratio))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def summary_row(self) -> dict[str, str]:
        orr = "-" if self.mean_outlier_ratio is None else f"{self.mean_outlier_ratio:.4f}"
        return {
            "median_srocc": f"{self.median_srocc:.4f}",
            "std_srocc": f"{self.std_srocc:.4f}",
            "median_plcc": f"{self.median_plcc:.4f}",
            "std_plcc": f"{self.std_plcc:.4f}",
            "outlier_ratio": orr,
        }


def _run_one(args):
    it, X, y, std, groups, train_idx, test_idx, trainer, seed = args
    try:
        model = trainer(X[train_idx], y[train_idx], groups[train_idx], seed)
        pred = np.asarray(model(X[test_idx]), dtype=np.float64)
        s = srocc_or_none(pred, y[test_idx])
        p = None
        try:
            p = plcc(pred, y[test_idx])
        except UndefinedCorrelation:
            pass
        o = None
        if std is not None:
            o = outlier_ratio(pred, y[test_idx], std[test_idx])
        return (0.0 if s is None else s, 0.0 if p is None else p, o)
    except Exception as exc:  # noqa: BLE001 - re-raised with the iteration index
        raise IterationError(it, exc) from exc


def evaluate_matrix(
    X,
    y,
    groups,
    trainer: Callable,
    plan: SplitPlan,
    score_std=None,
    jobs: int = 1,
    polarity: str = "MOS",
) -> ExperimentReport:
    """Run every split of ``plan`` on a precomputed feature matrix.

    ``trainer(X, y, groups, seed)`` must return a callable mapping feature
    rows to predicted scores. Undefined correlations (constant predictions)
    are recorded as 0.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    groups = np.asarray([str(g) for g in groups])
    std = None
    if score_std is not None and all(s is not None and np.isfinite(s) for s in score_std):
        std = np.asarray(score_std, dtype=np.float64)
    tasks = [
        (it, X, y, std, groups, tr, te, trainer, plan.seed * 100003 + it)
        for it, (tr, te) in enumerate(plan.splits)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    return ExperimentReport(
        srocc=[r[0] for r in results],
        plcc=[r[1] for r in results],
        outlier_ratio=None if std is None else [r[2] for r in results],
        iterations=plan.iterations,
        train_fraction=plan.train_fraction,
        seed=plan.seed,
        n_images=len(y),
        polarity=polarity,
    )


def run_experiment(manifest, extractor: Callable, trainer: Callable, plan: SplitPlan, jobs: int = 1) -> ExperimentReport:
    """Extract (or fetch) features for every manifest row, then run the split protocol."""
    X = np.vstack([np.asarray(getattr(v, "values", v), dtype=np.float64) for v in map(extractor, manifest)])
    polarities = {row.polarity for row in manifest}
    return evaluate_matrix(
        X,
        [row.score for row in manifest],
        [row.content_group for row in manifest],
        trainer,
        plan,
        score_std=[row.score_std for row in manifest],
        jobs=jobs,
        polarity=polarities.pop() if len(polarities) == 1 else "MOS",
    )


@dataclass(frozen=True)
class SvrTrainer:
    """Picklable trainer: grid-searched SVR per split."""

    search_grid: object = None
    params: tuple[float, float, float] | None = None

    def __call__(self, X, y, groups, seed):
        from .regressor import predict, train

        model = train(X, y, search_grid=self.search_grid, seed=seed, groups=groups, params=self.params)
        return lambda Xt: predict(model, Xt, layout_version=model.layout_version)


# ---------------------------------------------------------------------------
# significance


def ttest_matrix(per_iteration: dict[str, Sequence[float]], alpha: float = SIGNIFICANCE_LEVEL):
    """Paired one-sided t-tests between every pair of algorithms.

    Returns (names, matrix) with entry 1 when the row algorithm is
    significantly better, -1 when significantly worse, else 0.
    """
    names = list(per_iteration)
    data = [np.asarray(per_iteration[k], dtype=np.float64) for k in names]
    n = {d.size for d in data}
    if len(n) != 1:
        raise ValueError(f"mismatched iteration counts: {sorted(n)}")
    n = n.pop()
    if n < 2:
        raise ValueError("need at least 2 iterations")
    crit = sps.t.ppf(1.0 - alpha, n - 1)
    m = len(names)
    out = np.zeros((m, m), dtype=int)
    for r in range(m):
        for c in range(r + 1, m):
            d = data[r] - data[c]
            mean, sd = float(d.mean()), float(d.std(ddof=1))
            if sd <= 1e-12 * max(1.0, abs(mean)):
                v = int(np.sign(mean)) if abs(mean) > 1e-12 else 0
            else:
                t = mean / (sd / np.sqrt(n))
                v = 1 if t > crit else (-1 if t < -crit else 0)
            out[r, c], out[c, r] = v, -v
    return names, out


def write_significance_csv(names: list[str], matrix: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + names)
        for name, row in zip(names, matrix):
            w.writerow([name] + [int(v) for v in row])
