"""RBF epsilon-SVR on standardized feature vectors, with grid-searched hyperparameters.

The penalty is applied to the *mean* epsilon-insensitive loss,

    min  1/2 ||w||^2 + (C / n) * sum_i max(0, |y_i - f(x_i)| - eps),

so duplicating every training sample leaves the solution unchanged. The
dual is solved by libsvm's SMO (through scikit-learn) on a precomputed
kernel; prediction, persistence and KKT checks are done here.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.svm import SVR

from .evaluation import srocc_or_none
from .features import LAYOUT_VERSION, FeatureVector

MAGIC = b"FRQE"
FORMAT_VERSION = 1
DEFAULT_TOL = 1e-3
# the final fit is cheap, so solve it far below the KKT tolerance
FINAL_TOL = 1e-9
MIN_SAMPLES = 20


class VersionError(ValueError):
    """Feature layout of the input does not match the model."""


@dataclass(frozen=True)
class SearchGrid:
    C: tuple[float, ...] = tuple(2.0**k for k in range(-1, 11))
    gamma: tuple[float, ...] = tuple(2.0**k for k in range(-10, 4))
    epsilon: tuple[float, ...] = (0.1, 0.5, 1.0)
    n_folds: int = 5

    def candidates(self):
        """All (C, gamma, epsilon) in tie-break order: smaller C, then gamma, then epsilon."""
        return list(itertools.product(sorted(self.C), sorted(self.gamma), sorted(self.epsilon)))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=np.float64) * self.scale + self.mean


@dataclass(frozen=True)
class QualityModel:
    gamma: float
    C: float
    epsilon: float
    support_vectors: np.ndarray  # standardized, shape (n_sv, d)
    dual_coef: np.ndarray  # shape (n_sv,)
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    layout_version: str
    n_train: int

    @property
    def box(self) -> float:
        """Per-sample bound on the dual coefficients."""
        return self.C / self.n_train

    def decision(self, Z: np.ndarray) -> np.ndarray:
        """Predictions for already-standardized rows."""
        Z = np.atleast_2d(Z)
        if len(self.dual_coef) == 0:
            return np.full(Z.shape[0], self.intercept)
        K = rbf_kernel(Z, self.support_vectors, self.gamma)
        return K @ self.dual_coef + self.intercept


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    return np.maximum(aa[:, None] + bb[None, :] - 2.0 * (A @ B.T), 0.0)


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


def _as_matrix(features, layout_version: str | None) -> tuple[np.ndarray, str]:
    if len(features) and isinstance(features[0], FeatureVector):
        versions = {f.layout_version for f in features}
        if len(versions) != 1:
            raise VersionError(f"mixed layout versions: {sorted(versions)}")
        version = versions.pop()
        if layout_version is not None and layout_version != version:
            raise VersionError(f"features have layout {version}, expected {layout_version}")
        return np.vstack([f.values for f in features]), version
    return np.asarray(features, dtype=np.float64), layout_version or LAYOUT_VERSION


def _solve(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float):
    n = len(y)
    svr = SVR(kernel="precomputed", C=C / n, epsilon=epsilon, tol=tol, shrinking=True, cache_size=200)
    svr.fit(K, y)
    return svr.support_, svr.dual_coef_.ravel().copy(), float(svr.intercept_[0])


def fit_svr(Z: np.ndarray, y: np.ndarray, C: float, gamma: float, epsilon: float, tol: float = DEFAULT_TOL):
    """Fit on standardized rows; returns (support indices, dual coefficients, intercept)."""
    return _solve(rbf_kernel(Z, Z, gamma), np.asarray(y, dtype=np.float64), C, epsilon, tol)


def group_folds(n: int, n_folds: int, groups=None, seed: int = 0) -> list[np.ndarray]:
    """Validation index sets; all rows of a group land in the same fold."""
    groups = np.arange(n) if groups is None else np.asarray(groups)
    uniq = np.unique(groups)
    if len(uniq) < n_folds:
        raise ValueError(f"{len(uniq)} groups is fewer than {n_folds} folds")
    order = np.random.default_rng(seed).permutation(len(uniq))
    fold_of_group = {uniq[g]: i % n_folds for i, g in enumerate(order)}
    fold = np.array([fold_of_group[g] for g in groups])
    return [np.flatnonzero(fold == k) for k in range(n_folds)]


def cross_validate(X, y, grid: SearchGrid, groups=None, seed: int = 0, tol: float = DEFAULT_TOL):
    """Mean fold SROCC for every grid candidate, keyed by (C, gamma, epsilon)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = group_folds(len(y), grid.n_folds, groups, seed)
    cands = grid.candidates()
    scores = {c: 0.0 for c in cands}
    for val in folds:
        train = np.setdiff1d(np.arange(len(y)), val)
        std = Standardizer.fit(X[train])
        Zt, Zv = std.transform(X[train]), std.transform(X[val])
        d_tt, d_vt = sq_distances(Zt, Zt), sq_distances(Zv, Zt)
        for gamma in sorted(grid.gamma):
            K_tt, K_vt = np.exp(-gamma * d_tt), np.exp(-gamma * d_vt)
            for C, eps in itertools.product(sorted(grid.C), sorted(grid.epsilon)):
                sv, coef, b = _solve(K_tt, y[train], C, eps, tol)
                pred = K_vt[:, sv] @ coef + b
                rho = srocc_or_none(pred, y[val])
                scores[(C, gamma, eps)] += (0.0 if rho is None else rho) / len(folds)
    return scores


def select(scores: dict) -> tuple[float, float, float]:
    best, best_score = None, -np.inf
    for cand in sorted(scores):
        if scores[cand] > best_score:
            best, best_score = cand, scores[cand]
    return best


def train(
    features,
    scores,
    search_grid: SearchGrid | None = None,
    seed: int = 0,
    groups=None,
    layout_version: str | None = None,
    params: tuple[float, float, float] | None = None,
    tol: float = DEFAULT_TOL,
    final_tol: float = FINAL_TOL,
) -> QualityModel:
    """Standardize, pick (C, gamma, epsilon) by grouped k-fold SROCC, and fit on all rows.

    ``params`` skips the search and uses the given (C, gamma, epsilon).
    """
    X, version = _as_matrix(features, layout_version)
    y = np.asarray(scores, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"feature matrix {X.shape} does not match {y.shape[0]} scores")
    if len(y) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {len(y)}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("features and scores must be finite")
    if params is None:
        grid = search_grid or SearchGrid()
        params = select(cross_validate(X, y, grid, groups=groups, seed=seed, tol=tol))
    C, gamma, eps = params
    std = Standardizer.fit(X)
    Z = std.transform(X)
    sv, coef, b = fit_svr(Z, y, C, gamma, eps, final_tol)
    return QualityModel(
        gamma=float(gamma),
        C=float(C),
        epsilon=float(eps),
        support_vectors=Z[sv].copy(),
        dual_coef=coef,
        intercept=b,
        mean=std.mean,
        scale=std.scale,
        layout_version=version,
        n_train=len(y),
    )


def predict(model: QualityModel, features, layout_version: str | None = None):
    """Score one FeatureVector / 1D array (returns float) or a batch (returns array)."""
    single = isinstance(features, FeatureVector) or np.ndim(features) == 1
    batch = [features] if single else features
    X, version = _as_matrix(batch, layout_version or model.layout_version)
    if version != model.layout_version:
        raise VersionError(f"features have layout {version}, model expects {model.layout_version}")
    if X.shape[1] != model.mean.shape[0]:
        raise VersionError(f"feature length {X.shape[1]} != model dimension {model.mean.shape[0]}")
    out = model.decision((X - model.mean) / model.scale)
    return float(out[0]) if single else out


def kkt_residuals(model: QualityModel, X, y) -> np.ndarray:
    """Per-sample violation of the epsilon-SVR optimality conditions on the training set.

    ``X`` must be the (unstandardized) training matrix in its original order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Z = (X - model.mean) / model.scale
    beta = np.zeros(len(y))
    if len(model.dual_coef):
        # recover which training rows are support vectors
        idx = np.argmin(sq_distances(model.support_vectors, Z), axis=1)
        beta[idx] = model.dual_coef
    r = y - model.decision(Z)
    eps, box = model.epsilon, model.box
    atol = 1e-9 * box
    viol = np.empty(len(y))
    for i, (b, ri) in enumerate(zip(beta, r)):
        if abs(b) <= atol:
            viol[i] = max(0.0, abs(ri) - eps)
        elif b >= box - atol:
            viol[i] = max(0.0, eps - ri)
        elif b <= -box + atol:
            viol[i] = max(0.0, ri + eps)
        elif b > 0:
            viol[i] = abs(ri - eps)
        else:
            viol[i] = abs(ri + eps)
    return viol


# ---------------------------------------------------------------------------
# persistence


def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dumps(model: QualityModel) -> bytes:
    dim = model.mean.shape[0]
    n_sv = len(model.dual_coef)
    layout = model.layout_version.encode("utf-8")
    head = MAGIC + struct.pack(
        "<I4dIIII",
        FORMAT_VERSION,
        model.gamma,
        model.C,
        model.epsilon,
        model.intercept,
        model.n_train,
        n_sv,
        dim,
        len(layout),
    )
    return b"".join(
        [
            head,
            layout,
            _pack_array(model.mean),
            _pack_array(model.scale),
            _pack_array(model.dual_coef),
            _pack_array(model.support_vectors.reshape(n_sv, dim)),
        ]
    )


def loads(data: bytes) -> QualityModel:
    if data[:4] != MAGIC:
        raise ValueError("not a model file (bad magic)")
    fmt = "<I4dIIII"
    size = struct.calcsize(fmt)
    version, gamma, C, eps, b, n_train, n_sv, dim, n_layout = struct.unpack_from(fmt, data, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported model format version {version}")
    pos = 4 + size
    layout = data[pos : pos + n_layout].decode("utf-8")
    pos += n_layout

    def take(count):
        nonlocal pos
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        return arr

    mean, scale, coef = take(dim), take(dim), take(n_sv)
    sv = take(n_sv * dim).reshape(n_sv, dim)
    if pos != len(data):
        raise ValueError("model file has trailing or missing bytes")
    return QualityModel(
        gamma=gamma,
        C=C,
        epsilon=eps,
        support_vectors=sv,
        dual_coef=coef,
        intercept=b,
        mean=mean,
        scale=scale,
        layout_version=layout,
        n_train=n_train,
    )


def save_model(model: QualityModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path) -> QualityModel:
    return loads(Path(path).read_bytes())
