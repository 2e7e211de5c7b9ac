"""Acceptance criteria, one test each; the run ends with a PASS/FAIL line per criterion.

Criterion 8 needs a user-supplied MOS manifest of a public IQA database:
set FRIQUEE_DATASET_MANIFEST (and optionally FRIQUEE_DATASET_CACHE).
"""

import json
import os
import time

import numpy as np
import pytest
from scipy import special
from scipy.stats import gennorm

from friquee import cli
from friquee.color import to_luma
from friquee.dataset_io import add_white_noise, gaussian_blur, load_manifest, write_manifest
from friquee.evaluation import outlier_ratio, plcc, srocc, ttest_matrix
from friquee.features import BLOCK_SIZES, extract_all, layout
from friquee.maps import normalize
from friquee.stats import fit_aggd, fit_ggd

from conftest import all_names, load_fixture, pristine_names

DATASET_ENV = "FRIQUEE_DATASET_MANIFEST"


def nlc_alpha(rgb):
    return fit_ggd(normalize(to_luma(rgb)).nlc).alpha


def aggd_draws(nu, beta_l, beta_r, n, rng):
    """Exact AGGD sampler: pick a side with probability proportional to its scale."""
    left = rng.uniform(size=n) < beta_l / (beta_l + beta_r)
    mag = np.abs(gennorm.rvs(nu, size=n, random_state=rng))
    return np.where(left, -beta_l * mag, beta_r * mag)


@pytest.mark.acceptance(1, "estimator recovery for GGD shape and AGGD scales")
def test_criterion_1_estimator_recovery(request):
    start = time.perf_counter()
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 4.0):
        x = gennorm.rvs(alpha, size=10**6, random_state=np.random.default_rng(int(100 * alpha)))
        err = abs(fit_ggd(x).alpha - alpha) / alpha
        worst = max(worst, err)
        assert err < 0.03, alpha
    for nu, bl, br in ((2.0, 1.0, 2.0), (1.0, 3.0, 1.0), (0.7, 0.5, 1.5)):
        x = aggd_draws(nu, bl, br, 10**6, np.random.default_rng(7))
        fit = fit_aggd(x)
        k = np.sqrt(special.gamma(3 / nu) / special.gamma(1 / nu))
        for got, want in ((fit.sigma_l, bl * k), (fit.sigma_r, br * k)):
            err = abs(got - want) / want
            worst = max(worst, err)
            assert err < 0.03, (nu, bl, br)
    elapsed = time.perf_counter() - start
    request.node.acceptance_note = f"worst relative error {worst:.4f}, {elapsed:.1f}s"
    assert elapsed < 30


@pytest.mark.acceptance(2, "pristine NLC shape in [1.6, 2.6]; noise raises it, blur lowers it")
def test_criterion_2_gaussianity_anchor(request):
    start = time.perf_counter()
    names = pristine_names()
    assert len(names) >= 5
    seen = []
    for i, name in enumerate(names):
        img = load_fixture(name)
        clean = nlc_alpha(img)
        noisy = nlc_alpha(add_white_noise(img, 30.0, seed=i))
        blurred = nlc_alpha(gaussian_blur(img, 3.0))
        seen.append((clean, noisy, blurred))
        assert 1.6 <= clean <= 2.6, (name, clean)
        assert noisy > clean, (name, clean, noisy)
        assert blurred < clean, (name, clean, blurred)
    elapsed = time.perf_counter() - start
    c, n, b = (np.array(v) for v in zip(*seen))
    request.node.acceptance_note = (
        f"clean {c.min():.2f}-{c.max():.2f}, noisy {n.min():.2f}-{n.max():.2f}, "
        f"blurred {b.min():.2f}-{b.max():.2f}, {elapsed:.1f}s"
    )
    assert elapsed < 60


@pytest.mark.acceptance(3, "564 finite values per fixture; block sizes 155/2/163/240/4")
def test_criterion_3_layout_contract(request):
    assert layout().block_sizes() == {"luma": 155, "yellow": 2, "chroma": 163, "lms": 240, "hsi": 4}
    assert BLOCK_SIZES == layout().block_sizes() and sum(BLOCK_SIZES.values()) == 564
    for name in all_names():
        fv = extract_all(load_fixture(name))
        assert len(fv.values) == 564 and np.all(np.isfinite(fv.values)), name
    request.node.acceptance_note = f"{len(all_names())} fixtures"


def _ranks(v):
    order = np.argsort(v, kind="stable")
    r = np.empty(len(v))
    r[order] = np.arange(1, len(v) + 1)
    for val in np.unique(v):
        tie = v == val
        r[tie] = r[tie].mean()
    return r


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


@pytest.mark.acceptance(4, "SROCC/PLCC match brute force to 1e-12; outlier ratio matches counting")
def test_criterion_4_metric_oracles(request):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(1000):
        a = rng.normal(size=20)
        b = np.round(rng.normal(size=20), 1) if k % 3 == 0 else rng.normal(size=20)
        worst = max(worst, abs(srocc(a, b) - _pearson(_ranks(a), _ranks(b))), abs(plcc(a, b) - _pearson(a, b)))
        std = rng.uniform(0.1, 1.0, size=20)
        pred = b + rng.normal(scale=1.5, size=20)
        count = sum(1 for p, m, s in zip(pred, b, std) if abs(p - m) > 2 * s)
        assert outlier_ratio(pred, b, std) == count / 20
    elapsed = time.perf_counter() - start
    request.node.acceptance_note = f"max deviation {worst:.1e}, {elapsed:.1f}s"
    assert worst <= 1e-12
    assert elapsed < 10


@pytest.mark.acceptance(5, "200-image noise/blur corpus, 50 grouped 80/20 splits: median SROCC >= 0.85")
def test_criterion_5_end_to_end(corpus, tmp_path, request, capsys):
    start = time.perf_counter()
    out = tmp_path / "report.json"
    code = cli.main(["evaluate", "--manifest", str(corpus.manifest), "--cache", str(corpus.cache), "--seed", "0", "--report-out", str(out)])
    capsys.readouterr()
    assert code == 0
    report = json.loads(out.read_text())
    total = corpus.build_seconds + time.perf_counter() - start
    request.node.acceptance_note = (
        f"median SROCC {report['median_srocc']:.4f} (std {report['std_srocc']:.4f}), "
        f"median PLCC {report['median_plcc']:.4f}, {total / 60:.1f} min including extraction"
    )
    assert report["iterations"] == 50 and report["train_fraction"] == 0.8 and report["n_images"] == 200
    assert report["median_srocc"] >= 0.85
    assert total < 15 * 60


@pytest.mark.acceptance(6, "fixed seed gives byte-identical reports across runs and --jobs")
def test_criterion_6_determinism(corpus, tmp_path, request, capsys):
    texts = []
    for run, jobs in enumerate((1, 1, 2)):
        out = tmp_path / f"r{run}.json"
        argv = ["evaluate", "--manifest", str(corpus.manifest), "--cache", str(corpus.cache)]
        argv += ["--iterations", "8", "--seed", "11", "--jobs", str(jobs), "--report-out", str(out)]
        assert cli.main(argv) == 0
        texts.append(out.read_bytes())
    capsys.readouterr()
    request.node.acceptance_note = "3 runs of 8 iterations, jobs 1/1/2"
    assert texts[0] == texts[1] == texts[2]


@pytest.mark.acceptance(7, "significance matrix: zero diagonal, antisymmetric, dominant method wins")
def test_criterion_7_significance(request):
    rng = np.random.default_rng(7)
    base = rng.normal(0.7, 0.03, size=50)
    sets = {
        "dominant": base + 0.05,
        "reference": base,
        "noisy": base + rng.normal(0, 0.02, 50),
        "weak": base - 0.04 + rng.normal(0, 0.01, 50),
    }
    names, m = ttest_matrix(sets)
    assert np.all(np.diag(m) == 0)
    assert np.array_equal(m, -m.T)
    i = names.index("dominant")
    assert all(m[i, j] == 1 for j in range(len(names)) if j != i)
    request.node.acceptance_note = "matrix " + json.dumps(m.tolist())


@pytest.mark.acceptance(8, "optional: public database beats a label-shuffled control by >= 0.3")
def test_criterion_8_dataset_backed(tmp_path, request, capsys):
    manifest = os.environ.get(DATASET_ENV)
    if not manifest:
        pytest.skip(f"set {DATASET_ENV} to a MOS/DMOS manifest to run")
    cache = os.environ.get("FRIQUEE_DATASET_CACHE", str(tmp_path / "dataset.fqch"))
    rows = load_manifest(manifest)
    shuffled = tmp_path / "shuffled.csv"
    perm = np.random.default_rng(0).permutation(len(rows))
    from dataclasses import replace

    write_manifest([replace(r, raw_score=rows[p].raw_score) for r, p in zip(rows, perm)], shuffled)
    medians = []
    for m in (manifest, shuffled):
        out = tmp_path / "r.json"
        assert cli.main(["evaluate", "--manifest", str(m), "--cache", cache, "--report-out", str(out)]) == 0
        medians.append(json.loads(out.read_text())["median_srocc"])
    capsys.readouterr()
    request.node.acceptance_note = f"median SROCC {medians[0]:.4f} vs shuffled {medians[1]:.4f}"
    assert medians[0] - medians[1] >= 0.3
