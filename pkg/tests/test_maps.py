import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from friquee import color, maps
from friquee.stats import fit_aggd, fit_ggd

from conftest import pristine_names, load_fixture


def brute_normalize(x):
    """Direct-sum mu and sigma with half-sample symmetric padding."""
    w = maps.normalization_window()
    p = np.pad(x, 3, mode="symmetric")
    mu = np.zeros_like(x)
    sigma = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            patch = p[i : i + 7, j : j + 7]
            mu[i, j] = np.sum(w * patch)
            sigma[i, j] = np.sqrt(np.sum(w * (patch - mu[i, j]) ** 2))
    return mu, sigma


def test_window_properties():
    w = maps.normalization_window()
    assert w.shape == (7, 7)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(w, w.T) and np.allclose(w, w[::-1, ::-1])


def test_normalize_constant():
    f = maps.normalize(np.full((12, 15), 37.0))
    assert np.allclose(f.nlc, 0, atol=1e-12) and np.allclose(f.sigma, 0, atol=1e-6)
    assert f.nlc.shape == f.mu.shape == f.sigma.shape == (12, 15)


def test_normalize_impulse_matches_direct_sum():
    h = 50.0
    x = np.zeros((15, 15))
    x[7, 7] = h
    f = maps.normalize(x)
    mu, sigma = brute_normalize(x)
    assert np.allclose(f.mu, mu, atol=1e-10)
    assert np.allclose(f.sigma, sigma, atol=1e-6)
    w00 = maps.normalization_window()[3, 3]
    assert f.sigma[7, 7] == pytest.approx(h * np.sqrt(w00 * (1 - w00)), rel=1e-9)


def test_normalize_random_matches_direct_sum(rng):
    x = rng.uniform(0, 255, size=(11, 13))
    f = maps.normalize(x)
    mu, sigma = brute_normalize(x)
    assert np.allclose(f.mu, mu, atol=1e-9)
    assert np.allclose(f.sigma, sigma, atol=1e-5)
    assert np.allclose(f.nlc, (x - mu) / (sigma + 1), atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (9, 10), elements=st.floats(0, 255)), st.floats(-500, 500))
def test_normalize_shift_invariance(x, c):
    a, b = maps.normalize(x), maps.normalize(x + c)
    assert np.max(np.abs(a.nlc - b.nlc)) < 1e-9
    assert np.all(a.sigma >= 0)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_normalize_approximate_gain_invariance(rng, c):
    x = rng.normal(scale=1000.0, size=(64, 64))
    a, b = maps.normalize(x).nlc, maps.normalize(c * x).nlc
    assert np.max(np.abs(a - b)) <= 0.02 * np.max(np.abs(a))


def test_normalize_too_small():
    with pytest.raises(maps.TooSmall):
        maps.normalize(np.zeros((6, 20)))


def test_paired_products_checkerboard():
    i, j = np.indices((6, 7))
    board = np.where((i + j) % 2 == 0, 1.0, -1.0)
    pp = maps.paired_products(board)
    assert np.all(pp.horizontal == -1) and np.all(pp.vertical == -1)
    assert np.all(pp.main_diagonal == 1) and np.all(pp.anti_diagonal == 1)


def test_paired_products_ones():
    pp = maps.paired_products(np.ones((5, 5)))
    for m in pp.as_dict().values():
        assert np.all(m == 1)


def test_paired_products_brute_force(rng):
    x = rng.normal(size=(6, 8))
    pp = maps.paired_products(x)
    for i in range(5):
        for j in range(8):
            if j < 7:
                assert pp.horizontal[i, j] == x[i, j] * x[i, j + 1]
                assert pp.main_diagonal[i, j] == x[i, j] * x[i + 1, j + 1]
            if j > 0:
                assert pp.anti_diagonal[i, j - 1] == x[i, j] * x[i + 1, j - 1]
            assert pp.vertical[i, j] == x[i, j] * x[i + 1, j]
    assert pp.horizontal.shape == (6, 7) and pp.vertical.shape == (5, 8)


def test_dog_kernel_centre_and_size():
    k = maps.dog_kernel()
    assert k.shape == (13, 13)
    assert k[6, 6] == pytest.approx((1 / np.sqrt(2 * np.pi)) * (1 / 1.16 - 1 / 1.74), rel=1e-12)


def test_dog_constant_response():
    k = maps.dog_kernel()
    out = maps.dog_filter(np.full((20, 20), 3.0))
    # analytic: every output equals the constant times the (nonzero) discrete kernel sum
    assert abs(k.sum()) > 0.1
    assert np.allclose(out, 3.0 * k.sum(), rtol=1e-12)


def test_dog_linearity(rng):
    a, b = rng.normal(size=(2, 30, 30))
    assert np.max(np.abs(maps.dog_filter(a + b) - maps.dog_filter(a) - maps.dog_filter(b))) < 1e-9


def test_dog_too_small():
    with pytest.raises(maps.TooSmall):
        maps.dog_filter(np.zeros((13, 13)))


def test_dog_chain_constant():
    a, b = maps.dog_sigma_chain(np.full((40, 40), 5.0))
    assert np.allclose(a, 0, atol=1e-9) and np.allclose(b, 0, atol=1e-9)


@pytest.mark.parametrize("name", pristine_names())
def test_dog_chain_pristine_envelope(name):
    field = maps.normalize(color.to_luma(load_fixture(name)))
    a1, _ = maps.dog_sigma_chain(field.sigma)
    a2, _ = maps.dog_sigma_chain(field.sigma)
    assert np.array_equal(a1, a2)
    # measured on the bundled pristine crops: 0.82 .. 1.62
    assert 0.7 <= fit_ggd(a1).alpha <= 3.5


def test_laplacian_constant_and_shape():
    out = maps.laplacian(np.full((21, 30), 8.0))
    assert out.shape == (11, 15)
    assert np.allclose(out, 0, atol=1e-12)


def test_laplacian_noise_energy(rng):
    x = rng.normal(size=(128, 128))
    assert maps.laplacian(x).var() > 0.25 * x.var()


def test_downsample_sizes():
    assert maps.downsample2(np.zeros((8, 8))).shape == (4, 4)
    assert maps.downsample2(maps.downsample2(np.zeros((512, 512)))).shape == (128, 128)
    assert np.allclose(maps.downsample2(np.full((9, 9), 6.5)), 6.5)
    with pytest.raises(maps.TooSmall):
        maps.downsample2(np.zeros((3, 8)))


@pytest.mark.parametrize("name", pristine_names())
def test_paired_products_admit_aggd(name):
    nlc = maps.normalize(color.to_luma(load_fixture(name))).nlc
    for prod in maps.paired_products(nlc).as_dict().values():
        fit = fit_aggd(prod)
        assert fit.nu > 0 and fit.sigma_l > 0 and fit.sigma_r > 0
