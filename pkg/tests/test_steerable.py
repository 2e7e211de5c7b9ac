import numpy as np
import pytest

from friquee import steerable
from friquee.maps import TooSmall

from conftest import all_names, load_fixture


def best_bin_share(n_orient=6):
    """Largest fraction of a grating's energy one cos^(K-1) lobe can hold.

    A grating aligned with lobe 0 leaks into the lobe at offset t with
    power cos(t)^(2(K-1)).
    """
    order = n_orient - 1
    offsets = np.pi * np.arange(n_orient) / n_orient
    # each lobe catches whichever of +f / -f falls in its half-plane
    weights = np.cos(offsets) ** (2 * order)
    return 1.0 / weights.sum()


def test_constant_plane_bands_vanish():
    pyr = steerable.build_pyramid(np.full((64, 64), 100.0))
    for scale in pyr.subbands:
        for c in scale:
            assert np.max(np.abs(c)) < 1e-9 * 100.0


def test_band_shapes():
    pyr = steerable.build_pyramid(np.zeros((130, 97)))
    assert len(pyr.subbands) == 3 and all(len(s) == 6 for s in pyr.subbands)
    shapes = [pyr.subbands[s][0].shape for s in range(3)]
    assert shapes == [(130, 97), (65, 49), (33, 25)]
    assert np.iscomplexobj(pyr.subbands[0][0])


def test_too_small():
    with pytest.raises(TooSmall):
        steerable.build_pyramid(np.zeros((63, 100)))


def test_sinusoid_energy_concentrates():
    n = 128
    x = np.arange(n)
    # horizontal grating (intensity varies along x): gradient direction 0
    plane = np.tile(np.cos(2 * np.pi * 16 * x / n), (n, 1))
    pyr = steerable.build_pyramid(plane)
    e = np.array([[pyr.band_energy(s, k) for k in range(6)] for s in range(3)])
    s, k = np.unravel_index(np.argmax(e), e.shape)
    assert k == 0
    assert s == 1  # 16 cycles / 128 = 1/4 of Nyquist sits in the second octave band
    share = e[s, k] / e.sum()
    assert share == pytest.approx(best_bin_share(), rel=1e-6)
    assert share > 0.67


def test_rotation_permutes_orientations(rng):
    plane = load_fixture("chelsea_0_0.png")[..., 1]
    a = steerable.build_pyramid(plane)
    b = steerable.build_pyramid(np.rot90(plane))
    for s in range(3):
        ea = np.array([a.band_energy(s, k) for k in range(6)])
        eb = np.array([b.band_energy(s, k) for k in range(6)])
        assert np.allclose(np.roll(ea, 3), eb, rtol=0.05)


@pytest.mark.parametrize("name", all_names()[:6])
def test_energy_bookkeeping(name):
    plane = load_fixture(name)[..., 0]
    pyr = steerable.build_pyramid(plane - plane.mean())
    assert 0.8 <= pyr.total_energy() / plane.var() <= 1.2


def test_white_noise_entropy(rng):
    block = steerable.steerable_features(rng.normal(size=(128, 128)))
    for s in range(3):
        ent = block.values[block.names.index(f"s{s}.entropy")]
        assert ent >= 0.95 * np.log(6)


def test_block_layout_and_finiteness(astronaut):
    block = steerable.steerable_features(astronaut[..., 1])
    assert len(block.values) == steerable.BLOCK_SIZE == 82
    assert len(set(block.names)) == 82
    assert np.all(np.isfinite(block.values)) and not block.degenerate


def test_constant_plane_degenerate():
    block = steerable.steerable_features(np.full((64, 64), 3.0))
    assert len(block.values) == 82
    assert block.degenerate
    for n in block.degenerate:
        assert block.values[block.names.index(n)] == 0.0


def test_offset_invariance_and_determinism(astronaut):
    plane = astronaut[..., 2]
    a = steerable.steerable_features(plane)
    b = steerable.steerable_features(plane + 40.0)
    c = steerable.steerable_features(plane)
    assert np.allclose(a.values, b.values, rtol=1e-9, atol=1e-9)
    assert np.array_equal(a.values, c.values)
