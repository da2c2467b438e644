import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import epsilon_0

from isac_scatter.em import (
    Grid2D,
    build_frequency_grid,
    contrast_from_scene,
    green_kernel,
    greens_domain,
    greens_obs,
    hankel2_0,
    resample_contrast,
    self_term,
    uniform_circular_array,
)


def mp_hankel2_0(x):
    return complex(mp.besselj(0, x) - 1j * mp.bessely(0, x))


def test_hankel_matches_mpmath_over_range():
    mp.mp.dps = 30
    xs = np.geomspace(0.1, 1e4, 400)
    ref = np.array([mp_hankel2_0(mp.mpf(float(x))) for x in xs])
    got = hankel2_0(xs)
    assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-10


def test_frequency_grid_nominal_endpoints():
    g = build_frequency_grid(28e9, 100e6, 32)
    assert g.tones[0] == pytest.approx(26.45e9, rel=1e-15)
    assert g.tones[-1] == pytest.approx(29.55e9, rel=1e-15)
    assert np.all(np.diff(g.tones) > 0)


def test_frequency_grid_single_tone():
    assert list(build_frequency_grid(28e9, 100e6, 1).tones) == [28e9]


@pytest.mark.parametrize("args", [(1e9, 1e9, 3), (28e9, 1e6, 0), (-1.0, 0.0, 1)])
def test_frequency_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_frequency_grid(*args)


@given(st.floats(1e9, 1e11), st.floats(0, 1e7), st.integers(1, 64))
def test_frequency_grid_mean_is_center(f_c, df, K):
    g = build_frequency_grid(f_c, df, K)
    assert np.mean(g.tones) == pytest.approx(f_c, rel=1e-12)


def test_grid_layout():
    g = Grid2D(36, 1.8)
    assert g.N == 1296
    assert g.cell_area == pytest.approx(0.0025)
    assert np.allclose(g.centers.mean(axis=0), 0.0)
    # row 0 is the top row, columns increase in x
    assert g.centers[0, 1] > g.centers[-1, 1]
    assert g.centers[1, 0] > g.centers[0, 0]


def test_uca_geometry():
    g = Grid2D(36, 1.8)
    a = uniform_circular_array(10.0, 60, 60, g)
    assert np.allclose(np.linalg.norm(a.tx_positions, axis=1), 10.0)
    ang = np.unwrap(np.arctan2(a.rx_positions[:, 1], a.rx_positions[:, 0]))
    assert np.allclose(np.diff(ang), 2 * np.pi / 60)
    with pytest.raises(ValueError):
        uniform_circular_array(1.0, 60, 60, g)


def test_contrast_examples():
    g = Grid2D(2, 1.0)
    w = 2 * np.pi * 28e9
    assert np.all(contrast_from_scene(g, 1.0, 0.0, w).chi == 0)
    assert np.allclose(contrast_from_scene(g, 1.5, 0.0, w).chi, 0.5)
    chi = contrast_from_scene(g, 2.0, 0.01, w).chi
    assert np.allclose(chi, 1 + 1j * 0.01 / (epsilon_0 * w), rtol=1e-15)
    with pytest.raises(ValueError):
        contrast_from_scene(g, 0.5, 0.0, w)
    with pytest.raises(ValueError):
        contrast_from_scene(g, 1.5, -1.0, w)


def test_greens_domain_symmetric_and_far_field():
    g = Grid2D(12, 0.6)
    k = 2 * np.pi * 28e9 / 299792458.0
    G = greens_domain(g, k)
    assert np.array_equal(G, G.T)
    # far pair vs large-argument asymptotic of the kernel
    d = np.linalg.norm(g.centers[0] - g.centers[-1])
    asym = (-1j / 4) * k**2 * np.sqrt(2 / (np.pi * k * d)) * np.exp(-1j * (k * d - np.pi / 4)) * g.cell_area
    assert abs(G[0, -1] - asym) / abs(asym) < 0.01


def test_greens_domain_blocks_match_full():
    g = Grid2D(7, 0.35)
    G = greens_domain(g, 40.0)
    rows, cols = [3, 10, 48], [0, 5, 10, 20]
    assert np.array_equal(greens_domain(g, 40.0, rows, cols), G[np.ix_(rows, cols)])


@pytest.mark.parametrize("kh", [0.1, 1.0, 3.14, 29.3])
def test_self_term_matches_disk_quadrature(kh):
    mp.mp.dps = 25
    h = 0.05
    k = kh / h
    a = h / mp.sqrt(mp.pi)
    integrand = lambda r: (-1j / 4) * k**2 * (mp.besselj(0, k * r) - 1j * mp.bessely(0, k * r)) * r
    ref = complex(2 * mp.pi * mp.quad(integrand, [0, a]))
    assert abs(self_term(k, h) - ref) / abs(ref) < 1e-10


def test_self_term_close_to_square_cell_when_electrically_small():
    # the disk stands in for the square cell; the two differ by < 1% at k h <= 1
    mp.mp.dps = 20
    h = 0.05
    k = 1.0 / h
    kern = lambda r: (-1j / 4) * k**2 * (mp.besselj(0, k * r) - 1j * mp.bessely(0, k * r)) * r
    sq = 8 * mp.quad(lambda t: mp.quad(kern, [0, h / (2 * mp.cos(t))]), [0, mp.pi / 4])
    assert abs(self_term(k, h) - complex(sq)) / abs(complex(sq)) < 1e-2


def test_greens_obs_reciprocity_and_errors(rng):
    A = rng.uniform(-1, 1, (5, 2))
    B = rng.uniform(3, 4, (7, 2))
    assert np.allclose(greens_obs(A, B, 30.0), greens_obs(B, A, 30.0).T, rtol=0, atol=0)
    assert greens_obs(A, B, 30.0).shape == (7, 5)
    with pytest.raises(ValueError):
        greens_obs(A, A[:1], 30.0)


def test_greens_obs_far_field_decay():
    k = 500.0
    d = np.linspace(5, 50, 40)
    mag = np.abs(green_kernel(k, d))
    assert np.all(np.diff(mag) < 0)


def test_resample_identity_and_interpolation():
    g = Grid2D(4, 1.0)
    chi = np.arange(16) * (1 + 0.5j)
    assert np.allclose(resample_contrast(chi, g, g), chi)
    fine = Grid2D(8, 1.0)
    r = resample_contrast(chi, g, fine).reshape(8, 8)
    # fine pixel (1,1) lies a quarter of the way between coarse pixels 0,1,4,5
    assert r[1, 1] == pytest.approx(chi[0] + 0.25 * (chi[1] - chi[0]) + 0.25 * (chi[4] - chi[0]))
    assert math.isclose(r.real.max(), 15.0)
