import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_system
from isac_scatter.lsm import (
    LsmConfig,
    indicator,
    lsm_from_scene,
    lsm_solve,
    max_gap_threshold,
    normalized_scores,
    trimmed_max_gap_threshold,
)
from isac_scatter.roi import RoiIndexSet, read_index_csv, read_pgm, roi_select, square_roi, write_index_csv, write_pgm


def _random_problem(rng, m=24, nt=6, n=10):
    U = rng.standard_normal((m, nt)) + 1j * rng.standard_normal((m, nt))
    G = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    return U, G


def test_lsm_solve_normal_equations(rng):
    U, G = _random_problem(rng)
    c = lsm_solve(U, G, 1e-2)
    lhs = (U.conj().T @ U + 1e-2 * np.eye(U.shape[1])) @ c
    assert np.allclose(lhs, U.conj().T @ G, rtol=1e-12, atol=1e-12)


def test_lsm_solve_large_zeta_shrinks(rng):
    U, G = _random_problem(rng)
    assert np.linalg.norm(lsm_solve(U, G, 1e12)) < 1e-9 * np.linalg.norm(lsm_solve(U, G, 1e-3))
    with pytest.raises(ValueError):
        lsm_solve(U, G, 0.0)


def test_lsm_point_scatterer_indicator_peaks_at_support():
    sys_ = small_system(side=10, f_c=1.5e9, K=2, T=2, n_tx=16, n_rx=16)
    chi = np.zeros(sys_.grid.N, dtype=complex)
    p = 44
    chi[p] = 0.3
    res = lsm_from_scene(sys_, chi, np.inf, 0, LsmConfig(zeta=1e-6))
    r0, c0 = divmod(p, 10)
    r1, c1 = divmod(int(np.argmax(res.J_K)), 10)
    assert max(abs(r1 - r0), abs(c1 - c0)) <= 1


def test_indicator_single_tone_and_scaling(rng):
    c = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    J1 = indicator([c])
    assert np.allclose(J1, np.log10(np.sum(np.abs(c) ** 2, axis=0)))
    J2 = indicator([10 * c, 10 * c])
    assert np.allclose(J2 - J1, 2.0)


def test_indicator_floor_for_zero_columns():
    c = np.zeros((3, 4))
    assert np.all(indicator([c]) == -300.0)


def test_algorithm1_hand_trace():
    s = np.array([0.70, 0.05, 0.80, 0.12, 0.10])
    eta = max_gap_threshold(s, 0.05)
    assert eta == pytest.approx(0.41)
    assert np.flatnonzero(s <= eta).tolist() == [1, 3, 4]


def test_algorithm1_too_few_scores():
    with pytest.raises(ValueError, match="at least 3"):
        max_gap_threshold([0.1, 0.2], 0.05)
    with pytest.raises(ValueError, match="no admissible gap"):
        max_gap_threshold(np.arange(100.0), 0.5)


def test_degenerate_scores_select_everything(caplog):
    J = np.full(16, 3.0)
    eta, s = trimmed_max_gap_threshold(J, 1e-4, 0.05)
    assert np.all(s == 0) and eta == 0
    assert roi_select(s, eta, 4).P == 16


def test_ties_take_smallest_gap_index():
    # gaps 0.1, 0.3, 0.3, 0.1: the first maximal gap wins
    s = np.array([0.0, 0.1, 0.4, 0.7, 0.8])
    assert max_gap_threshold(s, 0.05) == pytest.approx(0.25)


@given(st.lists(st.floats(-50, 50), min_size=8, max_size=60, unique=True), st.floats(0.1, 10), st.floats(-5, 5))
def test_threshold_affine_invariance(J, a, b):
    J = np.asarray(J)
    _, s = trimmed_max_gap_threshold(J, 1e-12, 0.05)
    _, s2 = trimmed_max_gap_threshold(a * J + b, 1e-12 * a, 0.05)
    e1 = max_gap_threshold(s, 0.05)
    e2 = max_gap_threshold(s2, 0.05)
    assert np.array_equal(s <= e1, s2 <= e2)


@given(st.lists(st.floats(-50, 50), min_size=8, max_size=60))
def test_scores_properties(J):
    J = np.asarray(J)
    s = normalized_scores(J, 1e-4)
    assert np.all((s >= 0) & (s <= 1))
    assert s[np.argmax(J)] == 0
    eta = max_gap_threshold(s, 0.05)
    assert s[np.argmax(J)] <= eta
    # ROI monotonicity: lowering eta never adds pixels
    assert np.all((s <= eta - 0.01) <= (s <= eta))


def test_lsm_config_validation():
    for kw in ({"zeta": 0}, {"epsilon": -1}, {"q_trim": 0.6}, {"q_trim": 0}):
        with pytest.raises(ValueError):
            LsmConfig(**kw)


# ---------------------------------------------------------------- ROI sets


def test_roi_index_set_invariants():
    r = RoiIndexSet([5, 2, 2, 9], 4)
    assert r.indices.tolist() == [2, 5, 9] and r.P == 3 and r.N == 16
    for bad in ([], [16], [-1]):
        with pytest.raises(ValueError):
            RoiIndexSet(bad, 4)
    with pytest.raises(ValueError):
        roi_select(np.ones(4), 0.5, 2)
    assert roi_select(np.array([0.1, 0.2, 0.3, 0.4]), 1.0, 2).P == 4


def test_square_roi_centered():
    r = square_roi(36, 22)
    rows, cols = np.divmod(r.indices, 36)
    assert r.P == 484 and rows.min() == 7 and rows.max() == 28 and cols.min() == 7
    assert square_roi(36, 36).P == 1296
    edge = square_roi(10, 4, (0.0, 9.0))
    rows, cols = np.divmod(edge.indices, 10)
    assert rows.min() == 0 and cols.max() == 9


def test_roi_files_round_trip(tmp_path):
    r = RoiIndexSet([0, 7, 8, 15], 4)
    assert np.array_equal(read_pgm(write_pgm(r, tmp_path / "m.pgm")).indices, r.indices)
    assert np.array_equal(read_index_csv(write_index_csv(r, tmp_path / "m.csv"), 4).indices, r.indices)
    text = (tmp_path / "m.pgm").read_text().splitlines()
    assert text[:3] == ["P2", "4 4", "1"] and text[3] == "1 0 0 0"
    assert r.digest() == RoiIndexSet([15, 8, 7, 0], 4).digest()
