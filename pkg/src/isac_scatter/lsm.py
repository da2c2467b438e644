"""Linear sampling: Tikhonov-regularized solves, multi-tone indicator and max-gap ROI threshold."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .forward import SensingSystem, multistatic_response
from .roi import RoiIndexSet, roi_select

log = logging.getLogger(__name__)

INDICATOR_FLOOR = 1e-300


@dataclass(frozen=True)
class LsmConfig:
    zeta: float = 1e-3
    epsilon: float = 1e-4
    q_trim: float = 0.05
    normalize: bool = True

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.q_trim <= 0.5:
            raise ValueError("q_trim must lie in (0, 1/2]")


@dataclass
class LsmResult:
    c_k: list
    J_K: np.ndarray
    scores: np.ndarray
    eta: float
    roi: RoiIndexSet


def lsm_solve(U: np.ndarray, G2_stacked: np.ndarray, zeta: float) -> np.ndarray:
    """argmin_c ||U c - G||_F^2 + zeta ||c||_F^2 through the N_t x N_t normal equations."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    UH = U.conj().T
    lhs = UH @ U
    lhs[np.diag_indices_from(lhs)] += zeta
    return sla.solve(lhs, UH @ G2_stacked, assume_a="pos")


def indicator(c_list) -> np.ndarray:
    """J_K(r) = mean over tones of log10 ||c_k(r)||^2."""
    c_list = list(c_list)
    if not c_list:
        raise ValueError("need at least one tone")
    n = c_list[0].shape[1]
    J = np.zeros(n)
    for c in c_list:
        if c.shape[1] != n:
            raise ValueError("coefficient matrices disagree on the number of test points")
        J += np.log10(np.maximum(np.sum(np.abs(c) ** 2, axis=0), INDICATOR_FLOOR))
    return J / len(c_list)


def normalized_scores(J, epsilon: float) -> np.ndarray:
    """s_p = (J_max - J_p) / (J_max - J_min + epsilon); 0 marks the strongest pixel."""
    J = np.asarray(J, dtype=float)
    return (J.max() - J) / (J.max() - J.min() + epsilon)


def max_gap_threshold(scores, q_trim: float) -> float:
    """Midpoint of the widest gap between sorted scores, ignoring ceil(q_trim N) gaps at each tail.

    Ties go to the smallest gap index.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    N = s.size
    w = math.ceil(q_trim * N)
    # 1-based admissible gap indices i = w .. N-1-w
    if N < 2 or w > N - 1 - w:
        if q_trim >= 0.5:
            raise ValueError(f"q_trim={q_trim} leaves no admissible gap for any number of scores")
        min_n = 2
        while math.ceil(q_trim * min_n) > min_n - 1 - math.ceil(q_trim * min_n):
            min_n += 1
        raise ValueError(f"{N} scores are too few for q_trim={q_trim}; need at least {min_n}")
    gaps = np.diff(s)
    window = gaps[w - 1:N - 1 - w]
    if not np.any(window > 0):
        log.warning("all scores coincide inside the trimming window; ROI is the full domain")
    i = w - 1 + int(np.argmax(window))
    return 0.5 * (s[i] + s[i + 1])


def trimmed_max_gap_threshold(J, epsilon: float, q_trim: float) -> tuple[float, np.ndarray]:
    """Threshold eta for an indicator map; returns (eta, normalized scores)."""
    s = normalized_scores(J, epsilon)
    return max_gap_threshold(s, q_trim), s


def stacked_rx_greens(system: SensingSystem, k: int) -> np.ndarray:
    """1_T kron G2_gamma: the test-point-to-Rx field repeated for every slot."""
    return np.tile(system.channels(k).G2_gamma, (system.T, 1))


def run_lsm(system: SensingSystem, U_list, config: LsmConfig = LsmConfig()) -> LsmResult:
    """Indicator, threshold and ROI from the per-tone multistatic matrices.

    With ``config.normalize`` each U_k is divided by its spectral norm and each
    right-hand-side column scaled to unit norm, so ``zeta`` is dimensionless.
    """
    c_list = []
    for k, U in enumerate(U_list):
        G = stacked_rx_greens(system, k)
        if config.normalize:
            smax = np.linalg.norm(U, 2)
            if smax > 0:
                U = U / smax
            G = G / np.linalg.norm(G, axis=0)
        c_list.append(lsm_solve(U, G, config.zeta))
    J = indicator(c_list)
    eta, s = trimmed_max_gap_threshold(J, config.epsilon, config.q_trim)
    roi = roi_select(s, eta, system.grid.side_pixels)
    return LsmResult(c_list, J, s, eta, roi)


def lsm_from_scene(system: SensingSystem, chi, snr_db: float, seed: int, config: LsmConfig = LsmConfig(), **data_kw) -> LsmResult:
    U_list = [multistatic_response(system, k, chi, snr_db, seed, **data_kw) for k in range(system.K)]
    return run_lsm(system, U_list, config)
