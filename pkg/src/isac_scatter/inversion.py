"""ROI-restricted Born iterations: ROI-QP and the Tikhonov-BIM baseline, plus L-curve weight selection."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .forward import ForwardSolveError, Observation, SensingSystem, khatri_rao, operator_factors
from .qp import QpConvergenceError, QpProblem, complexify, solve_qp
from .roi import RoiIndexSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InversionConfig:
    alpha: float | None = None  # None: L-curve
    beta: float | None = None  # None: alpha / 10
    bounds: tuple[float, float] = (-10.0, 10.0)
    tau_rel: float = 1e-4
    max_iter: int = 10
    lcurve_min: float = 1e-6
    lcurve_max: float = 1.0
    lcurve_points: int = 7
    beta_ratio: float = 0.1

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter (M) must be >= 1")
        if self.bounds[0] > self.bounds[1]:
            raise ValueError("lower bound exceeds upper bound")

    def lcurve_grid(self) -> np.ndarray:
        return np.logspace(np.log10(self.lcurve_min), np.log10(self.lcurve_max), self.lcurve_points)


@dataclass
class ReconstructionResult:
    chi_hat: np.ndarray
    per_iteration: list = field(default_factory=list)  # (residual norm, update norm)
    iterations_used: int = 0
    converged: bool = False
    roi: RoiIndexSet | None = None
    weights: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float = 0.0


# ---------------------------------------------------------------- stacking


def restrict_and_stack(A_list, y_list, roi: RoiIndexSet | None = None, columns=None):
    """Stack per-tone operators (ROI columns) and observations tone by tone.

    ``A_list`` may already be column-restricted; pass the assembled ``columns`` so
    the ROI can be located inside them.
    """
    A_list = list(A_list)
    if not A_list:
        raise ValueError("no tones")
    n_cols = A_list[0].shape[1]
    if any(a.shape[1] != n_cols for a in A_list):
        raise ValueError("per-tone operators disagree on column count")
    if roi is None:
        sel = slice(None)
    else:
        cols = np.arange(n_cols) if columns is None else np.asarray(columns)
        pos = np.searchsorted(cols, roi.indices)
        if np.any(pos >= cols.size) or np.any(cols[np.minimum(pos, cols.size - 1)] != roi.indices):
            raise ValueError("ROI pixel missing from the assembled columns")
        sel = pos
    A_sub = np.vstack([a[:, sel] for a in A_list])
    Y = np.concatenate([np.asarray(y) for y in y_list])
    if A_sub.shape[0] != Y.shape[0]:
        raise ValueError("operator rows do not match the observation length")
    return A_sub, Y


def stacked_operator(system: SensingSystem, chi_est, roi: RoiIndexSet) -> np.ndarray:
    """K T N_r x P operator for the ROI columns at the current estimate.

    The estimate vanishes outside the ROI, so the in-domain solve only involves
    ROI pixels; this equals restricting the full-domain resolvent.
    """
    blocks = []
    for k in range(system.K):
        u, v = operator_factors(system, k, chi_est, roi.indices)
        blocks.append(khatri_rao(u, v))
    return np.vstack(blocks)


# ---------------------------------------------------------------- L-curve


def lcurve_corner(residual_norms, solution_norms) -> int | None:
    """Index of maximal signed Menger curvature on the log-log L-curve.

    Points must be ordered by increasing regularization weight. Returns None
    when no interior point bends toward the origin.
    """
    rho = np.log(np.maximum(np.asarray(residual_norms, float), np.finfo(float).tiny))
    eta = np.log(np.maximum(np.asarray(solution_norms, float), np.finfo(float).tiny))
    n = rho.size
    if n < 3:
        return None
    best, best_k = None, 0.0
    for i in range(1, n - 1):
        a = np.array([rho[i - 1], eta[i - 1]])
        b = np.array([rho[i], eta[i]])
        c = np.array([rho[i + 1], eta[i + 1]])
        ab, bc, ca = b - a, c - b, a - c
        cross = ab[0] * bc[1] - ab[1] * bc[0]
        denom = np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ca)
        if denom == 0:
            continue
        kappa = 2.0 * cross / denom
        if kappa > best_k:
            best, best_k = i, kappa
    return best


def lcurve_fallback(residual_norms, solution_norms) -> int:
    """Smallest residual among candidates within 10% of the minimum solution norm."""
    rho = np.asarray(residual_norms, float)
    eta = np.asarray(solution_norms, float)
    ok = np.flatnonzero(eta <= 1.1 * eta.min())
    return int(ok[np.argmin(rho[ok])])


def choose_on_lcurve(weights, residual_norms, solution_norms) -> tuple[float, bool]:
    """(chosen weight, used_fallback)."""
    weights = np.asarray(weights, float)
    order = np.argsort(weights)
    w, r, s = weights[order], np.asarray(residual_norms)[order], np.asarray(solution_norms)[order]
    i = lcurve_corner(r, s)
    if i is None:
        log.info("L-curve has no corner; using the residual/solution-norm fallback")
        return float(w[lcurve_fallback(r, s)]), True
    return float(w[i]), False


def tikhonov_path(A, Y, weights, gram=None):
    """Residual and solution norms of min ||Y - A x||^2 + lam ||x||^2 for each weight."""
    Z = A.conj().T @ A if gram is None else gram
    lam_e, V = np.linalg.eigh(Z)
    b = V.conj().T @ (A.conj().T @ Y)
    res, sol = [], []
    for lam in weights:
        x = V @ (b / (np.maximum(lam_e, 0.0) + lam))
        res.append(np.linalg.norm(Y - A @ x))
        sol.append(np.linalg.norm(x))
    return np.array(res), np.array(sol)


def lcurve_select(A_sub, Y, candidate_weights) -> float:
    """Tikhonov weight at the L-curve corner among the candidates."""
    w = np.atleast_1d(np.asarray(candidate_weights, float))
    if w.size == 1:
        return float(w[0])
    res, sol = tikhonov_path(A_sub, Y, w)
    return choose_on_lcurve(w, res, sol)[0]


# ---------------------------------------------------------------- solvers


def _tikhonov_solve(Z, b, lam):
    lhs = Z.copy()
    lhs[np.diag_indices_from(lhs)] += lam
    return sla.solve(lhs, b, assume_a="pos")


def _qp_lcurve(A, Y, roi, grid_rel, scale, cfg: InversionConfig, gram):
    res, sol = [], []
    weights = grid_rel * scale
    for a in weights:
        prob = QpProblem.build(A, Y, roi, a, cfg.beta_ratio * a if cfg.beta is None else cfg.beta, cfg.bounds, gram)
        x = complexify(solve_qp(prob))
        res.append(np.linalg.norm(Y - A @ x))
        sol.append(np.linalg.norm(x))
    return choose_on_lcurve(weights, res, sol)[0]


def _born_loop(system: SensingSystem, obs: Observation, roi: RoiIndexSet, cfg: InversionConfig, step, name):
    t0 = time.perf_counter()
    N = system.grid.N
    Y = obs.Y
    chi = np.zeros(N, dtype=complex)
    chi_sub_prev = np.zeros(roi.P, dtype=complex)
    result = ReconstructionResult(chi.copy(), roi=roi)
    state = {}
    try:
        for n in range(1, cfg.max_iter + 1):
            A = stacked_operator(system, chi, roi)
            gram = A.conj().T @ A
            chi_sub = step(A, Y, gram, state)
            delta = float(np.linalg.norm(chi_sub - chi_sub_prev))
            chi = np.zeros(N, dtype=complex)
            chi[roi.indices] = chi_sub  # background nulling
            resid = float(np.linalg.norm(Y - A @ chi_sub))
            result.per_iteration.append((resid, delta))
            result.chi_hat = chi
            result.iterations_used = n
            tau = cfg.tau_rel * np.linalg.norm(chi_sub_prev)
            if n > 1 and delta <= tau:
                result.converged = True
                break
            chi_sub_prev = chi_sub
        else:
            result.converged = cfg.max_iter == 1 or result.per_iteration[-1][1] <= cfg.tau_rel * np.linalg.norm(chi_sub_prev)
    except (ForwardSolveError, QpConvergenceError, np.linalg.LinAlgError) as exc:
        log.warning("%s stopped at iteration %d: %s", name, result.iterations_used + 1, exc)
        result.error = f"{type(exc).__name__}: {exc}"
        result.converged = False
    result.weights = dict(state.get("weights", {}))
    result.wall_time = time.perf_counter() - t0
    return result


def roi_qp_reconstruct(system: SensingSystem, obs: Observation, roi: RoiIndexSet, config: InversionConfig = InversionConfig()) -> ReconstructionResult:
    """Born iterations with an ROI-restricted box-constrained QP at every step.

    Regularization weights not fixed in ``config`` are chosen once, on the first
    (Born) operator, by the L-curve over a grid relative to the Gram matrix's
    largest eigenvalue, and then kept for all iterations.
    """

    def step(A, Y, gram, state):
        if "weights" not in state:
            alpha = config.alpha
            if alpha is None:
                scale = float(np.linalg.eigvalsh(gram)[-1])
                alpha = _qp_lcurve(A, Y, roi, config.lcurve_grid(), scale, config, gram)
            beta = config.beta if config.beta is not None else config.beta_ratio * alpha
            state["weights"] = {"alpha": alpha, "beta": beta}
        w = state["weights"]
        prob = QpProblem.build(A, Y, roi, w["alpha"], w["beta"], config.bounds, gram)
        return complexify(solve_qp(prob))

    return _born_loop(system, obs, roi, config, step, "ROI-QP")


def tikhonov_bim(system: SensingSystem, obs: Observation, roi: RoiIndexSet | None = None, config: InversionConfig = InversionConfig(), lam: float | None = None) -> ReconstructionResult:
    """Born iterative method with a complex Tikhonov solve per iteration."""
    roi = RoiIndexSet.full(system.grid.side_pixels) if roi is None else roi

    def step(A, Y, gram, state):
        if "weights" not in state:
            lam_ = lam if lam is not None else config.alpha
            if lam_ is None:
                scale = float(np.linalg.eigvalsh(gram)[-1])
                w = config.lcurve_grid() * scale
                res, sol = tikhonov_path(A, Y, w, gram)
                lam_ = choose_on_lcurve(w, res, sol)[0]
            state["weights"] = {"lambda": lam_}
        return _tikhonov_solve(gram, A.conj().T @ Y, state["weights"]["lambda"])

    return _born_loop(system, obs, roi, config, step, "Tikhonov-BIM")
