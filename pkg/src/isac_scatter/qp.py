"""Real-valued ROI quadratic program with Tikhonov and graph-Laplacian penalties.

The equality constraint d = Y - A chi only names the residual, so the solver
eliminates d and works on the box-constrained quadratic in chi alone:

    minimize   0.5 x^T H x - g^T x
    subject to lower <= x <= upper

with H = A~^T A~ + alpha I + beta blkdiag(L, L) and g = A~^T Y~.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .roi import RoiIndexSet

log = logging.getLogger(__name__)


class QpConvergenceError(RuntimeError):
    def __init__(self, message, residual=None, x=None):
        super().__init__(message)
        self.residual = residual
        self.x = x


def realify(A: np.ndarray, Y: np.ndarray | None = None):
    """[[Re A, -Im A], [Im A, Re A]] and [Re Y; Im Y]."""
    A = np.asarray(A)
    At = np.block([[A.real, -A.imag], [A.imag, A.real]])
    if Y is None:
        return At
    Y = np.asarray(Y)
    return At, np.concatenate([Y.real, Y.imag])


def complexify(x: np.ndarray) -> np.ndarray:
    P = x.size // 2
    return x[:P] + 1j * x[P:]


def roi_graph_laplacian(roi: RoiIndexSet) -> np.ndarray:
    """L = Q - B with unit weights between 4-neighbour ROI pixels."""
    n = roi.side_pixels
    pos = {int(p): i for i, p in enumerate(roi.indices)}
    B = np.zeros((roi.P, roi.P))
    for p, i in pos.items():
        r, c = divmod(p, n)
        for q in ((r, c + 1), (r + 1, c)):
            if q[0] < n and q[1] < n:
                j = pos.get(q[0] * n + q[1])
                if j is not None:
                    B[i, j] = B[j, i] = 1.0
    return np.diag(B.sum(axis=1)) - B


@dataclass
class QpProblem:
    """ROI-restricted QP data.

    ``A_sub``/``Y`` are kept complex; the realified matrices and the stacked
    (z, M, R) form are derived on demand.
    """

    A_sub: np.ndarray
    Y: np.ndarray
    L_R: np.ndarray
    alpha: float
    beta: float
    lower: np.ndarray
    upper: np.ndarray
    gram: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        P = self.A_sub.shape[1]
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (2 * P,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (2 * P,)).copy()
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("regularization weights must be non-negative")
        if np.any(self.lower > self.upper):
            raise ValueError("infeasible box")
        if self.L_R.shape != (P, P):
            raise ValueError("Laplacian does not match the ROI size")

    @classmethod
    def build(cls, A_sub, Y, roi: RoiIndexSet, alpha, beta, bounds=(-10.0, 10.0), gram=None):
        return cls(A_sub, Y, roi_graph_laplacian(roi), float(alpha), float(beta), bounds[0], bounds[1], gram)

    @property
    def P(self) -> int:
        return self.A_sub.shape[1]

    @property
    def m(self) -> int:
        """Number of real residual entries, 2 K T N_r."""
        return 2 * self.A_sub.shape[0]

    @property
    def n_vars(self) -> int:
        return 2 * self.P + self.m

    @property
    def A_tilde(self) -> np.ndarray:
        return realify(self.A_sub)

    @property
    def Y_tilde(self) -> np.ndarray:
        return np.concatenate([self.Y.real, self.Y.imag])

    @property
    def regularizer(self) -> np.ndarray:
        L2 = sla.block_diag(self.L_R, self.L_R)
        return self.alpha * np.eye(2 * self.P) + self.beta * L2

    @property
    def M(self) -> sp.spmatrix:
        return sp.block_diag([sp.csr_matrix(self.regularizer), sp.identity(self.m)], format="csr")

    @property
    def R(self) -> sp.spmatrix:
        return sp.hstack([sp.csr_matrix(self.A_tilde), sp.identity(self.m)], format="csr")

    @property
    def lower_padded(self) -> np.ndarray:
        return np.concatenate([self.lower, np.full(self.m, -np.inf)])

    @property
    def upper_padded(self) -> np.ndarray:
        return np.concatenate([self.upper, np.full(self.m, np.inf)])

    def reduced(self) -> tuple[np.ndarray, np.ndarray]:
        """(H, g) of the residual-eliminated problem, formed from the complex Gram matrix."""
        Z = self.gram if self.gram is not None else self.A_sub.conj().T @ self.A_sub
        H = realify(Z) + self.regularizer
        b = self.A_sub.conj().T @ self.Y
        return H, np.concatenate([b.real, b.imag])

    def objective(self, x: np.ndarray) -> float:
        chi = complexify(x)
        d = self.Y - self.A_sub @ chi
        return 0.5 * float(np.vdot(d, d).real) + 0.5 * float(x @ self.regularizer @ x)


@dataclass
class QpInfo:
    iterations: int
    kkt_residual: float
    method: str


def kkt_residual(H, g, x, lower, upper) -> float:
    """Projected-gradient norm relative to the size of the linear term."""
    grad = H @ x - g
    step = x - np.clip(x - grad, lower, upper)
    scale = max(np.linalg.norm(g), np.linalg.norm(H @ x), np.finfo(float).tiny)
    return float(np.linalg.norm(step) / scale)


def _lipschitz(H, iters=100, seed=0) -> float:
    v = np.random.default_rng(seed).standard_normal(H.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 1.0
        lam_new = float(v @ w / (v @ v))
        v = w / nw
        if abs(lam_new - lam) <= 1e-10 * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return 1.01 * lam


def _polish(H, g, x, lower, upper, chol=None, rounds=20):
    """Active-set refinement: fix bound-active coordinates, solve exactly on the rest."""
    for _ in range(rounds):
        grad = H @ x - g
        at_lo = (x <= lower) & (grad > 0)
        at_hi = (x >= upper) & (grad < 0)
        free = ~(at_lo | at_hi)
        x_new = np.where(at_lo, lower, np.where(at_hi, upper, x))
        if np.any(free):
            fixed = ~free
            rhs = g[free] - H[np.ix_(free, fixed)] @ x_new[fixed]
            Hff = H[np.ix_(free, free)]
            try:
                x_new[free] = sla.solve(Hff, rhs, assume_a="pos")
            except (np.linalg.LinAlgError, sla.LinAlgError):
                x_new[free] = sla.lstsq(Hff, rhs)[0]
        if np.all((x_new >= lower) & (x_new <= upper)):
            return x_new
        # leave the interior step only as far as the box allows
        x = np.clip(x_new, lower, upper)
    return x


def solve_box_qp(H, g, lower, upper, tol=1e-8, max_iter=10_000, x0=None):
    """Minimize 0.5 x^T H x - g^T x over a box, H symmetric positive semi-definite.

    Tries the unconstrained minimizer first; otherwise runs Nesterov-accelerated
    projected gradient (step 1/L, L from power iteration, adaptive restart) and
    finishes with an active-set solve on the free coordinates.
    """
    n = len(g)
    lower = np.broadcast_to(lower, (n,)).astype(float)
    upper = np.broadcast_to(upper, (n,)).astype(float)
    try:
        x = sla.cho_solve(sla.cho_factor(H, check_finite=False), g, check_finite=False)
        if np.all((x >= lower) & (x <= upper)) and np.all(np.isfinite(x)):
            res = kkt_residual(H, g, x, lower, upper)
            if res <= tol:
                return x, QpInfo(0, res, "unconstrained")
        x0 = x if x0 is None else x0
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    x = np.clip(np.zeros(n) if x0 is None or not np.all(np.isfinite(x0)) else x0, lower, upper)
    step = 1.0 / _lipschitz(H)
    yk, x_prev, t = x.copy(), x.copy(), 1.0
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x = np.clip(yk - step * (H @ yk - g), lower, upper)
        if it % 25 == 0 or it == max_iter:
            res = kkt_residual(H, g, x, lower, upper)
            if res <= tol:
                break
            xp = _polish(H, g, x, lower, upper)
            rp = kkt_residual(H, g, xp, lower, upper)
            if rp <= tol:
                return xp, QpInfo(it, rp, "projected-gradient+active-set")
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if (yk - x) @ (x - x_prev) > 0:  # restart when momentum points uphill
            t_next, yk = 1.0, x.copy()
        else:
            yk = x + ((t - 1.0) / t_next) * (x - x_prev)
        x_prev, t = x, t_next
    res = kkt_residual(H, g, x, lower, upper)
    if res > tol:
        raise QpConvergenceError(f"QP did not converge in {max_iter} iterations (KKT residual {res:.3g})", res, x)
    return x, QpInfo(it, res, "projected-gradient")


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 10_000, full_output: bool = False):
    """Minimizer chi~ (length 2P) of the ROI QP."""
    H, g = problem.reduced()
    x, info = solve_box_qp(H, g, problem.lower, problem.upper, tol=tol, max_iter=max_iter)
    return (x, info) if full_output else x
