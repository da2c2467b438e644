"""Spectral, coherence and estimation-bound diagnostics for stacked sensing operators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .em import green_kernel, self_term

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- spectrum


def spectral_report(A_sub) -> tuple[np.ndarray, float, float]:
    """(singular values, kappa, sigma_min); kappa is +inf for a singular operator."""
    A_sub = np.asarray(A_sub)
    if A_sub.size == 0:
        raise ValueError("empty operator")
    s = np.linalg.svd(A_sub, compute_uv=False)
    smin = float(s[-1]) if A_sub.shape[0] >= A_sub.shape[1] else 0.0
    return s, _kappa(s, smin, A_sub.shape), smin


def _kappa(s, smin, shape) -> float:
    # numerical rank test as in numpy.linalg.matrix_rank
    if smin <= max(shape) * np.finfo(float).eps * s[0]:
        return np.inf
    return float(s[0] / smin)


# ---------------------------------------------------------------- coherence


@dataclass
class CoherenceReport:
    ncc: np.ndarray
    mu_eff: float
    gersh_radii: np.ndarray
    r_max: float
    lambda_bounds: tuple[float, float]
    kappa: float
    kappa_bound: float | None
    bound_valid: bool
    sigma_min: float
    sigma_max: float

    @property
    def P(self) -> int:
        return self.ncc.shape[0]


def normalize_columns(A, pixel_ids=None):
    A = np.asarray(A)
    norms = np.linalg.norm(A, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        pid = zero[0] if pixel_ids is None else np.asarray(pixel_ids)[zero[0]]
        raise ValueError(f"column for pixel {pid} is identically zero")
    return A / norms, norms


def ncc_matrix(A, pixel_ids=None) -> np.ndarray:
    """mu_ij = |a_i^H a_j| / (||a_i|| ||a_j||), clipped to [0, 1]."""
    An, _ = normalize_columns(A, pixel_ids)
    Phi = An.conj().T @ An
    mu = np.minimum(np.abs(Phi), 1.0)
    np.fill_diagonal(mu, 1.0)
    return 0.5 * (mu + mu.T)


def gershgorin_kappa_bound(mu_eff: float, P: int) -> float | None:
    """sqrt((1 + (P-1) mu) / (1 - (P-1) mu)) or None when the disks reach zero."""
    xi = (P - 1) * mu_eff
    if xi >= 1:
        return None
    return float(np.sqrt((1 + xi) / (1 - xi)))


def ncc_report(A_sub, pixel_ids=None) -> CoherenceReport:
    An, _ = normalize_columns(A_sub, pixel_ids)
    Phi = An.conj().T @ An
    P = Phi.shape[0]
    mu = np.minimum(np.abs(Phi), 1.0)
    np.fill_diagonal(mu, 1.0)
    mu = 0.5 * (mu + mu.T)
    off = np.abs(Phi - np.diag(np.diag(Phi)))
    radii = off.sum(axis=1)
    mu_eff = float((mu - np.eye(P)).max()) if P > 1 else 0.0
    r_max = float(radii.max())
    s = np.linalg.svd(An, compute_uv=False)
    smin = float(s[-1]) if An.shape[0] >= P else 0.0
    kappa = _kappa(s, smin, An.shape)
    bound = gershgorin_kappa_bound(mu_eff, P)
    return CoherenceReport(mu, mu_eff, radii, r_max, (1 - r_max, 1 + r_max), kappa, bound, bound is not None, smin, float(s[0]))


@dataclass
class BlockStats:
    mean: float
    max: float
    pairs: int


def _block_stats(mu, rows, cols, same) -> BlockStats | None:
    if len(rows) == 0 or len(cols) == 0:
        return None
    B = mu[np.ix_(rows, cols)]
    if same:
        n = len(rows)
        if n < 2:
            return None
        vals = B[~np.eye(n, dtype=bool)]
    else:
        vals = B.reshape(-1)
    return BlockStats(float(vals.mean()), float(vals.max()), int(vals.size if not same else vals.size // 2))


def coherence_split(A_full, true_support, N: int | None = None) -> dict:
    """Mean/max NCC over air-air, ASR-ASR and air-ASR column pairs.

    Blocks that have no pairs are reported as None; an all-empty split is an error.
    """
    A_full = np.asarray(A_full)
    N = A_full.shape[1] if N is None else N
    support = np.unique(np.asarray(true_support, dtype=int))
    if support.size and (support[0] < 0 or support[-1] >= N):
        raise ValueError("support outside the grid")
    air = np.setdiff1d(np.arange(N), support)
    mu = ncc_matrix(A_full)
    out = {
        "air_air": _block_stats(mu, air, air, True),
        "asr_asr": _block_stats(mu, support, support, True),
        "air_asr": _block_stats(mu, air, support, False),
    }
    if all(v is None for v in out.values()):
        raise ValueError("partition has no column pairs")
    return out


def khatri_rao_ncc(u_i, v_i, u_j, v_j) -> float:
    """NCC of kron(u_i, v_i) and kron(u_j, v_j) from the factor correlations."""
    cu = abs(np.vdot(u_i, u_j)) / (np.linalg.norm(u_i) * np.linalg.norm(u_j))
    cv = abs(np.vdot(v_i, v_j)) / (np.linalg.norm(v_i) * np.linalg.norm(v_j))
    return float(cu * cv)


# ---------------------------------------------------------------- ROI quality and bounds


@dataclass(frozen=True)
class RoiQuality:
    recall: float
    precision: float
    tau: int
    n_fp: int
    k_true: int

    @property
    def P(self) -> int:
        return self.tau + self.n_fp


def roi_quality(roi, true_support) -> RoiQuality:
    idx = np.asarray(getattr(roi, "indices", roi), dtype=int)
    support = np.unique(np.asarray(true_support, dtype=int))
    if support.size == 0:
        raise ValueError("true support is empty")
    tau = int(np.intersect1d(idx, support).size)
    P = int(np.unique(idx).size)
    return RoiQuality(tau / support.size, tau / P if P else 0.0, tau, P - tau, int(support.size))


@dataclass(frozen=True)
class ConditionBound:
    xi: float
    kappa_max: float | None
    valid: bool
    sensitivity_ratio: float  # d ln kappa / d mu_eff over d ln kappa / d xi


def _ln_kappa(xi):
    return 0.5 * (np.log1p(xi) - np.log1p(-xi))


def condition_bound_from_mismatch(mu_eff: float, recall: float, precision: float, k_true: int) -> ConditionBound:
    """kappa_max from ROI quality: P = recall k_true / precision and xi = (P - 1) mu_eff."""
    if precision <= 0:
        raise ValueError("precision must be positive")
    P = recall / precision * k_true
    xi = (P - 1.0) * mu_eff
    if xi >= 1:
        log.info("xi = %.3g >= 1: Gershgorin bound not applicable", xi)
        return ConditionBound(float(xi), None, False, float(P - 1.0))
    return ConditionBound(float(xi), float(np.sqrt((1 + xi) / (1 - xi))), True, float(P - 1.0))


def sensitivity_ratio_fd(mu_eff: float, P: float, h: float = 1e-7) -> float:
    """Central-difference check of d ln kappa/d mu over d ln kappa/d xi."""
    xi = (P - 1) * mu_eff
    d_mu = (_ln_kappa((P - 1) * (mu_eff + h)) - _ln_kappa((P - 1) * (mu_eff - h))) / (2 * h)
    d_xi = (_ln_kappa(xi + h) - _ln_kappa(xi - h)) / (2 * h)
    return float(d_mu / d_xi)


@dataclass(frozen=True)
class CrlbReport:
    lambda_min_Z: float
    crlb_spectral: float
    crlb_upper_bound: float | None
    chain_valid: bool | None
    d_min: float
    mu_eff: float


def crlb_report(A_sub, noise_var: float) -> CrlbReport:
    """sigma^2 / lambda_min(A^H A) and its Gershgorin upper bound sigma^2 / (d_min^2 (1 - (P-1) mu_eff))."""
    A_sub = np.asarray(A_sub)
    P = A_sub.shape[1]
    Z = A_sub.conj().T @ A_sub
    lam_min = float(np.linalg.eigvalsh(Z)[0])
    # rank deficiency at working precision
    rank_tol = max(Z.shape) * np.finfo(float).eps * float(np.abs(np.diag(Z)).max())
    spectral = noise_var / lam_min if lam_min > rank_tol else np.inf
    d = np.sqrt(np.real(np.diag(Z)))
    d_min = float(d.min())
    mu_eff = float((ncc_matrix(A_sub) - np.eye(P)).max()) if P > 1 and d_min > 0 else 0.0
    denom = 1.0 - (P - 1) * mu_eff
    if d_min == 0 or denom <= 0:
        return CrlbReport(lam_min, spectral, None, None, d_min, mu_eff)
    upper = noise_var / (d_min**2 * denom)
    return CrlbReport(lam_min, spectral, upper, bool(spectral <= upper * (1 + 1e-12)), d_min, mu_eff)


# ---------------------------------------------------------------- phase mixing


@dataclass
class PhaseMixingRun:
    K_values: list
    threshold: float
    mc_trials: int
    empirical_prob: np.ndarray
    markov_bound: np.ndarray
    mean_sq_zbar: np.ndarray
    se_sq_zbar: np.ndarray
    se_prob: np.ndarray
    geometry_phase: dict = field(default_factory=dict)

    def rows(self):
        for i, K in enumerate(self.K_values):
            yield {
                "K": K,
                "empirical_prob": self.empirical_prob[i],
                "markov_bound": self.markov_bound[i],
                "mean_sq_zbar": self.mean_sq_zbar[i],
                "se_sq_zbar": self.se_sq_zbar[i],
            }


@dataclass(frozen=True)
class PairGeometry:
    """Two pixels i, j and the ASR pixels r_m used for the asymptotic Green inner product."""

    r_i: np.ndarray
    r_j: np.ndarray
    r_m: np.ndarray
    wavenumbers: np.ndarray


def asymptotic_phase(geom: PairGeometry) -> np.ndarray:
    """Effective phase varphi_{ij,k} per tone from the large-argument Hankel expansion."""
    return np.angle(asymptotic_inner(geom))


def asymptotic_inner(geom: PairGeometry) -> np.ndarray:
    d_i = np.linalg.norm(geom.r_m - geom.r_i, axis=1)
    d_j = np.linalg.norm(geom.r_m - geom.r_j, axis=1)
    keep = (d_i > 0) & (d_j > 0)
    d_i, d_j = d_i[keep], d_j[keep]
    out = []
    for k_b in geom.wavenumbers:
        b2 = (k_b**2 / 4.0) ** 2
        alpha = 2.0 * b2 / (np.pi * k_b * np.sqrt(d_i * d_j))
        out.append(np.sum(alpha * np.exp(-1j * k_b * (d_j - d_i))))
    return np.array(out)


def exact_inner(geom: PairGeometry, cell_side: float | None = None) -> np.ndarray:
    """sum_m conj(G(r_m, r_i)) G(r_m, r_j); coincident points use the cell self term when ``cell_side`` is given."""
    d_i = np.linalg.norm(geom.r_m - geom.r_i, axis=1)
    d_j = np.linalg.norm(geom.r_m - geom.r_j, axis=1)
    keep = (d_i > 0) & (d_j > 0)
    out = []
    for k_b in geom.wavenumbers:
        g_i = green_kernel(k_b, d_i[keep])
        g_j = green_kernel(k_b, d_j[keep])
        val = np.sum(np.conj(g_i) * g_j)
        if cell_side is not None and not np.all(keep):
            # self terms are per-area quantities; normalize back to kernel units
            s = self_term(k_b, cell_side) / cell_side**2
            gi_all = np.where(d_i > 0, green_kernel(k_b, np.where(d_i > 0, d_i, 1.0)), s)
            gj_all = np.where(d_j > 0, green_kernel(k_b, np.where(d_j > 0, d_j, 1.0)), s)
            val = np.sum(np.conj(gi_all) * gj_all)
        out.append(val)
    return np.array(out)


def green_remainder(geom: PairGeometry) -> np.ndarray:
    """Empirical remainder: exact Green inner product minus the asymptotic sum (same r_m set)."""
    return exact_inner(geom) - asymptotic_inner(geom)


def phase_mixing_mc(K_values, threshold: float = 0.25, trials: int = 10_000, seed: int = 0, geometry: PairGeometry | None = None) -> PhaseMixingRun:
    """Monte Carlo of |zbar| = |mean_k exp(j(varphi_k + theta_k))| with theta_k iid uniform."""
    if trials < 1000:
        raise ValueError("phase-mixing Monte Carlo needs at least 1000 trials")
    K_values = [int(K) for K in K_values]
    probs, bounds, m2, se_m2, se_p = [], [], [], [], []
    geo_phase = {}
    for K in K_values:
        if K < 1:
            raise ValueError("K must be >= 1")
        rng = np.random.default_rng(np.random.SeedSequence([seed, K]))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=(trials, K))
        if geometry is not None:
            if len(geometry.wavenumbers) < K:
                raise ValueError(f"geometry supplies {len(geometry.wavenumbers)} tones, need {K}")
            g = PairGeometry(geometry.r_i, geometry.r_j, geometry.r_m, np.asarray(geometry.wavenumbers)[:K])
            phi = asymptotic_phase(g)
            geo_phase[K] = phi
            theta = theta + phi[None, :]
        zbar = np.exp(1j * theta).mean(axis=1)
        a2 = np.abs(zbar) ** 2
        hit = np.abs(zbar) <= threshold
        p = float(hit.mean())
        probs.append(p)
        se_p.append(float(np.sqrt(max(p * (1 - p), 1e-300) / trials)))
        m2.append(float(a2.mean()))
        se_m2.append(float(a2.std(ddof=1) / np.sqrt(trials)))
        bounds.append(1.0 - 1.0 / (K * threshold**2))
    return PhaseMixingRun(
        K_values, float(threshold), int(trials), np.array(probs), np.array(bounds), np.array(m2), np.array(se_m2), np.array(se_p), geo_phase
    )


# ---------------------------------------------------------------- air-column coherence


@dataclass(frozen=True)
class AirCoherenceBound:
    i: int
    j: int
    gamma: complex
    rho: complex
    eps_u: float
    eps_v: float
    delta_ij: float
    lower_bound: float
    observed_mu: float

    @property
    def holds(self) -> bool:
        return self.observed_mu >= self.lower_bound - 1e-12


def _projection(a, b):
    na2 = float(np.vdot(a, a).real)
    if na2 == 0:
        raise ValueError("zero-norm channel factor")
    g = np.vdot(a, b) / na2
    eps = float(np.linalg.norm(b - g * a) / np.sqrt(na2))
    return complex(g), eps


def pair_coherence_bound(u_i, v_i, u_j, v_j, i=-1, j=-1) -> AirCoherenceBound:
    gamma, eps_u = _projection(u_i, u_j)
    rho, eps_v = _projection(v_i, v_j)
    delta = abs(gamma) * eps_v + abs(rho) * eps_u + eps_u * eps_v
    lower = (abs(rho * gamma) - delta) / ((abs(gamma) + eps_u) * (abs(rho) + eps_v))
    return AirCoherenceBound(int(i), int(j), gamma, rho, eps_u, eps_v, float(delta), float(lower), khatri_rao_ncc(u_i, v_i, u_j, v_j))


def air_coherence_bound(u, v, air_pixel_pairs, chi=None) -> list[AirCoherenceBound]:
    """Projection-residual lower bound on mu_ij for each pair, from factors u (T x N) and v (N_r x N)."""
    out = []
    for i, j in air_pixel_pairs:
        if chi is not None and (chi[i] != 0 or chi[j] != 0):
            raise ValueError(f"pair ({i}, {j}) is not in the background")
        out.append(pair_coherence_bound(u[:, i], v[:, i], u[:, j], v[:, j], i, j))
    return out
