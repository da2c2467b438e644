"""Lippmann-Schwinger forward solves, observation synthesis and Khatri-Rao operator assembly.

Stacking order everywhere: tone-major, then pilot slot, then Rx element.
Row ``t * N_r + r`` of a per-tone block belongs to slot t and receiver r.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .em import (
    ArrayGeometry,
    FrequencyGrid,
    Grid2D,
    greens_domain,
    greens_obs,
    lattice_kernel_table,
)

log = logging.getLogger(__name__)

# keeps the observation and multistatic noise streams disjoint
_OBS_STREAM = 0
_MSR_STREAM = 1
_PILOT_STREAM = 2


class ForwardSolveError(RuntimeError):
    """The in-domain system (I - G diag(chi)) is singular or too ill-conditioned."""

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class PilotBook:
    X: np.ndarray  # (K, N_t, T)
    seed: int

    @property
    def T(self) -> int:
        return self.X.shape[2]

    def __getitem__(self, k) -> np.ndarray:
        return self.X[k]


@dataclass(frozen=True)
class ChannelPair:
    H1: np.ndarray  # N x N_t, Tx -> domain
    H2: np.ndarray  # N_r x N, domain -> Rx (cell-area weighted)
    G2_gamma: np.ndarray  # N_r x N, point source at pixel -> Rx


@dataclass(frozen=True)
class FieldSet:
    E_i: np.ndarray
    E_t: np.ndarray

    @property
    def E_s(self) -> np.ndarray:
        return self.E_t - self.E_i


@dataclass
class Observation:
    y: np.ndarray  # (K, T*N_r)
    snr_db: float
    noise_var: float
    seed: int
    tones: np.ndarray
    noiseless: np.ndarray | None = field(default=None, repr=False)

    @property
    def Y(self) -> np.ndarray:
        return self.y.reshape(-1)

    @property
    def K(self) -> int:
        return self.y.shape[0]

    def y_k(self, k) -> np.ndarray:
        return self.y[k]


@dataclass
class OperatorBundle:
    A_k: list  # per tone, (T*N_r, P)
    columns: np.ndarray
    born_only: bool

    @cached_property
    def A_stack(self) -> np.ndarray:
        return np.vstack(self.A_k)

    @property
    def col_norms(self) -> np.ndarray:
        return np.sqrt(sum(np.sum(np.abs(a) ** 2, axis=0) for a in self.A_k))


# ---------------------------------------------------------------- pilots & channels


def make_pilots(N_t: int, T: int, K: int, seed: int) -> PilotBook:
    """Unit-norm circular complex Gaussian pilot columns, one independent book per tone."""
    if T < 1:
        raise ValueError("need at least one pilot slot")
    X = np.empty((K, N_t, T), dtype=complex)
    for k in range(K):
        rng = np.random.default_rng(np.random.SeedSequence([seed, _PILOT_STREAM, k]))
        x = rng.standard_normal((N_t, T)) + 1j * rng.standard_normal((N_t, T))
        X[k] = x / np.linalg.norm(x, axis=0)
    return PilotBook(X, int(seed))


def build_channels(grid: Grid2D, array: ArrayGeometry, k_b: float) -> ChannelPair:
    centers = grid.centers
    H1 = greens_obs(array.tx_positions, centers, k_b)
    H2 = greens_obs(centers, array.rx_positions, k_b, source_area=grid.cell_area)
    G2 = greens_obs(centers, array.rx_positions, k_b)
    return ChannelPair(H1, H2, G2)


class SensingSystem:
    """Everything fixed by the hardware: lattice, array, tones and pilots.

    Channel matrices and lattice kernel tables are built lazily per tone and cached.
    """

    def __init__(self, grid: Grid2D, array: ArrayGeometry, freqs: FrequencyGrid, pilots: PilotBook):
        if pilots.X.shape[0] != freqs.K or pilots.X.shape[1] != array.N_t:
            raise ValueError("pilot book does not match the tone count / Tx count")
        self.grid = grid
        self.array = array
        self.freqs = freqs
        self.pilots = pilots
        self._channels: dict[int, ChannelPair] = {}
        self._tables: dict[int, np.ndarray] = {}

    @property
    def K(self) -> int:
        return self.freqs.K

    @property
    def T(self) -> int:
        return self.pilots.T

    @property
    def rows_per_tone(self) -> int:
        return self.T * self.array.N_r

    def k_b(self, k: int) -> float:
        return float(self.freqs.wavenumbers[k])

    def channels(self, k: int) -> ChannelPair:
        if k not in self._channels:
            self._channels[k] = build_channels(self.grid, self.array, self.k_b(k))
        return self._channels[k]

    def kernel_table(self, k: int) -> np.ndarray:
        if k not in self._tables:
            self._tables[k] = lattice_kernel_table(self.grid, self.k_b(k))
        return self._tables[k]

    def G(self, k: int, rows=None, cols=None) -> np.ndarray:
        return greens_domain(self.grid, self.k_b(k), rows, cols, table=self.kernel_table(k))

    def with_pilots(self, pilots: PilotBook) -> "SensingSystem":
        other = SensingSystem(self.grid, self.array, self.freqs, pilots)
        other._channels = self._channels
        other._tables = self._tables
        return other


# ---------------------------------------------------------------- field solves


def _lu_checked(M: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported through rcond
        lu, piv = sla.lu_factor(M, check_finite=False)
    anorm = np.linalg.norm(M, 1)
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > 1e-14:
        raise ForwardSolveError(
            f"in-domain system is near singular (reciprocal condition {rcond:.3g})", rcond
        )
    return lu, piv


def _support_solve(G_ss: np.ndarray, chi_s: np.ndarray, rhs_s: np.ndarray) -> np.ndarray:
    """Solve (I - G_ss diag(chi_s)) E_s = rhs_s with a condition check."""
    M = np.eye(len(chi_s), dtype=complex) - G_ss * chi_s[None, :]
    lu, piv = _lu_checked(M)
    return sla.lu_solve((lu, piv), rhs_s, check_finite=False)


def total_field_solve(chi, G: np.ndarray, E_i: np.ndarray, rtol: float = 1e-10) -> FieldSet:
    """Solve E_t = E_i + G diag(chi) E_t.

    Only pixels with nonzero contrast couple, so the dense LU runs on the support
    and the remaining rows follow by one matrix product. The full-system residual
    is checked against ``rtol * ||E_i||``.
    """
    chi = np.asarray(getattr(chi, "chi", chi), dtype=complex)
    E_i = np.asarray(E_i, dtype=complex)
    S = np.flatnonzero(chi)
    if S.size == 0:
        return FieldSet(E_i, E_i.copy())
    E_S = _support_solve(G[np.ix_(S, S)], chi[S], E_i[S])
    E_t = E_i + G[:, S] @ (chi[S, None] * E_S)
    resid = np.linalg.norm(E_t - E_i - G @ (chi[:, None] * E_t))
    if resid > rtol * max(np.linalg.norm(E_i), np.finfo(float).tiny):
        raise ForwardSolveError(f"field residual {resid:.3g} exceeds tolerance")
    return FieldSet(E_i, E_t)


def total_field_rows(system: SensingSystem, k: int, chi: np.ndarray, E_i: np.ndarray, rows=None) -> np.ndarray:
    """Total field on ``rows`` (default all pixels) for incident columns ``E_i`` (N x m).

    Needs only the Green's blocks G[S, S] and G[rows, S] for the contrast support S.
    """
    rows = np.arange(system.grid.N) if rows is None else np.asarray(rows, dtype=int)
    S = np.flatnonzero(chi)
    if S.size == 0:
        return E_i[rows].copy()
    E_S = _support_solve(system.G(k, S, S), chi[S], E_i[S])
    return E_i[rows] + system.G(k, rows, S) @ (chi[S, None] * E_S)


def incident_fields(system: SensingSystem, k: int) -> np.ndarray:
    """E_i = H1 X_k, one column per pilot slot."""
    return system.channels(k).H1 @ system.pilots[k]


def noiseless_tone(system: SensingSystem, k: int, chi: np.ndarray) -> np.ndarray:
    """Stacked y_k without noise: slot t occupies rows t*N_r ... (t+1)*N_r - 1."""
    S = np.flatnonzero(chi)
    T, N_r = system.T, system.array.N_r
    if S.size == 0:
        return np.zeros(T * N_r, dtype=complex)
    ch = system.channels(k)
    E_i = ch.H1[S] @ system.pilots[k]
    E_S = _support_solve(system.G(k, S, S), chi[S], E_i)
    Y = ch.H2[:, S] @ (chi[S, None] * E_S)  # N_r x T
    return Y.T.reshape(-1)


def _circular_noise(shape, seed_words) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_words)))
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def simulate_observations(
    system: SensingSystem,
    chi,
    snr_db: float = np.inf,
    seed: int = 0,
    noise_var: float | None = None,
    data_system: SensingSystem | None = None,
    data_chi=None,
) -> Observation:
    """Synthesize y_{k,t} = H2 diag(chi) (I - G diag(chi))^{-1} H1 x_{k,t} + n_{k,t}.

    Noise is circular complex Gaussian; its per-entry variance makes the total noise
    energy over the full stack equal 10^(-snr/10) times the noiseless energy, unless
    ``noise_var`` is given explicitly. ``data_system``/``data_chi`` let the clean data
    come from a different (e.g. refined) lattice.
    """
    chi = np.asarray(getattr(chi, "chi", chi), dtype=complex)
    src_sys = data_system if data_system is not None else system
    src_chi = chi if data_chi is None else np.asarray(getattr(data_chi, "chi", data_chi), dtype=complex)
    K, T, N_r = system.K, system.T, system.array.N_r
    clean = np.stack([noiseless_tone(src_sys, k, src_chi) for k in range(K)])
    energy = float(np.sum(np.abs(clean) ** 2))
    if noise_var is None:
        if np.isinf(snr_db):
            noise_var = 0.0
        else:
            if energy == 0.0:
                log.warning("noiseless observation is zero; SNR-scaled noise is zero as well")
            noise_var = energy / clean.size * 10.0 ** (-snr_db / 10.0)
    y = clean.copy()
    if noise_var > 0:
        sd = np.sqrt(noise_var)
        for k in range(K):
            for t in range(T):
                y[k, t * N_r:(t + 1) * N_r] += sd * _circular_noise(N_r, (seed, _OBS_STREAM, k, t))
    return Observation(y, float(snr_db), float(noise_var), int(seed), np.asarray(system.freqs.tones), clean)


def khatri_rao(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column j is kron(U[:, j], V[:, j])."""
    if U.shape[1] != V.shape[1]:
        raise ValueError("Khatri-Rao factors need the same column count")
    return (U[:, None, :] * V[None, :, :]).reshape(U.shape[0] * V.shape[0], U.shape[1])


def operator_factors(system: SensingSystem, k: int, chi_est, columns=None):
    """Per-column factors (u, v): u = rows of (I - G diag chi)^{-1} H1 X_k, v = H2 columns.

    u has shape (T, P) and v has shape (N_r, P) so that column j of A_k is kron(u_j, v_j).
    """
    chi_est = np.asarray(getattr(chi_est, "chi", chi_est), dtype=complex)
    columns = np.arange(system.grid.N) if columns is None else np.asarray(columns, dtype=int)
    ch = system.channels(k)
    E_i = incident_fields(system, k)
    E_t = total_field_rows(system, k, chi_est, E_i, columns)
    return E_t.T, ch.H2[:, columns]


def assemble_operator(system: SensingSystem, k: int, chi_est, columns=None) -> np.ndarray:
    """A_k = (X^T H1^T (I - G diag chi)^{-T}) o H2, restricted to ``columns``."""
    u, v = operator_factors(system, k, chi_est, columns)
    return khatri_rao(u, v)


def assemble_bundle(system: SensingSystem, chi_est, columns=None) -> OperatorBundle:
    chi_est = np.asarray(getattr(chi_est, "chi", chi_est), dtype=complex)
    columns = np.arange(system.grid.N) if columns is None else np.asarray(columns, dtype=int)
    A = [assemble_operator(system, k, chi_est, columns) for k in range(system.K)]
    return OperatorBundle(A, columns, born_only=not np.any(chi_est))


def per_tx_responses(system: SensingSystem, k: int, chi) -> np.ndarray:
    """h_{k,m} for every Tx m as the columns of an N_r x N_t matrix."""
    chi = np.asarray(getattr(chi, "chi", chi), dtype=complex)
    S = np.flatnonzero(chi)
    ch = system.channels(k)
    if S.size == 0:
        return np.zeros((system.array.N_r, system.array.N_t), dtype=complex)
    E_S = _support_solve(system.G(k, S, S), chi[S], ch.H1[S])
    return ch.H2[:, S] @ (chi[S, None] * E_S)


def multistatic_response(
    system: SensingSystem,
    k: int,
    chi,
    snr_db: float = np.inf,
    seed: int = 0,
    noise_var: float | None = None,
    data_system: SensingSystem | None = None,
    data_chi=None,
) -> np.ndarray:
    """Slot-stacked multistatic matrix U_k (T*N_r x N_t); column m is 1_T kron h_{k,m} + noise.

    Each column gets independent noise whose energy is 10^(-snr/10) times that
    column's noiseless energy.
    """
    src_sys = data_system if data_system is not None else system
    src_chi = chi if data_chi is None else data_chi
    h = per_tx_responses(src_sys, k, src_chi)
    U = np.tile(h, (system.T, 1))
    if noise_var is None and np.isinf(snr_db):
        return U
    for m in range(U.shape[1]):
        if noise_var is None:
            var = np.sum(np.abs(U[:, m]) ** 2) / U.shape[0] * 10.0 ** (-snr_db / 10.0)
        else:
            var = noise_var
        U[:, m] += np.sqrt(var) * _circular_noise(U.shape[0], (seed, _MSR_STREAM, k, m))
    return U
