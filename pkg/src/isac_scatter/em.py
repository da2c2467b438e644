"""Physical constants, frequency grid, pixel lattice, antenna array and 2-D Green's functions.

Time convention is e^{+j omega t}; outgoing cylindrical waves are H0^(2)(k r).
All quantities are SI (Hz, m, S/m, rad).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy import special

C0 = constants.c
EPS0 = constants.epsilon_0


def hankel2_0(x):
    """Zero-order Hankel function of the second kind, J0(x) - j Y0(x)."""
    x = np.asarray(x, dtype=float)
    return special.j0(x) - 1j * special.y0(x)


def hankel2_1(x):
    """First-order Hankel function of the second kind, J1(x) - j Y1(x)."""
    x = np.asarray(x, dtype=float)
    return special.j1(x) - 1j * special.y1(x)


def green_kernel(k_b, distance):
    """2-D TM_z kernel (-j/4) k_b^2 H0^(2)(k_b d); no cell-area factor."""
    return -0.25j * k_b**2 * hankel2_0(k_b * np.asarray(distance, dtype=float))


# ---------------------------------------------------------------- frequencies


@dataclass(frozen=True)
class FrequencyGrid:
    f_c: float
    delta_f: float
    K: int
    tones: np.ndarray = field(repr=False)

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self.tones

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.omegas / C0

    @property
    def omega_c(self) -> float:
        return 2.0 * np.pi * self.f_c

    def __len__(self) -> int:
        return self.K


def build_frequency_grid(f_c: float, delta_f: float, K: int) -> FrequencyGrid:
    """Symmetric tone grid ``f_k = f_c + (k - (K+1)/2) delta_f`` for k = 1..K."""
    if K < 1:
        raise ValueError("tone count K must be >= 1")
    if f_c <= 0:
        raise ValueError("center frequency must be positive")
    if delta_f < 0:
        raise ValueError("tone spacing must be non-negative")
    k = np.arange(1, K + 1, dtype=float)
    tones = f_c + (k - (K + 1) / 2.0) * delta_f
    if tones[0] <= 0:
        raise ValueError(f"lowest tone {tones[0]:g} Hz is not positive")
    tones.setflags(write=False)
    return FrequencyGrid(float(f_c), float(delta_f), int(K), tones)


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Grid2D:
    """Square pixel lattice centered at the origin.

    Pixels are indexed row-major, row 0 at the top (largest y).
    """

    side_pixels: int
    extent_m: float

    def __post_init__(self):
        if self.side_pixels < 1:
            raise ValueError("side_pixels must be >= 1")
        if not self.extent_m > 0:
            raise ValueError("extent_m must be positive")

    @property
    def N(self) -> int:
        return self.side_pixels * self.side_pixels

    @property
    def cell_side(self) -> float:
        return self.extent_m / self.side_pixels

    @property
    def cell_area(self) -> float:
        return self.cell_side**2

    @property
    def axis(self) -> np.ndarray:
        n = self.side_pixels
        return (np.arange(n) - (n - 1) / 2.0) * self.cell_side

    @property
    def centers(self) -> np.ndarray:
        n = self.side_pixels
        rows, cols = np.divmod(np.arange(self.N), n)
        x = (cols - (n - 1) / 2.0) * self.cell_side
        y = ((n - 1) / 2.0 - rows) * self.cell_side
        return np.column_stack([x, y])

    def row_col(self, indices) -> tuple[np.ndarray, np.ndarray]:
        return np.divmod(np.asarray(indices, dtype=int), self.side_pixels)

    @property
    def circumradius(self) -> float:
        return self.extent_m / np.sqrt(2.0)


@dataclass(frozen=True)
class ArrayGeometry:
    radius_m: float
    N_t: int
    N_r: int
    tx_positions: np.ndarray = field(repr=False)
    rx_positions: np.ndarray = field(repr=False)


def uniform_circular_array(radius_m: float, N_t: int, N_r: int, grid: Grid2D | None = None) -> ArrayGeometry:
    """Tx and Rx elements uniformly spaced in angle on a circle around the domain."""
    if N_t < 1 or N_r < 1:
        raise ValueError("array needs at least one Tx and one Rx element")
    if grid is not None and radius_m <= grid.circumradius:
        raise ValueError(
            f"array radius {radius_m} m must exceed the grid circumradius {grid.circumradius:.3f} m"
        )

    def ring(n):
        phi = 2.0 * np.pi * np.arange(n) / n
        return radius_m * np.column_stack([np.cos(phi), np.sin(phi)])

    return ArrayGeometry(float(radius_m), int(N_t), int(N_r), ring(N_t), ring(N_r))


# ---------------------------------------------------------------- contrast


@dataclass(frozen=True)
class ContrastMap:
    chi: np.ndarray
    eps_r: np.ndarray
    sigma: np.ndarray
    omega_c: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.chi != 0)


def contrast_from_scene(grid: Grid2D, eps_r, sigma, omega_c: float) -> ContrastMap:
    """chi = eps_r - 1 + j sigma / (eps0 omega_c), evaluated once at the center frequency."""
    eps_r = np.broadcast_to(np.asarray(eps_r, dtype=float), (grid.N,)).copy()
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (grid.N,)).copy()
    if np.any(eps_r < 1):
        raise ValueError("relative permittivity below 1 is not supported")
    if np.any(sigma < 0):
        raise ValueError("conductivity must be non-negative")
    if omega_c <= 0:
        raise ValueError("omega_c must be positive")
    chi = (eps_r - 1.0) + 1j * sigma / (EPS0 * omega_c)
    return ContrastMap(chi, eps_r, sigma, float(omega_c))


# ---------------------------------------------------------------- Green's matrices


def self_term(k_b: float, cell_side: float) -> complex:
    """Kernel integrated over the equal-area disk a = cell_side / sqrt(pi).

    Closed form of (-j/4) k^2 * 2 pi * int_0^a H0^(2)(k r) r dr.
    """
    a = cell_side / np.sqrt(np.pi)
    return complex(-0.5j * np.pi * k_b * a * hankel2_1(k_b * a) - 1.0)


def lattice_kernel_table(grid: Grid2D, k_b: float) -> np.ndarray:
    """Kernel times cell area for every (|d_row|, |d_col|) offset; entry [0, 0] is the self term."""
    n = grid.side_pixels
    dr, dc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dist = grid.cell_side * np.hypot(dr, dc)
    dist[0, 0] = 1.0
    table = green_kernel(k_b, dist) * grid.cell_area
    table[0, 0] = self_term(k_b, grid.cell_side)
    return table


def greens_domain(grid: Grid2D, k_b: float, rows=None, cols=None, table=None) -> np.ndarray:
    """In-domain Green's matrix G (N x N), or the block G[rows][:, cols].

    Off-diagonal entries use midpoint evaluation times the cell area; the diagonal
    uses :func:`self_term`. ``table`` may be a precomputed :func:`lattice_kernel_table`.
    """
    if grid.cell_area <= 0:
        raise ValueError("zero cell area")
    if k_b <= 0:
        raise ValueError("wavenumber must be positive")
    if table is None:
        table = lattice_kernel_table(grid, k_b)
    rows = np.arange(grid.N) if rows is None else np.asarray(rows, dtype=int)
    cols = np.arange(grid.N) if cols is None else np.asarray(cols, dtype=int)
    r1, c1 = grid.row_col(rows)
    r2, c2 = grid.row_col(cols)
    return table[np.abs(r1[:, None] - r2[None, :]), np.abs(c1[:, None] - c2[None, :])]


def greens_obs(points_from, points_to, k_b: float, source_area: float | None = None) -> np.ndarray:
    """Free-space propagation matrix; entry (i, j) maps source ``points_from[j]`` to ``points_to[i]``.

    Pass ``source_area`` when the sources are grid pixels (pulse-basis weighting).
    """
    p_from = np.atleast_2d(np.asarray(points_from, dtype=float))
    p_to = np.atleast_2d(np.asarray(points_to, dtype=float))
    dist = np.linalg.norm(p_to[:, None, :] - p_from[None, :, :], axis=-1)
    if np.any(dist == 0):
        raise ValueError("coincident source and observation points (singular kernel)")
    out = green_kernel(k_b, dist)
    if source_area is not None:
        out = out * source_area
    return out


def resample_contrast(chi, grid: Grid2D, fine: Grid2D) -> np.ndarray:
    """Bilinear interpolation of a pixel contrast map onto another lattice over the same extent.

    Points outside the outermost pixel centers take the nearest edge value.
    """
    from scipy.interpolate import RegularGridInterpolator

    if not np.isclose(grid.extent_m, fine.extent_m):
        raise ValueError("lattices must cover the same extent")
    n = grid.side_pixels
    chi = np.asarray(chi, dtype=complex).reshape(n, n)
    # rows run top to bottom, i.e. along decreasing y
    y = grid.axis[::-1]
    x = grid.axis
    pts = fine.centers
    q = np.column_stack([np.clip(pts[:, 1], y[-1], y[0]), np.clip(pts[:, 0], x[0], x[-1])])
    out = np.empty(fine.N, dtype=complex)
    for part, sl in ((chi.real, "real"), (chi.imag, "imag")):
        f = RegularGridInterpolator((y[::-1], x), part[::-1], method="linear")
        val = f(q)
        if sl == "real":
            out.real = val
        else:
            out.imag = val
    return out
