"""Scatterer geometries, rasterization, ROI shrink schedules and the NMSE metric."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .em import ContrastMap, Grid2D, contrast_from_scene
from .roi import RoiIndexSet, square_roi

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float
    eps_r: float = 1.5
    sigma: float = 0.0

    def contains(self, xy):
        d = xy - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius**2

    @property
    def area(self):
        return math.pi * self.radius**2

    @property
    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)


@dataclass(frozen=True)
class Triangle:
    vertices: tuple
    eps_r: float = 2.0
    sigma: float = 0.0

    def contains(self, xy):
        v = np.asarray(self.vertices, dtype=float)
        signs = []
        for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
            signs.append((b[0] - a[0]) * (xy[:, 1] - a[1]) - (b[1] - a[1]) * (xy[:, 0] - a[0]))
        s = np.stack(signs)
        return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)

    @property
    def area(self):
        (x0, y0), (x1, y1), (x2, y2) = self.vertices
        return abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)) / 2.0

    @property
    def bbox(self):
        v = np.asarray(self.vertices, dtype=float)
        return (*v.min(axis=0), *v.max(axis=0))

    @classmethod
    def equilateral(cls, area: float, centroid=(0.0, 0.0), eps_r=2.0, sigma=0.0):
        """Apex up, centroid at ``centroid``."""
        side = math.sqrt(4.0 * area / math.sqrt(3.0))
        R = side / math.sqrt(3.0)
        cx, cy = centroid
        verts = tuple((cx + R * math.cos(a), cy + R * math.sin(a)) for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3))
        return cls(verts, eps_r, sigma)


@dataclass(frozen=True)
class TShape:
    """Horizontal bar on top of a vertical stem, both ``arm_length`` long and ``width`` wide.

    The stem hangs from the bar's lower edge at its midpoint; ``center`` is the
    center of the overall bounding box.
    """

    arm_length: float
    width: float
    center: tuple[float, float] = (0.0, 0.0)
    eps_r: float = 1.5
    sigma: float = 0.0

    def _rects(self):
        cx, cy = self.center
        L, w = self.arm_length, self.width
        top = cy + (L + w) / 2.0
        bar = (cx - L / 2, top - w, cx + L / 2, top)
        stem = (cx - w / 2, top - w - L, cx + w / 2, top - w)
        return bar, stem

    def contains(self, xy):
        out = np.zeros(len(xy), dtype=bool)
        for x0, y0, x1, y1 in self._rects():
            out |= (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
        return out

    @property
    def area(self):
        return 2.0 * self.arm_length * self.width

    @property
    def bbox(self):
        (bx0, _, bx1, by1), (_, sy0, _, _) = self._rects()
        return (bx0, sy0, bx1, by1)


@dataclass(frozen=True)
class Ellipse:
    """``major``/``minor`` are full axis lengths; ``rotation`` (rad) turns the major axis from +x."""

    center: tuple[float, float]
    major: float
    minor: float
    rotation: float = 0.0
    eps_r: float = 2.0
    sigma: float = 0.0

    def contains(self, xy):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        d = xy - np.asarray(self.center)
        xp = c * d[:, 0] + s * d[:, 1]
        yp = -s * d[:, 0] + c * d[:, 1]
        return (xp / (self.major / 2)) ** 2 + (yp / (self.minor / 2)) ** 2 <= 1.0

    @property
    def area(self):
        return math.pi * self.major * self.minor / 4.0

    @property
    def bbox(self):
        a, b = self.major / 2, self.minor / 2
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        hx = math.hypot(a * c, b * s)
        hy = math.hypot(a * s, b * c)
        cx, cy = self.center
        return (cx - hx, cy - hy, cx + hx, cy + hy)


@dataclass
class SceneSpec:
    name: str
    grid: Grid2D
    shapes: list = field(default_factory=list)


@dataclass
class Scene:
    spec: SceneSpec
    contrast: ContrastMap
    support: np.ndarray

    @property
    def chi(self) -> np.ndarray:
        return self.contrast.chi

    @property
    def k_true(self) -> int:
        return int(self.support.size)

    @property
    def bbox(self):
        """Union bounding box of all shapes, or None for an empty scene."""
        if not self.spec.shapes:
            return None
        b = np.array([s.bbox for s in self.spec.shapes])
        return (b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max())


def build_scene(spec: SceneSpec, omega_c: float, grid: Grid2D | None = None) -> Scene:
    """Rasterize shapes by pixel-center membership; later shapes overwrite earlier ones.

    ``grid`` overrides ``spec.grid``, e.g. to synthesize data on a refined lattice.
    """
    grid = spec.grid if grid is None else grid
    half = grid.extent_m / 2.0
    tol = 1e-12
    eps_r = np.ones(grid.N)
    sigma = np.zeros(grid.N)
    xy = grid.centers
    for shape in spec.shapes:
        x0, y0, x1, y1 = shape.bbox
        if x0 < -half - tol or y0 < -half - tol or x1 > half + tol or y1 > half + tol:
            raise ValueError(f"{type(shape).__name__} extends outside the {grid.extent_m} m domain")
        inside = shape.contains(xy)
        eps_r[inside] = shape.eps_r
        sigma[inside] = shape.sigma
    contrast = contrast_from_scene(grid, eps_r, sigma, omega_c)
    return Scene(spec, contrast, contrast.support)


# ---------------------------------------------------------------- presets


def preset_scene(name: str, grid: Grid2D, eps_r: float | None = None, sigma: float = 0.0, offset=(0.0, 0.0)) -> SceneSpec:
    ox, oy = offset
    if name == "circle":
        shapes = [Circle((ox, oy), 0.5, 1.5 if eps_r is None else eps_r, sigma)]
    elif name == "triangle":
        shapes = [Triangle.equilateral(0.65, (ox, oy), 2.0 if eps_r is None else eps_r, sigma)]
    elif name in ("t_shape", "tshape"):
        # a 0.4-cell shift keeps every edge off the pixel centers, so the 4.8-cell
        # width rasterizes to 5 pixels and the area stays within 5%
        d = 0.4 * grid.cell_side
        shapes = [TShape(1.1, 0.24, (ox + d, oy + d), 1.5 if eps_r is None else eps_r, sigma)]
    elif name in ("ellipses_far", "ellipses_close"):
        spacing = 0.3 if name == "ellipses_far" else 0.1
        e = 2.0 if eps_r is None else eps_r
        # x on pixel centers keeps the pair disjoint at the close spacing; y on a
        # cell boundary gives a 2-pixel raster, closest to the analytic area
        x_left = ox - spacing / 2.0 - grid.cell_side / 2.0
        shapes = [Ellipse((x, oy), 0.12, 0.055, math.pi / 2, e, sigma) for x in (x_left, x_left + spacing)]
    elif name == "empty":
        shapes = []
    else:
        raise ValueError(f"unknown scene preset {name!r}")
    return SceneSpec(name, grid, shapes)


SCENE_PRESETS = ("circle", "triangle", "t_shape", "ellipses_far", "ellipses_close", "empty")
DEFAULT_ZETA = {"circle": 1e-3, "triangle": 1e-3, "t_shape": 1e-4, "ellipses_far": 1e-4, "ellipses_close": 1e-4}


# ---------------------------------------------------------------- schedules and metrics


@dataclass(frozen=True)
class ShrinkSchedule:
    L_max: int
    L_min: int
    L: int
    sides: tuple

    @property
    def pixel_counts(self) -> tuple:
        return tuple(s * s for s in self.sides)

    def rois(self, side_pixels: int, center_rc=None) -> list[RoiIndexSet]:
        return [square_roi(side_pixels, s, center_rc) for s in self.sides]


def shrink_schedule(L_max: int, L_min: int, L: int) -> ShrinkSchedule:
    """Side L_o = round(L_max - (o - 1)/(L - 1) (L_max - L_min)) for o = 1..L; halves round up."""
    if L < 2:
        raise ValueError("a schedule needs at least two steps")
    if L_min > L_max:
        raise ValueError("L_min exceeds L_max")
    if L_min < 1:
        raise ValueError("L_min must be at least one pixel")
    sides = tuple(int(math.floor(L_max - (o - 1) / (L - 1) * (L_max - L_min) + 0.5)) for o in range(1, L + 1))
    return ShrinkSchedule(int(L_max), int(L_min), int(L), sides)


def bbox_center_rc(grid: Grid2D, bbox) -> tuple[float, float]:
    """Fractional (row, col) of a bounding-box center."""
    n = grid.side_pixels
    cx = 0.5 * (bbox[0] + bbox[2])
    cy = 0.5 * (bbox[1] + bbox[3])
    return ((n - 1) / 2.0 - cy / grid.cell_side, cx / grid.cell_side + (n - 1) / 2.0)


def min_enclosing_side(grid: Grid2D, support) -> int:
    """Smallest square side (pixels) that covers the support's row and column span."""
    r, c = grid.row_col(support)
    return int(max(r.max() - r.min(), c.max() - c.min()) + 1)


def nmse(chi_hat, chi_true) -> float:
    """10 log10(||chi_hat - chi||^2 / ||chi||^2), floored at -300 dB."""
    chi_hat = np.asarray(chi_hat)
    chi_true = np.asarray(chi_true)
    den = float(np.vdot(chi_true, chi_true).real)
    if den == 0:
        raise ValueError("NMSE is undefined for a zero true contrast")
    num = float(np.vdot(chi_hat - chi_true, chi_hat - chi_true).real)
    if num == 0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(num / den), NMSE_FLOOR_DB)
