"""ROI index sets and their on-disk forms (PGM mask, CSV index list)."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RoiIndexSet:
    indices: np.ndarray
    side_pixels: int

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=int))
        if idx.size == 0:
            raise ValueError("ROI is empty")
        n = self.side_pixels * self.side_pixels
        if idx[0] < 0 or idx[-1] >= n:
            raise ValueError("ROI index outside the grid")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def P(self) -> int:
        return int(self.indices.size)

    @property
    def N(self) -> int:
        return self.side_pixels * self.side_pixels

    @classmethod
    def full(cls, side_pixels: int) -> "RoiIndexSet":
        return cls(np.arange(side_pixels * side_pixels), side_pixels)

    @classmethod
    def from_mask(cls, mask) -> "RoiIndexSet":
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask.reshape(-1)), mask.shape[0])

    def mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[self.indices] = True
        return m.reshape(self.side_pixels, self.side_pixels)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.side_pixels).encode())
        h.update(self.indices.astype("<i8").tobytes())
        return h.hexdigest()[:16]


def roi_select(scores, eta: float, side_pixels: int) -> RoiIndexSet:
    """Keep pixels whose error-like score does not exceed the threshold."""
    scores = np.asarray(scores, dtype=float)
    idx = np.flatnonzero(scores <= eta)
    if idx.size == 0:
        raise ValueError(f"threshold {eta:g} rejected every pixel")
    return RoiIndexSet(idx, side_pixels)


def square_roi(side_pixels: int, side: int, center_rc: tuple[float, float] | None = None) -> RoiIndexSet:
    """Square block of ``side`` pixels centered (as closely as the lattice allows) on ``center_rc``.

    ``center_rc`` is in fractional (row, col) pixel coordinates; default is the grid center.
    """
    n = side_pixels
    if not 1 <= side <= n:
        raise ValueError(f"square side {side} outside [1, {n}]")
    if center_rc is None:
        center_rc = ((n - 1) / 2.0, (n - 1) / 2.0)
    starts = []
    for c in center_rc:
        s = int(np.floor(c - (side - 1) / 2.0 + 0.5))
        starts.append(min(max(s, 0), n - side))
    r0, c0 = starts
    rr, cc = np.meshgrid(np.arange(r0, r0 + side), np.arange(c0, c0 + side), indexing="ij")
    return RoiIndexSet((rr * n + cc).reshape(-1), n)


def write_pgm(roi: RoiIndexSet, path) -> Path:
    """Plain (P2) PGM, 1 inside the ROI and 0 outside, rows top to bottom."""
    path = Path(path)
    m = roi.mask().astype(int)
    lines = ["P2", f"{roi.side_pixels} {roi.side_pixels}", "1"]
    lines += [" ".join(str(v) for v in row) for row in m]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_pgm(path) -> RoiIndexSet:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    w, h = int(tokens[1]), int(tokens[2])
    if w != h:
        raise ValueError("ROI masks are square")
    vals = np.array([int(t) for t in tokens[4:4 + w * h]])
    return RoiIndexSet(np.flatnonzero(vals), w)


def write_index_csv(roi: RoiIndexSet, path) -> Path:
    path = Path(path)
    path.write_text("pixel_index\n" + "".join(f"{i}\n" for i in roi.indices))
    return path


def read_index_csv(path, side_pixels: int) -> RoiIndexSet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "pixel_index":
        raise ValueError("missing pixel_index header")
    return RoiIndexSet(np.array([int(s) for s in lines[1:] if s.strip()]), side_pixels)
