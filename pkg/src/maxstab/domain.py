"""Finite simulation grids, hyperrectangle vertices and discrete measures on grids."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractError

__all__ = [
    "Grid",
    "Hyperrectangle",
    "DiscreteMeasure",
    "regular_grid",
    "vertices",
    "uniform_vertex_measure",
    "dirac_measure",
    "read_grid_csv",
    "write_grid_csv",
]

VERTEX_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class Hyperrectangle:
    """Centred box ``prod_i [-R_i, R_i]``."""

    half_widths: tuple[float, ...]

    def __post_init__(self):
        hw = tuple(float(r) for r in np.atleast_1d(self.half_widths))
        if not hw or any(not r > 0 for r in hw):
            raise ContractError(f"half widths must be positive, got {hw}")
        object.__setattr__(self, "half_widths", hw)

    @property
    def dim(self) -> int:
        return len(self.half_widths)

    @property
    def radius(self) -> float:
        """Radius of the smallest centred ball containing the box."""
        return float(np.sqrt(np.sum(np.square(self.half_widths))))


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered set of distinct points; the order fixes every matrix index.

    ``axes`` is set for tensor grids built by :func:`regular_grid` and is what
    the shift-based samplers rely on.
    """

    points: np.ndarray
    label: str = ""
    axes: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) < 1:
            raise ContractError("a grid needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ContractError("grid points must be finite")
        if len(pts) > 1:
            order = np.lexsort(pts.T[::-1])
            srt = pts[order]
            gaps = np.linalg.norm(np.diff(srt, axis=0), axis=1)
            if np.any(gaps <= 1e-12):
                raise ContractError("grid points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_regular(self) -> bool:
        return self.axes is not None

    @property
    def shape(self) -> tuple[int, ...]:
        if self.axes is None:
            raise ContractError("grid is not a regular tensor grid")
        return tuple(len(a) for a in self.axes)

    def index_of(self, point, atol: float = VERTEX_ATOL) -> int | None:
        """Index of ``point`` in the grid or ``None`` when absent."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        hit = np.flatnonzero(np.all(np.abs(self.points - p) <= atol, axis=1))
        return int(hit[0]) if len(hit) else None

    def origin_index(self) -> int | None:
        return self.index_of(np.zeros(self.dim))

    def enclosing_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points, axis=1)))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability weights aligned with a grid."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ContractError("a measure needs at least one weight")
        if np.any(w < -1e-12) or not np.all(np.isfinite(w)):
            raise ContractError("weights must be nonnegative and finite")
        w = np.where(w < 0, 0.0, w)
        if abs(w.sum() - 1.0) > 1e-10:
            raise ContractError(f"weights must sum to one (sum = {w.sum():.12g})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)


def regular_grid(hyperrect: Hyperrectangle, counts, label: str = "") -> Grid:
    """Equispaced tensor grid on the box, ordered lexicographically by axis."""
    counts = np.broadcast_to(np.atleast_1d(counts), (hyperrect.dim,))
    if np.any(counts < 2):
        raise ContractError("need at least two points per axis")
    axes = tuple(np.linspace(-r, r, int(c)) for r, c in zip(hyperrect.half_widths, counts))
    for a in axes:
        if len(a) % 2:
            a[len(a) // 2] = 0.0  # linspace can leave a 1e-17 residue here
        a.setflags(write=False)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if not label:
        label = "x".join(str(int(c)) for c in counts)
    return Grid(pts, label=label, axes=axes)


def vertices(hyperrect: Hyperrectangle) -> list[tuple[frozenset, np.ndarray]]:
    """All ``2**d`` vertices ``v_A`` with ``+R_i`` exactly when ``i`` is in ``A``.

    Subsets use 1-based coordinate labels and are ordered by bitmask.
    """
    d = hyperrect.dim
    r = np.asarray(hyperrect.half_widths)
    out = []
    for mask in range(2 ** d):
        signs = np.array([1.0 if mask >> i & 1 else -1.0 for i in range(d)])
        label = frozenset(i + 1 for i in range(d) if mask >> i & 1)
        out.append((label, signs * r))
    return out


def uniform_vertex_measure(grid: Grid, hyperrect: Hyperrectangle) -> DiscreteMeasure:
    """Weight ``2**-d`` on each box vertex; every vertex must be a grid point."""
    if grid.dim != hyperrect.dim:
        raise ContractError("grid and box dimensions differ")
    w = np.zeros(grid.n_points)
    verts = vertices(hyperrect)
    for label, v in verts:
        idx = grid.index_of(v)
        if idx is None:
            raise ContractError(f"vertex {tuple(v)} (A={sorted(label)}) is not a grid point")
        w[idx] += 1.0 / len(verts)
    return DiscreteMeasure(w)


def dirac_measure(grid: Grid, index: int) -> DiscreteMeasure:
    if not 0 <= index < grid.n_points:
        raise ContractError(f"index {index} out of range for {grid.n_points} points")
    w = np.zeros(grid.n_points)
    w[index] = 1.0
    return DiscreteMeasure(w)


def bounding_box(grid: Grid) -> Hyperrectangle:
    """Centred box spanned by the grid (the grid must be symmetric about 0)."""
    lo, hi = grid.points.min(axis=0), grid.points.max(axis=0)
    if not np.allclose(lo, -hi, rtol=0, atol=VERTEX_ATOL):
        raise ContractError("grid is not centred at the origin")
    return Hyperrectangle(tuple(hi))


def write_grid_csv(grid: Grid, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(grid.dim)])
        for p in grid.points:
            writer.writerow([f"{c:.17g}" for c in p])


def read_grid_csv(path, label: str | None = None) -> Grid:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    expected = [f"x{i + 1}" for i in range(len(header))]
    if header != expected:
        raise ContractError(f"grid header must be {','.join(expected)}, got {','.join(header)}")
    pts = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    if pts.size == 0:
        raise ContractError(f"{path} contains no points")
    return Grid(pts.reshape(-1, len(header)), label=path.stem if label is None else label,
                axes=_detect_axes(pts.reshape(-1, len(header))))


def _detect_axes(pts: np.ndarray):
    """Recover tensor-grid axes when the points form a full lexicographic product."""
    axes = tuple(np.unique(pts[:, j]) for j in range(pts.shape[1]))
    if np.prod([len(a) for a in axes]) != len(pts) or any(len(a) < 2 for a in axes):
        return None
    mesh = np.meshgrid(*axes, indexing="ij")
    if not np.array_equal(np.stack([m.ravel() for m in mesh], axis=1), pts):
        return None
    for a in axes:
        steps = np.diff(a)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            return None
        a.setflags(write=False)
    return axes
