"""Ghost-augmented Cartesian grids and scalar grid functions.

The solvers operate on a rectangular domain covered by an (N+1) x (N+1) mesh
of physical nodes plus two layers of ghost nodes on every side, so multi
indices run over i, j in {-2, ..., N+2}.  Ghost layers exist so that every
interior equation and every boundary-condition row can use centered
differences; no one-sided stencil appears anywhere in the code.

Nodes are addressed either by the multi-index (i, j) or by a flat index used
for sparse linear algebra.  Flattening is column-major in i (i varies
fastest):

    flat(i, j) = (i + 2) + (N + 5) * (j + 2)

This is the single grid-wide convention; tests assert the round trip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# number of ghost layers on each side of the physical domain
GHOST_LAYERS = 2


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid with two ghost layers per side.

    Attributes:
        x_a, x_b, y_a, y_b: physical domain bounds.
        n: number of subdivisions per axis (N); nodes per axis is n + 5.
    """

    x_a: float
    x_b: float
    y_a: float
    y_b: float
    n: int

    @property
    def hx(self) -> float:
        return (self.x_b - self.x_a) / self.n

    @property
    def hy(self) -> float:
        return (self.y_b - self.y_a) / self.n

    @property
    def h(self) -> float:
        """Characteristic grid size, min(hx, hy)."""
        return min(self.hx, self.hy)

    @property
    def npts(self) -> int:
        """Nodes per axis including ghosts."""
        return self.n + 2 * GHOST_LAYERS + 1

    @property
    def n_total(self) -> int:
        """Flat vector length, (N+5)**2."""
        return self.npts * self.npts

    def flat_index(self, i, j):
        """Flat index of node (i, j); accepts scalars or arrays."""
        return (np.asarray(i) + GHOST_LAYERS) + self.npts * (np.asarray(j) + GHOST_LAYERS)

    def multi_index(self, k):
        """Inverse of flat_index."""
        k = np.asarray(k)
        return k % self.npts - GHOST_LAYERS, k // self.npts - GHOST_LAYERS

    def x(self, i):
        return self.x_a + np.asarray(i) * self.hx

    def y(self, j):
        return self.y_a + np.asarray(j) * self.hy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) coordinate vectors over all nodes in flat order."""
        idx = np.arange(-GHOST_LAYERS, self.n + GHOST_LAYERS + 1)
        xs = self.x(idx)
        ys = self.y(idx)
        x2, y2 = np.meshgrid(xs, ys)  # [j, i] layout
        return x2.ravel(), y2.ravel()

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(i, j) multi-index vectors over all nodes in flat order."""
        return self.multi_index(np.arange(self.n_total))

    def interior_mask(self) -> np.ndarray:
        """Boolean mask of nodes where the PDE rows are imposed (0 < i, j < N)."""
        i, j = self.index_arrays()
        return (i > 0) & (i < self.n) & (j > 0) & (j < self.n)

    def physical_mask(self) -> np.ndarray:
        """Boolean mask of physical nodes 0 <= i, j <= N (errors norms live here)."""
        i, j = self.index_arrays()
        return (i >= 0) & (i <= self.n) & (j >= 0) & (j <= self.n)

    def center_flat(self) -> int | None:
        """Flat index of the domain center if it is a grid node (even N), else None."""
        if self.n % 2:
            return None
        return int(self.flat_index(self.n // 2, self.n // 2))


@dataclass(frozen=True)
class GridFunction:
    """Scalar field on a Grid, stored as the flat vector (ghosts included)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_total,):
            raise ValueError(
                f"GridFunction values must have shape ({self.grid.n_total},), "
                f"got {self.values.shape}"
            )

    def as_2d(self) -> np.ndarray:
        """View of the values with [j+2, i+2] indexing."""
        s = self.grid.npts
        return self.values.reshape(s, s)


def build_grid(bounds: tuple[float, float, float, float], n: int) -> Grid:
    """Build the ghost-augmented grid on [x_a, x_b] x [y_a, y_b] with N = n.

    n >= 4 is required so the 13-point biharmonic stencil at any interior node
    reaches into at most one side's ghost region.
    """
    x_a, x_b, y_a, y_b = (float(v) for v in bounds)
    if not (x_a < x_b and y_a < y_b):
        raise ValueError(f"degenerate bounds: [{x_a},{x_b}] x [{y_a},{y_b}]")
    n = int(n)
    if n < 4:
        raise ValueError(f"n must be >= 4, got {n}")
    return Grid(x_a, x_b, y_a, y_b, n)


def sample(f, grid: Grid) -> GridFunction:
    """Evaluate f(x, y) at every node (ghosts included).

    f must be defined on the ghost-extended bounding box and accept numpy
    arrays.
    """
    x, y = grid.coords()
    values = np.asarray(f(x, y), dtype=float)
    values = np.broadcast_to(values, x.shape).copy()
    return GridFunction(grid, values)


# node classification labels
INTERIOR = 0
BOUNDARY = 1
GHOST_SIDE_1 = 2
GHOST_SIDE_2 = 3
GHOST_CORNER = 4

_LABEL_NAMES = {
    INTERIOR: "interior",
    BOUNDARY: "boundary",
    GHOST_SIDE_1: "ghost-layer-1",
    GHOST_SIDE_2: "ghost-layer-2",
    GHOST_CORNER: "corner-ghost",
}


@dataclass(frozen=True)
class NodeClasses:
    """Partition of all grid nodes into interior/boundary/ghost classes."""

    grid: Grid
    labels: np.ndarray  # int label per flat index

    @property
    def counts(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.labels == code))
            for code, name in _LABEL_NAMES.items()
        }

    def kind(self, k: int) -> str:
        """Human-readable class of flat node k (used in solver diagnostics)."""
        label = _LABEL_NAMES[int(self.labels[k])]
        i, j = self.grid.multi_index(k)
        return f"{label} node (i={int(i)}, j={int(j)})"


def classify(grid: Grid) -> NodeClasses:
    """Classify every node; the class counts partition (N+5)**2."""
    i, j = grid.index_arrays()
    n = grid.n
    # distance outside the physical index range [0, N], per axis
    out_i = np.maximum(np.maximum(-i, i - n), 0)
    out_j = np.maximum(np.maximum(-j, j - n), 0)

    labels = np.full(grid.n_total, INTERIOR, dtype=np.int8)
    on_edge = ((i == 0) | (i == n) | (j == 0) | (j == n)) & (out_i == 0) & (out_j == 0)
    labels[on_edge] = BOUNDARY
    side = (out_i > 0) ^ (out_j > 0)
    labels[side & (np.maximum(out_i, out_j) == 1)] = GHOST_SIDE_1
    labels[side & (np.maximum(out_i, out_j) == 2)] = GHOST_SIDE_2
    labels[(out_i > 0) & (out_j > 0)] = GHOST_CORNER
    return NodeClasses(grid, labels)
