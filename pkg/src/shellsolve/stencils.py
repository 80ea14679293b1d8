"""Centered difference operators, matrix-free and as sparse matrices.

Provides the second differences D_xx, D_yy, the cross difference D_xy, the
13-point discrete biharmonic (assembled as Mxx*Mxx + 2*Mxx*Myy + Myy*Myy),
the Monge-Ampere-type bracket

    bracket(u, v) = D_xx u * D_yy v + D_yy u * D_xx v - 2 D_xy u * D_xy v

and its linearization-in-v as a sparse matrix built from Hadamard (diagonal)
scalings of the difference matrices.

Rows whose stencil would leave the ghost-augmented grid are left identically
zero; the assembly module replaces all of them with boundary-condition rows,
so they are never used as equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .grid import Grid, GridFunction

# magnitude below which exact-cancellation entries are dropped after assembly
DROP_TOL = 1e-15


@dataclass(frozen=True)
class OperatorSet:
    """Sparse difference operators over the full (ghost-inclusive) index set."""

    grid: Grid
    dxx: sp.csr_matrix
    dyy: sp.csr_matrix
    dxy: sp.csr_matrix
    biharm: sp.csr_matrix


def _keep_rows(mat: sp.spmatrix, mask: np.ndarray) -> sp.csr_matrix:
    """Zero out all rows where mask is False."""
    out = sp.diags(mask.astype(float)) @ mat.tocsr()
    out.eliminate_zeros()
    return out.tocsr()


def _drop_tiny(mat: sp.csr_matrix, tol: float = DROP_TOL) -> sp.csr_matrix:
    mat = mat.tocsr()
    mat.data[np.abs(mat.data) < tol] = 0.0
    mat.eliminate_zeros()
    return mat


def build_operator_set(grid: Grid) -> OperatorSet:
    """Assemble Mxx, Myy, Mxy and the discrete biharmonic for a grid."""
    s = grid.npts
    n = grid.n_total
    k = np.arange(n)
    ii = k % s
    jj = k // s

    def second_diff(step: int, h: float, valid: np.ndarray) -> sp.csr_matrix:
        rows = k[valid]
        coef = 1.0 / (h * h)
        data = np.concatenate([
            np.full(rows.size, coef),
            np.full(rows.size, -2.0 * coef),
            np.full(rows.size, coef),
        ])
        cols = np.concatenate([rows - step, rows, rows + step])
        rr = np.concatenate([rows, rows, rows])
        return sp.csr_matrix((data, (rr, cols)), shape=(n, n))

    in_x = (ii >= 1) & (ii <= s - 2)
    in_y = (jj >= 1) & (jj <= s - 2)
    dxx = second_diff(1, grid.hx, in_x)
    dyy = second_diff(s, grid.hy, in_y)

    rows = k[in_x & in_y]
    coef = 1.0 / (4.0 * grid.hx * grid.hy)
    data = np.concatenate([
        np.full(rows.size, coef),
        np.full(rows.size, -coef),
        np.full(rows.size, -coef),
        np.full(rows.size, coef),
    ])
    cols = np.concatenate([rows + 1 + s, rows - 1 + s, rows + 1 - s, rows - 1 - s])
    rr = np.concatenate([rows, rows, rows, rows])
    dxy = sp.csr_matrix((data, (rr, cols)), shape=(n, n))

    biharm = dxx @ dxx + 2.0 * (dxx @ dyy) + dyy @ dyy
    # full 13-point support requires 0 <= i, j <= N
    full = (ii >= 2) & (ii <= s - 3) & (jj >= 2) & (jj <= s - 3)
    biharm = _drop_tiny(_keep_rows(biharm, full))

    return OperatorSet(grid, dxx, dyy, dxy, biharm)


# --- matrix-free applications (independent of the sparse assembly) ---------


def dxx_support(grid: Grid) -> np.ndarray:
    i, j = grid.index_arrays()
    return (i >= -1) & (i <= grid.n + 1)


def dyy_support(grid: Grid) -> np.ndarray:
    i, j = grid.index_arrays()
    return (j >= -1) & (j <= grid.n + 1)


def dxy_support(grid: Grid) -> np.ndarray:
    return dxx_support(grid) & dyy_support(grid)


def apply_dxx(u: GridFunction) -> GridFunction:
    """Centered second x-difference; zero at unsupported (outermost) nodes."""
    g = u.grid
    v = u.as_2d()
    out = np.zeros_like(v)
    out[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / g.hx**2
    return GridFunction(g, out.ravel())


def apply_dyy(u: GridFunction) -> GridFunction:
    g = u.grid
    v = u.as_2d()
    out = np.zeros_like(v)
    out[1:-1, :] = (v[2:, :] - 2.0 * v[1:-1, :] + v[:-2, :]) / g.hy**2
    return GridFunction(g, out.ravel())


def apply_dxy(u: GridFunction) -> GridFunction:
    g = u.grid
    v = u.as_2d()
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (
        4.0 * g.hx * g.hy
    )
    return GridFunction(g, out.ravel())


def apply_bracket(u: GridFunction, v: GridFunction) -> GridFunction:
    """Pointwise bracket of two fields on their common stencil support."""
    uxx, uyy, uxy = apply_dxx(u), apply_dyy(u), apply_dxy(u)
    vxx, vyy, vxy = apply_dxx(v), apply_dyy(v), apply_dxy(v)
    vals = uxx.values * vyy.values + uyy.values * vxx.values - 2.0 * uxy.values * vxy.values
    return GridFunction(u.grid, vals)


# --- matrix-form helpers used by residual/Jacobian assembly ----------------


def bracket_values(ops: OperatorSet, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """bracket(u, v) through the sparse operators (matches the linearization)."""
    return (
        (ops.dxx @ u) * (ops.dyy @ v)
        + (ops.dyy @ u) * (ops.dxx @ v)
        - 2.0 * (ops.dxy @ u) * (ops.dxy @ v)
    )


def bracket_linearization(ops: OperatorSet, u: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix B(u) with B(u) v = bracket(u, v) for every v."""
    return (
        sp.diags(ops.dxx @ u) @ ops.dyy
        + sp.diags(ops.dyy @ u) @ ops.dxx
        - 2.0 * (sp.diags(ops.dxy @ u) @ ops.dxy)
    ).tocsr()


def dump_matrix_market(mat: sp.spmatrix, path) -> None:
    """Write a sparse matrix in Matrix Market coordinate text format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat))
