"""Boundary-condition equations for the displacement and stress fields.

Five families are supported: simply supported, clamped, free (with the
corner condition on the cross derivative of the displacement), and the two
partially clamped mixed families CS (clamped window inside supported edges)
and CF (clamped window inside free edges).  The mixed families blend the two
candidate conditions with a smooth tanh transition weight so no jump
discontinuity appears at the continuous level; windows are restricted to the
top and bottom edges of the rectangle.

Every boundary and ghost node of each field is accounted for by exactly one
equation.  Condition pairs with a Dirichlet value (all stress-function
variants; clamped, supported and CS displacement) are laid out as

* boundary node      -> value condition,
* first ghost layer  -> derivative condition,
* second ghost layer -> quadratic extrapolation along the inward normal,

while free-type displacement edges (free everywhere; CF on every side, the
top/bottom rows being the blended ones) have no Dirichlet value, so their
boundary nodes carry the field equation itself (the assembly module extends
the PDE row mask onto them; see pde_boundary_nodes) and the two physical
conditions occupy the ghost layers:

* boundary node      -> PDE row (owned by the assembly module),
* first ghost layer  -> second-derivative condition,
* second ghost layer -> third-derivative condition (its stencil reaches it).

Corner nodes of free-type displacement fields carry the zero cross-derivative
corner condition; corner ghosts are always closed by quadratic extrapolation
along the inward diagonal.  The extrapolation rows are exact on planes, so
the free displacement block keeps exactly the plane null space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Union

import numpy as np
import scipy.sparse as sp

from .grid import Grid

Field = Literal["phi", "w"]


def transition_omega(x, x_c: float, r_c: float, eps: float):
    """Smooth clamp-window weight: ~1 inside |x - x_c| < r_c, ~0 outside."""
    return 1.0 - 0.5 * (np.tanh((np.abs(x - x_c) - r_c) / eps) + 1.0)


@dataclass(frozen=True)
class Supported:
    name = "supported"


@dataclass(frozen=True)
class Clamped:
    name = "clamped"


@dataclass(frozen=True)
class Free:
    nu: float = 0.3
    name = "free"


@dataclass(frozen=True)
class ClampedSupported:
    x_c: float = 0.5
    r_c: float = 0.1
    eps: float = 0.01
    name = "cs"


@dataclass(frozen=True)
class ClampedFree:
    nu: float = 0.3
    x_c: float = 0.5
    r_c: float = 0.1
    eps: float = 0.01
    name = "cf"


BoundaryCondition = Union[Supported, Clamped, Free, ClampedSupported, ClampedFree]

_MIXED = (ClampedSupported, ClampedFree)


def validate_bc(bc: BoundaryCondition, grid: Grid) -> None:
    """Check parameter ranges; mixed windows must fit strictly inside the edge."""
    nu = getattr(bc, "nu", None)
    if nu is not None and not (0.0 <= nu < 0.5):
        raise ValueError(f"Poisson ratio must satisfy 0 <= nu < 0.5, got {nu}")
    if isinstance(bc, _MIXED):
        if bc.r_c <= 0 or bc.eps <= 0:
            raise ValueError("mixed BC requires r_c > 0 and eps > 0")
        if not (grid.x_a < bc.x_c - bc.r_c and bc.x_c + bc.r_c < grid.x_b):
            raise ValueError(
                f"clamped window [{bc.x_c - bc.r_c}, {bc.x_c + bc.r_c}] must lie "
                f"strictly inside ({grid.x_a}, {grid.x_b})"
            )


@dataclass(frozen=True)
class BcEquation:
    """One linear equation accounting for one boundary or ghost node.

    The rhs is zero for all conditions in this solver but is carried so that
    inhomogeneous (manufactured) boundary data can be injected in tests.
    """

    node: int  # flat index of the node this equation accounts for
    cols: np.ndarray
    coefs: np.ndarray
    rhs: float = 0.0
    kind: str = ""


# rows are accumulated as {flat index: coefficient} dicts
Row = dict


def _merge(*weighted_rows) -> Row:
    out: Row = {}
    for weight, row in weighted_rows:
        for col, c in row.items():
            out[col] = out.get(col, 0.0) + weight * c
    return out


# sides: (name, normal, fixed index accessor)
_SIDES = {
    "bottom": (0, -1),
    "top": (0, 1),
    "left": (-1, 0),
    "right": (1, 0),
}


def _value_row(g: Grid, node) -> Row:
    return {int(g.flat_index(*node)): 1.0}


def directional_first(g: Grid, node, direction) -> Row:
    """Centered first difference along a direction: a1*Dx + a2*Dy."""
    i, j = node
    a1, a2 = direction
    row: Row = {}
    if a1:
        for off, sgn in ((1, 1.0), (-1, -1.0)):
            if not -2 <= i + off <= g.n + 2:
                raise ValueError(f"directional stencil leaves grid at node {node}")
            col = int(g.flat_index(i + off, j))
            row[col] = row.get(col, 0.0) + sgn * a1 / (2.0 * g.hx)
    if a2:
        for off, sgn in ((1, 1.0), (-1, -1.0)):
            if not -2 <= j + off <= g.n + 2:
                raise ValueError(f"directional stencil leaves grid at node {node}")
            col = int(g.flat_index(i, j + off))
            row[col] = row.get(col, 0.0) + sgn * a2 / (2.0 * g.hy)
    return row


def _second_axis_row(g: Grid, node, axis: int) -> Row:
    """Second difference along a coordinate axis (0 = x, 1 = y)."""
    i, j = node
    h = g.hx if axis == 0 else g.hy
    di, dj = (1, 0) if axis == 0 else (0, 1)
    return {
        int(g.flat_index(i - di, j - dj)): 1.0 / h**2,
        int(g.flat_index(i, j)): -2.0 / h**2,
        int(g.flat_index(i + di, j + dj)): 1.0 / h**2,
    }


def _dnn_row(g: Grid, node, normal) -> Row:
    return _second_axis_row(g, node, 0 if normal[0] else 1)


def _dtt_row(g: Grid, node, normal) -> Row:
    return _second_axis_row(g, node, 1 if normal[0] else 0)


def _dn_of(g: Grid, node, normal, inner: Callable[[Grid, tuple], Row]) -> Row:
    """Centered D_n applied to a second-difference row (reaches ghost layer 2)."""
    i, j = node
    nx, ny = normal
    h = g.hx if nx else g.hy
    plus = inner(g, (i + nx, j + ny))
    minus = inner(g, (i - nx, j - ny))
    return _merge((1.0 / (2.0 * h), plus), (-1.0 / (2.0 * h), minus))


def _dxy_row(g: Grid, node) -> Row:
    i, j = node
    c = 1.0 / (4.0 * g.hx * g.hy)
    return {
        int(g.flat_index(i + 1, j + 1)): c,
        int(g.flat_index(i - 1, j + 1)): -c,
        int(g.flat_index(i + 1, j - 1)): -c,
        int(g.flat_index(i - 1, j - 1)): c,
    }


def _extrap_row(g: Grid, node, step) -> Row:
    """Quadratic extrapolation of `node` from three nodes along `step`."""
    i, j = node
    di, dj = step
    return {
        int(g.flat_index(i, j)): 1.0,
        int(g.flat_index(i + di, j + dj)): -3.0,
        int(g.flat_index(i + 2 * di, j + 2 * dj)): 3.0,
        int(g.flat_index(i + 3 * di, j + 3 * dj)): -1.0,
    }


def _free_pair(g: Grid, node, normal, nu: float) -> tuple[Row, Row]:
    """Free-edge condition pair for the displacement."""
    first = _merge((1.0, _dnn_row(g, node, normal)), (nu, _dtt_row(g, node, normal)))

    def bending(gg, nn):
        return _merge(
            (1.0, _dnn_row(gg, nn, normal)), (2.0 - nu, _dtt_row(gg, nn, normal))
        )

    second = _dn_of(g, node, normal, bending)
    return first, second


def _side_pair(g: Grid, bc, field: Field, side: str, node) -> tuple[Row, Row, str]:
    """The two condition rows at a boundary node, plus a debug label.

    Mixed variants blend rows on the top/bottom sides only; the left/right
    sides carry the pure non-clamped conditions.
    """
    normal = _SIDES[side]
    blendable = side in ("bottom", "top")

    if isinstance(bc, Clamped):
        return _value_row(g, node), directional_first(g, node, normal), "clamped"
    if isinstance(bc, Supported):
        return _value_row(g, node), _dnn_row(g, node, normal), "supported"
    if isinstance(bc, Free):
        if field == "phi":
            return _value_row(g, node), directional_first(g, node, normal), "free-phi"
        r1, r2 = _free_pair(g, node, normal, bc.nu)
        return r1, r2, "free-w"
    if isinstance(bc, ClampedSupported):
        if not blendable:
            return _value_row(g, node), _dnn_row(g, node, normal), "cs-side"
        om = float(transition_omega(g.x(node[0]), bc.x_c, bc.r_c, bc.eps))
        second = _merge(
            (1.0 - om, _dnn_row(g, node, normal)),
            (om, directional_first(g, node, normal)),
        )
        return _value_row(g, node), second, "cs-blend"
    if isinstance(bc, ClampedFree):
        if field == "phi":
            # stress function is clamped on the whole boundary under CF
            return _value_row(g, node), directional_first(g, node, normal), "cf-phi"
        f1, f2 = _free_pair(g, node, normal, bc.nu)
        if not blendable:
            return f1, f2, "cf-side"
        om = float(transition_omega(g.x(node[0]), bc.x_c, bc.r_c, bc.eps))
        first = _merge((1.0 - om, f1), (om, _value_row(g, node)))
        second = _merge((1.0 - om, f2), (om, directional_first(g, node, normal)))
        return first, second, "cf-blend"
    raise TypeError(f"unknown boundary condition {bc!r}")


def _is_free_type(bc, field: Field) -> bool:
    """True when the field carries no Dirichlet value row on the boundary."""
    return field == "w" and isinstance(bc, (Free, ClampedFree))


def pde_boundary_nodes(g: Grid, bc: BoundaryCondition, field: Field) -> np.ndarray:
    """Flat indices of boundary nodes where the PDE row replaces a BC row.

    Free-type displacement edges have only derivative conditions, so their
    non-corner boundary nodes carry the field equation itself.
    """
    if not _is_free_type(bc, field):
        return np.zeros(0, dtype=np.int64)
    n = g.n
    nodes = []
    for t in range(1, n):
        nodes += [(t, 0), (t, n), (0, t), (n, t)]
    return np.asarray(sorted(int(g.flat_index(i, j)) for i, j in nodes), dtype=np.int64)


def _row_to_eq(g: Grid, target, row: Row, kind: str) -> BcEquation:
    cols = np.fromiter(row.keys(), dtype=np.int64, count=len(row))
    coefs = np.fromiter(row.values(), dtype=float, count=len(row))
    keep = coefs != 0.0
    return BcEquation(int(g.flat_index(*target)), cols[keep], coefs[keep], 0.0, kind)


def bc_equations(g: Grid, bc: BoundaryCondition, field: Field) -> list[BcEquation]:
    """Emit one equation per boundary/ghost node of the given field."""
    validate_bc(bc, g)
    n = g.n
    eqs: list[BcEquation] = []

    def side_nodes(side):
        if side == "bottom":
            return [(i, 0) for i in range(1, n)]
        if side == "top":
            return [(i, n) for i in range(1, n)]
        if side == "left":
            return [(0, j) for j in range(1, n)]
        return [(n, j) for j in range(1, n)]

    free_type = _is_free_type(bc, field)
    for side, normal in _SIDES.items():
        nx, ny = normal
        for node in side_nodes(side):
            i, j = node
            g1 = (i + nx, j + ny)
            g2 = (i + 2 * nx, j + 2 * ny)
            r1, r2, kind = _side_pair(g, bc, field, side, node)
            if free_type:
                # the boundary node itself carries the PDE row
                eqs.append(_row_to_eq(g, g1, r1, kind + ":1"))
                eqs.append(_row_to_eq(g, g2, r2, kind + ":2"))
            else:
                eqs.append(_row_to_eq(g, node, r1, kind + ":1"))
                eqs.append(_row_to_eq(g, g1, r2, kind + ":2"))
                eqs.append(_row_to_eq(g, g2, _extrap_row(g, g2, (-nx, -ny)), "extrap"))

    # corners: the two adjacent sides each close their own ghost column
    corners = [
        ((0, 0), "left", "bottom"),
        ((n, 0), "right", "bottom"),
        ((0, n), "left", "top"),
        ((n, n), "right", "top"),
    ]
    for node, side_x, side_y in corners:
        i, j = node
        if free_type:
            # zero twisting forcing at free corners
            eqs.append(_row_to_eq(g, node, _dxy_row(g, node), "corner-dxy"))
        else:
            eqs.append(_row_to_eq(g, node, _value_row(g, node), "corner-value"))
        for side in (side_x, side_y):
            nx, ny = _SIDES[side]
            g1 = (i + nx, j + ny)
            g2 = (i + 2 * nx, j + 2 * ny)
            r1, r2, kind = _side_pair(g, bc, field, side, node)
            if free_type:
                eqs.append(_row_to_eq(g, g1, r1, kind + ":1"))
                eqs.append(_row_to_eq(g, g2, r2, kind + ":2"))
            else:
                eqs.append(_row_to_eq(g, g1, r2, kind + ":2"))
                eqs.append(
                    _row_to_eq(g, g2, _extrap_row(g, g2, (-nx, -ny)), "extrap")
                )
        # 2x2 diagonal ghost block, extrapolated along the inward diagonal
        sx = 1 if i == 0 else -1
        sy = 1 if j == 0 else -1
        for a in (1, 2):
            for b in (1, 2):
                gh = (i - a * sx, j - b * sy)
                eqs.append(_row_to_eq(g, gh, _extrap_row(g, gh, (sx, sy)), "extrap-diag"))

    expected = 12 * n + 24 - pde_boundary_nodes(g, bc, field).size
    if len(eqs) != expected:
        raise AssertionError(
            f"boundary assembly emitted {len(eqs)} equations, expected {expected}"
        )
    targets = [e.node for e in eqs]
    if len(set(targets)) != len(targets):
        raise AssertionError("a boundary/ghost node received more than one equation")
    return eqs


def boundary_matrix(
    g: Grid, bc: BoundaryCondition, field: Field
) -> tuple[sp.csr_matrix, list[BcEquation]]:
    """Assemble the BC rows into an n_total x n_total sparse matrix."""
    eqs = bc_equations(g, bc, field)
    rows = np.concatenate([np.full(e.cols.size, e.node) for e in eqs])
    cols = np.concatenate([e.cols for e in eqs])
    data = np.concatenate([e.coefs for e in eqs])
    mat = sp.csr_matrix((data, (rows, cols)), shape=(g.n_total, g.n_total))
    return mat, eqs


def bc_from_name(name: str, nu: float = 0.3, x_c: float = 0.5, r_c: float = 0.1,
                 eps: float = 0.01) -> BoundaryCondition:
    """Construct a boundary condition from its short name."""
    name = name.lower()
    if name == "supported":
        return Supported()
    if name == "clamped":
        return Clamped()
    if name == "free":
        return Free(nu=nu)
    if name == "cs":
        return ClampedSupported(x_c=x_c, r_c=r_c, eps=eps)
    if name == "cf":
        return ClampedFree(nu=nu, x_c=x_c, r_c=r_c, eps=eps)
    raise ValueError(f"unknown boundary condition name: {name!r}")


ALL_BC_NAMES = ("supported", "clamped", "free", "cs", "cf")
