"""Assembly of the discrete coupled problem and its linearization.

PDE rows carry the coupled equations

    biharm(phi) + 1/2 bracket(w, w) + bracket(w0, w) + f_phi = 0
    biharm(w)   -     bracket(w, phi) - bracket(w0, phi) - f_w = 0

(the linear reduction drops the two terms quadratic in the unknowns).  The
stress function is Dirichlet-pinned by every BC family, so its PDE rows live
at interior nodes only; the displacement PDE rows additionally cover the
boundary nodes of free-type edges, whose ghost layers are closed by the two
derivative conditions.  All remaining rows are boundary-condition equations.

With free boundary conditions the displacement block is singular - the
solution is determined only up to a plane c1*x + c2*y + c3 - and every
linear solve involving it is bordered with the plane basis Q = [x, y, 1],
which pins the span(Q) component of w to zero while Lagrange multipliers
absorb any incompatibility of the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import stencils
from .boundary import (
    BoundaryCondition,
    Free,
    boundary_matrix,
    pde_boundary_nodes,
    validate_bc,
)
from .grid import Grid, sample
from .stencils import OperatorSet, bracket_linearization, bracket_values


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous problem data: precast shape, forcings, BCs, linearity."""

    w0: Callable
    f_phi: Callable
    f_w: Callable
    bc: BoundaryCondition
    linear: bool = False


@dataclass
class State:
    """Stacked solution vector [phi; w] over one grid."""

    grid: Grid
    stacked: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.stacked[: self.grid.n_total]

    @property
    def w(self) -> np.ndarray:
        return self.stacked[self.grid.n_total:]

    @classmethod
    def from_fields(cls, grid: Grid, phi: np.ndarray, w: np.ndarray) -> "State":
        return cls(grid, np.concatenate([phi, w]))

    @classmethod
    def zeros(cls, grid: Grid) -> "State":
        return cls(grid, np.zeros(2 * grid.n_total))

    def copy(self) -> "State":
        return State(self.grid, self.stacked.copy())


def plane_basis(grid: Grid) -> np.ndarray:
    """Null-space basis Q = [x, y, 1] of the free displacement block."""
    x, y = grid.coords()
    return np.column_stack([x, y, np.ones_like(x)])


@dataclass
class DiscreteSystem:
    """Assembled residual/Jacobian data for one problem on one grid."""

    grid: Grid
    ops: OperatorSet
    bc: BoundaryCondition
    linear: bool
    phi_mask: np.ndarray  # rows carrying the stress-function PDE
    w_mask: np.ndarray  # rows carrying the displacement PDE
    b_phi: sp.csr_matrix
    b_w: sp.csr_matrix
    a_phi: sp.csr_matrix  # masked biharmonic rows + phi BC rows
    a_w: sp.csr_matrix
    w0: np.ndarray
    f_phi: np.ndarray
    f_w: np.ndarray
    ml_w0_phi: sp.csr_matrix  # phi-row-masked bracket linearization at w0
    ml_w0_w: sp.csr_matrix
    q: Optional[np.ndarray]  # plane basis, present only for free BCs

    @property
    def n(self) -> int:
        return self.grid.n_total

    @property
    def n_aug(self) -> int:
        """Number of Lagrange multipliers appended to the state."""
        return 3 if self.q is not None else 0

    def sel_phi(self) -> sp.dia_matrix:
        return sp.diags(self.phi_mask.astype(float))

    def sel_w(self) -> sp.dia_matrix:
        return sp.diags(self.w_mask.astype(float))


def assemble(p: ProblemSpec, grid: Grid) -> DiscreteSystem:
    """Discretize a ProblemSpec on a grid."""
    validate_bc(p.bc, grid)
    ops = stencils.build_operator_set(grid)

    phi_mask = grid.interior_mask()
    w_mask = phi_mask.copy()
    w_mask[pde_boundary_nodes(grid, p.bc, "w")] = True

    b_phi, _ = boundary_matrix(grid, p.bc, "phi")
    b_w, _ = boundary_matrix(grid, p.bc, "w")
    sel_phi = sp.diags(phi_mask.astype(float))
    sel_w = sp.diags(w_mask.astype(float))

    w0 = sample(p.w0, grid).values
    f_phi = sample(p.f_phi, grid).values
    f_w = sample(p.f_w, grid).values

    ml_w0 = bracket_linearization(ops, w0)
    q = plane_basis(grid) if isinstance(p.bc, Free) else None

    return DiscreteSystem(
        grid=grid,
        ops=ops,
        bc=p.bc,
        linear=p.linear,
        phi_mask=phi_mask,
        w_mask=w_mask,
        b_phi=b_phi,
        b_w=b_w,
        a_phi=(sel_phi @ ops.biharm + b_phi).tocsr(),
        a_w=(sel_w @ ops.biharm + b_w).tocsr(),
        w0=w0,
        f_phi=f_phi,
        f_w=f_w,
        ml_w0_phi=(sel_phi @ ml_w0).tocsr(),
        ml_w0_w=(sel_w @ ml_w0).tocsr(),
        q=q,
    )


def residual(sys: DiscreteSystem, state: State) -> np.ndarray:
    """Stacked residual [F_phi; F_w] of length 2*n_total."""
    phi, w = state.phi, state.w
    ops = sys.ops

    r_phi = sys.a_phi @ phi
    r_w = sys.a_w @ w
    coupl_phi = bracket_values(ops, sys.w0, w) + sys.f_phi
    coupl_w = bracket_values(ops, sys.w0, phi) + sys.f_w
    if not sys.linear:
        coupl_phi = coupl_phi + 0.5 * bracket_values(ops, w, w)
        coupl_w = coupl_w + bracket_values(ops, w, phi)
    r_phi[sys.phi_mask] += coupl_phi[sys.phi_mask]
    r_w[sys.w_mask] -= coupl_w[sys.w_mask]
    return np.concatenate([r_phi, r_w])


def jacobian(sys: DiscreteSystem, state: State) -> sp.csr_matrix:
    """Analytic Jacobian of the stacked residual; constant for linear problems."""
    if sys.linear:
        m12 = sys.ml_w0_phi
        m21 = -sys.ml_w0_w
        m22 = sys.a_w
    else:
        ml_w = bracket_linearization(sys.ops, state.w)
        m12 = sys.sel_phi() @ ml_w + sys.ml_w0_phi
        m21 = -(sys.sel_w() @ ml_w) - sys.ml_w0_w
        m22 = sys.a_w - sys.sel_w() @ bracket_linearization(sys.ops, state.phi)
    return sp.bmat([[sys.a_phi, m12], [m21, m22]], format="csr")


# --- free-BC bordering ------------------------------------------------------


def pack(sys: DiscreteSystem, state: State, mult: np.ndarray | None = None) -> np.ndarray:
    """Stack state (and multipliers for free BCs) into one unknown vector."""
    if sys.n_aug == 0:
        return state.stacked.copy()
    if mult is None:
        mult = np.zeros(3)
    return np.concatenate([state.stacked, mult])


def unpack(sys: DiscreteSystem, u: np.ndarray) -> tuple[State, np.ndarray]:
    """Inverse of pack; the multiplier part is empty when not augmented."""
    n2 = 2 * sys.n
    return State(sys.grid, u[:n2].copy()), u[n2:].copy()


def residual_augmented(sys: DiscreteSystem, u: np.ndarray) -> np.ndarray:
    """Residual of the (possibly Q-bordered) system in the packed unknowns."""
    state, mult = unpack(sys, u)
    r = residual(sys, state)
    if sys.n_aug == 0:
        return r
    r[sys.n:] += sys.q @ mult
    return np.concatenate([r, sys.q.T @ state.w])


def jacobian_augmented(sys: DiscreteSystem, u: np.ndarray) -> sp.csr_matrix:
    state, _ = unpack(sys, u)
    jac = jacobian(sys, state)
    if sys.n_aug == 0:
        return jac
    qs = sp.csr_matrix(sys.q)
    zero_col = sp.csr_matrix((sys.n, 3))
    border_col = sp.vstack([zero_col, qs])
    border_row = sp.hstack([zero_col.T, qs.T])
    return sp.bmat([[jac, border_col], [border_row, None]], format="csr")


@dataclass(frozen=True)
class AugmentedSolution:
    """Solution of a Q-bordered linear system: field plus multipliers."""

    w: np.ndarray
    multipliers: np.ndarray


def regularize_free(a: sp.spmatrix, b: np.ndarray, grid: Grid) -> AugmentedSolution:
    """Solve the singular free-BC system through its saddle-point bordering.

    Returns the unique solution with zero mean values of x*w, y*w and w; the
    multipliers absorb any incompatible component of b.
    """
    from .solvers import SingularMatrixError, linear_solve

    q = plane_basis(grid)
    k = sp.bmat([[a, sp.csr_matrix(q)], [sp.csr_matrix(q.T), None]], format="csr")
    rhs = np.concatenate([b, np.zeros(3)])
    try:
        sol = linear_solve(k, rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            "augmented free-BC system is singular; boundary assembly is "
            f"inconsistent ({exc})"
        ) from exc
    return AugmentedSolution(sol[: a.shape[0]], sol[a.shape[0]:])


def solve_field(
    sys: DiscreteSystem, field: str, rhs_values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Solve one biharmonic sub-problem: PDE rows = rhs, BC rows = 0.

    Returns (solution, multipliers); multipliers are empty unless the w field
    carries free BCs.
    """
    from .solvers import linear_solve

    if field == "phi":
        a, mask = sys.a_phi, sys.phi_mask
    else:
        a, mask = sys.a_w, sys.w_mask
    b = np.where(mask, rhs_values, 0.0)
    if field == "w" and sys.q is not None:
        aug = regularize_free(a, b, sys.grid)
        return aug.w, aug.multipliers
    return linear_solve(a, b), np.zeros(0)


def initial_guess(sys: DiscreteSystem) -> State:
    """Precast shape for w, and the matching stress-function solve for phi."""
    w0 = sys.w0
    rhs = -(bracket_values(sys.ops, sys.w0, w0) + sys.f_phi)
    if not sys.linear:
        rhs = rhs - 0.5 * bracket_values(sys.ops, w0, w0)
    phi0, _ = solve_field(sys, "phi", rhs)
    return State.from_fields(sys.grid, phi0, w0.copy())


def solve_biharmonic(
    grid: Grid, bc: BoundaryCondition, f: Callable, field: str = "w"
) -> tuple[np.ndarray, np.ndarray]:
    """Solve biharm(u) = f with the given BCs on one field.

    Convenience wrapper used for single-field verification problems; returns
    (solution, multipliers).
    """
    zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    p = ProblemSpec(w0=zero, f_phi=zero, f_w=zero, bc=bc, linear=True)
    sys = assemble(p, grid)
    rhs = sample(f, grid).values
    return solve_field(sys, field, rhs)
