"""Nonlinear iteration schemes over a shared sparse direct linear solver.

Three methods solve the assembled system: a Picard iteration that alternates
the two biharmonic sub-solves (with a semi-implicit weight delta on the
quadratic displacement term), a full Newton iteration on the coupled system
with the analytic Jacobian, and a Powell dogleg trust-region iteration on the
same residual/Jacobian that stays robust when the Jacobian is singular.

All methods stop when the increment norm |dphi|_inf + |dw|_inf drops below
the tolerance, and report the per-step increments together with the
convergence rate estimated from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .stencils import bracket_linearization, bracket_values
from .system import (
    DiscreteSystem,
    State,
    initial_guess,
    jacobian_augmented,
    pack,
    regularize_free,
    residual_augmented,
    unpack,
)

# machine-epsilon guard used by the rate estimator
_EPS_FLOOR = 100.0 * np.finfo(float).eps
# pivot-ratio checks read back the U factor; skip them for very large systems
_PIVOT_CHECK_MAX = 40_000


class SingularMatrixError(RuntimeError):
    """Raised when a linear system is structurally or numerically singular."""


@dataclass
class SolverConfig:
    """Iteration parameters shared by the three schemes.

    method: "picard" | "newton" | "dogleg".
    delta: degree of implicitness of the Picard displacement solve, in [0, 1].
    trust_radius0/trust_radius_max/accept_ratio: dogleg controls.
    """

    method: str = "newton"
    delta: float = 0.0
    tol: float = 1e-6
    max_iter: int = 100
    trust_radius0: float = 1.0
    trust_radius_max: float = 100.0
    accept_ratio: float = 0.1

    def __post_init__(self):
        if self.method not in ("picard", "newton", "dogleg"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must be in [0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")
        if not 0 < self.trust_radius0 <= self.trust_radius_max:
            raise ValueError("need 0 < trust_radius0 <= trust_radius_max")
        if not 0 < self.accept_ratio < 1:
            raise ValueError("accept_ratio must be in (0, 1)")


@dataclass
class SolveReport:
    method: str
    converged: bool
    steps: int
    increments: list = field(default_factory=list)
    rate: float | None = None
    final_residual: float = math.nan

    def summary(self) -> str:
        rate = "n/a" if self.rate is None else f"{self.rate:.2f}"
        return (
            f"{self.method}: converged={self.converged} steps={self.steps} "
            f"rate={rate} final_residual={self.final_residual:.3e}"
        )


def estimate_rate(increments) -> float | None:
    """Average of ln(inc[k+1]) / ln(inc[k]) over usable consecutive pairs.

    Steps with increments >= 1 or at the roundoff floor are excluded (the
    ratio is undefined or meaningless there).  Returns None with fewer than
    two usable increments.
    """
    inc = np.asarray(list(increments), dtype=float)
    usable = (inc < 1.0) & (inc > _EPS_FLOOR)
    ratios = [
        math.log(inc[k + 1]) / math.log(inc[k])
        for k in range(len(inc) - 1)
        if usable[k] and usable[k + 1]
    ]
    if not ratios:
        return None
    return float(np.mean(ratios))


# --- sparse direct solves ---------------------------------------------------


class Factorization:
    """LU factorization with singularity checks, reusable across solves."""

    def __init__(self, a: sp.spmatrix, node_kind=None):
        self.a = a.tocsc()
        self.node_kind = node_kind
        try:
            self.lu = spla.splu(self.a)
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed: {exc}") from exc
        if self.a.shape[0] <= _PIVOT_CHECK_MAX:
            d = np.abs(self.lu.U.diagonal())
            dmax = d.max() if d.size else 0.0
            if dmax == 0.0 or d.min() <= 1e-12 * dmax:
                raise SingularMatrixError(self._describe_pivot(int(np.argmin(d))))

    def _describe_pivot(self, k: int) -> str:
        msg = f"numerically singular matrix (pivot ratio at factor index {k})"
        if self.node_kind is not None:
            # best-effort map back through the row permutation
            try:
                orig = int(np.nonzero(self.lu.perm_r == k)[0][0])
                msg += f"; suspect row: {self.node_kind(orig)}"
            except Exception:
                pass
        return msg

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("solve produced non-finite values")
        scale = np.abs(self.a).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max()
        resid = np.abs(self.a @ x - b).max()
        if scale > 0 and resid > 1e-8 * scale:
            raise SingularMatrixError(
                f"linear solve residual {resid:.2e} exceeds 1e-8 * scale {scale:.2e}"
            )
        return x


def linear_solve(a: sp.spmatrix, b: np.ndarray, node_kind=None) -> np.ndarray:
    """Direct sparse solve with partial pivoting and a residual check."""
    return Factorization(a, node_kind=node_kind).solve(b)


# --- generic iteration cores -------------------------------------------------


def newton_core(fun, jac, x0, tol, max_iter, inc_norm=None, node_kind=None):
    """Plain Newton iteration on callables; returns (x, converged, increments).

    inc_norm maps a step vector to the scalar monitored against tol (defaults
    to the max norm).
    """
    if inc_norm is None:
        inc_norm = lambda d: float(np.abs(d).max())
    x = np.array(x0, dtype=float)
    increments = []
    for step in range(1, max_iter + 1):
        try:
            dx = linear_solve(jac(x), -fun(x), node_kind=node_kind)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"Newton step {step}: {exc}") from exc
        x += dx
        inc = inc_norm(dx)
        increments.append(inc)
        if inc < tol:
            return x, True, increments
    return x, False, increments


def _dogleg_step(f, jmat, radius):
    """Powell dogleg step for 0.5*|F|^2; falls back to Cauchy on singular J."""
    grad = jmat.T @ f
    gnorm = float(np.linalg.norm(grad))
    if gnorm == 0.0:
        return np.zeros_like(f), 0.0
    jg = jmat @ grad
    t_cauchy = gnorm**2 / float(np.linalg.norm(jg)) ** 2
    p_cauchy = -t_cauchy * grad
    try:
        p_newton = linear_solve(jmat, -f)
    except SingularMatrixError:
        p_newton = None
    if p_newton is not None and np.linalg.norm(p_newton) <= radius:
        p = p_newton
    elif p_newton is None or np.linalg.norm(p_cauchy) >= radius:
        p = (radius / np.linalg.norm(p_cauchy)) * p_cauchy
    else:
        # blend along the dogleg path until it hits the trust boundary
        d = p_newton - p_cauchy
        a = float(d @ d)
        b = 2.0 * float(p_cauchy @ d)
        c = float(p_cauchy @ p_cauchy) - radius**2
        tau = (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
        p = p_cauchy + tau * d
    predicted = -(float(grad @ p) + 0.5 * float(np.linalg.norm(jmat @ p)) ** 2)
    return p, predicted


def dogleg_core(fun, jac, x0, cfg: SolverConfig, inc_norm=None):
    """Trust-region dogleg on callables; returns (x, converged, steps, increments)."""
    if inc_norm is None:
        inc_norm = lambda d: float(np.abs(d).max())
    x = np.array(x0, dtype=float)
    f = fun(x)
    radius = cfg.trust_radius0
    increments = []
    for step in range(1, cfg.max_iter + 1):
        jmat = jac(x)
        p, predicted = _dogleg_step(f, jmat, radius)
        if predicted <= 0.0:
            return x, False, step, increments  # stationary point of the merit
        f_trial = fun(x + p)
        actual = 0.5 * (float(np.linalg.norm(f)) ** 2 - float(np.linalg.norm(f_trial)) ** 2)
        ratio = actual / predicted
        pnorm = float(np.linalg.norm(p))
        if ratio < 0.25:
            radius = pnorm / 4.0
        elif ratio > 0.75 and pnorm >= 0.99 * radius:
            radius = min(2.0 * radius, cfg.trust_radius_max)
        if ratio > cfg.accept_ratio:
            x = x + p
            f = f_trial
            inc = inc_norm(p)
            increments.append(inc)
            if inc < cfg.tol:
                return x, True, step, increments
        if radius < 1e-14:
            return x, False, step, increments
    return x, False, cfg.max_iter, increments


# --- the three schemes on an assembled system --------------------------------


def _field_inc_norm(sys: DiscreteSystem):
    n = sys.n

    def norm(d):
        return float(np.abs(d[:n]).max() + np.abs(d[n: 2 * n]).max())

    return norm


def _final_residual(sys: DiscreteSystem, u: np.ndarray) -> float:
    return float(np.abs(residual_augmented(sys, u)).max())


def picard(sys: DiscreteSystem, x0: State, cfg: SolverConfig) -> tuple[State, SolveReport]:
    """Alternate the stress-function and displacement biharmonic solves.

    Each sub-solve is an n_total system, four times smaller than the coupled
    Jacobian.  The quadratic displacement term is treated semi-implicitly: a
    delta fraction enters the matrix through the bracket linearization at the
    fresh stress function, the rest stays on the right-hand side.
    """
    phi = x0.phi.copy()
    w = x0.w.copy()

    lu_phi = Factorization(sys.a_phi)
    w_matrix_fixed = sys.linear or cfg.delta == 0.0
    lu_w = None
    lu_w_aug = None
    increments: list[float] = []
    converged = False
    steps = 0

    for steps in range(1, cfg.max_iter + 1):
        rhs_phi = bracket_values(sys.ops, sys.w0, w) + sys.f_phi
        if not sys.linear:
            rhs_phi = rhs_phi + 0.5 * bracket_values(sys.ops, w, w)
        phi_new = lu_phi.solve(np.where(sys.phi_mask, -rhs_phi, 0.0))

        rhs_w = bracket_values(sys.ops, sys.w0, phi_new) + sys.f_w
        if not sys.linear:
            rhs_w = rhs_w + (1.0 - cfg.delta) * bracket_values(sys.ops, w, phi_new)
        b = np.where(sys.w_mask, rhs_w, 0.0)

        if w_matrix_fixed:
            a_w = sys.a_w
        else:
            a_w = (
                sys.a_w
                - cfg.delta * (sys.sel_w() @ bracket_linearization(sys.ops, phi_new))
            ).tocsr()

        if sys.q is not None:
            if w_matrix_fixed:
                if lu_w_aug is None:
                    qs = sp.csr_matrix(sys.q)
                    k = sp.bmat([[a_w, qs], [qs.T, None]], format="csr")
                    lu_w_aug = Factorization(k)
                w_new = lu_w_aug.solve(np.concatenate([b, np.zeros(3)]))[: sys.n]
            else:
                w_new = regularize_free(a_w, b, sys.grid).w
        elif w_matrix_fixed:
            if lu_w is None:
                lu_w = Factorization(sys.a_w)
            w_new = lu_w.solve(b)
        else:
            w_new = linear_solve(a_w, b)

        inc = float(np.abs(phi_new - phi).max() + np.abs(w_new - w).max())
        increments.append(inc)
        phi, w = phi_new, w_new
        if inc < cfg.tol:
            converged = True
            break

    state = State.from_fields(sys.grid, phi, w)
    report = SolveReport(
        method="picard",
        converged=converged,
        steps=steps,
        increments=increments,
        rate=estimate_rate(increments),
        final_residual=_final_residual(sys, pack(sys, state)),
    )
    return state, report


def newton(sys: DiscreteSystem, x0: State, cfg: SolverConfig) -> tuple[State, SolveReport]:
    """Full Newton on the coupled system (bordered with Q under free BCs)."""
    node_kind = _system_node_kind(sys)
    u, ok, increments = newton_core(
        lambda v: residual_augmented(sys, v),
        lambda v: jacobian_augmented(sys, v),
        pack(sys, x0),
        cfg.tol,
        cfg.max_iter,
        inc_norm=_field_inc_norm(sys),
        node_kind=node_kind,
    )
    state, _ = unpack(sys, u)
    report = SolveReport(
        method="newton",
        converged=ok,
        steps=len(increments),
        increments=increments,
        rate=estimate_rate(increments),
        final_residual=_final_residual(sys, u),
    )
    return state, report


def dogleg(sys: DiscreteSystem, x0: State, cfg: SolverConfig) -> tuple[State, SolveReport]:
    """Trust-region dogleg on the coupled residual and analytic Jacobian."""
    u, ok, steps, increments = dogleg_core(
        lambda v: residual_augmented(sys, v),
        lambda v: jacobian_augmented(sys, v),
        pack(sys, x0),
        cfg,
        inc_norm=_field_inc_norm(sys),
    )
    state, _ = unpack(sys, u)
    report = SolveReport(
        method="dogleg",
        converged=ok,
        steps=steps,
        increments=increments,
        rate=estimate_rate(increments),
        final_residual=_final_residual(sys, u),
    )
    return state, report


def _system_node_kind(sys: DiscreteSystem):
    from .grid import classify

    classes = classify(sys.grid)
    n = sys.n

    def kind(row: int) -> str:
        if row >= 2 * n:
            return "plane-multiplier row"
        fieldname = "phi" if row < n else "w"
        return f"{fieldname} {classes.kind(row % n)}"

    return kind


def solve(sys: DiscreteSystem, cfg: SolverConfig, x0: State | None = None):
    """Run the configured method from x0 (default: the precast-shape guess)."""
    if x0 is None:
        x0 = initial_guess(sys)
    if cfg.method == "picard":
        return picard(sys, x0, cfg)
    if cfg.method == "newton":
        return newton(sys, x0, cfg)
    return dogleg(sys, x0, cfg)
