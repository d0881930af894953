"""Semidefinite programs: canonical model, embedded interior-point solver, KKT audit.

Typical use::

    from rrbeam import conic
    sol = conic.solve(problem)
    report = conic.check_kkt(problem, sol)
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .ipm import hsd_solve
from .problem import (
    ConicProblem,
    LinearConstraint,
    LinExpr,
    LmiConstraint,
    SymCoo,
    from_json,
    to_json,
)
from .standard import lower

GAP_TOL = 1e-7
FEAS_TOL = 1e-8
MAX_ITER = 200

# acceptance bounds of check_kkt
PRIMAL_RES_BOUND = 1e-7
DUAL_RES_BOUND = 1e-7
GAP_BOUND = 1e-6
MIN_EIG_BOUND = -1e-8

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "numerical_error")


@dataclass
class ConicSolution:
    """Solver output in terms of the user variables.

    ``y`` holds multipliers of the lowered equality rows (embedded solver only).
    For ``infeasible``/``unbounded`` the values are the last iterate.
    """

    status: str
    blocks: dict
    scalars: dict
    objective: float
    dual_objective: float | None
    iterations: int
    kkt: dict = field(default_factory=dict)
    y: np.ndarray | None = None
    solver: str = "embedded"


@dataclass
class KktReport:
    primal_residual: float
    dual_residual: float | None
    gap: float | None
    min_eigenvalue: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def _min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(a)[0]) if a.size else 0.0


def _primal_residual(problem: ConicProblem, blocks: dict, scalars: dict) -> float:
    worst = 0.0
    for con in problem.constraints:
        if isinstance(con, LmiConstraint):
            e = con.evaluate(blocks, scalars)
            scale = 1.0 + max((ex.scale() + abs(ex.constant) for ex in con.entries.values()), default=0.0)
            worst = max(worst, max(0.0, -_min_eig(e)) / scale)
        else:
            val = con.expr.evaluate(blocks, scalars)
            viol = abs(val) if con.kind == "eq" else max(0.0, val if con.kind == "le" else -val)
            worst = max(worst, viol / (1.0 + con.expr.scale() + abs(con.expr.constant)))
    for v in scalars.values():
        worst = max(worst, max(0.0, -float(v)))
    return worst


def _dual_side(problem: ConicProblem, y: np.ndarray) -> tuple[float, float]:
    """Dual residual (cone violation of C - A^T y, relative to 1 + max|C|) and b^T y + const."""
    sf = lower(problem)
    worst = 0.0
    cnorm = 1.0 + max(
        [float(np.max(np.abs(g.C), initial=0.0)) for g in sf.groups]
        + [float(np.max(np.abs(sf.c_lin), initial=0.0))]
    )
    for g in sf.groups:
        S = g.C.copy()
        if g.F.shape[0]:
            np.add.at(S, g.owner, -(g.coef.T @ y)[:, None, None] * g.F)
        for Sb in S:
            worst = max(worst, max(0.0, -_min_eig(0.5 * (Sb + Sb.T))) / cnorm)
    s_lin = sf.c_lin - sf.a_lin.T @ y
    if s_lin.size:
        worst = max(worst, float(np.max(np.maximum(0.0, -s_lin))) / cnorm)
    return worst, float(sf.b @ y) + sf.c_const


def check_kkt(problem: ConicProblem, solution: ConicSolution) -> KktReport:
    """Recompute feasibility, dual feasibility and the duality gap from scratch.

    Residuals are relative to ``1 + ||row data||`` per constraint; the gap is
    ``|primal - dual| / (1 + |primal|)``.
    """
    blocks, scalars = solution.blocks, solution.scalars
    violations = []
    if solution.status != "optimal":
        violations.append(f"status {solution.status}")
    pres = _primal_residual(problem, blocks, scalars)
    if pres > PRIMAL_RES_BOUND:
        violations.append(f"primal residual {pres:.3e}")
    min_eig = min((_min_eig(blocks[name]) for name, _ in problem.blocks), default=0.0)
    if min_eig < MIN_EIG_BOUND:
        violations.append(f"PSD block min eigenvalue {min_eig:.3e}")
    primal_obj = problem.objective.evaluate(blocks, scalars)
    dres = gap = None
    if solution.y is not None:
        dres, dual_obj = _dual_side(problem, solution.y)
        gap = abs(primal_obj - dual_obj) / (1.0 + abs(primal_obj))
        if dres > DUAL_RES_BOUND:
            violations.append(f"dual residual {dres:.3e}")
    elif solution.dual_objective is not None:
        gap = abs(primal_obj - solution.dual_objective) / (1.0 + abs(primal_obj))
    if gap is not None and gap > GAP_BOUND:
        violations.append(f"duality gap {gap:.3e}")
    if abs(primal_obj - solution.objective) > GAP_BOUND * (1.0 + abs(primal_obj)):
        violations.append("reported objective does not match the primal values")
    return KktReport(pres, dres, gap, min_eig, violations)


def solve(
    problem: ConicProblem,
    tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    feastol: float = FEAS_TOL,
    solver: str = "embedded",
) -> ConicSolution:
    """Solve ``problem``; never raises on solver trouble, reports it in ``status``.

    An embedded run that stops on ``max_iter`` or ``numerical_error`` is still
    reported ``optimal`` when its last iterate passes :func:`check_kkt`.

    Args:
        tol: relative duality-gap tolerance.
        solver: ``"embedded"`` (default) or ``"external"`` (cvxpy adapter).
    """
    if solver == "external":
        from .external import solve_external

        sol = solve_external(problem)
    elif solver == "embedded":
        sf = lower(problem)
        res = hsd_solve(sf, gaptol=tol, feastol=feastol, max_iter=max_iter)
        blocks = {}
        for name, _ in problem.blocks:
            gi, pos = sf.block_loc[name]
            blocks[name] = res.X[gi][pos].copy()
        scalars = {name: float(res.x[sf.lin_loc[name]]) for name in problem.scalars}
        objective = problem.objective.evaluate(blocks, scalars)
        dual_obj = float(sf.b @ res.y) + sf.c_const if np.all(np.isfinite(res.y)) else None
        sol = ConicSolution(res.status, blocks, scalars, objective, dual_obj, res.iterations, y=res.y)
        finite = all(np.all(np.isfinite(v)) for v in blocks.values()) and np.all(np.isfinite(res.x))
        if res.status in ("max_iter", "numerical_error") and dual_obj is not None and finite:
            # stalled just short of the internal targets: keep the iterate if it passes the audit
            trial = dataclasses.replace(sol, status="optimal")
            if check_kkt(problem, trial).ok:
                sol = trial
    else:
        raise ValueError(f"unknown solver {solver!r}")
    rep = check_kkt(problem, sol) if sol.status == "optimal" else None
    if rep is not None:
        sol.kkt = {"primal_residual": rep.primal_residual, "dual_residual": rep.dual_residual, "gap": rep.gap}
    return sol


__all__ = [
    "ConicProblem",
    "ConicSolution",
    "KktReport",
    "LinExpr",
    "LinearConstraint",
    "LmiConstraint",
    "SymCoo",
    "check_kkt",
    "from_json",
    "solve",
    "to_json",
]
