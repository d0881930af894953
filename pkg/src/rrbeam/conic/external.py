"""Adapter that hands a :class:`ConicProblem` to cvxpy (optional dependency)."""
from __future__ import annotations

import numpy as np

from .problem import ConicProblem, LinExpr, LmiConstraint

_STATUS = {
    "optimal": "optimal",
    "optimal_inaccurate": "optimal",
    "infeasible": "infeasible",
    "infeasible_inaccurate": "infeasible",
    "unbounded": "unbounded",
    "unbounded_inaccurate": "unbounded",
    "user_limit": "max_iter",
}


def available() -> bool:
    try:
        import cvxpy  # noqa: F401
    except ImportError:
        return False
    return True


def solve_external(problem: ConicProblem, solver: str | None = None):
    """Solve through cvxpy; returns a :class:`ConicSolution` without row multipliers."""
    import cvxpy as cp

    from . import ConicSolution

    X = {name: cp.Variable((n, n), PSD=True) for name, n in problem.blocks}
    x = {name: cp.Variable(nonneg=True) for name in problem.scalars}

    def expr(e: LinExpr):
        terms = [cp.Constant(e.constant)]
        for name, (coef, mat) in e.blocks.items():
            terms.append(coef * cp.sum(cp.multiply(mat.dense(), X[name])))
        for name, a in e.scalars.items():
            terms.append(a * x[name])
        return cp.sum(cp.hstack(terms))

    cons = []
    for c in problem.constraints:
        if isinstance(c, LmiConstraint):
            k = c.size
            mat = 0
            for (i, j), e in c.entries.items():
                basis = np.zeros((k, k))
                basis[i, j] = basis[j, i] = 1.0
                mat = mat + expr(e) * basis
            if isinstance(mat, int):
                mat = cp.Constant(np.zeros((k, k)))
            cons.append(mat >> 0)
        elif c.kind == "eq":
            cons.append(expr(c.expr) == 0)
        elif c.kind == "le":
            cons.append(expr(c.expr) <= 0)
        else:
            cons.append(expr(c.expr) >= 0)

    # external solvers are sensitive to objective scale; minimize a normalized copy
    obj_scale = problem.objective.scale() or 1.0
    prob = cp.Problem(cp.Minimize(expr(problem.objective) / obj_scale), cons)
    if solver is None and "CLARABEL" in cp.installed_solvers():
        solver = "CLARABEL"
    try:
        prob.solve(solver=solver)
        status = _STATUS.get(prob.status, "numerical_error")
    except cp.error.SolverError:
        status = "numerical_error"
    blocks = {
        name: (np.asarray(v.value) if v.value is not None else np.zeros((n, n)))
        for (name, n), v in zip(problem.blocks, X.values())
    }
    scalars = {name: float(v.value) if v.value is not None else 0.0 for name, v in x.items()}
    objective = problem.objective.evaluate(blocks, scalars)
    return ConicSolution(status, blocks, scalars, objective, None, 0, solver="external")
