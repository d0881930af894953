"""Lowering of a :class:`ConicProblem` to the standard primal form

    minimize <C, X> + c^T x   s.t.  A(X) + A_lin x = b,  X PSD blocks, x >= 0.

LMIs become slack PSD blocks tied to their entries by equalities; linear
inequalities get nonnegative slacks. Constraint matrices are deduplicated per
block so the solver applies each distinct matrix once per iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import ConicProblem, LinExpr, LmiConstraint, SymCoo


@dataclass
class BlockGroup:
    """All PSD blocks of one dimension.

    Attributes:
        n: block dimension.
        names: variable names in stacking order (slack blocks get ``#lmi:k``).
        C: objective matrices, (k, n, n).
        F: distinct constraint matrices, (u, n, n).
        owner: block position owning each ``F``, (u,).
        coef: row coefficients of each ``F``, (m, u).
    """

    n: int
    names: list
    C: np.ndarray = None
    F: np.ndarray = None
    owner: np.ndarray = None
    coef: np.ndarray = None


@dataclass
class StandardForm:
    m: int
    b: np.ndarray
    groups: list
    a_lin: np.ndarray  # (m, n_lin)
    c_lin: np.ndarray
    c_const: float
    lin_names: list
    row_names: list
    block_loc: dict = field(default_factory=dict)  # name -> (group, position)
    lin_loc: dict = field(default_factory=dict)  # user scalar name -> column


def _accumulate(row, expr: LinExpr, sign: float, block_terms, lin_terms):
    for name, (coef, mat) in expr.blocks.items():
        if coef != 0.0 and mat.vals.size:
            block_terms.append((row, name, sign * coef, mat))
    for name, a in expr.scalars.items():
        if a != 0.0:
            lin_terms.append((row, name, sign * a))


def lower(problem: ConicProblem) -> StandardForm:
    block_terms: list = []  # (row, block name, coefficient, SymCoo)
    lin_terms: list = []  # (row, scalar name, coefficient)
    b: list = []
    row_names: list = []
    blocks = list(problem.blocks)
    lin_names = list(problem.scalars)

    for k, con in enumerate(problem.constraints):
        label = con.name or f"c{k}"
        if isinstance(con, LmiConstraint):
            slack = f"#lmi:{k}"
            blocks.append((slack, con.size))
            for i in range(con.size):
                for j in range(i, con.size):
                    row = len(b)
                    expr = con.entries.get((i, j))
                    # expr(x) - Z_ij = 0
                    const = 0.0
                    if expr is not None:
                        _accumulate(row, expr, 1.0, block_terms, lin_terms)
                        const = expr.constant
                    block_terms.append((row, slack, -1.0, SymCoo.entry(con.size, i, j)))
                    b.append(-const)
                    row_names.append(f"{label}[{i},{j}]")
        else:
            row = len(b)
            _accumulate(row, con.expr, 1.0, block_terms, lin_terms)
            if con.kind != "eq":
                s = f"#slack:{k}"
                lin_names.append(s)
                lin_terms.append((row, s, 1.0 if con.kind == "le" else -1.0))
            b.append(-con.expr.constant)
            row_names.append(label)

    m = len(b)
    lin_loc = {nm: j for j, nm in enumerate(lin_names)}
    a_lin = np.zeros((m, len(lin_names)))
    for row, name, a in lin_terms:
        a_lin[row, lin_loc[name]] += a
    c_lin = np.zeros(len(lin_names))
    for name, a in problem.objective.scalars.items():
        c_lin[lin_loc[name]] += a

    # group blocks by dimension, keeping declaration order inside a group
    dims = sorted({d for _, d in blocks})
    groups = [BlockGroup(n=d, names=[nm for nm, dd in blocks if dd == d]) for d in dims]
    block_loc = {}
    for gi, g in enumerate(groups):
        for pos, nm in enumerate(g.names):
            block_loc[nm] = (gi, pos)

    per_group_F: list = [[] for _ in groups]
    per_group_owner: list = [[] for _ in groups]
    per_group_entries: list = [[] for _ in groups]  # (row, unique index, coefficient)
    seen: dict = {}
    for row, name, coef, mat in block_terms:
        gi, pos = block_loc[name]
        key = (name, mat.key)
        u = seen.get(key)
        if u is None:
            u = len(per_group_F[gi])
            seen[key] = u
            per_group_F[gi].append(mat.dense())
            per_group_owner[gi].append(pos)
        per_group_entries[gi].append((row, u, coef))

    for gi, g in enumerate(groups):
        k = len(g.names)
        g.C = np.zeros((k, g.n, g.n))
        nu = len(per_group_F[gi])
        g.F = np.array(per_group_F[gi]) if nu else np.zeros((0, g.n, g.n))
        g.owner = np.array(per_group_owner[gi], dtype=np.int64)
        g.coef = np.zeros((m, nu))
        for row, u, coef in per_group_entries[gi]:
            g.coef[row, u] += coef
    for name, (coef, mat) in problem.objective.blocks.items():
        gi, pos = block_loc[name]
        groups[gi].C[pos] += coef * mat.dense()

    return StandardForm(
        m=m,
        b=np.array(b, dtype=np.float64),
        groups=groups,
        a_lin=a_lin,
        c_lin=c_lin,
        c_const=float(problem.objective.constant),
        lin_names=lin_names,
        row_names=row_names,
        block_loc=block_loc,
        lin_loc=lin_loc,
    )
