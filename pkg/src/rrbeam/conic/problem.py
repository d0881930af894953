"""Canonical semidefinite program: model, evaluation and JSON serialization.

A problem has named PSD matrix blocks, named nonnegative scalars, a linear
objective and a list of constraints. Every linear expression is

    sum_b coef_b * <F_b, X_b> + sum_s a_s * x_s + constant

with ``F_b`` symmetric and stored as an upper-triangle coordinate list, so
``<F, X> = trace(F X)`` counts off-diagonal entries twice. Constraints are
``expr == 0``, ``expr <= 0``, ``expr >= 0`` or an LMI whose upper-triangle
entries are linear expressions.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

FORMAT = "rrbeam-conic/1"


@dataclass(frozen=True, eq=False)
class SymCoo:
    """Symmetric ``n x n`` matrix as upper-triangle (row, col, value) triplets."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.vals, dtype=np.float64).reshape(-1)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size and (np.any(rows > cols) or rows.min() < 0 or cols.max() >= self.n):
            raise ValueError("entries must lie in the upper triangle of an n x n matrix")
        if not np.all(np.isfinite(vals)):
            raise ValueError("matrix entries must be finite")
        for name, arr in (("rows", rows), ("cols", cols), ("vals", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_dense(cls, m) -> "SymCoo":
        a = np.asarray(m, dtype=np.float64)
        n = a.shape[0]
        iu = np.triu_indices(n)
        vals = ((a + a.T) / 2.0)[iu]
        keep = vals != 0.0
        return cls(n, iu[0][keep], iu[1][keep], vals[keep])

    @classmethod
    def entry(cls, n: int, i: int, j: int, value: float = 1.0) -> "SymCoo":
        """Matrix ``E`` with ``<E, X> = value * X[i, j]``."""
        i, j = min(i, j), max(i, j)
        return cls(n, [i], [j], [value if i == j else value / 2.0])

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.vals
        out[self.cols, self.rows] = self.vals
        return out

    @cached_property
    def key(self) -> str:
        h = hashlib.sha1()
        h.update(np.int64(self.n).tobytes())
        for arr in (self.rows, self.cols, self.vals):
            h.update(arr.tobytes())
        return h.hexdigest()

    def to_json(self) -> list:
        return [[int(i), int(j), float(v)] for i, j, v in zip(self.rows, self.cols, self.vals)]


@dataclass(frozen=True, eq=False)
class LinExpr:
    """Affine expression in the problem variables (one matrix term per block)."""

    blocks: dict = field(default_factory=dict)  # name -> (coef, SymCoo)
    scalars: dict = field(default_factory=dict)  # name -> coefficient
    constant: float = 0.0

    def evaluate(self, block_values: dict, scalar_values: dict) -> float:
        total = float(self.constant)
        for name, (coef, mat) in self.blocks.items():
            x = block_values[name]
            off = mat.rows != mat.cols
            total += coef * float(
                np.sum(mat.vals * x[mat.rows, mat.cols]) + np.sum(mat.vals[off] * x[mat.cols[off], mat.rows[off]])
            )
        for name, a in self.scalars.items():
            total += a * float(scalar_values[name])
        return total

    def scale(self) -> float:
        """Largest absolute coefficient (matrix entries times their coefficient)."""
        vals = [abs(c) * float(np.max(np.abs(m.vals), initial=0.0)) for c, m in self.blocks.values()]
        vals += [abs(a) for a in self.scalars.values()]
        return max(vals, default=0.0)


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    kind: str  # "eq", "le" or "ge" (expr OP 0)
    expr: LinExpr
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("eq", "le", "ge"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """``E(x) >= 0`` in the PSD order; ``entries[(i, j)]`` for ``i <= j``, missing entries are 0."""

    size: int
    entries: dict
    name: str = ""

    def __post_init__(self):
        for i, j in self.entries:
            if not 0 <= i <= j < self.size:
                raise ValueError(f"LMI entry ({i}, {j}) outside the upper triangle")

    def evaluate(self, block_values: dict, scalar_values: dict) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for (i, j), expr in self.entries.items():
            out[i, j] = out[j, i] = expr.evaluate(block_values, scalar_values)
        return out


@dataclass(frozen=True, eq=False)
class ConicProblem:
    blocks: tuple  # ((name, dim), ...)
    scalars: tuple  # (name, ...)
    objective: LinExpr
    constraints: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((str(n), int(d)) for n, d in self.blocks))
        object.__setattr__(self, "scalars", tuple(str(s) for s in self.scalars))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        dims = dict(self.blocks)
        if len(dims) != len(self.blocks) or len(set(self.scalars)) != len(self.scalars):
            raise ValueError("duplicate variable names")
        if set(dims) & set(self.scalars):
            raise ValueError("block and scalar names must differ")
        for expr in self.expressions():
            for name, (coef, mat) in expr.blocks.items():
                if name not in dims:
                    raise ValueError(f"undeclared block {name!r}")
                if mat.n != dims[name]:
                    raise ValueError(f"matrix for block {name!r} has dimension {mat.n}, expected {dims[name]}")
                if not np.isfinite(coef):
                    raise ValueError("non-finite coefficient")
            for name, a in expr.scalars.items():
                if name not in self.scalars:
                    raise ValueError(f"undeclared scalar {name!r}")
                if not np.isfinite(a):
                    raise ValueError("non-finite coefficient")
            if not np.isfinite(expr.constant):
                raise ValueError("non-finite constant")

    @property
    def block_dims(self) -> dict:
        return dict(self.blocks)

    def expressions(self):
        yield self.objective
        for con in self.constraints:
            if isinstance(con, LmiConstraint):
                yield from con.entries.values()
            else:
                yield con.expr


# -- serialization -----------------------------------------------------------

def _expr_to_json(expr: LinExpr) -> dict:
    return {
        "blocks": {
            name: {"coef": float(coef), "entries": mat.to_json()}
            for name, (coef, mat) in expr.blocks.items()
        },
        "scalars": {name: float(a) for name, a in expr.scalars.items()},
        "constant": float(expr.constant),
    }


def _expr_from_json(obj: dict, dims: dict, cache: dict) -> LinExpr:
    blocks = {}
    for name, term in obj.get("blocks", {}).items():
        entries = term["entries"]
        raw = json.dumps(entries)
        key = (name, raw)
        mat = cache.get(key)
        if mat is None:
            arr = np.array(entries, dtype=object).reshape(-1, 3)
            mat = SymCoo(
                dims[name],
                np.array(arr[:, 0], dtype=np.int64),
                np.array(arr[:, 1], dtype=np.int64),
                np.array(arr[:, 2], dtype=np.float64),
            )
            cache[key] = mat
        blocks[name] = (float(term["coef"]), mat)
    return LinExpr(blocks, {k: float(v) for k, v in obj.get("scalars", {}).items()}, float(obj.get("constant", 0.0)))


def to_json(problem: ConicProblem, indent=None) -> str:
    cons = []
    for con in problem.constraints:
        if isinstance(con, LmiConstraint):
            cons.append(
                {
                    "name": con.name,
                    "type": "lmi",
                    "size": con.size,
                    "entries": [
                        {"i": i, "j": j, "expr": _expr_to_json(e)} for (i, j), e in con.entries.items()
                    ],
                }
            )
        else:
            cons.append({"name": con.name, "type": con.kind, "expr": _expr_to_json(con.expr)})
    doc = {
        "format": FORMAT,
        "blocks": [{"name": n, "dim": d} for n, d in problem.blocks],
        "scalars": list(problem.scalars),
        "objective": _expr_to_json(problem.objective),
        "constraints": cons,
        "meta": problem.meta,
    }
    return json.dumps(doc, indent=indent, allow_nan=False)


def from_json(text: str) -> ConicProblem:
    doc = json.loads(text)
    if doc.get("format", FORMAT) != FORMAT:
        raise ValueError(f"unsupported format {doc.get('format')!r}")
    dims = {b["name"]: int(b["dim"]) for b in doc["blocks"]}
    cache: dict = {}
    cons = []
    for c in doc["constraints"]:
        if c["type"] == "lmi":
            entries = {
                (int(e["i"]), int(e["j"])): _expr_from_json(e["expr"], dims, cache) for e in c["entries"]
            }
            cons.append(LmiConstraint(int(c["size"]), entries, c.get("name", "")))
        else:
            cons.append(LinearConstraint(c["type"], _expr_from_json(c["expr"], dims, cache), c.get("name", "")))
    return ConicProblem(
        blocks=tuple((b["name"], int(b["dim"])) for b in doc["blocks"]),
        scalars=tuple(doc["scalars"]),
        objective=_expr_from_json(doc["objective"], dims, cache),
        constraints=tuple(cons),
        meta=doc.get("meta", {}),
    )
