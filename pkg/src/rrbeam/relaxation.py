"""Taylor linearizations, the affine EFIM map and the convex SDP of one R&R step.

The SDP variables are the real embeddings of the per-BS covariances, scaled
so that typical entries are O(1): ``X_i = real_embed(Sigma_i) / power_scale``.
With that convention ``tr Sigma_i = power_scale * tr(X_i) / 2`` and
``tr(Sigma_i V_i) = power_scale * <real_embed(V_i), X_i> / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matkit
from .conic.problem import ConicProblem, LinearConstraint, LinExpr, LmiConstraint, SymCoo
from .errors import IndefiniteAnchor, SingularMatrix
from .fisher import Efim
from .scenario import (
    Scenario,
    channel_norms_sq,
    estimated_angle,
    geometry_derivatives,
    rate_gamma,
    steering_matrix,
)


@dataclass(frozen=True, eq=False)
class Anchor:
    """Linearization point of one R&R iteration.

    Attributes:
        efim0: surrogate EFIM at the anchor covariances (2x2).
        varpi0: anchor value of the Frobenius auxiliary.
        covariances0: per-BS Hermitian covariances.
        thetas0: per-BS angles (rad) the anchor was built with.
    """

    efim0: np.ndarray
    varpi0: float
    covariances0: tuple = ()
    thetas0: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "efim0", matkit.sym(self.efim0))
        if self.efim0.shape != (2, 2):
            raise ValueError("efim0 must be 2x2")
        if not self.varpi0 >= 0.0:
            raise ValueError("varpi0 must be non-negative")
        object.__setattr__(self, "varpi0", float(self.varpi0))
        object.__setattr__(self, "covariances0", tuple(np.asarray(c, dtype=np.complex128) for c in self.covariances0))
        if self.thetas0 is not None:
            object.__setattr__(self, "thetas0", np.asarray(self.thetas0, dtype=np.float64))


def linearize(anchor: Anchor, delta_J, varpi: float, x) -> tuple[np.ndarray, float, float, float]:
    """First-order models around ``anchor.efim0`` for a perturbation ``delta_J``.

    Returns:
        ``(inv_lin, frob_lin, quad_lin, square_lin)``: models of ``J^-1``,
        ``tr J^-2``, ``x^T J^-1 x`` and ``varpi^2``.

    Raises:
        SingularMatrix: if the anchor EFIM is not positive definite.
    """
    j0_inv = matkit.inv2(anchor.efim0)
    dj = matkit.sym(delta_J)
    x = np.asarray(x, dtype=np.float64)
    step = j0_inv @ dj @ j0_inv
    inv_lin = j0_inv - (step + step.T) / 2.0
    frob_lin = float(np.trace(j0_inv @ j0_inv) - 2.0 * np.trace(j0_inv @ j0_inv @ j0_inv @ dj))
    quad_lin = float(x @ inv_lin @ x)
    v0 = anchor.varpi0
    square_lin = v0 * v0 + 2.0 * v0 * (varpi - v0)
    return inv_lin, frob_lin, quad_lin, square_lin


@dataclass(frozen=True, eq=False)
class AffineEfimMap:
    """``J(Sigma) = constant + sum_i coeffs[i] * tr(Sigma_i V_i)``."""

    constant: np.ndarray
    coeffs: np.ndarray  # (M, 2, 2)
    v_mats: np.ndarray  # (M, N, N) complex
    steering: np.ndarray  # (M, N), v_mats[i] = outer(a_i, a_i^*)

    @property
    def n_bs(self) -> int:
        return self.coeffs.shape[0]

    def traces(self, covariances) -> np.ndarray:
        """``tr(Sigma_i V_i) = a_i^H Sigma_i a_i`` for each BS."""
        return np.array(
            [np.real(np.vdot(a, np.asarray(c) @ a)) for a, c in zip(self.steering, covariances)]
        )

    def evaluate_traces(self, t) -> np.ndarray:
        return self.constant + np.einsum("i,ijk->jk", np.asarray(t, dtype=np.float64), self.coeffs)

    def evaluate(self, covariances) -> np.ndarray:
        return self.evaluate_traces(self.traces(covariances))


def build_affine_map(scenario: Scenario, u_hat, thetas_hat=None) -> AffineEfimMap:
    """Affine surrogate EFIM as a function of the per-BS covariances.

    ``|Lambda_i|^2 = ||g_i||^2 tr(Sigma_i V_i)`` for a line-of-sight channel,
    so each coefficient carries the channel norm at ``u_hat``.

    Raises:
        DegenerateGeometry: if ``u_hat`` coincides with a BS.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if thetas_hat is None:
        thetas_hat = [estimated_angle(u_hat, p) for p in scenario.bs_positions]
    norms = channel_norms_sq(scenario, u_hat)
    alphas = np.array([geometry_derivatives(u_hat, p, scenario.light_speed)[0] for p in scenario.bs_positions])
    xi = scenario.xi
    coeffs = xi * norms[:, None, None] * np.einsum("ij,ik->ijk", alphas, alphas)
    v = norms @ alphas
    constant = -((xi * scenario.clock_bias_std) ** 2) * np.outer(v, v)
    a = steering_matrix(scenario, thetas_hat)
    v_mats = np.einsum("ij,ik->ijk", a, a.conj())
    return AffineEfimMap(constant, coeffs, v_mats, a)


def tight_varpi(efim0, x) -> float:
    """``sqrt(||J^-1||_F^2 + 2 x^T J^-1 x)``, the smallest feasible Frobenius auxiliary."""
    s = matkit.inv2(efim0)
    x = np.asarray(x, dtype=np.float64)
    return math.sqrt(float(np.sum(s * s)) + 2.0 * float(x @ s @ x))


def block_name(i: int) -> str:
    return f"Sigma_{i}"


FORMULATIONS = ("taylor", "convex")


def _y_entry(i: int, j: int, weight: float = 1.0) -> LinExpr:
    return LinExpr({"Y": (weight, SymCoo.entry(2, i, j))})


def assemble_sdp(
    scenario: Scenario,
    anchor: Anchor,
    u_hat,
    serving_index: int,
    amap: AffineEfimMap,
    power_scale: float | None = None,
    include_rate_constraint: bool = True,
    formulation: str = "taylor",
) -> ConicProblem:
    """Convex program of one R&R iteration.

    Minimizes total transmit power over the lifted covariances subject to the
    restricted rate constraint, with ``tr J^-1`` kept exact through the
    Schur-complement epigraph ``[[Y, I], [I, J]] >= 0``.

    ``formulation`` selects how the Frobenius/quadratic and largest-eigenvalue
    constraints are convexified:

    * ``"taylor"``: ``tr J^-2``, ``x^T J^-1 x`` and ``J^-1`` replaced by their
      first-order models at the anchor, ``varpi^2`` by its tangent.
    * ``"convex"``: ``||Y||_F^2 <= z``, ``x^T J^-1 x <= q`` and ``Y <= varrho I``
      as exact LMIs; only ``varpi^2`` is replaced by its tangent. Every feasible
      point then satisfies the exact restricted constraint.

    Raises:
        IndefiniteAnchor: if the anchor EFIM is not positive definite.
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    if not Efim(anchor.efim0).is_pd():
        raise IndefiniteAnchor("anchor EFIM is not positive definite")
    try:
        j0_inv = matkit.inv2(anchor.efim0)
    except SingularMatrix as exc:  # pragma: no cover - covered by is_pd above
        raise IndefiniteAnchor(str(exc)) from exc

    m = amap.n_bs
    n = scenario.n_antennas
    u_hat = np.asarray(u_hat, dtype=np.float64)
    p = scenario.bs_positions[serving_index]
    x = u_hat - p
    d2 = float(x @ x)
    gamma = rate_gamma(scenario, scenario.channel_gains[serving_index])
    zeta = -math.log(scenario.outage_prob)
    if power_scale is None:
        power_scale = max(d2, 1.0) / gamma
    half = power_scale / 2.0
    v0 = anchor.varpi0
    convex = formulation == "convex"

    names = tuple(block_name(i) for i in range(m))
    v_coo = [SymCoo.from_dense(matkit.real_embed(v)) for v in amap.v_mats]
    eye_coo = SymCoo.from_dense(np.eye(2 * n))

    def traced(weights) -> dict:
        # sum_i weights[i] * tr(Sigma_i V_i) as block terms
        return {names[i]: (half * float(weights[i]), v_coo[i]) for i in range(m) if weights[i] != 0.0}

    def j_entry(a: int, b: int) -> LinExpr:
        return LinExpr(traced(amap.coeffs[:, a, b]), constant=float(amap.constant[a, b]))

    objective = LinExpr({nm: (half, eye_coo) for nm in names})
    constraints = []
    use_y = include_rate_constraint or convex

    if include_rate_constraint:
        # tr Y + sqrt(2 zeta) varpi + zeta varrho - gamma tr(Sigma_s V_s) + ||x||^2 <= 0
        w = np.zeros(m)
        w[serving_index] = -gamma
        terms = traced(w)
        terms["Y"] = (1.0, SymCoo.from_dense(np.eye(2)))
        constraints.append(
            LinearConstraint(
                "le",
                LinExpr(terms, {"varpi": math.sqrt(2.0 * zeta), "varrho": zeta}, d2),
                "rate_restricted",
            )
        )
    if use_y:
        # [[Y, I], [I, J(Sigma)]] >= 0, i.e. Y >= J^-1
        entries = {(0, 0): _y_entry(0, 0), (0, 1): _y_entry(0, 1), (1, 1): _y_entry(1, 1)}
        entries[(0, 2)] = LinExpr(constant=1.0)
        entries[(1, 3)] = LinExpr(constant=1.0)
        for a in range(2):
            for b in range(a, 2):
                entries[(2 + a, 2 + b)] = j_entry(a, b)
        constraints.append(LmiConstraint(4, entries, "trace_inverse_epigraph"))

    scalars = ("varpi", "varrho")
    if convex:
        scalars += ("frob", "quad")
        # frob >= Y00^2 + 2 Y01^2 + Y11^2 >= ||J^-1||_F^2
        entries = {
            (0, 0): LinExpr(scalars={"frob": 1.0}),
            (0, 1): _y_entry(0, 0),
            (0, 2): _y_entry(0, 1, math.sqrt(2.0)),
            (0, 3): _y_entry(1, 1),
        }
        for k in range(1, 4):
            entries[(k, k)] = LinExpr(constant=1.0)
        constraints.append(LmiConstraint(4, entries, "frobenius_epigraph"))
        # quad >= x^T J^-1 x
        entries = {(a, b): j_entry(a, b) for a in range(2) for b in range(a, 2)}
        entries[(0, 2)] = LinExpr(constant=float(x[0]))
        entries[(1, 2)] = LinExpr(constant=float(x[1]))
        entries[(2, 2)] = LinExpr(scalars={"quad": 1.0})
        constraints.append(LmiConstraint(3, entries, "quadratic_epigraph"))
        # frob + 2 quad <= varpi0^2 + 2 varpi0 (varpi - varpi0)
        constraints.append(
            LinearConstraint(
                "le",
                LinExpr(scalars={"frob": 1.0, "quad": 2.0, "varpi": -2.0 * v0}, constant=v0 * v0),
                "frobenius_tangent",
            )
        )
        # varrho I - Y >= 0
        entries = {
            (0, 0): LinExpr({"Y": (-1.0, SymCoo.entry(2, 0, 0))}, {"varrho": 1.0}),
            (0, 1): _y_entry(0, 1, -1.0),
            (1, 1): LinExpr({"Y": (-1.0, SymCoo.entry(2, 1, 1))}, {"varrho": 1.0}),
        }
        constraints.append(LmiConstraint(2, entries, "lambda_max_epigraph"))
    else:
        # linearized ||J^-1||_F^2 + 2 x^T J^-1 x <= varpi0^2 + 2 varpi0 (varpi - varpi0)
        jx = j0_inv @ x
        grad = -2.0 * (j0_inv @ j0_inv @ j0_inv) - 2.0 * np.outer(jx, jx)
        grad = (grad + grad.T) / 2.0
        const = (
            float(np.trace(j0_inv @ j0_inv))
            + 2.0 * float(x @ jx)
            + float(np.sum(grad * (amap.constant - anchor.efim0)))
            + v0 * v0
        )
        frob_w = np.einsum("ab,iab->i", grad, amap.coeffs)
        constraints.append(
            LinearConstraint("le", LinExpr(traced(frob_w), {"varpi": -2.0 * v0}, const), "frobenius_linearized")
        )
        # varrho I - 2 J0^-1 + J0^-1 J(Sigma) J0^-1 >= 0
        k0 = j0_inv @ amap.constant @ j0_inv
        ki = np.einsum("ab,ibc,cd->iad", j0_inv, amap.coeffs, j0_inv)
        entries = {}
        for a in range(2):
            for b in range(a, 2):
                c = float(k0[a, b] - 2.0 * j0_inv[a, b])
                entries[(a, b)] = LinExpr(traced(ki[:, a, b]), {"varrho": 1.0} if a == b else {}, c)
        constraints.append(LmiConstraint(2, entries, "lambda_max_linearized"))

    blocks = tuple((nm, 2 * n) for nm in names)
    if use_y:
        blocks += (("Y", 2),)
    return ConicProblem(
        blocks=blocks,
        scalars=scalars,
        objective=objective,
        constraints=tuple(constraints),
        meta={
            "power_scale": float(power_scale),
            "serving_index": int(serving_index),
            "n_bs": int(m),
            "n_antennas": int(n),
            "formulation": formulation,
        },
    )


def covariances_from_blocks(problem: ConicProblem, block_values: dict) -> list[np.ndarray]:
    """Hermitian covariances ``Sigma_i`` from solved embedded blocks."""
    scale = problem.meta["power_scale"]
    return [
        scale * matkit.real_unembed(block_values[block_name(i)]) for i in range(problem.meta["n_bs"])
    ]


def surrogate_at(scenario: Scenario, covariances, u_hat, amap: AffineEfimMap | None = None) -> Efim:
    """Surrogate EFIM at covariances (through the affine map)."""
    if amap is None:
        amap = build_affine_map(scenario, u_hat)
    return Efim(amap.evaluate(covariances))

