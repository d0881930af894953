"""Restriction-and-relaxation loop: anchor, solve, re-anchor, extract, rescale."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conic, fisher, matkit, relaxation, restriction
from .errors import NotFeasibleAfterRescale, SingularMatrix, SolverFailure
from .fisher import Efim
from .relaxation import AffineEfimMap, Anchor
from .scenario import BeamformerSet, Scenario, estimated_angle, rate_gamma, true_angles

POWER_CAP = 2.0**60


@dataclass(frozen=True)
class RrConfig:
    """Settings of one R&R run.

    Attributes:
        epsilon: stop when the total power changes by at most this much (W).
        rel_epsilon: ... or by at most this fraction of the previous total.
        delta_inc: amplitude step of the final rescaling, beams *= 1 + delta_inc.
        formulation: ``"convex"`` or ``"taylor"``, see :func:`relaxation.assemble_sdp`.
        solver: ``"embedded"`` or ``"external"``.
    """

    epsilon: float = 1e-4
    rel_epsilon: float = 1e-7
    delta_inc: float = 0.1
    max_iterations: int = 50
    max_rescales: int = 200
    rank_one_ratio_tol: float = 1e-6
    formulation: str = "convex"
    solver: str = "embedded"
    solver_tol: float = 1e-7

    def __post_init__(self):
        if self.epsilon < 0.0 or self.rel_epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not self.delta_inc > 0.0:
            raise ValueError("delta_inc must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_rescales < 0:
            raise ValueError("max_rescales must be >= 0")
        if self.formulation not in relaxation.FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")


@dataclass
class RrReport:
    iterations: int
    objective_history: list
    final_covariances: list
    beamformers: BeamformerSet | None
    rank_one_exact: list
    rescale_count: int
    feasible: bool
    converged: bool = False
    message: str = ""
    varpi_history: list = field(default_factory=list)


def _as_generator(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def draw_estimate(scenario: Scenario, anchor_efim, rng_seed, e_p=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``u_hat = u + J0^{-1/2} e`` and the per-BS angles seen from ``u_hat``.

    Args:
        rng_seed: seed, ``SeedSequence`` or ``Generator``.
        e_p: optional forced standard-normal draw (2,).

    Raises:
        SingularMatrix: if the anchor EFIM is not positive definite.
    """
    m = anchor_efim.matrix if isinstance(anchor_efim, Efim) else anchor_efim
    root = matkit.spd_inv_sqrt(m)
    if e_p is None:
        e_p = _as_generator(rng_seed).standard_normal(2)
    u_hat = scenario.user_position + root @ np.asarray(e_p, dtype=np.float64)
    thetas = np.array([estimated_angle(u_hat, p) for p in scenario.bs_positions])
    return u_hat, thetas


def _anchor_margin(scenario: Scenario, amap: AffineEfimMap, covs, position, serving: int) -> float:
    efim = Efim(amap.evaluate(covs))
    if not efim.is_pd():
        return -math.inf
    dc = restriction.restrict(
        position,
        scenario.bs_positions[serving],
        efim,
        rate_gamma(scenario, scenario.channel_gains[serving]),
        float(amap.traces(covs)[serving]),
        scenario.outage_prob,
    )
    return restriction.margin(dc)


def isotropic_anchor(
    scenario: Scenario,
    position,
    serving: int,
    amap: AffineEfimMap | None = None,
    start_power: float = 1.0,
    thetas0=None,
) -> tuple[Anchor, float]:
    """Anchor ``Sigma_i = (P/N) I`` with ``P`` doubled until the restricted constraint holds.

    Returns:
        The anchor (with tight ``varpi0``) and the per-BS power ``P``.

    Raises:
        NotFeasibleAfterRescale: if no power up to 2^60 W works.
    """
    position = np.asarray(position, dtype=np.float64)
    if amap is None:
        amap = relaxation.build_affine_map(scenario, position)
    n = scenario.n_antennas
    power = float(start_power)
    while power <= POWER_CAP:
        covs = [power / n * np.eye(n, dtype=np.complex128) for _ in range(scenario.n_bs)]
        if _anchor_margin(scenario, amap, covs, position, serving) >= 0.0:
            j0 = amap.evaluate(covs)
            x = position - scenario.bs_positions[serving]
            th = true_angles(scenario) if thetas0 is None else thetas0
            return Anchor(j0, relaxation.tight_varpi(j0, x), tuple(covs), th), power
        power *= 2.0
    raise NotFeasibleAfterRescale("no isotropic anchor meets the restricted constraint below the power cap")


def extract_beamformer(cov, tol: float = 1e-6) -> tuple[np.ndarray, bool]:
    """Dominant-eigenvector beam ``sqrt(lambda_1) v_1`` of a covariance.

    The first entry of ``w`` with non-negligible magnitude is made real and
    non-negative. ``rank_one_exact`` is ``lambda_2 / lambda_1 <= tol``.
    """
    cov = np.asarray(cov, dtype=np.complex128)
    n = cov.shape[0]
    spec = matkit.eig_sym(cov)
    lam = spec.eigenvalues
    if not lam[0] > 0.0:
        return np.zeros(n, dtype=np.complex128), True
    w = math.sqrt(lam[0]) * spec.eigenvectors[:, 0].astype(np.complex128)
    mag = np.abs(w)
    k = int(np.argmax(mag > 1e-12 * mag.max()))
    w = w * (np.conj(w[k]) / mag[k])
    w[k] = mag[k]
    ratio = lam[1] / lam[0] if n > 1 else 0.0
    return w, bool(ratio <= tol)


def is_feasible(beams: BeamformerSet, scenario: Scenario, u_hat) -> bool:
    """Exact restricted constraint at the surrogate EFIM of concrete beams."""
    try:
        dc = restriction.constraint_for_beams(scenario, beams.vectors, u_hat, beams.serving_index)
    except SingularMatrix:
        return False
    return restriction.feasible(dc)[0]


def rescale_until_feasible(
    beams: BeamformerSet, scenario: Scenario, u_hat, config: RrConfig, return_count: bool = False
):
    """Multiply all beams by ``1 + delta_inc`` until the exact restriction holds.

    Raises:
        NotFeasibleAfterRescale: after ``config.max_rescales`` unsuccessful steps.
    """
    count = 0
    while not is_feasible(beams, scenario, u_hat):
        if count >= config.max_rescales:
            raise NotFeasibleAfterRescale(f"still infeasible after {count} rescales")
        beams = beams.scaled(1.0 + config.delta_inc)
        count += 1
    return (beams, count) if return_count else beams


def run(
    scenario: Scenario,
    config: RrConfig,
    init: Anchor,
    u_hat,
    serving_index: int,
    amap: AffineEfimMap | None = None,
) -> RrReport:
    """Iterate solve-and-relinearize from ``init``, then extract and rescale the beams.

    Raises:
        SolverFailure: if an SDP does not solve to optimality.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if amap is None:
        amap = relaxation.build_affine_map(scenario, u_hat)
    history: list = []
    varpis: list = []
    if not Efim(init.efim0).is_pd():
        return RrReport(0, history, list(init.covariances0), None, [], 0, False, message="anchor EFIM not PD")

    anchor = init
    prev = float(sum(np.trace(c).real for c in init.covariances0)) if init.covariances0 else None
    covs = list(init.covariances0)
    converged = False
    message = ""
    for it in range(1, config.max_iterations + 1):
        prob = relaxation.assemble_sdp(
            scenario, anchor, u_hat, serving_index, amap, formulation=config.formulation
        )
        sol = conic.solve(prob, tol=config.solver_tol, solver=config.solver)
        if sol.status != "optimal":
            raise SolverFailure(f"SDP not solved ({sol.status}) at iteration {it}", status=sol.status, iteration=it)
        covs = relaxation.covariances_from_blocks(prob, sol.blocks)
        total = float(sum(np.trace(c).real for c in covs))
        history.append(total)
        varpis.append(sol.scalars["varpi"])
        if prev is not None and abs(total - prev) <= max(config.epsilon, config.rel_epsilon * abs(prev)):
            converged = True
            break
        prev = total
        j_new = amap.evaluate(covs)
        if not Efim(j_new).is_pd():
            message = "surrogate EFIM lost definiteness; stopping"
            break
        anchor = Anchor(j_new, sol.scalars["varpi"], tuple(covs), init.thetas0)

    extracted = [extract_beamformer(c, config.rank_one_ratio_tol) for c in covs]
    beams = BeamformerSet(np.array([w for w, _ in extracted]), serving_index)
    exact = [e for _, e in extracted]
    try:
        beams, count = rescale_until_feasible(beams, scenario, u_hat, config, return_count=True)
        feasible = True
    except NotFeasibleAfterRescale as exc:
        count, feasible = config.max_rescales, False
        message = message or str(exc)
    return RrReport(
        iterations=len(history),
        objective_history=history,
        final_covariances=covs,
        beamformers=beams,
        rank_one_exact=exact,
        rescale_count=count,
        feasible=feasible,
        converged=converged,
        message=message,
        varpi_history=varpis,
    )


def crb_at(scenario: Scenario, beams: BeamformerSet, position=None) -> float:
    """CRB of the surrogate EFIM produced by ``beams`` at ``position`` (default: true user)."""
    return fisher.crb(fisher.surrogate_efim(fisher.fim_inputs(scenario, beams.vectors, position)))
