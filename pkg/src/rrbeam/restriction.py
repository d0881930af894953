"""Deterministic restriction of the rate-outage chance constraint.

With the position error modelled as ``du = J^{-1/2} e`` (``e`` standard
normal), the outage event becomes a Gaussian quadratic form exceeding a
threshold. A Bernstein-type tail bound turns it into a deterministic
inequality that is checked here exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import fisher, matkit
from .fisher import Efim
from .scenario import Scenario, estimated_angle, rate_gamma, steering_vector


@dataclass(frozen=True, eq=False)
class DeterministicConstraint:
    """Restricted outage constraint ``tr S + sqrt(2 zeta) varpi + zeta varrho <= nu``."""

    S: np.ndarray
    r_vec: np.ndarray
    nu: float
    zeta: float

    def __post_init__(self):
        if not self.zeta > 0.0:
            raise ValueError("zeta must be positive")


class AuxiliaryPair(NamedTuple):
    varpi: float
    varrho: float


def bernstein_bound(S, s, zeta: float) -> float:
    """Tail threshold tr S + sqrt(2 zeta) sqrt(||S||_F^2 + 2||s||^2) + zeta lambda+(S).

    ``Pr{z^T S z + 2 z^T s >= bound} <= exp(-zeta)`` for standard normal ``z``.
    """
    S = matkit.sym(S)
    s = np.asarray(s, dtype=np.float64)
    frob = float(np.sum(S * S))
    return float(
        np.trace(S)
        + math.sqrt(2.0 * zeta) * math.sqrt(frob + 2.0 * float(s @ s))
        + zeta * matkit.lambda_plus(S)
    )


def restrict(u_hat, p_serving, efim: Efim, gamma: float, beam_gain: float, outage_prob: float) -> DeterministicConstraint:
    """Build the deterministic constraint for one serving BS.

    Raises:
        SingularMatrix: if ``efim`` is not positive definite.
    """
    if not 0.0 < outage_prob < 1.0:
        raise ValueError("outage_prob must lie in (0, 1)")
    x = np.asarray(u_hat, dtype=np.float64) - np.asarray(p_serving, dtype=np.float64)
    m = efim.matrix if isinstance(efim, Efim) else matkit.sym(efim)
    S = matkit.inv2(m)
    r_vec = matkit.spd_inv_sqrt(m) @ x
    nu = gamma * beam_gain - float(x @ x)
    return DeterministicConstraint(S, r_vec, nu, -math.log(outage_prob))


def tight_auxiliaries(dc: DeterministicConstraint) -> AuxiliaryPair:
    varpi = math.sqrt(float(np.sum(dc.S * dc.S)) + 2.0 * float(dc.r_vec @ dc.r_vec))
    return AuxiliaryPair(varpi, matkit.lambda_plus(dc.S))


def margin(dc: DeterministicConstraint) -> float:
    """``nu`` minus the left-hand side at the tight auxiliaries (>= 0 means feasible)."""
    aux = tight_auxiliaries(dc)
    lhs = float(np.trace(dc.S)) + math.sqrt(2.0 * dc.zeta) * aux.varpi + dc.zeta * aux.varrho
    return dc.nu - lhs


def feasible(dc: DeterministicConstraint) -> tuple[bool, AuxiliaryPair]:
    """Check the restricted constraint at the tight auxiliary pair.

    Feasibility for some auxiliary pair is equivalent to feasibility at the
    tight one because the left-hand side increases in both auxiliaries.
    """
    aux = tight_auxiliaries(dc)
    lhs = float(np.trace(dc.S)) + math.sqrt(2.0 * dc.zeta) * aux.varpi + dc.zeta * aux.varrho
    return bool(lhs <= dc.nu), aux


def constraint_for_beams(scenario: Scenario, beams, u_hat, serving: int, efim: Efim | None = None) -> DeterministicConstraint:
    """Deterministic constraint for concrete beams, evaluated at the estimate ``u_hat``.

    The EFIM defaults to the affine surrogate at ``u_hat``.
    """
    beams = np.atleast_2d(np.asarray(beams, dtype=np.complex128))
    if efim is None:
        efim = fisher.surrogate_efim(fisher.fim_inputs(scenario, beams, u_hat))
    p = scenario.bs_positions[serving]
    a_hat = steering_vector(
        estimated_angle(u_hat, p), scenario.n_antennas, scenario.wavelength, scenario.element_spacing
    )
    gain = abs(np.vdot(a_hat, beams[serving])) ** 2
    gamma = rate_gamma(scenario, scenario.channel_gains[serving])
    return restrict(u_hat, p, efim, gamma, gain, scenario.outage_prob)


def quadratic_form_samples(S, s, n_samples: int, rng) -> np.ndarray:
    """Draw ``z^T S z + 2 z^T s`` for ``n_samples`` standard-normal ``z``."""
    S = matkit.sym(S)
    s = np.asarray(s, dtype=np.float64)
    z = rng.standard_normal((n_samples, S.shape[0]))
    return np.einsum("ni,ij,nj->n", z, S, z) + 2.0 * z @ s


def empirical_violation(dc: DeterministicConstraint, n_samples: int, rng) -> tuple[float, float]:
    """Monte Carlo ``Pr{e^T S e + 2 e^T r >= nu}`` and its binomial standard error."""
    chi = quadratic_form_samples(dc.S, dc.r_vec, n_samples, rng)
    p = float(np.mean(chi >= dc.nu))
    return p, math.sqrt(p * (1.0 - p) / n_samples)
