"""Fisher information of the positioning frame.

Two independent routes to the 2x2 position EFIM are provided: the closed
form, and the explicit assembly of the full parameter FIM followed by a
Schur complement. The affine surrogate used by the optimizer lives here too.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matkit
from .errors import IndefiniteSurrogate, InvalidNoise, SingularMatrix
from .scenario import Scenario, channel_norms_sq, geometry_derivatives, los_channel


@dataclass(frozen=True, eq=False)
class FimInputs:
    """Per-BS quantities that determine the positioning information.

    Attributes:
        lambdas: complex beam gains g_i^H w_i, shape (M,).
        alphas: delay gradients, shape (M, 2), ns/m.
        xi: positioning SNR factor 4 pi^2 W_eff^2 / N_p.
        sigma_b: clock-bias standard deviation (ns).
        channel_norms: ||g_i||^2, shape (M,).
    """

    lambdas: np.ndarray
    alphas: np.ndarray
    xi: float
    sigma_b: float
    channel_norms: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.complex128).reshape(-1)
        alphas = np.asarray(self.alphas, dtype=np.float64).reshape(-1, 2)
        norms = np.asarray(self.channel_norms, dtype=np.float64).reshape(-1)
        if not (lam.shape[0] == alphas.shape[0] == norms.shape[0]):
            raise ValueError("lambdas, alphas and channel_norms must have one entry per BS")
        if self.xi <= 0.0:
            raise ValueError("xi must be positive")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "channel_norms", norms)

    @property
    def n_bs(self) -> int:
        return self.lambdas.shape[0]

    @property
    def gains_sq(self) -> np.ndarray:
        return np.abs(self.lambdas) ** 2

    def with_gains_sq(self, gains_sq) -> "FimInputs":
        """Same geometry with |Lambda_i|^2 replaced (phases dropped)."""
        lam = np.sqrt(np.asarray(gains_sq, dtype=np.float64)).astype(np.complex128)
        return FimInputs(lam, self.alphas, self.xi, self.sigma_b, self.channel_norms)


@dataclass(frozen=True, eq=False)
class FullFim:
    phi_blocks: np.ndarray  # (M, 3, 3)
    j_eta: np.ndarray  # (3M, 3M)
    upsilon: np.ndarray  # (2M+3, 3M)
    jb: np.ndarray  # (2M+3, 2M+3)
    j_eta_tilde: np.ndarray  # (2M+3, 2M+3)
    a: np.ndarray  # (2, 2)
    b: np.ndarray  # (2, 2M+1)
    c: np.ndarray  # (2M+1, 2M+1)


@dataclass(frozen=True, eq=False)
class Efim:
    """2x2 position information matrix, optionally with a linearization anchor."""

    matrix: np.ndarray
    anchor: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", matkit.sym(self.matrix))
        if self.anchor is not None:
            object.__setattr__(self, "anchor", matkit.sym(self.anchor))

    def is_pd(self) -> bool:
        m = self.matrix
        tr = m[0, 0] + m[1, 1]
        return bool(tr > 0.0 and m[0, 0] * m[1, 1] - m[0, 1] ** 2 > matkit.PD_RTOL * tr * tr)

    def inverse(self) -> np.ndarray:
        return matkit.inv2(self.matrix)


def fim_inputs(scenario: Scenario, beams: np.ndarray, position=None) -> FimInputs:
    """Evaluate the FIM inputs for beams ``(M, N)`` with the user at ``position``."""
    pos = scenario.user_position if position is None else np.asarray(position, dtype=np.float64)
    beams = np.atleast_2d(np.asarray(beams, dtype=np.complex128))
    lambdas = np.array(
        [np.vdot(los_channel(i, pos, scenario), beams[i]) for i in range(scenario.n_bs)]
    )
    alphas = np.array(
        [geometry_derivatives(pos, p, scenario.light_speed)[0] for p in scenario.bs_positions]
    )
    return FimInputs(lambdas, alphas, scenario.xi, scenario.clock_bias_std, channel_norms_sq(scenario, pos))


def fim_parameters(inputs: FimInputs, noise_psd: float = 1.0) -> FullFim:
    """Assemble the channel-parameter FIM and its map onto (u, Lambda, b).

    The effective-bandwidth term enters through ``inputs.xi``; ``noise_psd``
    sets the information on the real/imaginary parts of each gain.
    """
    if noise_psd <= 0.0:
        raise InvalidNoise(f"noise PSD must be positive, got {noise_psd}")
    m = inputs.n_bs
    phi = np.zeros((m, 3, 3))
    phi[:, 0, 0] = inputs.xi * inputs.gains_sq
    phi[:, 1, 1] = phi[:, 2, 2] = 1.0 / noise_psd
    j_eta = np.zeros((3 * m, 3 * m))
    for i in range(m):
        j_eta[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = phi[i]

    # rows: u (2), Lambda_1..Lambda_M (2 each), b; columns: (tau_i, Re, Im) per BS
    dim = 2 * m + 3
    ups = np.zeros((dim, 3 * m))
    t_block = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    for i in range(m):
        ups[0:2, 3 * i] = inputs.alphas[i]  # D_i = [alpha_i, 0_{2x2}]
        ups[2 + 2 * i : 4 + 2 * i, 3 * i : 3 * i + 3] = t_block
        ups[dim - 1, 3 * i] = 1.0  # d tau_i / d b
    jb = np.zeros((dim, dim))
    if inputs.sigma_b > 0.0:
        jb[dim - 1, dim - 1] = 1.0 / inputs.sigma_b**2
    j_tilde = ups @ j_eta @ ups.T + jb
    return FullFim(
        phi_blocks=phi,
        j_eta=j_eta,
        upsilon=ups,
        jb=jb,
        j_eta_tilde=j_tilde,
        a=j_tilde[:2, :2],
        b=j_tilde[:2, 2:],
        c=j_tilde[2:, 2:],
    )


def _efim_closed_form(inputs: FimInputs) -> np.ndarray:
    g2 = inputs.gains_sq
    al = inputs.alphas
    xi = inputs.xi
    first = xi * np.einsum("i,ij,ik->jk", g2, al, al)
    if inputs.sigma_b == 0.0:
        return first
    v = g2 @ al
    coef = xi**2 / (xi * g2.sum() + 1.0 / inputs.sigma_b**2)
    return first - coef * np.outer(v, v)


def efim_position(inputs: FimInputs, via: str = "closed_form", noise_psd: float = 1.0) -> Efim:
    """Equivalent FIM of the user position after marginalizing gains and clock bias.

    Args:
        via: ``"closed_form"`` or ``"assembly"`` (full FIM + Schur complement).

    Raises:
        SingularMatrix: if the nuisance block is singular (assembly route).
    """
    if via == "closed_form":
        return Efim(_efim_closed_form(inputs))
    if via != "assembly":
        raise ValueError(f"unknown route {via!r}")
    if inputs.sigma_b <= 0.0:
        raise SingularMatrix("nuisance block is singular without a clock-bias prior")
    full = fim_parameters(inputs, noise_psd)
    try:
        cinv_bt = np.linalg.solve(full.c, full.b.T)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("nuisance block C is singular") from exc
    return Efim(full.a - full.b @ cinv_bt)


def surrogate_efim(inputs: FimInputs, check: bool = False) -> Efim:
    """Affine surrogate of the EFIM.

    The subtracted rank-one term is built from the channel norms ||g_i||^2,
    which do not depend on the beams, so the result is affine in |Lambda_i|^2.

    Raises:
        IndefiniteSurrogate: if ``check`` is set and the result is not PD.
    """
    al = inputs.alphas
    first = inputs.xi * np.einsum("i,ij,ik->jk", inputs.gains_sq, al, al)
    v = inputs.channel_norms @ al
    out = Efim(first - (inputs.xi * inputs.sigma_b) ** 2 * np.outer(v, v))
    if check and not out.is_pd():
        raise IndefiniteSurrogate("surrogate EFIM is not positive definite")
    return out


def crb(efim: Efim | np.ndarray) -> float:
    """Position error bound tr(J^-1) in m^2.

    Raises:
        SingularMatrix: if the EFIM is not positive definite.
    """
    m = efim.matrix if isinstance(efim, Efim) else matkit.sym(efim)
    return float(np.trace(matkit.inv2(m)))
