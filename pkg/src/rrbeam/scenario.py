"""Network geometry, ULA channels, channel error split and data rate.

Units throughout: metres, nanoseconds, gigahertz, watts. In these units the
light speed is 0.299792458 m/ns and the default noise densities and
effective bandwidth are O(1) numbers.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry

C_SI = 299_792_458.0  # m/s
LIGHT_SPEED = C_SI * 1e-9  # m/ns
REFERENCE_BANDWIDTH_GHZ = 1.0  # noise power = PSD x 1 GHz

DEFAULT_BS_POSITIONS = (
    (50.0, 50.0),
    (75.0, 50.0),
    (100.0, 50.0),
    (50.0, 75.0),
    (100.0, 75.0),
    (50.0, 100.0),
    (75.0, 100.0),
    (100.0, 100.0),
)
DEFAULT_USER_POSITION = (75.0, 75.0)
DEFAULT_GAIN = (1 + 1j) / math.sqrt(2.0)


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable description of the network and the link targets.

    ``channel_gains`` defaults to ``(1+j)/sqrt(2)`` for every BS and
    ``element_spacing`` to half a wavelength. ``positioning_energy`` scales
    the positioning SNR factor ``xi`` (1 leaves it as given by the noise PSD
    and effective bandwidth).
    """

    bs_positions: np.ndarray = DEFAULT_BS_POSITIONS
    user_position: np.ndarray = DEFAULT_USER_POSITION
    n_antennas: int = 64
    carrier_ghz: float = 60.0
    element_spacing: float | None = None
    channel_gains: np.ndarray | None = None
    clock_bias_std: float = 0.01
    noise_psd_positioning: float = 1.0
    noise_psd_comm: float = 1.0
    effective_bandwidth: float = 0.125
    frame_ratio: float = 1.0
    rate_threshold: float = 0.3
    outage_prob: float = 0.05
    positioning_energy: float = 1.0
    light_speed: float = field(default=LIGHT_SPEED)

    def __post_init__(self):
        bs = np.array(self.bs_positions, dtype=np.float64)
        if bs.ndim != 2 or bs.shape[1] != 2 or bs.shape[0] < 1:
            raise ValueError("bs_positions must be an (M, 2) array with M >= 1")
        user = np.array(self.user_position, dtype=np.float64).reshape(2)
        if np.any(np.linalg.norm(bs - user, axis=1) == 0.0):
            raise DegenerateGeometry("user position coincides with a BS")
        if int(self.n_antennas) < 1:
            raise ValueError("n_antennas must be >= 1")
        if not 0.0 < self.outage_prob < 1.0:
            raise ValueError("outage_prob must lie in (0, 1)")
        if self.frame_ratio <= 0.0:
            raise ValueError("frame_ratio must be positive")
        if self.carrier_ghz <= 0.0:
            raise ValueError("carrier_ghz must be positive")
        if self.clock_bias_std < 0.0:
            raise ValueError("clock_bias_std must be non-negative")
        gains = self.channel_gains
        if gains is None:
            gains = np.full(bs.shape[0], DEFAULT_GAIN, dtype=np.complex128)
        gains = np.array(gains, dtype=np.complex128).reshape(-1)
        if gains.shape[0] != bs.shape[0]:
            raise ValueError("need one channel gain per BS")
        spacing = self.element_spacing
        if spacing is None:
            spacing = self.wavelength / 2.0
        object.__setattr__(self, "bs_positions", _frozen(bs))
        object.__setattr__(self, "user_position", _frozen(user))
        object.__setattr__(self, "channel_gains", _frozen(gains, np.complex128))
        object.__setattr__(self, "element_spacing", float(spacing))
        object.__setattr__(self, "n_antennas", int(self.n_antennas))

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier_ghz

    @property
    def xi(self) -> float:
        """Positioning SNR factor 4 pi^2 W_eff^2 / N_p (times the energy factor)."""
        return (
            4.0 * math.pi**2 * self.effective_bandwidth**2 / self.noise_psd_positioning
        ) * self.positioning_energy

    @property
    def noise_power_comm(self) -> float:
        return self.noise_psd_comm * REFERENCE_BANDWIDTH_GHZ

    @property
    def prelog(self) -> float:
        """Fraction of the frame spent communicating, T_c / (T_p + T_c)."""
        return 1.0 / (1.0 + self.frame_ratio)

    def replace(self, **changes) -> "Scenario":
        if "carrier_ghz" in changes and "element_spacing" not in changes:
            changes["element_spacing"] = None
        return dataclasses.replace(self, **changes)


@dataclass
class BeamformerSet:
    """One transmit beam per BS plus the index of the serving BS (0-based)."""

    vectors: np.ndarray
    serving_index: int

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.complex128))
        if not 0 <= self.serving_index < self.vectors.shape[0]:
            raise ValueError("serving_index out of range")

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.vectors) ** 2))

    @property
    def serving_beam(self) -> np.ndarray:
        return self.vectors[self.serving_index]

    def scaled(self, factor: float) -> "BeamformerSet":
        return BeamformerSet(self.vectors * factor, self.serving_index)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    g_hat: np.ndarray
    g_err: np.ndarray
    theta_hat: float
    u_hat: np.ndarray
    delta_u: np.ndarray

    @property
    def g_true(self) -> np.ndarray:
        return self.g_hat + self.g_err


def steering_vector(theta: float, n_antennas: int, wavelength: float, spacing: float) -> np.ndarray:
    """Unit-norm ULA response, entry k = exp(j k 2 pi/lambda d sin(theta)) / sqrt(N)."""
    k = np.arange(n_antennas)
    phase = 2.0 * math.pi / wavelength * spacing * math.sin(theta)
    return np.exp(1j * k * phase) / math.sqrt(n_antennas)


def _offset(position, p) -> tuple[np.ndarray, float]:
    d = np.asarray(position, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    dist = math.hypot(d[0], d[1])
    if dist == 0.0:
        raise DegenerateGeometry("points coincide")
    return d, dist


def estimated_angle(u_hat, p) -> float:
    """Angle of departure from ``p`` towards ``u_hat``, measured from the array normal."""
    d, dist = _offset(u_hat, p)
    return math.asin(max(-1.0, min(1.0, d[1] / dist)))


def geometry_derivatives(u, p, c: float = LIGHT_SPEED) -> tuple[np.ndarray, float]:
    """Delay gradient w.r.t. the user position and line-of-sight delay (ns)."""
    d, dist = _offset(u, p)
    return d / (c * dist), dist / c


def los_channel(bs_index: int, position, scenario: Scenario) -> np.ndarray:
    """Line-of-sight channel sqrt(N) rho h a(theta) from one BS to ``position``."""
    p = scenario.bs_positions[bs_index]
    _, dist = _offset(position, p)
    rho = scenario.wavelength / (4.0 * math.pi * dist)
    a = steering_vector(
        estimated_angle(position, p),
        scenario.n_antennas,
        scenario.wavelength,
        scenario.element_spacing,
    )
    return math.sqrt(scenario.n_antennas) * rho * scenario.channel_gains[bs_index] * a


def channel_norms_sq(scenario: Scenario, position) -> np.ndarray:
    """||g_i||^2 = N rho_i^2 |h_i|^2 for every BS."""
    d = np.linalg.norm(scenario.bs_positions - np.asarray(position, dtype=np.float64), axis=1)
    if np.any(d == 0.0):
        raise DegenerateGeometry("position coincides with a BS")
    rho = scenario.wavelength / (4.0 * math.pi * d)
    return scenario.n_antennas * rho**2 * np.abs(scenario.channel_gains) ** 2


def channel_split(u_hat, delta_u, bs_index: int, scenario: Scenario) -> ChannelRealization:
    """Split the serving channel into its estimate at ``u_hat`` and the error.

    The angle error is neglected, so both parts share the steering vector at
    the estimated angle and only the path loss changes.
    """
    p = scenario.bs_positions[bs_index]
    u_hat = np.asarray(u_hat, dtype=np.float64)
    delta_u = np.asarray(delta_u, dtype=np.float64)
    _, d_hat = _offset(u_hat, p)
    _, d_true = _offset(u_hat + delta_u, p)
    theta_hat = estimated_angle(u_hat, p)
    a_hat = steering_vector(theta_hat, scenario.n_antennas, scenario.wavelength, scenario.element_spacing)
    coef = math.sqrt(scenario.n_antennas) * scenario.wavelength * scenario.channel_gains[bs_index] / (4.0 * math.pi)
    g_hat = coef / d_hat * a_hat
    g_err = coef * a_hat * (1.0 / d_true - 1.0 / d_hat)
    return ChannelRealization(g_hat, g_err, theta_hat, u_hat, delta_u)


def achievable_rate(g_true, w, scenario: Scenario) -> float:
    """Spectral efficiency (bps/Hz) including the frame prelog."""
    gain = abs(np.vdot(np.asarray(g_true), np.asarray(w))) ** 2
    return scenario.prelog * math.log2(1.0 + gain / scenario.noise_power_comm)


def snr_threshold(scenario: Scenario) -> float:
    """Received SNR needed to hit the rate threshold, 2^((1+r) R) - 1."""
    return 2.0 ** ((1.0 + scenario.frame_ratio) * scenario.rate_threshold) - 1.0


def rate_gamma(scenario: Scenario, h: complex | None = None) -> float:
    """Distance-squared per unit beam gain that still meets the rate threshold.

    The rate constraint reads ||u - p||^2 <= gamma * a^H Sigma a.
    """
    if h is None:
        h = scenario.channel_gains[0]
    return (
        scenario.wavelength**2
        * scenario.n_antennas
        * abs(h) ** 2
        / ((4.0 * math.pi) ** 2 * scenario.noise_power_comm * snr_threshold(scenario))
    )


def serving_index(scenario: Scenario, u_hat) -> int:
    """Nearest BS to the estimated position (lowest index on ties)."""
    d = np.linalg.norm(scenario.bs_positions - np.asarray(u_hat, dtype=np.float64), axis=1)
    return int(np.argmin(d))


def true_angles(scenario: Scenario, position=None) -> np.ndarray:
    pos = scenario.user_position if position is None else position
    return np.array([estimated_angle(pos, p) for p in scenario.bs_positions])


def steering_matrix(scenario: Scenario, thetas) -> np.ndarray:
    """Rows are the steering vectors for each angle in ``thetas``."""
    return np.array(
        [
            steering_vector(t, scenario.n_antennas, scenario.wavelength, scenario.element_spacing)
            for t in thetas
        ]
    )
