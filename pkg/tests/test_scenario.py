import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rrbeam.errors import DegenerateGeometry
from rrbeam.scenario import (
    LIGHT_SPEED,
    BeamformerSet,
    Scenario,
    achievable_rate,
    channel_split,
    estimated_angle,
    geometry_derivatives,
    los_channel,
    rate_gamma,
    serving_index,
    snr_threshold,
    steering_vector,
)

# independent oracles, frozen: lambda = c/f at 60 GHz and rho = lambda / (4 pi 25 sqrt 2)
WAVELENGTH_60GHZ = 0.004996540966666667
RHO_25SQRT2 = 1.1246168391593498e-05
SNR_THRESHOLD_R1 = 0.515716566510398  # 2^0.6 - 1


def test_scenario_defaults():
    s = Scenario()
    assert s.outage_prob == 0.05
    assert s.rate_threshold == 0.3
    assert s.clock_bias_std == 0.01
    assert s.carrier_ghz == 60.0
    assert s.effective_bandwidth == 0.125
    assert s.noise_psd_positioning == s.noise_psd_comm == 1.0
    np.testing.assert_allclose(s.channel_gains, (1 + 1j) / math.sqrt(2))
    assert s.n_bs == 8
    np.testing.assert_array_equal(s.user_position, [75.0, 75.0])


def test_wavelength():
    s = Scenario()
    assert s.wavelength == pytest.approx(WAVELENGTH_60GHZ, rel=1e-12)
    assert s.element_spacing == pytest.approx(s.wavelength / 2)


def test_scenario_validation():
    with pytest.raises(DegenerateGeometry):
        Scenario(bs_positions=[[75.0, 75.0]])
    with pytest.raises(ValueError):
        Scenario(outage_prob=1.0)
    with pytest.raises(ValueError):
        Scenario(frame_ratio=0.0)
    with pytest.raises(ValueError):
        Scenario(n_antennas=0)


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0.0, 4, 1.0, 0.5), 0.5 * np.ones(4))
    np.testing.assert_allclose(steering_vector(math.pi / 2, 2, 1.0, 0.5), np.array([1, -1]) / math.sqrt(2), atol=1e-15)


@given(st.floats(-math.pi, math.pi), st.integers(1, 64))
def test_steering_vector_unit_norm(theta, n):
    assert np.linalg.norm(steering_vector(theta, n, 0.005, 0.0025)) == pytest.approx(1.0, rel=1e-12)


def test_los_channel_examples():
    wl = 4 * math.pi  # d = wl / (4 pi) = 1 -> rho = 1
    s = Scenario(bs_positions=[[0.0, 0.0]], user_position=[1.0, 0.0], n_antennas=5, channel_gains=[1.0],
                 light_speed=wl * 60.0)
    np.testing.assert_allclose(los_channel(0, s.user_position, s), np.ones(5), atol=1e-12)

    s = Scenario()
    g = los_channel(0, [75.0, 75.0], s)
    rho = s.wavelength / (4 * math.pi * 25 * math.sqrt(2))
    assert rho == pytest.approx(RHO_25SQRT2, rel=1e-9)
    assert np.linalg.norm(g) == pytest.approx(math.sqrt(64) * rho, rel=1e-12)


def test_geometry_derivatives():
    a, tau = geometry_derivatives([75.0, 75.0], [50.0, 50.0])
    np.testing.assert_allclose(a, np.array([1, 1]) / math.sqrt(2) / LIGHT_SPEED, rtol=1e-14)
    assert tau == pytest.approx(25 * math.sqrt(2) / LIGHT_SPEED)
    a, _ = geometry_derivatives([10.0, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(a, [1 / LIGHT_SPEED, 0.0])
    with pytest.raises(DegenerateGeometry):
        geometry_derivatives([1.0, 1.0], [1.0, 1.0])


def test_estimated_angle():
    assert estimated_angle([0.0, 5.0], [0.0, 0.0]) == pytest.approx(math.pi / 2)
    assert estimated_angle([5.0, 0.0], [0.0, 0.0]) == 0.0
    assert estimated_angle([3.0, 3.0], [0.0, 0.0]) == pytest.approx(math.pi / 4)


def test_channel_split_examples():
    s = Scenario(n_antennas=8)
    p = s.bs_positions[0]
    u_hat = np.array([60.0, 70.0])
    cr = channel_split(u_hat, [0.0, 0.0], 0, s)
    np.testing.assert_array_equal(cr.g_err, 0)
    # radial error doubling the distance halves the channel
    delta = u_hat - p
    cr = channel_split(u_hat, delta, 0, s)
    np.testing.assert_allclose(cr.g_err, -cr.g_hat / 2, atol=1e-15)


def test_channel_split_reconstruction(rng):
    s = Scenario(n_antennas=16)
    for _ in range(1000):
        u_hat = rng.uniform(0, 150, 2)
        du = rng.normal(0, 3, 2)
        k = int(rng.integers(s.n_bs))
        p = s.bs_positions[k]
        if min(np.linalg.norm(u_hat - p), np.linalg.norm(u_hat + du - p)) < 1e-3:
            continue
        cr = channel_split(u_hat, du, k, s)
        d_true = np.linalg.norm(u_hat + du - p)
        expected = (
            math.sqrt(16) * s.wavelength / (4 * math.pi * d_true) * s.channel_gains[k]
            * steering_vector(estimated_angle(u_hat, p), 16, s.wavelength, s.element_spacing)
        )
        np.testing.assert_allclose(cr.g_true, expected, rtol=1e-10, atol=1e-18)


def test_achievable_rate_examples():
    s = Scenario(frame_ratio=1.0)
    g = np.array([1.0, 0.0])
    assert achievable_rate(g, np.array([0.0, 1.0]), s) == 0.0
    assert achievable_rate(g, np.array([1.0, 0.0]), s) == pytest.approx(0.5)
    assert Scenario(frame_ratio=3 / 8).prelog == pytest.approx(8 / 11)


def test_rate_gamma_examples():
    s = Scenario(frame_ratio=1.0)
    assert snr_threshold(s) == pytest.approx(SNR_THRESHOLD_R1, rel=1e-14)
    assert rate_gamma(s.replace(n_antennas=32)) == pytest.approx(2 * rate_gamma(s.replace(n_antennas=16)))
    assert rate_gamma(s.replace(rate_threshold=1e-9)) > 1e6 * rate_gamma(s)
    gs = [rate_gamma(s.replace(rate_threshold=r)) for r in (0.1, 0.2, 0.3, 0.5)]
    assert all(a > b for a, b in zip(gs, gs[1:]))


def test_rate_constraint_equivalence(rng):
    """R >= R_bar  <=>  ||u_hat + du - p||^2 <= gamma a^H w w^H a."""
    s = Scenario(n_antennas=8)
    h = s.channel_gains[0]
    gamma = rate_gamma(s, h)
    checked = 0
    for _ in range(1000):
        k = 0
        p = s.bs_positions[k]
        u_hat = p + rng.uniform(5, 60, 2)
        du = rng.normal(0, 5, 2)
        w = (rng.standard_normal(8) + 1j * rng.standard_normal(8)) * rng.uniform(1e3, 3e4)
        cr = channel_split(u_hat, du, k, s)
        a_hat = steering_vector(cr.theta_hat, 8, s.wavelength, s.element_spacing)
        lhs = float(np.sum((u_hat + du - p) ** 2))
        rhs = gamma * abs(np.vdot(a_hat, w)) ** 2
        if abs(lhs - rhs) <= 1e-9 * max(lhs, rhs):
            continue
        rate = achievable_rate(cr.g_true, w, s)
        assert (rate >= s.rate_threshold) == (lhs <= rhs)
        checked += 1
    assert checked > 900


def test_serving_index_ties_lowest():
    s = Scenario(bs_positions=[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], user_position=[3.0, 3.0])
    assert serving_index(s, [5.0, 1.0]) == 0
    assert serving_index(s, [14.0, 0.0]) == 1


def test_beamformer_set():
    b = BeamformerSet(np.array([[1.0, 1j], [2.0, 0.0]]), 1)
    assert b.total_power == pytest.approx(6.0)
    np.testing.assert_array_equal(b.serving_beam, [2.0, 0.0])
    assert b.scaled(1.1).total_power == pytest.approx(6.0 * 1.21)
    with pytest.raises(ValueError):
        BeamformerSet(np.zeros((2, 2)), 2)
