import numpy as np
import pytest

from teleosim.feedback import (ImpedanceGains, PedalCue, PotentialParams,
                               follower_gains, impedance_torque, leader_gains,
                               mix_cues, pedal_resistance, potential_force,
                               potential_phi, reflection_feedforward)
from teleosim.kinematics import Chain, JointState, reference_arm
from teleosim.world import LidarScan


def test_potential_zero_beyond_far_radius():
    p = PotentialParams()
    assert potential_force(0.6, p) == 0.0
    assert potential_force(0.5, p) == 0.0
    assert potential_force(10.0, p) == 0.0


def test_potential_clamped_at_surface():
    p = PotentialParams(f_max=20.0)
    assert potential_force(0.40, p) == 20.0
    assert potential_force(0.1, p) == 20.0
    assert potential_force(0.0, p) == 20.0
    default = PotentialParams()
    assert potential_force(0.39, default) == default.f_max


def test_potential_pinned_value_and_derivative_oracle():
    p = PotentialParams()
    assert abs(potential_force(0.45, p) - 4000.0) < 1e-9
    h = 1e-7
    fd = abs((potential_phi(0.45 + h, p) - potential_phi(0.45 - h, p)) / (2 * h))
    assert abs(potential_force(0.45, p) - p.k_phi * fd) / fd < 1e-6


def test_potential_strictly_decreasing_in_band():
    p = PotentialParams()
    rs = np.linspace(0.4005, 0.4995, 200)
    vals = [potential_force(r, p) for r in rs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    rng = np.random.default_rng(0)
    for _ in range(200):
        r1, r2 = sorted(rng.uniform(0.4001, 0.4999, size=2))
        if r1 == r2:
            continue
        assert potential_force(r1, p) > potential_force(r2, p)


def test_potential_continuous_at_far_radius():
    # force -> 0 as r -> r_far with local slope |phi''| ~ 1/(r_far - r0)^4
    p = PotentialParams()
    slope = 1.0 / (p.r_far - p.r0) ** 4
    for delta in (1e-4, 1e-6, 1e-9):
        assert potential_force(p.r_far - delta, p) < 2.0 * slope * delta


def test_potential_params_validation():
    with pytest.raises(ValueError):
        PotentialParams(r0=0.5, r_far=0.4)
    with pytest.raises(ValueError):
        PotentialParams(k_phi=0.0)
    with pytest.raises(ValueError):
        PotentialParams(f_max=-1.0)


def _scan(ranges):
    ranges = np.asarray(ranges, dtype=float)
    return LidarScan(ranges, 0.0, 2 * np.pi / len(ranges), 5.0)


def test_pedal_free_space_inactive():
    scan = _scan(np.full(360, 5.0))
    cue = pedal_resistance(scan, [0.2, 0.0, 0.0])
    assert not cue.active
    assert np.allclose(cue.force_xy, 0.0)


def test_pedal_single_obstacle_ahead():
    ranges = np.full(360, 5.0)
    ranges[0] = 0.45
    cue = pedal_resistance(_scan(ranges), [0.2, 0.0, 0.0])
    assert cue.active
    assert np.allclose(cue.force_xy, [-4000.0, 0.0], atol=1e-9)
    # driving away: obstacle outside the motion half-plane
    away = pedal_resistance(_scan(ranges), [-0.2, 0.0, 0.0])
    assert not away.active


def test_pedal_zero_command_inactive():
    ranges = np.full(360, 0.45)
    cue = pedal_resistance(_scan(ranges), [0.0, 0.0, 0.3])
    assert not cue.active


def test_pedal_empty_scan_rejected():
    with pytest.raises(ValueError, match="empty scan"):
        pedal_resistance(None, [0.1, 0.0, 0.0])


def test_pedal_opposition_invariant():
    rng = np.random.default_rng(1)
    p = PotentialParams()
    for _ in range(10_000):
        m = 36
        ranges = rng.uniform(0.401, 5.0, size=m)
        scan = _scan(ranges)
        cmd = rng.uniform(-0.3, 0.3, size=3)
        if np.hypot(cmd[0], cmd[1]) < 1e-6:
            continue
        cue = pedal_resistance(scan, cmd, p)
        assert cue.force_xy @ cmd[:2] <= 1e-9
        assert np.linalg.norm(cue.force_xy) <= p.f_max + 1e-6
        assert cue.yaw_torque == 0.0


def test_pedal_clamp_applies():
    p = PotentialParams(f_max=20.0)
    ranges = np.full(360, 5.0)
    ranges[0] = 0.401
    cue = pedal_resistance(_scan(ranges), [0.2, 0.0, 0.0], p)
    assert cue.active
    assert abs(np.linalg.norm(cue.force_xy) - 20.0) < 1e-9


def test_impedance_frozen_values():
    g = ImpedanceGains(np.array([10.0]), np.array([0.0]), np.array([1.0]))
    tau = impedance_torque(g, JointState(np.array([0.0]), np.zeros(1), np.zeros(1)),
                           JointState(np.array([0.1]), np.zeros(1), np.zeros(1)),
                           np.zeros(1))
    assert abs(tau[0] - 1.0) < 1e-12
    g = ImpedanceGains(np.array([0.0]), np.array([0.8]), np.array([1.0]))
    tau = impedance_torque(g, JointState(np.zeros(1), np.array([0.0]), np.zeros(1)),
                           JointState(np.zeros(1), np.array([0.5]), np.zeros(1)),
                           np.zeros(1))
    assert abs(tau[0] - 0.4) < 1e-12


def test_impedance_zero_at_tracking():
    g = follower_gains()
    state = JointState(np.linspace(0, 1, 6), np.linspace(-1, 1, 6), np.zeros(6))
    tau = impedance_torque(g, state, state.copy(), np.zeros(6))
    assert np.allclose(tau, 0.0)


def test_impedance_superposition():
    rng = np.random.default_rng(2)
    g = leader_gains()
    meas = JointState(rng.normal(size=6), rng.normal(size=6), np.zeros(6))
    d1 = JointState(rng.normal(size=6), rng.normal(size=6), np.zeros(6))
    d2 = JointState(rng.normal(size=6), rng.normal(size=6), np.zeros(6))
    f1, f2 = rng.normal(size=6), rng.normal(size=6)
    both = impedance_torque(g, meas, JointState(d1.q + d2.q - meas.q,
                                                d1.qdot + d2.qdot - meas.qdot,
                                                np.zeros(6)), f1 + f2)
    split = (impedance_torque(g, meas, d1, f1) + impedance_torque(g, meas, d2, f2))
    assert np.allclose(both, split, atol=1e-12)


def test_impedance_dimension_mismatch():
    g = follower_gains()
    with pytest.raises(ValueError, match="length"):
        impedance_torque(g, JointState.zero(5), JointState.zero(6), np.zeros(6))


def test_gain_table_defaults():
    f, l = follower_gains(), leader_gains()
    assert np.allclose(f.kp, 10.0)
    assert np.allclose(f.kd, [0.1, 0.1, 0.01, 0.1, 0.1, 0.1])
    assert np.allclose(f.reflection_scale, 1.0)
    assert np.allclose(l.kp, [0.05, 0.1, 0.1, 0.05, 0.1, 0.1])
    assert np.allclose(l.kd, 0.8)
    assert np.allclose(l.reflection_scale, [0.5, 0.15, 0.6, 0.5, 0.15, 0.6])


def test_gain_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        ImpedanceGains(np.array([-1.0]), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError, match="0, 1"):
        ImpedanceGains(np.ones(1), np.zeros(1), np.array([1.5]))


def test_reflection_frozen_cases():
    arm = reference_arm()
    rng = np.random.default_rng(3)
    q_fol, q_lead = arm.sample_q(rng), arm.sample_q(rng)
    g_fol = arm.gravity_torques(q_fol)
    g_lead = arm.gravity_torques(q_lead)
    # no interaction: pure leader gravity compensation
    ff = reflection_feedforward(g_fol, q_fol, q_lead, np.ones(6), arm)
    assert np.allclose(ff, g_lead, atol=1e-12)
    # reflection disabled
    ff = reflection_feedforward(rng.normal(size=6), q_fol, q_lead, np.zeros(6), arm)
    assert np.allclose(ff, g_lead, atol=1e-12)
    # zero gravity, unit scale: pure negated reflection
    free = reference_arm(gravity=(0, 0, 0))
    ff = reflection_feedforward(np.ones(6), q_fol, q_lead, np.ones(6), free)
    assert np.allclose(ff, -np.ones(6), atol=1e-12)


def test_follower_settles_on_constant_leader():
    # double-integrator joints under the impedance law, no gravity; gains
    # chosen well-damped so steady state arrives in a few simulated seconds
    g = ImpedanceGains(np.full(6, 10.0), np.full(6, 5.0), np.ones(6))
    q_lead = np.array([0.3, -0.2, 0.5, 0.1, -0.4, 0.2])
    q = np.zeros(6)
    qd = np.zeros(6)
    dt = 0.01
    desired = JointState(q_lead, np.zeros(6), np.zeros(6))
    for _ in range(5_000):
        tau = impedance_torque(g, JointState(q, qd, np.zeros(6)), desired,
                               np.zeros(6))
        qd = qd + tau * dt
        q = q + qd * dt
    assert np.abs(q - q_lead).max() < 1e-6
    assert np.abs(qd).max() < 1e-6


def test_mix_cues():
    a = PedalCue(np.array([-1.0, 0.0]), 0.0, "collision", True)
    b = PedalCue(np.array([0.0, -1.0]), 0.0, "guidance", True)
    mixed = mix_cues([a, b], f_max=10.0)
    assert mixed.source == "mixed" and mixed.active
    assert np.allclose(mixed.force_xy, [-1.0, -1.0])
    clamped = mix_cues([a, b], f_max=1.0)
    assert abs(np.linalg.norm(clamped.force_xy) - 1.0) < 1e-12
    only = mix_cues([PedalCue.inactive(), a], f_max=10.0)
    assert only is a
    none = mix_cues([PedalCue.inactive()], f_max=10.0)
    assert not none.active


def test_pedal_cue_validation():
    with pytest.raises(ValueError, match="finite"):
        PedalCue(np.array([np.nan, 0.0]))
