import json

import numpy as np
import pytest

from teleosim import se3
from teleosim.kinematics import Chain, JointState, planar_two_link, reference_arm


def two_link():
    return planar_two_link(1.0, 1.0)


def test_fk_two_link_frozen_points():
    c = two_link()
    assert np.allclose(c.fk([0.0, 0.0]).trans, [2.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(c.fk([np.pi / 2, 0.0]).trans, [0.0, 2.0, 0.0], atol=1e-12)
    assert np.allclose(c.fk([0.0, np.pi / 2]).trans, [1.0, 1.0, 0.0], atol=1e-12)


def test_fk_matches_chain_product_oracle():
    c = two_link()
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, size=2)
        m = np.eye(4)
        for i in range(2):
            m = m @ se3.axis_angle(c.axes[i], q[i]).as_matrix() @ c.origins[i].as_matrix()
        assert np.allclose(c.fk(q).as_matrix(), m, atol=1e-12)


def test_fk_dimension_mismatch():
    with pytest.raises(ValueError, match="joint"):
        two_link().fk([0.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="finite"):
        two_link().fk([0.0, np.nan])


def test_jacobian_frozen_columns():
    c = two_link()
    j = c.jacobian([0.0, 0.0])
    assert np.allclose(j[3:, 0], [0.0, 2.0, 0.0], atol=1e-12)
    assert np.allclose(j[3:, 1], [0.0, 1.0, 0.0], atol=1e-12)
    one = Chain(axes=[[0, 0, 1]], origins=[[1, 0, 0]])
    col = one.jacobian([0.0])[:, 0]
    assert np.allclose(col, [0, 0, 1, 0, 1, 0], atol=1e-12)


def test_jacobian_angular_rows_are_rotated_axes():
    c = reference_arm()
    rng = np.random.default_rng(1)
    for _ in range(10):
        q = c.sample_q(rng)
        frames = c.frames(q)
        j = c.jacobian(q)
        for i in range(c.n):
            assert np.allclose(j[:3, i], frames[i].rot @ c.axes[i], atol=1e-12)


def _pose_delta(a, b):
    """6-vector (angular, linear) displacement from pose a to pose b."""
    dw = se3.log_map(se3.Pose(b.rot @ a.rot.T, np.zeros(3)))[:3]
    return np.concatenate([dw, b.trans - a.trans])


@pytest.mark.parametrize("chain", [planar_two_link(1.0, 1.0), reference_arm()],
                         ids=["two-link", "reference-arm"])
def test_jacobian_matches_fk_finite_differences(chain):
    rng = np.random.default_rng(2)
    step = 1e-6
    for _ in range(100):
        q = chain.sample_q(rng)
        j = chain.jacobian(q)
        dq = rng.normal(size=chain.n)
        dq *= step / np.linalg.norm(dq)
        predicted = j @ dq
        actual = _pose_delta(chain.fk(q), chain.fk(q + dq))
        denom = max(np.linalg.norm(predicted), 1e-12)
        assert np.linalg.norm(predicted - actual) / denom < 1e-4


def test_manipulability_analytic_two_link():
    c = two_link()
    rng = np.random.default_rng(3)
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, size=2)
        assert abs(c.manipulability(q) - abs(np.sin(q[1]))) < 1e-9


def test_manipulability_frozen_values():
    c = two_link()
    assert c.manipulability([0.7, 0.0]) == 0.0
    assert abs(c.manipulability([0.3, np.pi / 2]) - 1.0) < 1e-12
    assert abs(c.manipulability([0.0, np.pi / 6]) - 0.5) < 1e-12


def test_manipulability_blocks():
    c = two_link()
    with pytest.raises(ValueError, match="full"):
        c.manipulability([0.1, 0.2], block="full")
    # position block is rank-deficient for a planar chain: w = 0 always
    assert c.manipulability([0.1, 1.0], block="position") < 1e-9
    arm = reference_arm()
    q = arm.sample_q(np.random.default_rng(4))
    assert arm.manipulability(q) >= 0.0
    assert arm.manipulability(q, block="position") >= 0.0
    with pytest.raises(ValueError, match="block"):
        arm.manipulability(q, block="bogus")


def test_manipulability_continuity():
    arm = reference_arm()
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = arm.sample_q(rng)
        d = rng.normal(size=arm.n)
        d *= 1e-5 / np.linalg.norm(d)
        assert abs(arm.manipulability(q) - arm.manipulability(q + d)) < 1e-3


def test_gravity_single_link():
    one = Chain(axes=[[0, 1, 0]], origins=[[1, 0, 0]], masses=[1.0],
                coms=[[0.5, 0.0, 0.0]], gravity=(0, 0, -9.81))
    assert abs(abs(one.gravity_torques([0.0])[0]) - 4.905) < 1e-9
    assert abs(one.gravity_torques([np.pi / 2])[0]) < 1e-9
    assert abs(one.gravity_torques([-np.pi / 2])[0]) < 1e-9


def test_gravity_zero_vector():
    arm = reference_arm(gravity=(0, 0, 0))
    q = arm.sample_q(np.random.default_rng(6))
    assert np.allclose(arm.gravity_torques(q), 0.0)


@pytest.mark.parametrize("chain", [reference_arm()], ids=["reference-arm"])
def test_gravity_matches_potential_energy_gradient(chain):
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(20):
        q = chain.sample_q(rng)
        tau = chain.gravity_torques(q)
        for i in range(chain.n):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd = (chain.potential_energy(qp) - chain.potential_energy(qm)) / (2 * h)
            denom = max(abs(fd), 1e-9)
            assert abs(tau[i] - fd) / denom < 1e-4


def test_limits_and_sampling():
    c = Chain(axes=[[0, 0, 1]], origins=[[1, 0, 0]], limits=[[-1.0, 2.0]])
    assert c.within_limits([0.5])
    assert not c.within_limits([2.5])
    rng = np.random.default_rng(8)
    qs = c.sample_q(rng, size=1000)
    assert qs.shape == (1000, 1)
    assert (qs[:, 0] >= -1.0).all() and (qs[:, 0] <= 2.0).all()
    with pytest.raises(ValueError, match="min < max"):
        Chain(axes=[[0, 0, 1]], origins=[[1, 0, 0]], limits=[[1.0, 1.0]])


def test_chain_dict_roundtrip():
    arm = reference_arm()
    d = json.loads(json.dumps(arm.to_dict()))
    back = Chain.from_dict(d)
    rng = np.random.default_rng(9)
    q = arm.sample_q(rng)
    assert np.allclose(back.fk(q).as_matrix(), arm.fk(q).as_matrix(), atol=1e-15)
    assert np.allclose(back.gravity_torques(q), arm.gravity_torques(q), atol=1e-15)


def test_reference_arm_geometry():
    arm = reference_arm()
    assert arm.n == 6
    assert np.allclose(arm.fk(np.zeros(6)).trans, [0.65, 0.0, 0.10], atol=1e-12)


def test_joint_state_validation():
    js = JointState.zero(3)
    assert js.q.shape == (3,)
    with pytest.raises(ValueError, match="length"):
        JointState(np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError, match="finite"):
        JointState(np.array([np.inf]), np.zeros(1), np.zeros(1))
