"""Serial-chain kinematics: FK, geometric Jacobian, manipulability, gravity.

Frame convention: joint i rotates about ``axes[i]`` expressed in the frame
reached so far, then ``origins[i]`` carries the frame to the next joint, so

    T_ee(q) = Rot(axis_0, q_0) . origins[0] . ... . Rot(axis_{n-1}, q_{n-1}) . origins[n-1]

A 2-link planar chain with unit links and both axes +z therefore maps
q = (0, 0) to (2, 0, 0) and q = (0, pi/2) to (1, 1, 0).

Link j's center of mass ``coms[j]`` is expressed in the frame located at
joint j after its rotation is applied (origin at joint j, axes rotated with
the link), so a COM halfway down a link of length L along +x is (L/2, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .se3 import Pose


@dataclass
class JointState:
    """Position, velocity, and torque of one arm's joints."""

    q: np.ndarray
    qdot: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        n = self.q.shape[0]
        if self.qdot.shape != (n,) or self.tau.shape != (n,):
            raise ValueError("q, qdot, tau must share one length")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qdot).all()
                and np.isfinite(self.tau).all()):
            raise ValueError("joint state entries must be finite")

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self):
        return JointState(self.q.copy(), self.qdot.copy(), self.tau.copy())


class Chain:
    """An n-DoF revolute serial arm.

    Parameters
    ----------
    axes : (n, 3) array-like
        Unit rotation axis of each joint in its local frame.
    origins : sequence of Pose or 3-vectors
        Rigid offset from each joint frame (post-rotation) to the next.
        Plain 3-vectors are taken as pure translations.
    masses, coms : per-link point mass (kg) and its offset in the rotated
        joint frame (m).  Defaults: massless links with COM at the midpoint
        of the origin translation.
    limits : (n, 2) array-like of (min, max) radians, default (-pi, pi).
    gravity : world gravity vector (m/s^2).
    """

    def __init__(self, axes, origins, masses=None, coms=None, limits=None,
                 gravity=(0.0, -0.0, -9.81)):
        axes = np.asarray(axes, dtype=float)
        if axes.ndim != 2 or axes.shape[1] != 3:
            raise ValueError("axes must be an (n, 3) array")
        norms = np.linalg.norm(axes, axis=1)
        if not np.isfinite(norms).all() or (norms == 0.0).any():
            raise ValueError("joint axes must be nonzero finite vectors")
        self.axes = axes / norms[:, None]
        n = self.axes.shape[0]

        if len(origins) != n:
            raise ValueError("need one origin per joint")
        self.origins = []
        for o in origins:
            if isinstance(o, Pose):
                self.origins.append(o)
            else:
                self.origins.append(se3.translation(o))

        self.masses = (np.zeros(n) if masses is None
                       else np.asarray(masses, dtype=float))
        if self.masses.shape != (n,) or (self.masses < 0).any():
            raise ValueError("masses must be n nonnegative scalars")

        if coms is None:
            self.coms = np.array([o.trans / 2.0 for o in self.origins])
        else:
            self.coms = np.asarray(coms, dtype=float)
        if self.coms.shape != (n, 3):
            raise ValueError("coms must be an (n, 3) array")

        if limits is None:
            limits = np.tile([-np.pi, np.pi], (n, 1))
        self.limits = np.asarray(limits, dtype=float)
        if self.limits.shape != (n, 2) or (self.limits[:, 0] >= self.limits[:, 1]).any():
            raise ValueError("limits must be (n, 2) with min < max")

        self.gravity = np.asarray(gravity, dtype=float)
        if self.gravity.shape != (3,) or not np.isfinite(self.gravity).all():
            raise ValueError("gravity must be a finite 3-vector")

    @property
    def n(self):
        return self.axes.shape[0]

    def _check_q(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(f"expected {self.n} joint values, got shape {q.shape}")
        if not np.isfinite(q).all():
            raise ValueError("joint values must be finite")
        return q

    def within_limits(self, q):
        q = self._check_q(q)
        return bool(((q >= self.limits[:, 0]) & (q <= self.limits[:, 1])).all())

    def sample_q(self, rng, size=None):
        """Uniform joint configurations within limits; (n,) or (size, n)."""
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        if size is None:
            return rng.uniform(lo, hi)
        return rng.uniform(lo, hi, size=(size, self.n))

    def frames(self, q):
        """Pre-joint frames [T_0 .. T_{n-1}] plus the end-effector frame.

        T_i is the pose of joint i's frame before its rotation is applied;
        the last entry is the full forward kinematics.
        """
        q = self._check_q(q)
        out = [Pose.identity()]
        cur = out[0]
        for i in range(self.n):
            cur = cur.compose(se3.axis_angle(self.axes[i], q[i])).compose(self.origins[i])
            out.append(cur)
        return out

    def fk(self, q):
        """Base-frame end-effector pose.  Out-of-limit q is evaluated as-is;
        use within_limits to flag it."""
        return self.frames(q)[-1]

    def jacobian(self, q):
        """Geometric Jacobian, 6 x n: rows 0:3 angular, rows 3:6 linear."""
        q = self._check_q(q)
        frames = self.frames(q)
        p_ee = frames[-1].trans
        jac = np.zeros((6, self.n))
        for i in range(self.n):
            w = frames[i].rot @ self.axes[i]
            jac[:3, i] = w
            jac[3:, i] = np.cross(w, p_ee - frames[i].trans)
        return jac

    def _is_planar(self):
        ref = self.axes[0]
        return bool((np.abs(np.abs(self.axes @ ref) - 1.0) < 1e-9).all())

    def _plane_basis(self):
        a = self.axes[0]
        seed = np.zeros(3)
        seed[np.argmin(np.abs(a))] = 1.0
        e1 = seed - (seed @ a) * a
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)
        return e1, e2

    def block_projection(self, block="auto"):
        """Row-projection matrix P (k x 6) selecting the manipulability block.

        ``auto`` picks the full 6-row Jacobian for chains with >= 6 joints,
        a 2-row in-plane linear block for planar chains with fewer, and the
        3-row positional block otherwise.  det(JJ^T) of the full block is
        identically zero for n < 6, which is why the reduced blocks exist.
        """
        if block == "auto":
            if self.n >= 6:
                block = "full"
            elif self._is_planar():
                block = "planar"
            else:
                block = "position"
        if block == "full":
            if self.n < 6:
                raise ValueError("full Jacobian block needs at least 6 joints")
            return np.eye(6)
        if block == "position":
            return np.hstack([np.zeros((3, 3)), np.eye(3)])
        if block == "planar":
            if not self._is_planar():
                raise ValueError("planar block requires all joint axes parallel")
            e1, e2 = self._plane_basis()
            return np.hstack([np.zeros((2, 3)), np.vstack([e1, e2])])
        raise ValueError(f"unknown Jacobian block {block!r}")

    def jacobian_block(self, q, block="auto"):
        """Jacobian rows used by the manipulability measure."""
        return self.block_projection(block) @ self.jacobian(q)

    def manipulability(self, q, block="auto"):
        """Yoshikawa measure sqrt(det(J J^T)) on the selected Jacobian block."""
        j = self.jacobian_block(q, block)
        det = np.linalg.det(j @ j.T)
        return float(np.sqrt(max(det, 0.0)))

    def _world_coms(self, q, frames):
        out = np.zeros((self.n, 3))
        for j in range(self.n):
            rotated = frames[j].compose(se3.axis_angle(self.axes[j], q[j]))
            out[j] = rotated.apply(self.coms[j])
        return out

    def potential_energy(self, q):
        """Total gravitational potential energy, joules (zero reference at
        the base-frame origin)."""
        q = self._check_q(q)
        frames = self.frames(q)
        coms = self._world_coms(q, frames)
        return float(-(self.masses @ (coms @ self.gravity)))

    def gravity_torques(self, q):
        """Static joint torques dU/dq; the torque an actuator must supply to
        hold the arm still against gravity."""
        q = self._check_q(q)
        frames = self.frames(q)
        coms = self._world_coms(q, frames)
        tau = np.zeros(self.n)
        for i in range(self.n):
            w = frames[i].rot @ self.axes[i]
            p = frames[i].trans
            for j in range(i, self.n):
                tau[i] -= self.masses[j] * (self.gravity @ np.cross(w, coms[j] - p))
        return tau

    def to_dict(self):
        return {
            "axes": self.axes.tolist(),
            "origins": [o.flatten().tolist() for o in self.origins],
            "masses": self.masses.tolist(),
            "coms": self.coms.tolist(),
            "limits": self.limits.tolist(),
            "gravity": self.gravity.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            axes=d["axes"],
            origins=[Pose.from_flat(o) for o in d["origins"]],
            masses=d.get("masses"),
            coms=d.get("coms"),
            limits=d.get("limits"),
            gravity=d.get("gravity", (0.0, 0.0, -9.81)),
        )


def planar_two_link(l1=1.0, l2=1.0, gravity=(0.0, 0.0, 0.0)):
    """Unit test workhorse: both joints about +z, links along +x."""
    return Chain(
        axes=[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        origins=[[l1, 0.0, 0.0], [l2, 0.0, 0.0]],
        gravity=gravity,
    )


def reference_arm(gravity=(0.0, 0.0, -9.81)):
    """The bundled 6-DoF demo arm.

    Invented geometry (no hardware counterpart): yaw shoulder, two pitch
    joints, roll-pitch-roll wrist, 0.65 m reach.  Masses are point masses at
    link midpoints.
    """
    return Chain(
        axes=[[0, 0, 1], [0, 1, 0], [0, 1, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0]],
        origins=[
            [0.0, 0.0, 0.10],
            [0.28, 0.0, 0.0],
            [0.22, 0.0, 0.0],
            [0.10, 0.0, 0.0],
            [0.05, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ],
        masses=[0.8, 0.6, 0.4, 0.2, 0.15, 0.1],
        gravity=gravity,
    )
