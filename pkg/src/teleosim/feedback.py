"""Feedback laws rendered at the operator station: repulsive-potential pedal
resistance, joint-space impedance, and gravity-compensated force reflection.

The repulsive potential over lidar distance r is

    phi(r) = 1/2 * (1/(r - r0) - 1/(r_far - r0))^2      for r0 < r < r_far
    phi(r) = 0                                          for r >= r_far

and the rendered resistance magnitude is k_phi * |d phi / d r|, clamped to
f_max at and below the robot surface radius r0.  Pedal resistance is
direction-conditioned: only beams in the commanded motion half-plane repel,
and only the force component opposing the command survives, so resistance
can never push the robot anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# control defaults for the 6-DoF arms
FOLLOWER_KP = 10.0
LEADER_KP = (0.05, 0.1, 0.1, 0.05, 0.1, 0.1)
FOLLOWER_KD = (0.1, 0.1, 0.01, 0.1, 0.1, 0.1)
LEADER_KD = 0.8
FOLLOWER_TORQUE_SCALE = 1.0
LEADER_TORQUE_SCALE = (0.5, 0.15, 0.6, 0.5, 0.15, 0.6)


@dataclass
class PotentialParams:
    """Repulsive-potential parameters.

    f_max defaults to a large finite guard rather than a haptic-range clamp:
    the pinned potential reaches ~4e3 N well inside the band, so any small
    clamp would flatten the profile and break its strict monotonicity.
    Callers modeling a rendering limit pass their own f_max.
    """

    r0: float = 0.4
    r_far: float = 0.5
    k_phi: float = 1.0
    f_max: float = 1e10

    def __post_init__(self):
        if not (0.0 < self.r0 < self.r_far):
            raise ValueError("need 0 < r0 < r_far")
        if self.k_phi <= 0.0 or self.f_max <= 0.0:
            raise ValueError("k_phi and f_max must be positive")


@dataclass
class PedalCue:
    """Planar force rendered at the virtual pedal, base frame."""

    force_xy: np.ndarray = field(default_factory=lambda: np.zeros(2))
    yaw_torque: float = 0.0
    source: str = "collision"
    active: bool = False
    degenerate: bool = False

    def __post_init__(self):
        self.force_xy = np.asarray(self.force_xy, dtype=float)
        if self.force_xy.shape != (2,) or not np.isfinite(self.force_xy).all():
            raise ValueError("force_xy must be a finite 2-vector")
        if not np.isfinite(self.yaw_torque):
            raise ValueError("yaw_torque must be finite")
        self.yaw_torque = float(self.yaw_torque)
        self.active = bool(self.active)
        self.degenerate = bool(self.degenerate)

    @classmethod
    def inactive(cls, source="collision"):
        return cls(np.zeros(2), 0.0, source, False)


def potential_phi(r, p=PotentialParams()):
    """The potential itself (mostly for plotting and derivative checks)."""
    if r >= p.r_far:
        return 0.0
    if r <= p.r0:
        return np.inf
    inner = 1.0 / (r - p.r0) - 1.0 / (p.r_far - p.r0)
    return 0.5 * inner * inner


def potential_force(r, p=PotentialParams()):
    """Resistance magnitude k_phi * |phi'(r)|; f_max at/below the surface
    radius, zero at/beyond the far radius, strictly decreasing between."""
    if r >= p.r_far:
        return 0.0
    if r <= p.r0:
        return p.f_max
    gap = r - p.r0
    inner = 1.0 / gap - 1.0 / (p.r_far - p.r0)
    return float(min(p.k_phi * inner / (gap * gap), p.f_max))


def _force_array(ranges, p):
    ranges = np.asarray(ranges, dtype=float)
    out = np.zeros_like(ranges)
    band = (ranges > p.r0) & (ranges < p.r_far)
    gap = ranges[band] - p.r0
    inner = 1.0 / gap - 1.0 / (p.r_far - p.r0)
    out[band] = np.minimum(p.k_phi * inner / (gap * gap), p.f_max)
    out[ranges <= p.r0] = p.f_max
    return out


def pedal_resistance(scan, cmd, p=PotentialParams()):
    """Direction-conditioned collision resistance from one lidar scan.

    Beams with direction u satisfying u . d_hat > 0 (the motion half-plane)
    each contribute -force(range) * u; the resultant is projected onto the
    command direction and kept only when it opposes the command.
    """
    if scan is None or getattr(scan, "ranges", np.zeros(0)).size == 0:
        raise ValueError("empty scan")
    v = np.asarray([cmd[0], cmd[1]], dtype=float)
    speed = np.linalg.norm(v)
    if speed == 0.0:
        return PedalCue.inactive()
    d_hat = v / speed
    dirs = scan.beam_directions()
    dots = dirs @ d_hat
    mask = dots > 0.0
    forces = _force_array(scan.ranges, p)
    resultant = -(forces[mask, None] * dirs[mask]).sum(axis=0)
    along = float(resultant @ d_hat)
    if along >= 0.0:
        return PedalCue.inactive()
    force = along * d_hat
    mag = -along
    if mag > p.f_max:
        force *= p.f_max / mag
    return PedalCue(force, 0.0, "collision", True)


@dataclass
class ImpedanceGains:
    kp: np.ndarray
    kd: np.ndarray
    reflection_scale: np.ndarray

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        self.reflection_scale = np.asarray(self.reflection_scale, dtype=float)
        n = self.kp.shape[0]
        if self.kd.shape != (n,) or self.reflection_scale.shape != (n,):
            raise ValueError("kp, kd, reflection_scale must share one length")
        if (self.kp < 0).any() or (self.kd < 0).any():
            raise ValueError("gains must be nonnegative")
        if (self.reflection_scale < 0).any() or (self.reflection_scale > 1).any():
            raise ValueError("reflection scales must lie in [0, 1]")

    @property
    def n(self):
        return self.kp.shape[0]


def follower_gains(n=6):
    """Follower-arm defaults; the tabulated per-joint vectors are 6-long."""
    if n != 6:
        raise ValueError("tabulated follower gains are for 6-DoF arms")
    return ImpedanceGains(np.full(n, FOLLOWER_KP), np.array(FOLLOWER_KD),
                          np.full(n, FOLLOWER_TORQUE_SCALE))


def leader_gains(n=6):
    if n != 6:
        raise ValueError("tabulated leader gains are for 6-DoF arms")
    return ImpedanceGains(np.array(LEADER_KP), np.full(n, LEADER_KD),
                          np.array(LEADER_TORQUE_SCALE))


def impedance_torque(gains, measured, desired, tau_ff):
    """Per-joint impedance law: kp*(q_des - q) + kd*(qd_des - qd) + tau_ff."""
    tau_ff = np.asarray(tau_ff, dtype=float)
    n = gains.n
    if measured.q.shape != (n,) or desired.q.shape != (n,) or tau_ff.shape != (n,):
        raise ValueError("gain, state, and feedforward lengths must agree")
    return (gains.kp * (desired.q - measured.q)
            + gains.kd * (desired.qdot - measured.qdot) + tau_ff)


def reflection_feedforward(tau_fol, q_fol, q_lead, s, chain):
    """Leader feedforward: reflected follower interaction torque plus leader
    gravity compensation,  -(tau_fol - g_hat(q_fol)) * s + g_hat(q_lead)."""
    tau_fol = np.asarray(tau_fol, dtype=float)
    s = np.asarray(s, dtype=float)
    n = chain.n
    if tau_fol.shape != (n,) or s.shape != (n,):
        raise ValueError("torque and scale lengths must match the chain")
    g_fol = chain.gravity_torques(q_fol)
    g_lead = chain.gravity_torques(q_lead)
    return -(tau_fol - g_fol) * s + g_lead


def mix_cues(cues, f_max):
    """Sum simultaneously active pedal cues, clamp, tag source mixed."""
    active = [c for c in cues if c.active]
    if not active:
        return PedalCue.inactive()
    if len(active) == 1:
        return active[0]
    force = np.sum([c.force_xy for c in active], axis=0)
    mag = np.linalg.norm(force)
    if mag > f_max:
        force *= f_max / mag
    return PedalCue(force, sum(c.yaw_torque for c in active), "mixed", True)
