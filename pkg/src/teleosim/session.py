"""The 50 Hz whole-body loop: cues, arm tracking, world stepping, logging.

Per tick: read one operator command (latest wins), evaluate the enabled
feedback laws, deliver cues back to the operator, attenuate compliant
operators' twist by the rendered cue, track arm targets under impedance
control, advance the base, and log.  Arm states are integrated and logged
at 100 Hz, two sub-steps per control tick.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import feedback
from .feedback import ImpedanceGains, PedalCue, PotentialParams, follower_gains
from .kinematics import JointState
from .manipfield import (GuidanceParams, Surrogate, batch_fk_positions,
                         batch_gravity_torques, batch_manipulability,
                         combine_guidance, guidance_cue)
from .scenarios import Scenario, WholeBodyAction
from .world import DT, clamp_twist

SUB_STEPS = 2
SUB_DT = DT / SUB_STEPS
COMPLIANCE_GAIN = 0.05
CONTACT_TORQUE_FLOOR = 0.05
LIDAR_BEAMS = 360
N_SECTORS = 8


@dataclass
class FeedbackFlags:
    pedal_feedback: bool = True
    arm_reflection: bool = True
    guidance: bool = True

    def to_dict(self):
        return {"pedal_feedback": self.pedal_feedback,
                "arm_reflection": self.arm_reflection,
                "guidance": self.guidance}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def none(cls):
        return cls(False, False, False)


@dataclass
class SessionConfig:
    scenario: Scenario
    gains: ImpedanceGains = None
    potential: PotentialParams = field(default_factory=PotentialParams)
    guidance: GuidanceParams = None
    surrogate: Surrogate | None = None
    compliance_gain: float = COMPLIANCE_GAIN
    joint_friction: float = 3.0
    lidar_beams: int = LIDAR_BEAMS

    def __post_init__(self):
        if self.gains is None:
            self.gains = follower_gains(self.scenario.chain.n)
        if self.guidance is None:
            self.guidance = GuidanceParams(**self.scenario.guidance_overrides)

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "gains": {"kp": self.gains.kp.tolist(),
                      "kd": self.gains.kd.tolist(),
                      "reflection_scale": self.gains.reflection_scale.tolist()},
            "potential": {"r0": self.potential.r0,
                          "r_far": self.potential.r_far,
                          "k_phi": self.potential.k_phi,
                          "f_max": self.potential.f_max},
            "guidance": {"alpha": self.guidance.alpha,
                         "k_guide": self.guidance.k_guide,
                         "manip_threshold": self.guidance.manip_threshold,
                         "stretch_radius": self.guidance.stretch_radius},
            "surrogate": self.surrogate.to_dict() if self.surrogate else None,
            "compliance_gain": self.compliance_gain,
            "joint_friction": self.joint_friction,
            "lidar_beams": self.lidar_beams,
        }

    @classmethod
    def from_dict(cls, d):
        g = d["gains"]
        return cls(
            scenario=Scenario.from_dict(d["scenario"]),
            gains=ImpedanceGains(np.array(g["kp"]), np.array(g["kd"]),
                                 np.array(g["reflection_scale"])),
            potential=PotentialParams(**d["potential"]),
            guidance=GuidanceParams(**d["guidance"]),
            surrogate=(Surrogate.from_dict(d["surrogate"])
                       if d.get("surrogate") else None),
            compliance_gain=d.get("compliance_gain", COMPLIANCE_GAIN),
            joint_friction=d.get("joint_friction", 3.0),
            lidar_beams=d.get("lidar_beams", LIDAR_BEAMS),
        )


def _cue_dict(cue: PedalCue):
    return {"force_xy": cue.force_xy.tolist(), "yaw_torque": cue.yaw_torque,
            "source": cue.source, "active": cue.active,
            "degenerate": cue.degenerate}


def _cue_from_dict(d):
    cue = PedalCue(np.array(d["force_xy"]), d["yaw_torque"], d["source"],
                   d["active"])
    cue.degenerate = d["degenerate"]
    return cue


@dataclass
class TickRecord:
    tick: int
    time: float
    base_pose: np.ndarray
    left: JointState
    right: JointState
    action: WholeBodyAction
    commanded_twist: np.ndarray
    scan_sectors: np.ndarray
    cues: dict
    manip: np.ndarray
    events: int
    substates: list
    arm_reflection: np.ndarray | None = None

    def to_dict(self):
        return {
            "tick": self.tick,
            "time": self.time,
            "base_pose": self.base_pose.tolist(),
            "q": [self.left.q.tolist(), self.right.q.tolist()],
            "qd": [self.left.qdot.tolist(), self.right.qdot.tolist()],
            "tau": [self.left.tau.tolist(), self.right.tau.tolist()],
            "action": self.action.to_dict(),
            "commanded_twist": self.commanded_twist.tolist(),
            "scan_sectors": self.scan_sectors.tolist(),
            "cues": {k: _cue_dict(v) for k, v in self.cues.items()},
            "manip": self.manip.tolist(),
            "events": self.events,
            "substates": [
                {"time": t, "q": [ql.tolist(), qr.tolist()],
                 "qd": [dl.tolist(), dr.tolist()]}
                for (t, ql, dl, qr, dr) in self.substates
            ],
            "arm_reflection": (None if self.arm_reflection is None
                               else self.arm_reflection.tolist()),
        }

    @classmethod
    def from_dict(cls, d):
        qs, qds, taus = d["q"], d["qd"], d["tau"]
        return cls(
            tick=d["tick"], time=d["time"],
            base_pose=np.array(d["base_pose"]),
            left=JointState(np.array(qs[0]), np.array(qds[0]),
                            np.array(taus[0])),
            right=JointState(np.array(qs[1]), np.array(qds[1]),
                             np.array(taus[1])),
            action=WholeBodyAction.from_dict(d["action"]),
            commanded_twist=np.array(d["commanded_twist"]),
            scan_sectors=np.array(d["scan_sectors"]),
            cues={k: _cue_from_dict(v) for k, v in d["cues"].items()},
            manip=np.array(d["manip"]),
            events=d["events"],
            substates=[
                (s["time"], np.array(s["q"][0]), np.array(s["qd"][0]),
                 np.array(s["q"][1]), np.array(s["qd"][1]))
                for s in d["substates"]
            ],
            arm_reflection=(None if d["arm_reflection"] is None
                            else np.array(d["arm_reflection"])),
        )


@dataclass
class EpisodeLog:
    ticks: list
    metadata: dict
    dt: float = DT
    manip_median: float = 0.0

    def times(self):
        return np.array([r.time for r in self.ticks])

    def to_dict(self):
        return {"metadata": self.metadata, "dt": self.dt,
                "manip_median": self.manip_median,
                "ticks": [r.to_dict() for r in self.ticks]}

    @classmethod
    def from_dict(cls, d):
        return cls(ticks=[TickRecord.from_dict(r) for r in d["ticks"]],
                   metadata=d["metadata"], dt=d["dt"],
                   manip_median=d["manip_median"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class EpisodeMetrics:
    success: bool
    n_coll: int
    duration: float
    r_low: float
    sigma_tor: float
    energy: float

    def __post_init__(self):
        if not 0.0 <= self.r_low <= 1.0:
            raise ValueError("r_low is a fraction")
        if min(self.n_coll, self.duration, self.sigma_tor, self.energy) < 0:
            raise ValueError("metrics must be nonnegative")

    def to_dict(self):
        return {"success": self.success, "n_coll": self.n_coll,
                "duration": self.duration, "r_low": self.r_low,
                "sigma_tor": self.sigma_tor, "energy": self.energy}


class QueueOperator:
    """Command source fed from outside the loop (the bridge).

    Commands arrive through an ordered queue; the loop consumes at most one
    per tick and later pushes win.  The last command holds until replaced.
    Closing the queue ends the episode with a timeout status.
    """

    compliant = False

    def __init__(self, initial: WholeBodyAction):
        self._pending = deque()
        self._last = initial
        self._closed = False
        self.cues = None
        self.applied_tick = -1

    def push(self, action: WholeBodyAction):
        self._pending.append(action)

    def close(self):
        self._closed = True

    def next_command(self, tick, world, arm_states):
        consumed = False
        while self._pending:
            self._last = self._pending.popleft()
            consumed = True
        if self._closed:
            return None
        if consumed:
            self.applied_tick = tick
        return self._last

    def deliver(self, cues):
        self.cues = cues


def _sector_digest(ranges, n_sectors=N_SECTORS):
    m = ranges.shape[0]
    edges = np.linspace(0, m, n_sectors + 1).astype(int)
    return np.array([ranges[a:b].min() for a, b in zip(edges[:-1], edges[1:])])


def run_episode(config: SessionConfig, operator=None,
                flags: FeedbackFlags | None = None, seed=0, on_tick=None):
    """Run one scripted or externally driven episode and return its log.

    `on_tick`, when given, receives each TickRecord as it is appended along
    with the tick's full lidar scan (which the record itself only digests);
    the bridge uses it for pacing and telemetry without touching the loop.
    """
    flags = flags if flags is not None else FeedbackFlags()
    sc = config.scenario
    chain = sc.chain
    n = chain.n
    world = sc.world.copy()
    world.time = 0.0
    if operator is None:
        operator = sc.make_operator(seed)

    arms = [JointState(sc.q0[0].copy(), np.zeros(n), np.zeros(n)),
            JointState(sc.q0[1].copy(), np.zeros(n), np.zeros(n))]
    gains = config.gains
    friction = config.joint_friction
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]

    ticks = []
    status = "running"
    for tick in range(sc.max_ticks):
        action = operator.next_command(tick, world, arms)
        if action is None:
            status = "timeout"
            break
        twist = clamp_twist(action.base_twist)
        targets = [np.clip(action.q_left, lo, hi),
                   np.clip(action.q_right, lo, hi)]
        action = WholeBodyAction(twist, targets[0], targets[1],
                                 action.grippers)

        scan = world.lidar(config.lidar_beams)
        if flags.pedal_feedback:
            pedal = feedback.pedal_resistance(scan, twist, config.potential)
        else:
            pedal = PedalCue.inactive()
        if flags.guidance and config.surrogate is not None:
            ee = batch_fk_positions(chain, np.stack([a.q for a in arms]))
            per_arm = [guidance_cue(ee[a], config.surrogate, config.guidance)
                       for a in range(2)]
            guide = combine_guidance(per_arm, config.guidance)
        else:
            guide = PedalCue.inactive("guidance")
        mixed = feedback.mix_cues([pedal, guide], config.potential.f_max)
        cues = {"pedal": pedal, "guidance": guide, "mixed": mixed}
        operator.deliver(cues)

        if operator.compliant and mixed.active:
            eff = twist.copy()
            eff[:2] += config.compliance_gain * mixed.force_xy
            eff = clamp_twist(eff)
        else:
            eff = twist
        action = WholeBodyAction(eff, targets[0], targets[1], action.grippers)

        events = world.step(eff, DT)

        substates = []
        reflection = np.zeros((2, n)) if flags.arm_reflection else None
        for sub in range(SUB_STEPS):
            t_sub = (tick * SUB_STEPS + sub + 1) * SUB_DT
            g_both = batch_gravity_torques(chain, np.stack([a.q for a in arms]))
            for a, (arm, q_des) in enumerate(zip(arms, targets)):
                g = g_both[a]
                tau = (gains.kp * (q_des - arm.q) - gains.kd * arm.qdot + g)
                qdd = tau - g - friction * arm.qdot
                arm.qdot = arm.qdot + SUB_DT * qdd
                arm.q = arm.q + SUB_DT * arm.qdot
                arm.tau = tau
                if flags.arm_reflection and sub == SUB_STEPS - 1:
                    # virtual leader held at the follower posture: reflected
                    # interaction torque plus leader-side gravity hold
                    reflection[a] = (-(tau - g) * gains.reflection_scale + g)
            substates.append((t_sub, arms[0].q.copy(), arms[0].qdot.copy(),
                              arms[1].q.copy(), arms[1].qdot.copy()))

        manip = batch_manipulability(chain, np.stack([a.q for a in arms]))
        ticks.append(TickRecord(
            tick=tick, time=(tick + 1) * DT,
            base_pose=world.base_pose.copy(),
            left=arms[0].copy(), right=arms[1].copy(),
            action=action, commanded_twist=twist,
            scan_sectors=_sector_digest(scan.ranges),
            cues=cues, manip=manip, events=events,
            substates=substates, arm_reflection=reflection,
        ))
        if on_tick is not None:
            on_tick(ticks[-1], scan)
        if sc.success_now(world, arms):
            status = "success"
            break
    if status == "running":
        status = "completed"

    return EpisodeLog(
        ticks=ticks,
        metadata={"scenario": sc.to_dict(), "flags": flags.to_dict(),
                  "seed": seed, "status": status},
        dt=DT, manip_median=sc.manip_median,
    )


def compute_metrics(log: EpisodeLog, success_rule=None):
    """Summary metrics; the low-manipulability fraction compares the weaker
    arm against the scenario's precomputed median."""
    if not log.ticks:
        raise ValueError("empty episode log")
    n_coll = int(sum(r.events for r in log.ticks))
    duration = float(log.ticks[-1].time)
    manip = np.array([r.manip.min() for r in log.ticks])
    r_low = float(np.mean(manip < log.manip_median))

    tau = np.array([[r.left.tau, r.right.tau] for r in log.ticks])
    qd = np.array([[r.left.qdot, r.right.qdot] for r in log.ticks])
    mags = np.linalg.norm(tau.reshape(len(log.ticks), -1), axis=1)
    contact = np.abs(tau).max(axis=(1, 2)) > CONTACT_TORQUE_FLOOR
    sigma_tor = float(np.std(mags[contact])) if contact.any() else 0.0
    energy = float(np.sum(np.abs(np.einsum("taj,taj->ta", tau, qd))) * log.dt)

    if success_rule is None:
        success = log.metadata.get("status") == "success"
    else:
        success = bool(success_rule(log))
    return EpisodeMetrics(success=success, n_coll=n_coll, duration=duration,
                          r_low=r_low, sigma_tor=sigma_tor, energy=energy)


def export_dataset(logs, path):
    """Write per-tick (observation, action) records as JSONL plus a manifest
    with normalization statistics; returns (n_records, manifest)."""
    logs = list(logs)
    if not logs:
        raise ValueError("no logs to export")
    n = logs[0].ticks[0].left.q.shape[0]
    for log in logs:
        if not log.ticks or log.ticks[0].left.q.shape[0] != n:
            raise ValueError("logs must be nonempty with matching arms")

    records = []
    obs_rows, act_rows = [], []
    for ep, log in enumerate(logs):
        for r in log.ticks:
            obs = {
                "q": np.concatenate([r.left.q, r.right.q]).tolist(),
                "qd": np.concatenate([r.left.qdot, r.right.qdot]).tolist(),
                "tau": np.concatenate([r.left.tau, r.right.tau]).tolist(),
                "base_pose": r.base_pose.tolist(),
                "lidar": r.scan_sectors.tolist(),
            }
            act = r.action.vector()
            records.append({"episode": ep, "tick": r.tick, "obs": obs,
                            "action": act.tolist()})
            obs_rows.append(np.concatenate([obs["q"], obs["qd"], obs["tau"],
                                            obs["base_pose"], obs["lidar"]]))
            act_rows.append(act)

    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

    obs_arr = np.array(obs_rows)
    act_arr = np.array(act_rows)
    manifest = {
        "episodes": len(logs),
        "records": len(records),
        "n_joints": n,
        "action_dim": 2 * n + 3,
        "obs_dim": obs_arr.shape[1],
        "obs_mean": obs_arr.mean(axis=0).tolist(),
        "obs_std": obs_arr.std(axis=0).tolist(),
        "action_mean": act_arr.mean(axis=0).tolist(),
        "action_std": act_arr.std(axis=0).tolist(),
    }
    with open(str(path) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return len(records), manifest


def load_dataset(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
