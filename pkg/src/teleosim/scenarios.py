"""Scenario library: worlds, start postures, scripted drivers, goals.

Each scenario bundles a world map, arm start configurations, a scripted
command source seeded per episode, and a success predicate.  Scripts model
an operator coarsely (constant intent plus seeded jitter); the session loop
is what turns rendered cues into command attenuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import Chain, reference_arm
from .world import World, box

# reference-arm segment lengths used by the closed-form reach posture
_L_UPPER = 0.28
_FORE_A = 0.32       # elbow -> wrist-bend joint, along the forearm
_FORE_B = 0.05       # wrist-bend joint -> end effector
_SHOULDER_LIFT = 0.10

_median_cache: dict[bytes, float] = {}


@dataclass
class WholeBodyAction:
    """One tick of operator intent: base twist plus dual-arm joint targets."""

    base_twist: np.ndarray
    q_left: np.ndarray
    q_right: np.ndarray
    grippers: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.base_twist = np.asarray(self.base_twist, dtype=float)
        self.q_left = np.asarray(self.q_left, dtype=float)
        self.q_right = np.asarray(self.q_right, dtype=float)
        self.grippers = np.asarray(self.grippers, dtype=float)
        if self.base_twist.shape != (3,):
            raise ValueError("base twist must be (vx, vy, omega)")
        if self.q_left.shape != self.q_right.shape or self.q_left.ndim != 1:
            raise ValueError("arm targets must be equal-length vectors")
        if self.grippers.shape != (2,):
            raise ValueError("grippers must be two scalars")
        ok = (np.isfinite(self.base_twist).all()
              and np.isfinite(self.q_left).all()
              and np.isfinite(self.q_right).all()
              and np.isfinite(self.grippers).all())
        if not ok:
            raise ValueError("action entries must be finite")
        self.grippers = np.clip(self.grippers, 0.0, 1.0)

    @classmethod
    def hold(cls, q_left, q_right):
        return cls(np.zeros(3), np.array(q_left), np.array(q_right))

    def vector(self):
        """Flat layout: base velocities then stacked arm targets, 2n + 3."""
        return np.concatenate([self.base_twist, self.q_left, self.q_right])

    def to_dict(self):
        return {
            "base_twist": self.base_twist.tolist(),
            "q_left": self.q_left.tolist(),
            "q_right": self.q_right.tolist(),
            "grippers": self.grippers.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["base_twist"]), np.array(d["q_left"]),
                   np.array(d["q_right"]), np.array(d["grippers"]))


def reach_posture(goal_world, base_pose, mount, wrist_bend=0.4):
    """Joint targets pointing the arm at a world-frame point.

    Yaw aims the shoulder; the shoulder/elbow pair comes from the planar
    two-segment closed form with the bent wrist folded into an effective
    distal segment.  Unreachable goals clamp to a straight stretch toward
    the target, which is exactly the degraded posture guidance exists to
    relieve.
    """
    goal_world = np.asarray(goal_world, dtype=float)
    bx, by, theta = base_pose
    c, s = np.cos(theta), np.sin(theta)
    dx, dy = goal_world[0] - bx, goal_world[1] - by
    d = np.array([c * dx + s * dy, -s * dx + c * dy, goal_world[2]]) - mount

    yaw = np.arctan2(d[1], d[0])
    x = np.hypot(d[0], d[1])
    y = -(d[2] - _SHOULDER_LIFT)

    l2 = np.hypot(_FORE_A + _FORE_B * np.cos(wrist_bend),
                  _FORE_B * np.sin(wrist_bend))
    delta = np.arctan2(_FORE_B * np.sin(wrist_bend),
                       _FORE_A + _FORE_B * np.cos(wrist_bend))
    r2 = x * x + y * y
    c2 = (r2 - _L_UPPER ** 2 - l2 ** 2) / (2.0 * _L_UPPER * l2)
    elbow = np.arccos(np.clip(c2, -1.0, 1.0))
    shoulder = (np.arctan2(y, x)
                - np.arctan2(l2 * np.sin(elbow), _L_UPPER + l2 * np.cos(elbow)))
    return np.array([yaw, shoulder, elbow - delta, 0.0, wrist_bend, 0.0])


class ScriptedOperator:
    """Deterministic command source; yields one action per tick.

    The session loop treats compliant operators as yielding to rendered
    cues (command attenuation); a human behind the bridge is not compliant
    in this modeled sense.
    """

    compliant = True

    def __init__(self, scenario: "Scenario", seed=0):
        self.scenario = scenario
        self.rng = np.random.default_rng(seed)
        self.cues = None

    def next_command(self, tick, world, arm_states):
        sc = self.scenario
        if tick >= sc.max_ticks:
            return None
        q_left, q_right = sc.q0[0].copy(), sc.q0[1].copy()
        if sc.script == "hold":
            twist = np.zeros(3)
        elif sc.script == "drive":
            twist = np.array([
                sc.drive_speed + sc.twist_noise * self.rng.standard_normal(),
                0.5 * sc.twist_noise * self.rng.standard_normal(),
                0.5 * sc.twist_noise * self.rng.standard_normal(),
            ])
        elif sc.script == "reach":
            twist = sc.twist_noise * self.rng.standard_normal(3)
            target = reach_posture(sc.goal_world, world.base_pose,
                                   world.arm_mounts[sc.reach_arm].trans,
                                   sc.wrist_bend)
            if sc.reach_arm == 0:
                q_left = target
            else:
                q_right = target
        else:
            raise ValueError(f"unknown script {sc.script!r}")
        return WholeBodyAction(twist, q_left, q_right)

    def deliver(self, cues):
        self.cues = cues


@dataclass
class Scenario:
    name: str
    world: World
    chain: Chain
    q0: np.ndarray                  # (2, n) start joints, left then right
    script: str = "hold"
    drive_speed: float = 0.25
    twist_noise: float = 0.05
    goal_world: np.ndarray | None = None
    goal_tol: float = 0.1
    reach_arm: int = 1
    wrist_bend: float = 0.4
    max_ticks: int = 400
    collision_budget: int = 0
    guidance_overrides: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    manip_median: float = field(default=0.0)

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float)
        if self.q0.shape != (2, self.chain.n):
            raise ValueError("q0 must hold one start vector per arm")
        if self.goal_world is not None:
            self.goal_world = np.asarray(self.goal_world, dtype=float)
        if self.manip_median == 0.0:
            self.manip_median = _chain_manip_median(self.chain)

    def make_operator(self, seed=0):
        return ScriptedOperator(self, seed)

    def ee_world(self, world, q, arm):
        """World-frame end-effector position of one arm."""
        p_base = world.arm_mounts[arm].trans + self.chain.fk(q).trans
        bx, by, theta = world.base_pose
        c, s = np.cos(theta), np.sin(theta)
        return np.array([bx + c * p_base[0] - s * p_base[1],
                         by + s * p_base[0] + c * p_base[1],
                         p_base[2]])

    def success_now(self, world, arm_states):
        if self.goal_world is None:
            return False
        if self.script == "reach":
            q = arm_states[self.reach_arm].q
            ee = self.ee_world(world, q, self.reach_arm)
            return bool(np.linalg.norm(ee - self.goal_world) < self.goal_tol)
        # drive goals compare base position only
        return bool(np.linalg.norm(world.base_pose[:2] - self.goal_world[:2])
                    < self.goal_tol)

    def success_rule(self, n_coll, reached):
        return bool(reached and n_coll <= self.collision_budget)

    def to_dict(self):
        return {"name": self.name, "overrides": _jsonable(self.overrides)}

    @classmethod
    def from_dict(cls, d):
        return make_scenario(d["name"], **d.get("overrides", {}))


def _jsonable(d):
    out = {}
    for k, v in d.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def _chain_manip_median(chain, n_samples=2000, seed=0):
    key = (chain.axes.tobytes()
           + b"".join(o.flatten().tobytes() for o in chain.origins))
    if key not in _median_cache:
        from .manipfield import batch_manipulability
        rng = np.random.default_rng(seed)
        qs = chain.sample_q(rng, n_samples)
        _median_cache[key] = float(np.median(batch_manipulability(chain, qs)))
    return _median_cache[key]


_HOME = np.array([0.0, 0.6, -1.2, 0.0, 0.6, 0.0])

SCENARIO_NAMES = ("wall_approach", "reach_limited", "corridor", "doorway")


def make_scenario(name, **overrides):
    """Build a library scenario; keyword overrides replace any field."""
    chain = reference_arm()
    if name == "wall_approach":
        base = dict(
            world=World(obstacles=[box(0.6, -2.0, 0.7, 2.0)]),
            script="drive", drive_speed=0.25, twist_noise=0.05,
            max_ticks=400, collision_budget=0,
        )
    elif name == "reach_limited":
        base = dict(
            world=World(),
            script="reach", twist_noise=0.01,
            goal_world=np.array([1.05, 0.25, 0.45]),
            goal_tol=0.1, reach_arm=1,
            max_ticks=600, collision_budget=0,
            guidance_overrides={"k_guide": 6.0},
        )
    elif name == "corridor":
        base = dict(
            world=World(obstacles=[box(0.0, 0.45, 3.0, 0.55),
                                   box(0.0, -0.55, 3.0, -0.45)],
                        base_pose=(-0.5, 0.0, 0.0), base_radius=0.3),
            script="drive", drive_speed=0.25, twist_noise=0.03,
            goal_world=np.array([2.8, 0.0, 0.0]), goal_tol=0.2,
            max_ticks=800, collision_budget=2,
        )
    elif name == "doorway":
        base = dict(
            world=World(obstacles=[box(1.5, 0.35, 1.6, 2.0),
                                   box(1.5, -2.0, 1.6, -0.35)]),
            script="drive", drive_speed=0.25, twist_noise=0.04,
            goal_world=np.array([2.5, 0.0, 0.0]), goal_tol=0.2,
            max_ticks=700, collision_budget=1,
        )
    else:
        raise ValueError(f"unknown scenario {name!r}")
    base.update(overrides)
    if "goal_world" in base and base["goal_world"] is not None:
        base["goal_world"] = np.asarray(base["goal_world"], dtype=float)
    q0 = base.pop("q0", np.stack([_HOME, _HOME]))
    return Scenario(name=name, chain=chain, q0=q0, overrides=overrides,
                    **base)
