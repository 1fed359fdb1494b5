"""Desk-scale whole-body teleoperation sandbox.

A simulated bimanual mobile manipulator with exact-geometry lidar, pedal
force feedback derived from an artificial potential field, a learned
manipulability field for posture guidance, pose-graph extrinsic calibration,
and a torque-conditioned chunked imitation policy.  Everything is plain
numpy; the only runtime dependency beyond it is ``websockets`` for the
telemetry bridge.

Submodules
----------
se3          rigid transforms and twist coordinates
kinematics   serial-chain FK, Jacobians, manipulability, gravity torques
calibration  hand-eye / pose-graph extrinsic solver
manipfield   sampled manipulability volumes and the MLP surrogate
feedback     pedal resistance and stretch-guidance cue laws
world        2D planar world: obstacles, disc base, lidar, contacts
session      teleoperation loop, metrics, demonstration export
scenarios    scripted operators and A/B scenario library
policy       CVAE chunked action policy with temporal ensembling
nn           minimal manual-backprop MLP toolkit shared by the learners
bridge       WebSocket JSON telemetry/command bridge
cli          ``teleosim`` command-line entry points
"""

__version__ = "0.1.0"

__all__ = [
    "se3",
    "kinematics",
    "calibration",
    "manipfield",
    "feedback",
    "world",
    "session",
    "scenarios",
    "policy",
    "nn",
    "bridge",
    "cli",
]
