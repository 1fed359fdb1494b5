"""Shared fixtures: the contact-gated synthetic task.

Two modes share one joint posture distribution and differ only in
measured torque; the demonstrated action is the mode's constant. A policy
that reads torque can pick the mode; one that cannot has no signal.
"""

import numpy as np

from teleosim.policy import PolicyObservation, infer_chunk

N_JOINTS = 6
_NQ = 2 * N_JOINTS
_ACT_W = 2 * N_JOINTS + 3
_N_EXTRA = 11

Q_HOME = np.tile([0.0, 0.4, -0.8, 0.0, 0.3, 0.0], 2)
TAU_PATTERN = 3.0 * np.tile([1.0, -1.0], N_JOINTS)
ACTION_SCALE = 0.5


def torque_gated_records(n_episodes_per_mode=8, length=24, seed=0):
    """JSONL-shaped records plus a manifest for the two-mode task."""
    rng = np.random.default_rng(seed)
    records = []
    obs_rows, act_rows = [], []
    ep = 0
    for mode in (1.0, -1.0):
        for _ in range(n_episodes_per_mode):
            for tick in range(length):
                q = Q_HOME + 0.05 * rng.standard_normal(_NQ)
                tau = mode * TAU_PATTERN + 0.1 * rng.standard_normal(_NQ)
                pose = 0.1 * rng.standard_normal(3)
                lidar = 5.0 + 0.1 * rng.standard_normal(8)
                act = mode * ACTION_SCALE * np.ones(_ACT_W)
                records.append({
                    "episode": ep, "tick": tick,
                    "obs": {"q": q.tolist(), "qd": [0.0] * _NQ,
                            "tau": tau.tolist(), "base_pose": pose.tolist(),
                            "lidar": lidar.tolist()},
                    "action": act.tolist(),
                })
                obs_rows.append(np.concatenate([q, np.zeros(_NQ), tau,
                                                pose, lidar]))
                act_rows.append(act)
            ep += 1
    obs = np.array(obs_rows)
    acts = np.array(act_rows)
    manifest = {
        "episodes": ep, "records": len(records), "n_joints": N_JOINTS,
        "action_dim": _ACT_W, "obs_dim": 3 * _NQ + _N_EXTRA,
        "obs_mean": obs.mean(axis=0).tolist(),
        "obs_std": obs.std(axis=0).tolist(),
        "action_mean": acts.mean(axis=0).tolist(),
        "action_std": acts.std(axis=0).tolist(),
    }
    return records, manifest


def mode_accuracy(model, seed=100, n_probes=100, margin=0.1):
    """Fraction of fresh probes whose predicted chunk commits to the right
    mode: the chunk-mean must clear +-margin on the correct side."""
    rng = np.random.default_rng(seed)
    hits = 0
    for i in range(n_probes):
        mode = 1.0 if i % 2 == 0 else -1.0
        obs = PolicyObservation(
            q=Q_HOME + 0.05 * rng.standard_normal(_NQ),
            tau=mode * TAU_PATTERN + 0.1 * rng.standard_normal(_NQ),
            extra=np.concatenate([0.1 * rng.standard_normal(3),
                                  5.0 + 0.1 * rng.standard_normal(8)]),
        )
        chunk = infer_chunk(model, obs)
        if mode * chunk.actions.mean() > margin:
            hits += 1
    return hits / n_probes
