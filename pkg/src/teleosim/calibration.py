"""Hand-eye extrinsic calibration from multi-configuration pose observations.

Two constant transforms are estimated: gripper->wrist-camera (X_w) and
base->head-camera (X_h).  Calibration configuration i views one fiducial tag
from both cameras, so the two base-frame chains must agree:

    base_to_gripper_i . X_w . wrist_tag_i  ==  X_h . head_tag_i

The per-sample error transform E_i = (lhs)^-1 . (rhs) maps to the twist
residual log(E_i)^vee, and the stacked squared norm is minimized with
Levenberg-Marquardt over left-multiplicative twist updates X <- exp(d) . X.
The Jacobian uses central finite differences; the unknown is 12-dimensional
(or 18 in the shared-head-camera two-arm mode), so analytic right-Jacobians
buy nothing worth auditing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .se3 import Pose

FD_STEP = 1e-7
MIN_SAMPLES = 3
CONFIDENCE_FLOOR = 0.5
DIVERGENCE_PATIENCE = 10
# squared-norm objective at float rounding noise; below this the relative
# decrease test only measures jitter
COST_FLOOR = 1e-24


@dataclass
class CalibSample:
    """One calibration configuration: FK pose plus both tag observations."""

    base_to_gripper: Pose
    head_tag: Pose
    wrist_tag: Pose
    confidence: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.confidence):
            raise ValueError("confidence must be finite")


@dataclass
class CalibEstimate:
    gripper_to_wristcam: Pose
    base_to_headcam: Pose
    final_cost: float
    iterations: int
    converged: bool
    per_sample_residuals: list = field(default_factory=list)


def residual(sample, x_w, x_h):
    """Twist residual log(E_i)^vee; zero iff the two chains agree exactly.

    Raises ValueError when the error rotation sits on the log branch cut;
    the solver catches this and down-weights the sample for that evaluation.
    """
    lhs = sample.base_to_gripper.compose(x_w).compose(sample.wrist_tag)
    rhs = x_h.compose(sample.head_tag)
    return se3.log_map(lhs.inverse().compose(rhs))


def _stacked_residual(samples, poses, pose_index_pairs):
    """Residuals for all samples; branch-cut samples contribute zeros."""
    out = np.zeros(6 * len(samples))
    for k, (sample, (iw, ih)) in enumerate(zip(samples, pose_index_pairs)):
        try:
            out[6 * k:6 * k + 6] = residual(sample, poses[iw], poses[ih])
        except ValueError:
            pass
    return out


def _fd_jacobian(res_fn, poses):
    base = res_fn(poses)
    jac = np.zeros((base.shape[0], 6 * len(poses)))
    for p in range(len(poses)):
        for d in range(6):
            delta = np.zeros(6)
            delta[d] = FD_STEP
            plus = list(poses)
            minus = list(poses)
            plus[p] = se3.exp_map(delta).compose(poses[p])
            minus[p] = se3.exp_map(-delta).compose(poses[p])
            jac[:, 6 * p + d] = (res_fn(plus) - res_fn(minus)) / (2.0 * FD_STEP)
    return jac


def _levenberg_marquardt(res_fn, poses, max_iterations=100, tol=1e-10):
    """Minimize ||res_fn(poses)||^2; returns (poses, cost, iters, converged)."""
    poses = list(poses)
    r = res_fn(poses)
    cost = float(r @ r)
    lam = 1e-3
    rejects_in_a_row = 0
    converged = cost < COST_FLOOR
    iteration = 0
    while not converged and iteration < max_iterations:
        iteration += 1
        jac = _fd_jacobian(res_fn, poses)
        gram = jac.T @ jac
        rhs = -jac.T @ r
        try:
            step = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), rhs)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        candidate = [
            se3.exp_map(step[6 * p:6 * p + 6]).compose(poses[p])
            for p in range(len(poses))
        ]
        r_new = res_fn(candidate)
        cost_new = float(r_new @ r_new)
        if cost_new <= cost:
            rel_decrease = (cost - cost_new) / max(cost, 1e-300)
            poses, r, cost = candidate, r_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            rejects_in_a_row = 0
            if rel_decrease < tol or cost < COST_FLOOR:
                converged = True
                break
        else:
            lam *= 10.0
            rejects_in_a_row += 1
            if rejects_in_a_row >= DIVERGENCE_PATIENCE:
                break
    return poses, cost, iteration, converged


def _filter_samples(samples):
    kept = [s for s in samples if s.confidence >= CONFIDENCE_FLOOR]
    if len(kept) < MIN_SAMPLES:
        raise ValueError(
            f"need at least {MIN_SAMPLES} samples with confidence >= "
            f"{CONFIDENCE_FLOOR}, got {len(kept)}"
        )
    _warn_if_unobservable(kept)
    return kept


def _warn_if_unobservable(samples):
    rot0 = samples[0].base_to_gripper.rot
    for s in samples[1:]:
        rel = s.base_to_gripper.rot @ rot0.T
        angle = np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
        if angle > 1e-8:
            return
    warnings.warn(
        "calibration configurations differ only by translation; extrinsic "
        "rotations are unobservable", stacklevel=3,
    )


def solve_extrinsics(samples, init_w, init_h, max_iterations=100, tol=1e-10):
    """Estimate (gripper_to_wristcam, base_to_headcam) for one arm."""
    kept = _filter_samples(samples)
    pairs = [(0, 1)] * len(kept)

    def res_fn(poses):
        return _stacked_residual(kept, poses, pairs)

    poses, cost, iters, converged = _levenberg_marquardt(
        res_fn, [init_w, init_h], max_iterations=max_iterations, tol=tol)
    per_sample = [
        float(np.linalg.norm(residual(s, poses[0], poses[1]))) for s in kept
    ]
    return CalibEstimate(
        gripper_to_wristcam=poses[0],
        base_to_headcam=poses[1],
        final_cost=cost,
        iterations=iters,
        converged=converged,
        per_sample_residuals=per_sample,
    )


@dataclass
class JointCalibEstimate:
    left: CalibEstimate
    right: CalibEstimate
    base_to_headcam: Pose
    final_cost: float
    iterations: int
    converged: bool


def solve_extrinsics_joint(samples_left, samples_right, init_w_left,
                           init_w_right, init_h, max_iterations=100, tol=1e-10):
    """Two-arm mode sharing one base->head-camera unknown (18 parameters)."""
    left = _filter_samples(samples_left)
    right = _filter_samples(samples_right)
    both = left + right
    pairs = [(0, 2)] * len(left) + [(1, 2)] * len(right)

    def res_fn(poses):
        return _stacked_residual(both, poses, pairs)

    poses, cost, iters, converged = _levenberg_marquardt(
        res_fn, [init_w_left, init_w_right, init_h],
        max_iterations=max_iterations, tol=tol)

    def arm_estimate(samples, iw):
        per = [float(np.linalg.norm(residual(s, poses[iw], poses[2])))
               for s in samples]
        return CalibEstimate(poses[iw], poses[2], cost, iters, converged, per)

    return JointCalibEstimate(
        left=arm_estimate(left, 0),
        right=arm_estimate(right, 1),
        base_to_headcam=poses[2],
        final_cost=cost,
        iterations=iters,
        converged=converged,
    )


def random_pose(rng, rot_scale=1.2, trans_scale=0.5):
    """Random pose with rotation angle up to rot_scale radians."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.2, rot_scale)
    twist = np.concatenate([axis * angle,
                            rng.uniform(-trans_scale, trans_scale, size=3)])
    return se3.exp_map(twist)


def generate_synthetic_session(truth_w, truth_h, n, noise=(0.0, 0.0), seed=0):
    """Synthetic configurations exactly consistent with the truths at zero
    noise; tag observations perturbed by exp of a small random twist otherwise.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    sigma_rot, sigma_trans = noise
    if sigma_rot < 0 or sigma_trans < 0:
        raise ValueError("noise scales must be nonnegative")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        base_to_gripper = random_pose(rng)
        base_to_tag = random_pose(rng)
        wrist_tag = base_to_gripper.compose(truth_w).inverse().compose(base_to_tag)
        head_tag = truth_h.inverse().compose(base_to_tag)
        if sigma_rot > 0 or sigma_trans > 0:
            wrist_tag = wrist_tag.compose(se3.exp_map(np.concatenate([
                rng.normal(0.0, sigma_rot, size=3),
                rng.normal(0.0, sigma_trans, size=3),
            ])))
            head_tag = head_tag.compose(se3.exp_map(np.concatenate([
                rng.normal(0.0, sigma_rot, size=3),
                rng.normal(0.0, sigma_trans, size=3),
            ])))
        samples.append(CalibSample(base_to_gripper, head_tag, wrist_tag, 1.0))
    return samples


def pose_error(a, b):
    """(rotation angle, translation distance) between two poses."""
    rel = a.inverse().compose(b)
    angle = np.arccos(np.clip((np.trace(rel.rot) - 1.0) / 2.0, -1.0, 1.0))
    return float(angle), float(np.linalg.norm(rel.trans))
