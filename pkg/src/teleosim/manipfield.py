"""Sampled manipulability fields and a smooth learned surrogate.

The workspace is diced into a coarse voxel grid; random configurations are
pushed through a vectorized forward-kinematics path and each visited cell
keeps the best manipulability seen there.  A small softplus-headed network
is then fit to the known cells so guidance can query a differentiable
field instead of the raw grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .feedback import PedalCue
from .kinematics import Chain
from .nn import MLP, Adam
from .se3 import skew

GRAD_EPS = 1e-9
MIN_TRAIN_POINTS = 1000
_CHUNK = 100_000


# vectorized kinematics (oracle path; cross-checked against the scalar
# chain methods in tests)

def _batch_chain(chain: Chain, qs):
    """One forward sweep for a (N, n) block of configurations.

    Returns joint axes in the base frame (n, N, 3), joint positions
    (n, N, 3), world link centers of mass (n, N, 3), and end-effector
    positions (N, 3).
    """
    qs = np.asarray(qs, dtype=float)
    n = qs.shape[0]
    rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    trans = np.zeros((n, 3))
    axes_w = np.empty((chain.n, n, 3))
    origins_p = np.empty((chain.n, n, 3))
    coms_w = np.empty((chain.n, n, 3))
    eye = np.eye(3)
    for i in range(chain.n):
        axes_w[i] = rot @ chain.axes[i]
        origins_p[i] = trans
        k = skew(chain.axes[i])
        k2 = k @ k
        s = np.sin(qs[:, i])[:, None, None]
        c = (1.0 - np.cos(qs[:, i]))[:, None, None]
        rot = rot @ (eye + s * k + c * k2)
        coms_w[i] = rot @ chain.coms[i] + trans
        origin = chain.origins[i]
        trans = trans + rot @ origin.trans
        rot = rot @ origin.rot
    return axes_w, origins_p, coms_w, trans


def batch_fk_positions(chain: Chain, qs):
    """End-effector positions for a (N, n) block of configurations."""
    return _batch_chain(chain, qs)[3]


def batch_manipulability(chain: Chain, qs, block="auto"):
    """Manipulability for a (N, n) block of configurations."""
    axes_w, origins_p, _, ee = _batch_chain(chain, qs)
    lin = np.cross(axes_w, ee[None, :, :] - origins_p)
    jac = np.concatenate([axes_w, lin], axis=2)  # (n_joints, N, 6)
    jac = np.moveaxis(jac, 0, 2)                 # (N, 6, n_joints)
    blk = chain.block_projection(block) @ jac
    gram = blk @ np.swapaxes(blk, 1, 2)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0))


def batch_gravity_torques(chain: Chain, qs):
    """Static gravity torques for a (N, n) block of configurations.

    Uses tau_i = -sum_{j >= i} m_j g.(w_i x (c_j - p_i)) rewritten through
    the scalar triple product as -(g x w_i).(S_i - M_i p_i) with suffix
    sums S_i of weighted centers of mass and M_i of masses.
    """
    axes_w, origins_p, coms_w, _ = _batch_chain(chain, qs)
    weighted = chain.masses[:, None, None] * coms_w
    s_suffix = np.cumsum(weighted[::-1], axis=0)[::-1]        # (n, N, 3)
    m_suffix = np.cumsum(chain.masses[::-1])[::-1]            # (n,)
    g_cross_w = np.cross(chain.gravity[None, None, :], axes_w)
    lever = s_suffix - m_suffix[:, None, None] * origins_p
    tau = -(g_cross_w * lever).sum(axis=2)                    # (n, N)
    return tau.T


@dataclass
class FieldGrid:
    """Voxelized manipulability samples; NaN marks never-visited cells."""

    bounds: np.ndarray      # (3, 2) axis-aligned box
    resolution: float
    values: np.ndarray      # (nx, ny, nz), NaN where unknown
    counts: np.ndarray      # (nx, ny, nz) samples binned per cell

    @property
    def shape(self):
        return self.values.shape

    @property
    def all_unknown(self):
        return not np.any(self.counts > 0)

    def cell_index(self, point):
        point = np.asarray(point, dtype=float)
        idx = np.floor((point - self.bounds[:, 0]) / self.resolution)
        idx = idx.astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            return None
        return tuple(idx)

    def value_at(self, point):
        idx = self.cell_index(point)
        if idx is None:
            return float("nan")
        return float(self.values[idx])

    def known_points(self):
        """Centers and values of every visited cell: (M, 3), (M,)."""
        mask = self.counts > 0
        ii, jj, kk = np.nonzero(mask)
        centers = np.stack([ii, jj, kk], axis=1) + 0.5
        centers = self.bounds[:, 0] + centers * self.resolution
        return centers, self.values[mask]

    def to_dict(self):
        vals = np.where(np.isnan(self.values), None, self.values)
        return {
            "bounds": self.bounds.tolist(),
            "resolution": self.resolution,
            "values": vals.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        raw = np.array(d["values"], dtype=object)
        values = np.where(raw == None, np.nan, raw).astype(float)  # noqa: E711
        return cls(
            bounds=np.array(d["bounds"], dtype=float),
            resolution=float(d["resolution"]),
            values=values,
            counts=np.array(d["counts"], dtype=int),
        )


def oracle_field(chain, bounds, resolution, n_samples, seed=0, block="auto"):
    """Monte-Carlo manipulability field over an axis-aligned box.

    Cells keep the maximum manipulability of any sample binned into them,
    so for a fixed seed the per-cell values are nondecreasing in n_samples
    (the sample stream is a prefix-stable single draw).
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (3, 2) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("bounds must be (3, 2) with min < max per axis")
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")

    shape = tuple(np.ceil((bounds[:, 1] - bounds[:, 0]) / resolution
                          ).astype(int))
    values = np.full(shape, np.nan)
    counts = np.zeros(shape, dtype=int)
    flat_vals = np.full(int(np.prod(shape)), -np.inf)

    rng = np.random.default_rng(seed)
    qs_all = chain.sample_q(rng, n_samples)

    for start in range(0, n_samples, _CHUNK):
        qs = qs_all[start:start + _CHUNK]
        pos = batch_fk_positions(chain, qs)
        w = batch_manipulability(chain, qs, block)
        idx = np.floor((pos - bounds[:, 0]) / resolution).astype(int)
        ok = np.all((idx >= 0) & (idx < np.array(shape)), axis=1)
        idx = idx[ok]
        flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), shape)
        np.maximum.at(flat_vals, flat, w[ok])
        np.add.at(counts.reshape(-1), flat, 1)

    known = counts.reshape(-1) > 0
    values.reshape(-1)[known] = flat_vals[known]
    grid = FieldGrid(bounds=bounds, resolution=float(resolution),
                     values=values, counts=counts)
    if grid.all_unknown:
        warnings.warn("no samples landed inside the field bounds",
                      stacklevel=2)
    return grid


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite checkpoint."""

    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class Surrogate:
    """Smooth nonnegative field model: normalized input -> MLP -> softplus."""

    net: MLP
    input_mean: np.ndarray
    input_scale: np.ndarray
    val_mse: float = float("nan")

    def eval(self, point):
        point = np.asarray(point, dtype=float)
        z = (point - self.input_mean) / self.input_scale
        out, dz = self.net.input_gradient(z)
        if point.ndim == 1:
            return float(out[0]), dz / self.input_scale
        return out[:, 0], dz / self.input_scale

    def predict(self, points):
        points = np.asarray(points, dtype=float)
        z = (points - self.input_mean) / self.input_scale
        out, _ = self.net.forward(z)
        return out[..., 0]

    def to_dict(self):
        return {
            "net": self.net.to_dict(),
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "val_mse": self.val_mse,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            net=MLP.from_dict(d["net"]),
            input_mean=np.array(d["input_mean"], dtype=float),
            input_scale=np.array(d["input_scale"], dtype=float),
            val_mse=float(d["val_mse"]),
        )


def train_surrogate(data, hidden=(96, 96), steps=6000, batch_size=1024,
                    lr=3e-3, holdout=0.1, seed=0):
    """Fit the surrogate to labeled field points.

    `data` is either a FieldGrid (its known cell centers become the training
    set) or an (X, y) pair.  Ten percent is held out; the final held-out MSE
    is stored on the returned model.  A non-finite loss aborts with the last
    finite checkpoint attached to the raised error.
    """
    if isinstance(data, FieldGrid):
        x, y = data.known_points()
    else:
        x, y = data
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
    if x.shape[0] < MIN_TRAIN_POINTS:
        raise ValueError(
            f"need at least {MIN_TRAIN_POINTS} labeled points, got {x.shape[0]}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(x.shape[0])
    n_val = max(1, int(round(holdout * x.shape[0])))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    mean = x_tr.mean(axis=0)
    scale = x_tr.std(axis=0)
    scale[scale < 1e-9] = 1.0
    z_tr = (x_tr - mean) / scale
    z_val = (x_val - mean) / scale

    net = MLP([x.shape[1], *hidden, 1], activation="tanh",
              out_activation="softplus", seed=seed)
    opt = Adam(net.params_flat().size, lr=lr)
    last_good = net.params_flat()

    n_tr = z_tr.shape[0]
    for step in range(steps):
        # cosine-annealed lr: constant-lr Adam stalls at a minibatch noise
        # floor well above the fit this field allows
        opt.lr = lr * (0.001 + 0.999 * 0.5 * (1.0 + np.cos(np.pi * step / steps)))
        pick = rng.integers(0, n_tr, size=min(batch_size, n_tr))
        xb, yb = z_tr[pick], y_tr[pick]
        pred, cache = net.forward(xb)
        err = pred[:, 0] - yb
        with np.errstate(over="ignore"):
            loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            ckpt = Surrogate(net=net, input_mean=mean, input_scale=scale)
            ckpt.net.set_params_flat(last_good)
            raise TrainingDiverged(
                f"loss became non-finite at step {step}", ckpt)
        last_good = net.params_flat()
        _, grads = net.backward(cache, (2.0 * err / len(err))[:, None])
        net.set_params_flat(opt.step(net.params_flat(),
                                     net.grads_flat(grads)))

    pred_val, _ = net.forward(z_val)
    val_mse = float(np.mean((pred_val[:, 0] - y_val) ** 2))
    return Surrogate(net=net, input_mean=mean, input_scale=scale,
                     val_mse=val_mse)


def eval_surrogate(surrogate, point):
    """(value, gradient) of the learned field at a workspace point."""
    return surrogate.eval(point)


@dataclass
class GuidanceParams:
    alpha: float = 0.5
    k_guide: float = 1.0
    manip_threshold: float = 0.1
    stretch_radius: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.k_guide < 0.0 or self.stretch_radius < 0.0:
            raise ValueError("gains and radii must be nonnegative")


def guidance_cue(point, surrogate, params: GuidanceParams | None = None):
    """Pedal cue steering the base toward better-conditioned workspace.

    Active only when the hand is stretched past the radius horizontally AND
    the learned field reads below the manipulability threshold.  The cue
    direction blends the outward reach direction with the field's ascent
    direction and is projected to the drive plane.
    """
    p = params or GuidanceParams()
    point = np.asarray(point, dtype=float)
    horiz = np.linalg.norm(point[:2])
    if horiz <= p.stretch_radius:
        return PedalCue.inactive("guidance")
    m_hat, grad = eval_surrogate(surrogate, point)
    if m_hat >= p.manip_threshold:
        return PedalCue.inactive("guidance")

    v = p.alpha * point / np.linalg.norm(point)
    gnorm = np.linalg.norm(grad)
    degenerate = gnorm < GRAD_EPS
    if not degenerate:
        v = v + (1.0 - p.alpha) * grad / gnorm
    vh = v[:2]
    vh_norm = np.linalg.norm(vh)
    if vh_norm < 1e-12:
        cue = PedalCue.inactive("guidance")
        cue.degenerate = True
        return cue
    return PedalCue(force_xy=p.k_guide * vh / vh_norm, yaw_torque=0.0,
                    source="guidance", active=True, degenerate=degenerate)


def combine_guidance(cues, params: GuidanceParams | None = None):
    """Merge per-arm guidance cues: sum directions, renormalize to k_guide."""
    p = params or GuidanceParams()
    total = np.zeros(2)
    any_active = False
    degenerate = False
    for cue in cues:
        if cue.active:
            any_active = True
            degenerate = degenerate or cue.degenerate
            total = total + cue.force_xy
    norm = np.linalg.norm(total)
    if not any_active or norm < 1e-12:
        cue = PedalCue.inactive("guidance")
        cue.degenerate = degenerate and any_active
        return cue
    return PedalCue(force_xy=p.k_guide * total / norm, yaw_torque=0.0,
                    source="guidance", active=True, degenerate=degenerate)


def overlay_mask(points, surrogate, threshold):
    """Boolean reachability-quality flags plus raw field values per point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = surrogate.predict(points)
    return values >= threshold, values


_WORKSPACE_BOUNDS = [[-0.9, 0.9], [-0.9, 0.9], [-0.6, 0.9]]
_surrogate_cache: dict[bytes, "Surrogate"] = {}


def default_surrogate(chain, seed=0):
    """Train (once per chain) a surrogate over the standard workspace box.

    Deterministic for a fixed chain and seed; cached at module level so
    repeated episode runs share one model.
    """
    key = (np.concatenate([np.asarray(chain.axes).ravel(),
                           np.asarray(chain.masses)]).tobytes()
           + bytes([seed & 0xFF]))
    if key not in _surrogate_cache:
        grid = oracle_field(chain, _WORKSPACE_BOUNDS, resolution=0.1,
                            n_samples=300_000, seed=seed)
        _surrogate_cache[key] = train_surrogate(grid, steps=2000, seed=seed)
    return _surrogate_cache[key]
