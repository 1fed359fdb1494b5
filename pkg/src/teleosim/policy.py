"""Torque-augmented chunked behavior cloning at toy scale.

A conditional VAE over whole-body action chunks. The encoder reads
[cls, q, tau, action tokens] plus learned positional and modality
embeddings and emits a diagonal-Gaussian posterior; the decoder
conditions on [z, q, tau, extra-features] tokens and regresses the
H x (2n+3) chunk. Torque enters both sides through its own learned
linear projection, so ablating it removes one token from each sequence.
Inference samples the prior (or takes the zero mean) and smooths
overlapping chunks with exponentially decaying weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .nn import MLP, Adam
from .scenarios import WholeBodyAction

ENSEMBLE_DECAY = 0.1

DEFAULT_HYPER = {
    "horizon": 10,
    "token_dim": 32,
    "latent_dim": 32,
    "width": 128,
    "beta": 10.0,
    "steps": 2000,
    "batch_size": 64,
    "lr": 1e-3,
    "seed": 0,
    "ablate_torque": False,
}


@dataclass
class PolicyObservation:
    """Raw per-tick policy input: stacked joints, stacked torques, and the
    low-dimensional stand-in for image features (base pose + lidar sectors)."""

    q: np.ndarray
    tau: np.ndarray
    extra: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.extra = np.asarray(self.extra, dtype=float)
        if self.q.shape != self.tau.shape or self.q.ndim != 1:
            raise ValueError("q and tau must be equal-length vectors")
        if self.extra.ndim != 1:
            raise ValueError("extra must be a vector")
        if not (np.isfinite(self.q).all() and np.isfinite(self.tau).all()
                and np.isfinite(self.extra).all()):
            raise ValueError("observation entries must be finite")


@dataclass
class ActionChunk:
    """H consecutive whole-body actions, rows laid out (v_base, q_arms)."""

    actions: np.ndarray

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        if self.actions.ndim != 2 or self.actions.shape[0] < 1:
            raise ValueError("chunk must be an H x width matrix with H >= 1")

    @property
    def horizon(self):
        return self.actions.shape[0]

    @property
    def width(self):
        return self.actions.shape[1]


class TrainingAborted(RuntimeError):
    """Non-finite loss; carries the step index and the loss history."""

    def __init__(self, step, history):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.history = history


class PolicyModel:
    """CVAE weights plus the dataset normalization they were fit under."""

    def __init__(self, n_joints=6, n_extra=11, horizon=10, token_dim=32,
                 latent_dim=32, width=128, beta=10.0, ablate_torque=False,
                 seed=0):
        self.n_joints = int(n_joints)
        self.n_extra = int(n_extra)
        self.horizon = int(horizon)
        self.token_dim = int(token_dim)
        self.latent_dim = int(latent_dim)
        self.width = int(width)
        self.beta = float(beta)
        self.ablate_torque = bool(ablate_torque)
        self.history = []

        nq = 2 * self.n_joints
        aw = self.action_width
        d = self.token_dim
        self.n_enc_tokens = (2 if ablate_torque else 3) + self.horizon
        self.n_dec_tokens = (3 if ablate_torque else 4)

        rng = np.random.default_rng(seed)

        def lin(rows, cols):
            return rng.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols))

        self.p = {
            "e_cls": rng.normal(0.0, 0.1, size=d),
            "W_q": lin(nq, d), "b_q": np.zeros(d),
            "W_a": lin(aw, d), "b_a": np.zeros(d),
            "P_enc": rng.normal(0.0, 0.1, size=(self.n_enc_tokens, d)),
            "M_enc": rng.normal(0.0, 0.1, size=(4, d)),
            # modest latent gain at init: the KL term holds the posterior
            # near the prior, so z starts as noise the decoder must gate
            "W_z": 0.1 * lin(self.latent_dim, d), "b_z": np.zeros(d),
            "Wp_q": lin(nq, d), "bp_q": np.zeros(d),
            "W_ext": lin(self.n_extra, d), "b_ext": np.zeros(d),
            "M_dec": rng.normal(0.0, 0.1, size=(4, d)),
        }
        if not ablate_torque:
            # torque tokens are pure linear maps of tau, no bias
            self.p["W_tau"] = lin(nq, d)
            self.p["Wp_tau"] = lin(nq, d)

        self.enc_trunk = MLP([self.n_enc_tokens * d, width,
                              2 * self.latent_dim], seed=seed + 1)
        self.dec_trunk = MLP([self.n_dec_tokens * d, width,
                              self.horizon * aw], seed=seed + 2)

        # identity normalization until a manifest is attached
        self.q_mean = np.zeros(nq)
        self.q_std = np.ones(nq)
        self.tau_mean = np.zeros(nq)
        self.tau_std = np.ones(nq)
        self.extra_mean = np.zeros(self.n_extra)
        self.extra_std = np.ones(self.n_extra)
        self.act_mean = np.zeros(aw)
        self.act_std = np.ones(aw)

    @property
    def action_width(self):
        return 2 * self.n_joints + 3

    def _enc_mods(self):
        head = [0, 1] if self.ablate_torque else [0, 1, 2]
        return head + [3] * self.horizon

    def _dec_mods(self):
        return [0, 1, 3] if self.ablate_torque else [0, 1, 2, 3]

    # --- normalization -------------------------------------------------

    def set_normalization(self, manifest):
        """Adopt dataset statistics (observation layout q|qd|tau|pose|lidar)."""
        nq = 2 * self.n_joints
        om = np.asarray(manifest["obs_mean"], dtype=float)
        os_ = np.asarray(manifest["obs_std"], dtype=float)
        if om.size != 3 * nq + self.n_extra:
            raise ValueError("manifest observation width does not match model")
        self.q_mean, self.q_std = om[:nq], _safe_std(os_[:nq])
        self.tau_mean = om[2 * nq:3 * nq]
        self.tau_std = _safe_std(os_[2 * nq:3 * nq])
        self.extra_mean = om[3 * nq:]
        self.extra_std = _safe_std(os_[3 * nq:])
        self.act_mean = np.asarray(manifest["action_mean"], dtype=float)
        self.act_std = _safe_std(np.asarray(manifest["action_std"],
                                            dtype=float))

    def normalize_obs(self, obs: PolicyObservation):
        return ((obs.q - self.q_mean) / self.q_std,
                (obs.tau - self.tau_mean) / self.tau_std,
                (obs.extra - self.extra_mean) / self.extra_std)

    # --- token assembly (normalized inputs, batched) -------------------

    def _encoder_tokens(self, qn, taun, actn):
        b = qn.shape[0]
        p = self.p
        toks = [np.broadcast_to(p["e_cls"], (b, self.token_dim)),
                qn @ p["W_q"] + p["b_q"]]
        if not self.ablate_torque:
            toks.append(taun @ p["W_tau"])
        flat = actn.reshape(b * self.horizon, -1)
        a_tok = (flat @ p["W_a"] + p["b_a"]).reshape(b, self.horizon, -1)
        x = np.concatenate([np.stack(toks, axis=1), a_tok], axis=1)
        x = x + p["P_enc"][None] + p["M_enc"][self._enc_mods()][None]
        return x

    def _decoder_tokens(self, z, qn, taun, extran):
        p = self.p
        toks = [z @ p["W_z"] + p["b_z"], qn @ p["Wp_q"] + p["bp_q"]]
        if not self.ablate_torque:
            toks.append(taun @ p["Wp_tau"])
        toks.append(extran @ p["W_ext"] + p["b_ext"])
        return np.stack(toks, axis=1) + p["M_dec"][self._dec_mods()][None]

    # --- forward / loss / grads ----------------------------------------

    def _encode(self, qn, taun, actn):
        x = self._encoder_tokens(qn, taun, actn)
        b = qn.shape[0]
        out, cache = self.enc_trunk.forward(x.reshape(b, -1))
        mu, logvar = out[:, :self.latent_dim], out[:, self.latent_dim:]
        return mu, logvar, cache

    def _decode(self, z, qn, taun, extran):
        x = self._decoder_tokens(z, qn, taun, extran)
        b = z.shape[0]
        out, cache = self.dec_trunk.forward(x.reshape(b, -1))
        return out.reshape(b, self.horizon, self.action_width), cache

    def loss_and_grads(self, qn, taun, extran, actn, eps):
        """One training evaluation on normalized batches; returns
        (loss, grad vector aligned with params_flat, l1, kl)."""
        b, h, aw = actn.shape
        d = self.token_dim
        lat = self.latent_dim

        mu, logvar, enc_cache = self._encode(qn, taun, actn)
        sig = np.exp(0.5 * logvar)
        z = mu + sig * eps
        pred, dec_cache = self._decode(z, qn, taun, extran)

        resid = pred - actn
        l1 = float(np.abs(resid).mean())
        kl_terms = 0.5 * (np.exp(logvar) + mu ** 2 - 1.0 - logvar)
        kl = float(kl_terms.sum(axis=1).mean())
        loss = l1 + self.beta * kl

        # decoder trunk and token projections
        dpred = np.sign(resid).reshape(b, -1) / resid.size
        d_dec_in, dec_grads = self.dec_trunk.backward(dec_cache, dpred)
        dtok_d = d_dec_in.reshape(b, self.n_dec_tokens, d)
        g = {k: np.zeros_like(v) for k, v in self.p.items()}
        for i, m in enumerate(self._dec_mods()):
            g["M_dec"][m] += dtok_d[:, i].sum(axis=0)
        g["W_z"] += z.T @ dtok_d[:, 0]
        g["b_z"] += dtok_d[:, 0].sum(axis=0)
        dz = dtok_d[:, 0] @ self.p["W_z"].T
        g["Wp_q"] += qn.T @ dtok_d[:, 1]
        g["bp_q"] += dtok_d[:, 1].sum(axis=0)
        if self.ablate_torque:
            g["W_ext"] += extran.T @ dtok_d[:, 2]
            g["b_ext"] += dtok_d[:, 2].sum(axis=0)
        else:
            g["Wp_tau"] += taun.T @ dtok_d[:, 2]
            g["W_ext"] += extran.T @ dtok_d[:, 3]
            g["b_ext"] += dtok_d[:, 3].sum(axis=0)

        # posterior gradients: reparameterized sample plus KL term
        dmu = dz + self.beta * mu / b
        dlogvar = (dz * eps * 0.5 * sig
                   + self.beta * 0.5 * (np.exp(logvar) - 1.0) / b)
        d_enc_out = np.concatenate([dmu, dlogvar], axis=1)
        d_enc_in, enc_grads = self.enc_trunk.backward(enc_cache, d_enc_out)
        dtok_e = d_enc_in.reshape(b, self.n_enc_tokens, d)
        g["P_enc"] += dtok_e.sum(axis=0)
        for i, m in enumerate(self._enc_mods()):
            g["M_enc"][m] += dtok_e[:, i].sum(axis=0)
        g["e_cls"] += dtok_e[:, 0].sum(axis=0)
        g["W_q"] += qn.T @ dtok_e[:, 1]
        g["b_q"] += dtok_e[:, 1].sum(axis=0)
        first_a = 2
        if not self.ablate_torque:
            g["W_tau"] += taun.T @ dtok_e[:, 2]
            first_a = 3
        da = dtok_e[:, first_a:].reshape(b * h, d)
        g["W_a"] += actn.reshape(b * h, aw).T @ da
        g["b_a"] += da.sum(axis=0)

        flat = np.concatenate(
            [g[k].reshape(-1) for k in self._param_order()]
            + [self.enc_trunk.grads_flat(enc_grads),
               self.dec_trunk.grads_flat(dec_grads)])
        return loss, flat, l1, kl

    # --- flat parameter views ------------------------------------------

    def _param_order(self):
        order = ["e_cls", "W_q", "b_q"]
        if not self.ablate_torque:
            order.append("W_tau")
        order += ["W_a", "b_a", "P_enc", "M_enc",
                  "W_z", "b_z", "Wp_q", "bp_q"]
        if not self.ablate_torque:
            order.append("Wp_tau")
        order += ["W_ext", "b_ext", "M_dec"]
        return order

    def params_flat(self):
        return np.concatenate(
            [self.p[k].reshape(-1) for k in self._param_order()]
            + [self.enc_trunk.params_flat(), self.dec_trunk.params_flat()])

    def set_params_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        i = 0
        for k in self._param_order():
            size = self.p[k].size
            self.p[k] = flat[i:i + size].reshape(self.p[k].shape).copy()
            i += size
        for trunk in (self.enc_trunk, self.dec_trunk):
            size = trunk.params_flat().size
            trunk.set_params_flat(flat[i:i + size])
            i += size
        if i != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    # --- persistence ----------------------------------------------------

    def to_dict(self):
        header = {
            "n_joints": self.n_joints, "n_extra": self.n_extra,
            "horizon": self.horizon, "token_dim": self.token_dim,
            "latent_dim": self.latent_dim, "width": self.width,
            "beta": self.beta, "ablate_torque": self.ablate_torque,
            "history": self.history,
            "normalization": {
                "q_mean": self.q_mean.tolist(), "q_std": self.q_std.tolist(),
                "tau_mean": self.tau_mean.tolist(),
                "tau_std": self.tau_std.tolist(),
                "extra_mean": self.extra_mean.tolist(),
                "extra_std": self.extra_std.tolist(),
                "act_mean": self.act_mean.tolist(),
                "act_std": self.act_std.tolist(),
            },
        }
        return {"header": header, "weights": self.params_flat().tolist()}

    @classmethod
    def from_dict(cls, d):
        h = d["header"]
        model = cls(n_joints=h["n_joints"], n_extra=h["n_extra"],
                    horizon=h["horizon"], token_dim=h["token_dim"],
                    latent_dim=h["latent_dim"], width=h["width"],
                    beta=h["beta"], ablate_torque=h["ablate_torque"])
        model.set_params_flat(np.array(d["weights"]))
        model.history = list(h.get("history", []))
        n = h["normalization"]
        model.q_mean = np.array(n["q_mean"])
        model.q_std = np.array(n["q_std"])
        model.tau_mean = np.array(n["tau_mean"])
        model.tau_std = np.array(n["tau_std"])
        model.extra_mean = np.array(n["extra_mean"])
        model.extra_std = np.array(n["extra_std"])
        model.act_mean = np.array(n["act_mean"])
        model.act_std = np.array(n["act_std"])
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _safe_std(std):
    std = np.asarray(std, dtype=float)
    return np.where(std < 1e-8, 1.0, std)


def assemble_tokens(model: PolicyModel, obs: PolicyObservation, chunk=None):
    """Token sequence as consumed by the model, one observation at a time.

    With an action chunk: the encoder-side sequence (cls, q, tau, actions).
    Without: the decoder-side conditioning tokens (q, tau, extra); the
    latent token is built separately at inference.
    """
    qn, taun, extran = model.normalize_obs(obs)
    if chunk is not None:
        if chunk.horizon != model.horizon or chunk.width != model.action_width:
            raise ValueError("chunk shape does not match the model")
        actn = (chunk.actions - model.act_mean) / model.act_std
        return model._encoder_tokens(qn[None], taun[None], actn[None])[0]
    # conditioning tokens only: drop the leading latent slot
    z = np.zeros((1, model.latent_dim))
    x = model._decoder_tokens(z, qn[None], taun[None], extran[None])
    return x[0, 1:]


def _dataset_windows(records, horizon, n_joints, n_extra):
    nq = 2 * n_joints
    by_ep = {}
    for rec in records:
        by_ep.setdefault(rec["episode"], []).append(rec)
    qs, taus, extras, acts = [], [], [], []
    starts = []
    offset = 0
    for ep in sorted(by_ep):
        rows = sorted(by_ep[ep], key=lambda r: r["tick"])
        if len(rows) < horizon + 1:
            raise ValueError(
                f"episode {ep} has {len(rows)} records; need >= {horizon + 1}")
        for r in rows:
            obs = r["obs"]
            if len(obs["q"]) != nq or len(r["action"]) != nq + 3:
                raise ValueError("record width does not match the model")
            qs.append(obs["q"])
            taus.append(obs["tau"])
            extras.append(list(obs["base_pose"]) + list(obs["lidar"]))
            acts.append(r["action"])
        starts.extend(range(offset, offset + len(rows) - horizon + 1))
        offset += len(rows)
    q = np.array(qs)
    tau = np.array(taus)
    extra = np.array(extras)
    act = np.array(acts)
    if extra.shape[1] != n_extra:
        raise ValueError("extra-feature width does not match the model")
    idx = np.array(starts)[:, None] + np.arange(horizon)[None, :]
    return q, tau, extra, act, np.array(starts), idx


def train(dataset, hyper=None):
    """Fit the policy on exported rollout records.

    `dataset` is a JSONL path (manifest expected alongside) or a
    (records, manifest) pair. Returns the trained model; the loss curve is
    kept on `model.history`. A non-finite loss aborts with diagnostics.
    """
    cfg = {**DEFAULT_HYPER, **(hyper or {})}
    if isinstance(dataset, (str, bytes)) or hasattr(dataset, "__fspath__"):
        from .session import load_dataset
        records = load_dataset(dataset)
        with open(str(dataset) + ".manifest.json") as fh:
            manifest = json.load(fh)
    else:
        records, manifest = dataset

    n_joints = manifest["n_joints"]
    n_extra = manifest["obs_dim"] - 3 * 2 * n_joints
    h = cfg["horizon"]
    model = PolicyModel(n_joints=n_joints, n_extra=n_extra, horizon=h,
                        token_dim=cfg["token_dim"],
                        latent_dim=cfg["latent_dim"], width=cfg["width"],
                        beta=cfg["beta"],
                        ablate_torque=cfg["ablate_torque"],
                        seed=cfg["seed"])
    model.set_normalization(manifest)

    q, tau, extra, act, starts, idx = _dataset_windows(
        records, h, n_joints, n_extra)
    qn = (q - model.q_mean) / model.q_std
    taun = (tau - model.tau_mean) / model.tau_std
    extran = (extra - model.extra_mean) / model.extra_std
    actn = (act - model.act_mean) / model.act_std

    rng = np.random.default_rng(cfg["seed"])
    params = model.params_flat()
    opt = Adam(params.size, lr=cfg["lr"])
    batch = min(cfg["batch_size"], starts.size)
    steps = cfg["steps"]
    for step in range(steps):
        # cosine-annealed rate: the l1 gradient has constant magnitude, so
        # Adam's residual error tracks the rate and must shrink with it
        opt.lr = cfg["lr"] * (0.001 + 0.999 * 0.5
                              * (1.0 + np.cos(np.pi * step / steps)))
        sel = rng.integers(0, starts.size, size=batch)
        rows = starts[sel]
        eps = rng.standard_normal((batch, model.latent_dim))
        loss, grads, l1, kl = model.loss_and_grads(
            qn[rows], taun[rows], extran[rows], actn[idx[sel]], eps)
        if not np.isfinite(loss):
            raise TrainingAborted(step, model.history)
        model.history.append({"step": step, "loss": loss, "l1": l1, "kl": kl})
        params = opt.step(params, grads)
        model.set_params_flat(params)
    return model


def infer_chunk(model: PolicyModel, obs: PolicyObservation, latent=None):
    """Decode one action chunk; the zero latent is the deterministic
    prior-mean rollout, an explicit latent is honored as given."""
    qn, taun, extran = model.normalize_obs(obs)
    if latent is None:
        z = np.zeros(model.latent_dim)
    else:
        z = np.asarray(latent, dtype=float)
        if z.shape != (model.latent_dim,):
            raise ValueError("latent has wrong dimension")
    pred, _ = model._decode(z[None], qn[None], taun[None], extran[None])
    return ActionChunk(pred[0] * model.act_std + model.act_mean)


def temporal_ensemble(entries, k=ENSEMBLE_DECAY):
    """Blend overlapping chunks' predictions for the current tick.

    `entries` holds (chunk, age) pairs; a chunk of age a contributes its
    row a, weighted by exp(-k * a), weights normalized to sum one.
    """
    if not entries:
        raise ValueError("empty ensemble buffer")
    preds, weights = [], []
    for chunk, age in entries:
        if not 0 <= age < chunk.horizon:
            raise ValueError("chunk age outside its horizon")
        preds.append(chunk.actions[age])
        weights.append(np.exp(-k * age))
    w = np.array(weights)
    return np.average(np.array(preds), axis=0, weights=w / w.sum())


class PolicyOperator:
    """Closed-loop command source: re-plans a chunk every tick and executes
    the ensemble blend. Uses the zero latent, so rollouts are deterministic."""

    compliant = False

    def __init__(self, model: PolicyModel, k=ENSEMBLE_DECAY, lidar_beams=360):
        self.model = model
        self.k = k
        self.lidar_beams = lidar_beams
        self.buffer = []            # (chunk, born_tick)
        self.cues = None

    def next_command(self, tick, world, arm_states):
        from .session import _sector_digest
        scan = world.lidar(self.lidar_beams)
        obs = PolicyObservation(
            q=np.concatenate([a.q for a in arm_states]),
            tau=np.concatenate([a.tau for a in arm_states]),
            extra=np.concatenate([world.base_pose,
                                  _sector_digest(scan.ranges)]),
        )
        self.buffer.append((infer_chunk(self.model, obs), tick))
        self.buffer = [(c, born) for c, born in self.buffer
                       if tick - born < c.horizon]
        entries = [(c, tick - born) for c, born in self.buffer]
        a = temporal_ensemble(entries, self.k)
        n = self.model.n_joints
        return WholeBodyAction(a[:3], a[3:3 + n], a[3 + n:3 + 2 * n])

    def deliver(self, cues):
        self.cues = cues
