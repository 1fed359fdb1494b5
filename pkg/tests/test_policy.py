import json

import numpy as np
import pytest

from helpers import mode_accuracy, torque_gated_records
from teleosim import policy
from teleosim.policy import (ActionChunk, PolicyModel, PolicyObservation,
                             TrainingAborted, assemble_tokens, infer_chunk,
                             temporal_ensemble, train)


def tiny_model(**kw):
    args = dict(n_joints=2, n_extra=5, horizon=3, token_dim=8, latent_dim=4,
                width=16, seed=0)
    args.update(kw)
    return PolicyModel(**args)


def rand_obs(model, rng):
    nq = 2 * model.n_joints
    return PolicyObservation(q=rng.standard_normal(nq),
                             tau=rng.standard_normal(nq),
                             extra=rng.standard_normal(model.n_extra))


def test_token_counts():
    m = tiny_model(horizon=10)
    assert m.n_enc_tokens == 13
    assert m.n_dec_tokens == 4
    a = tiny_model(horizon=10, ablate_torque=True)
    assert a.n_enc_tokens == 12
    assert a.n_dec_tokens == 3


def test_assemble_tokens_shapes_and_tau_locality():
    rng = np.random.default_rng(0)
    m = tiny_model()
    obs = rand_obs(m, rng)
    chunk = ActionChunk(rng.standard_normal((3, m.action_width)))
    enc = assemble_tokens(m, obs, chunk)
    assert enc.shape == (m.n_enc_tokens, m.token_dim)
    cond = assemble_tokens(m, obs)
    assert cond.shape == (m.n_dec_tokens - 1, m.token_dim)

    # changing only tau perturbs only the tau token in each sequence
    obs2 = PolicyObservation(obs.q, obs.tau + 1.0, obs.extra)
    enc2 = assemble_tokens(m, obs2, chunk)
    diff = np.abs(enc2 - enc).max(axis=1)
    assert diff[2] > 0
    assert np.all(diff[[0, 1]] == 0) and np.all(diff[3:] == 0)
    cond2 = assemble_tokens(m, obs2)
    cdiff = np.abs(cond2 - cond).max(axis=1)
    assert cdiff[1] > 0 and cdiff[0] == 0 and cdiff[2] == 0


def test_ablated_model_ignores_tau_everywhere():
    rng = np.random.default_rng(1)
    m = tiny_model(ablate_torque=True)
    obs = rand_obs(m, rng)
    obs2 = PolicyObservation(obs.q, obs.tau + 5.0, obs.extra)
    chunk = ActionChunk(rng.standard_normal((3, m.action_width)))
    assert np.array_equal(assemble_tokens(m, obs, chunk),
                          assemble_tokens(m, obs2, chunk))
    a1 = infer_chunk(m, obs).actions
    a2 = infer_chunk(m, obs2).actions
    assert np.array_equal(a1, a2)


def test_kl_zero_at_standard_normal_posterior():
    m = tiny_model()
    # zero the encoder head: mu = 0, logvar = 0 for every input
    m.enc_trunk.weights[-1][:] = 0.0
    m.enc_trunk.biases[-1][:] = 0.0
    rng = np.random.default_rng(2)
    b = 4
    nq, h, aw = 2 * m.n_joints, m.horizon, m.action_width
    _, _, _, kl = m.loss_and_grads(
        rng.standard_normal((b, nq)), rng.standard_normal((b, nq)),
        rng.standard_normal((b, m.n_extra)),
        rng.standard_normal((b, h, aw)), rng.standard_normal((b, m.latent_dim)))
    assert kl == 0.0


def test_kl_nonnegative_random_models():
    rng = np.random.default_rng(3)
    for seed in range(5):
        m = tiny_model(seed=seed)
        b = 6
        nq, h, aw = 2 * m.n_joints, m.horizon, m.action_width
        _, _, l1, kl = m.loss_and_grads(
            rng.standard_normal((b, nq)), rng.standard_normal((b, nq)),
            rng.standard_normal((b, m.n_extra)),
            rng.standard_normal((b, h, aw)),
            rng.standard_normal((b, m.latent_dim)))
        assert kl >= 0.0
        assert l1 >= 0.0


@pytest.mark.parametrize("ablate", [False, True])
def test_gradients_match_finite_differences(ablate):
    rng = np.random.default_rng(4)
    m = tiny_model(ablate_torque=ablate)
    b = 3
    nq, h, aw = 2 * m.n_joints, m.horizon, m.action_width
    qn = rng.standard_normal((b, nq))
    taun = rng.standard_normal((b, nq))
    extran = rng.standard_normal((b, m.n_extra))
    actn = rng.standard_normal((b, h, aw))
    eps = rng.standard_normal((b, m.latent_dim))

    base = m.params_flat()
    _, grads, _, _ = m.loss_and_grads(qn, taun, extran, actn, eps)

    def f(flat):
        m.set_params_flat(flat)
        loss, _, _, _ = m.loss_and_grads(qn, taun, extran, actn, eps)
        return loss

    idx = rng.choice(base.size, size=10, replace=False)
    hstep = 1e-6
    for i in idx:
        up, dn = base.copy(), base.copy()
        up[i] += hstep
        dn[i] -= hstep
        fd = (f(up) - f(dn)) / (2 * hstep)
        denom = max(abs(fd), abs(grads[i]), 1e-8)
        assert abs(fd - grads[i]) / denom < 1e-3
    m.set_params_flat(base)


def test_constant_action_memorization():
    const = 0.3 * np.arange(15)
    records = []
    for tick in range(12):
        records.append({
            "episode": 0, "tick": tick,
            "obs": {"q": [0.1] * 12, "qd": [0.0] * 12, "tau": [0.2] * 12,
                    "base_pose": [0.0, 0.0, 0.0], "lidar": [5.0] * 8},
            "action": const.tolist(),
        })
    obs = np.array([[0.1] * 12 + [0.0] * 12 + [0.2] * 12 + [0.0] * 3
                    + [5.0] * 8] * 12)
    manifest = {"episodes": 1, "records": 12, "n_joints": 6,
                "action_dim": 15, "obs_dim": 47,
                "obs_mean": obs.mean(axis=0).tolist(),
                "obs_std": obs.std(axis=0).tolist(),
                "action_mean": const.tolist(),
                "action_std": [0.0] * 15}
    model = train((records, manifest), {"steps": 2000})
    assert model.history[-1]["loss"] < 1e-3
    probe = PolicyObservation(q=[0.1] * 12, tau=[0.2] * 12,
                              extra=[0.0] * 3 + [5.0] * 8)
    chunk = infer_chunk(model, probe)
    assert chunk.actions.shape == (10, 15)
    assert np.abs(chunk.actions - const).max() < 1e-2


def test_training_is_deterministic():
    records, manifest = torque_gated_records(2, 12, seed=5)
    a = train((records, manifest), {"steps": 50})
    b = train((records, manifest), {"steps": 50})
    assert np.array_equal(a.params_flat(), b.params_flat())
    c = train((records, manifest), {"steps": 50, "seed": 1})
    assert not np.array_equal(a.params_flat(), c.params_flat())


def test_nonfinite_loss_aborts_with_diagnostics():
    records, manifest = torque_gated_records(2, 12, seed=6)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingAborted) as err:
            train((records, manifest), {"steps": 400, "lr": 1e5})
    assert err.value.step >= 1
    assert len(err.value.history) == err.value.step


def test_short_episode_rejected():
    records, manifest = torque_gated_records(1, 12, seed=7)
    short = [r for r in records if not (r["episode"] == 0 and r["tick"] > 5)]
    with pytest.raises(ValueError):
        train((short, manifest), {"steps": 1})


def test_infer_chunk_contract():
    rng = np.random.default_rng(8)
    m = tiny_model()
    obs = rand_obs(m, rng)
    a = infer_chunk(m, obs)
    assert a.actions.shape == (m.horizon, 2 * m.n_joints + 3)
    assert np.array_equal(a.actions, infer_chunk(m, obs).actions)
    z = rng.standard_normal(m.latent_dim)
    b = infer_chunk(m, obs, latent=z)
    assert not np.array_equal(a.actions, b.actions)
    with pytest.raises(ValueError):
        infer_chunk(m, obs, latent=np.zeros(m.latent_dim + 1))


def test_temporal_ensemble_weighting():
    width = 4
    ones = ActionChunk(np.ones((5, width)))
    zeros = ActionChunk(np.zeros((5, width)))
    # identical contributions pass through exactly
    out = temporal_ensemble([(ones, 0), (ones, 2), (ones, 4)], k=0.7)
    assert np.array_equal(out, np.ones(width))
    # equal ages, any k: plain mean
    out = temporal_ensemble([(zeros, 0), (ones, 0)], k=3.0)
    assert np.allclose(out, 0.5)
    # ages 0 and 1 at k = ln 2: weights 2/3 and 1/3
    out = temporal_ensemble([(zeros, 0), (ones, 1)], k=np.log(2.0))
    assert np.allclose(out, 1.0 / 3.0)
    with pytest.raises(ValueError):
        temporal_ensemble([], k=0.1)
    with pytest.raises(ValueError):
        temporal_ensemble([(ones, 5)], k=0.1)


def test_temporal_ensemble_outlier_bound():
    rng = np.random.default_rng(9)
    base = ActionChunk(np.full((6, 3), 0.2))
    outlier_mag = 4.0
    outlier = ActionChunk(np.full((6, 3), 0.2 + outlier_mag))
    entries = [(base, a) for a in range(5)] + [(outlier, 2)]
    k = 0.3
    w = np.exp(-k * np.array([0, 1, 2, 3, 4, 2]))
    out = temporal_ensemble(entries, k=k)
    shift = np.abs(out - 0.2).max()
    assert shift <= w[-1] / w.sum() * outlier_mag + 1e-12


def test_model_json_roundtrip(tmp_path):
    records, manifest = torque_gated_records(2, 12, seed=10)
    model = train((records, manifest), {"steps": 30})
    path = tmp_path / "policy.json"
    model.save(path)
    back = PolicyModel.load(path)
    assert np.array_equal(back.params_flat(), model.params_flat())
    rng = np.random.default_rng(11)
    obs = PolicyObservation(q=rng.standard_normal(12),
                            tau=rng.standard_normal(12),
                            extra=rng.standard_normal(11))
    assert np.array_equal(infer_chunk(back, obs).actions,
                          infer_chunk(model, obs).actions)
    with open(path) as fh:
        d = json.load(fh)
    assert d["header"]["beta"] == 10.0
    assert len(d["header"]["history"]) == 30


def test_torque_gating_separates_models():
    records, manifest = torque_gated_records(8, 24, seed=12)
    full = train((records, manifest), {"steps": 1200})
    ablated = train((records, manifest), {"steps": 1200,
                                          "ablate_torque": True})
    acc_full = mode_accuracy(full, seed=200)
    acc_abl = mode_accuracy(ablated, seed=200)
    assert acc_full >= 0.9
    assert acc_abl <= 0.6
