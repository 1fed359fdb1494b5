"""Minimal fully-connected networks with manual backpropagation.

Everything is plain numpy with explicit forward caches and hand-written
gradients, so both parameter gradients (for training) and input gradients
(for differentiating a trained network w.r.t. its input) come from the same
audited code path.  Finite-difference helpers live here too; every consumer
test checks analytic gradients against them.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "softplus": (lambda z: np.logaddexp(0.0, z), lambda z, a: _sigmoid(z)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


class MLP:
    """Dense network; hidden layers share one activation, the output layer
    has its own (default identity)."""

    def __init__(self, sizes, activation="tanh", out_activation="identity",
                 seed=0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in _ACTIVATIONS or out_activation not in _ACTIVATIONS:
            raise ValueError("unknown activation")
        self.sizes = list(int(s) for s in sizes)
        self.activation = activation
        self.out_activation = out_activation
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self):
        return len(self.weights)

    def _act(self, layer):
        name = (self.out_activation if layer == self.n_layers - 1
                else self.activation)
        return _ACTIVATIONS[name]

    def forward(self, x):
        """Returns (output, cache); accepts (d,) or (batch, d)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        zs, acts = [], [a]
        for layer in range(self.n_layers):
            z = a @ self.weights[layer] + self.biases[layer]
            fwd, _ = self._act(layer)
            a = fwd(z)
            zs.append(z)
            acts.append(a)
        out = a[0] if squeeze else a
        return out, (zs, acts, squeeze)

    def backward(self, cache, dout):
        """Backprop dL/dout through the cached forward pass.

        Returns (dL/dinput, [(dW, db), ...]) with grads summed over the batch.
        """
        zs, acts, squeeze = cache
        dout = np.asarray(dout, dtype=float)
        delta = dout[None, :] if squeeze else dout.copy()
        grads = [None] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            _, deriv = self._act(layer)
            delta = delta * deriv(zs[layer], acts[layer + 1])
            grads[layer] = (acts[layer].T @ delta, delta.sum(axis=0))
            delta = delta @ self.weights[layer].T
        dx = delta[0] if squeeze else delta
        return dx, grads

    def input_gradient(self, x):
        """Gradient of the (scalar) output w.r.t. the input; batched allowed."""
        if self.sizes[-1] != 1:
            raise ValueError("input_gradient requires a scalar output")
        x = np.asarray(x, dtype=float)
        out, cache = self.forward(x)
        dout = np.ones((1,)) if x.ndim == 1 else np.ones((x.shape[0], 1))
        dx, _ = self.backward(cache, dout)
        return out, dx

    # flat parameter views (optimizers, serialization, gradient checks)

    def params_flat(self):
        return np.concatenate([w.reshape(-1) for w in self.weights]
                              + [b for b in self.biases])

    def set_params_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        i = 0
        for layer in range(self.n_layers):
            w = self.weights[layer]
            self.weights[layer] = flat[i:i + w.size].reshape(w.shape).copy()
            i += w.size
        for layer in range(self.n_layers):
            b = self.biases[layer]
            self.biases[layer] = flat[i:i + b.size].copy()
            i += b.size
        if i != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def grads_flat(self, grads):
        return np.concatenate([g[0].reshape(-1) for g in grads]
                              + [g[1] for g in grads])

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "activation": self.activation,
            "out_activation": self.out_activation,
            "params": self.params_flat().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        net = cls(d["sizes"], d["activation"], d["out_activation"])
        net.set_params_flat(np.array(d["params"], dtype=float))
        return net


class Adam:
    """Adam over a flat parameter vector."""

    def __init__(self, n_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def numeric_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g
