"""Dense ReLU networks with hand-written backprop, and an Adam optimizer.

Weights for layer ``l`` have shape ``(sizes[l+1], sizes[l])``; inputs are
batched as rows. Everything is float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, OptimDiverged

OUTPUTS = ("linear", "tanh", "tanh_scaled")


class DenseNet:
    def __init__(self, layer_sizes, output="linear", bound=1.0, rng=None,
                 zero_init=False):
        if output not in OUTPUTS:
            raise ValueError(f"output activation must be one of {OUTPUTS}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.output = output
        self.bound = float(bound)
        rng = np.random.default_rng(rng)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if zero_init:
                W = np.zeros((fan_out, fan_in))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list:
        """Parameter arrays in the order W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.layer_sizes[0]:
            raise DimensionMismatch(
                f"input has shape {x.shape}, expected (..., {self.layer_sizes[0]})"
            )
        return X, single

    def _head(self, z):
        if self.output == "linear":
            return z
        y = np.tanh(z)
        return y * self.bound if self.output == "tanh_scaled" else y

    def forward(self, x) -> np.ndarray:
        """Inference pass; each row's result is independent of the batch it is in.

        BLAS picks different kernels for one row and for many, which changes
        the last bits. einsum's plain loops do not, so a state scores the
        same alone or in a batch. ``forward_train`` keeps the faster BLAS path.
        """
        X, single = self._as_batch(x)
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = np.einsum("ij,kj->ik", h, W) + b
            h = self._head(z) if i == last else np.maximum(z, 0.0)
        return h[0] if single else h

    __call__ = forward

    def forward_train(self, x):
        """Forward pass that also returns the cache needed by ``backward``."""
        X, _ = self._as_batch(x)
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            pre.append(z)
            h = self._head(z) if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, upstream):
        """Reverse-mode gradients.

        ``upstream`` is dLoss/dOutput with the same batch shape as the
        output. Returns ``(param_grads, input_grad)`` with ``param_grads``
        ordered like ``params``. ReLU uses subgradient 0 at 0.
        """
        acts, pre = cache
        g = np.asarray(upstream, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise DimensionMismatch(f"upstream shape {g.shape} != output {acts[-1].shape}")
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        elif self.output == "tanh_scaled":
            t = acts[-1] / self.bound
            g = g * self.bound * (1.0 - t ** 2)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = g.T @ acts[i]
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                g = g * (pre[i - 1] > 0.0)
        return grads, g

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.layer_sizes = list(self.layer_sizes)
        other.output = self.output
        other.bound = self.bound
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def soft_update_from(self, source: "DenseNet", tau: float) -> None:
        """``self <- tau * source + (1 - tau) * self``, in place."""
        for dst, src in zip(self.params, source.params):
            dst *= 1.0 - tau
            dst += tau * src

    def load_params(self, source: "DenseNet") -> None:
        for dst, src in zip(self.params, source.params):
            dst[...] = src

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "output": self.output,
            "bound": self.bound,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNet":
        net = cls(data["layer_sizes"], data["output"], data.get("bound", 1.0),
                  zero_init=True)
        for i, (W, b) in enumerate(zip(data["weights"], data["biases"])):
            W, b = np.array(W, dtype=np.float64), np.array(b, dtype=np.float64)
            if W.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise DimensionMismatch(f"layer {i} shapes do not match layer_sizes")
            net.weights[i], net.biases[i] = W, b
        return net

    def save(self, path, **header) -> None:
        data = dict(header)
        data["net"] = self.to_dict()
        Path(path).write_text(json.dumps(data), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DenseNet":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data["net"] if "net" in data else data)

    def __eq__(self, other):
        if not isinstance(other, DenseNet):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and self.output == other.output
            and self.bound == other.bound
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )

    __hash__ = None


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise DimensionMismatch("one gradient per parameter array is required")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise OptimDiverged("non-finite gradient")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise DimensionMismatch(f"gradient shape {g.shape} != param {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def rebind(self, params) -> None:
        """Point the optimizer at new arrays of the same shapes (moments kept)."""
        params = list(params)
        if [p.shape for p in params] != [p.shape for p in self.params]:
            raise DimensionMismatch("cannot rebind to differently shaped parameters")
        self.params = params


def adam_step(opt: Adam, params, grads):
    """Functional wrapper: rebinds ``opt`` to ``params`` and applies one step."""
    opt.rebind(params)
    opt.step(grads)
    return params


def mse_and_grad(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
