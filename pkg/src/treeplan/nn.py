"""Hand-rolled small feed-forward networks (2-3 layers), float64, seeded.

Everything is deterministic: weight init, minibatch order and noise draws
all come from one seeded generator, and reductions are single-threaded
numpy, so training the same batch with the same seed reproduces weights
bit-for-bit. Heads:

- ``softmax`` / ``softmax2d``: probability vector (2d maps are softmax over
  the flattened grid, reshaped by callers).
- ``gumbel``: Gumbel-perturbed softmax during training; at evaluation time
  the noise is off and the head degrades to plain softmax, because planners
  need pure functions of the state.
- ``sigmoid``: scalar probability for binary classifiers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

HEADS = ("softmax", "softmax2d", "gumbel", "sigmoid")


@dataclass
class MlpSpec:
    layer_sizes: list[int]
    activation: str = "tanh"
    head: str = "softmax"
    out_shape: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or len(self.layer_sizes) > 4:
            raise ValueError("2 to 4 layer sizes (1-2 hidden layers + in/out)")
        if any(n <= 0 for n in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head == "softmax2d":
            if self.out_shape is None:
                raise ValueError("softmax2d head needs out_shape")
            h, w = self.out_shape
            if h * w != self.layer_sizes[-1]:
                raise ValueError("out_shape does not match output width")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    def __init__(self, spec: MlpSpec):
        self.layer_sizes = list(spec.layer_sizes)
        self.activation = spec.activation
        self.head = spec.head
        self.out_shape = spec.out_shape
        self.seed = spec.seed
        rng = np.random.default_rng(spec.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    # -- forward / backward ------------------------------------------------

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return np.where(z > 0.0, z, 0.0)

    def _act_grad(self, a: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return 1.0 - a * a
        return (a > 0.0).astype(float)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Logits plus per-layer activations (inputs first) for backprop."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else self._act(z)
            acts.append(a)
        return a, acts

    def probs(self, x: np.ndarray) -> np.ndarray:
        """Evaluation-time head output for a single input (noise-free)."""
        logits, _ = self.forward(x)
        if self.head == "sigmoid":
            return 1.0 / (1.0 + np.exp(-logits[0]))
        return softmax(logits)[0]

    def _backprop(self, acts: list[np.ndarray], dlogits: np.ndarray):
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = dlogits
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * self._act_grad(acts[i])
        return grads_w, grads_b

    # -- losses --------------------------------------------------------------

    def loss_grads_cross_entropy(self, x: np.ndarray, onehot: np.ndarray):
        """Mean cross-entropy of one-hot targets against the softmax head."""
        logits, acts = self.forward(x)
        p = softmax(logits)
        n = len(p)
        loss = -np.sum(onehot * np.log(np.clip(p, 1e-300, None))) / n
        return loss, self._backprop(acts, (p - onehot) / n)

    def loss_grads_gumbel_mse(
        self, x: np.ndarray, actions: np.ndarray, noise: np.ndarray, temperature: float
    ):
        """Squared error between the action index and its reconstruction
        from the noise-perturbed softmax via the index projector M."""
        logits, acts = self.forward(x)
        p = softmax((logits + noise) / temperature)
        m = np.arange(self.n_outputs, dtype=float)
        err = p @ m - actions
        n = len(p)
        loss = np.sum(err * err) / n
        dp = (2.0 / n) * err[:, None] * m[None, :]
        inner = (p * dp).sum(axis=1, keepdims=True)
        dlogits = (p * dp - p * inner) / temperature
        return loss, self._backprop(acts, dlogits)

    def loss_grads_sigmoid_bce(
        self, x: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None
    ):
        logits, acts = self.forward(x)
        z = logits[:, 0]
        s = 1.0 / (1.0 + np.exp(-z))
        w = np.ones_like(y) if sample_weight is None else sample_weight
        n = len(y)
        eps = 1e-12
        loss = -np.sum(w * (y * np.log(s + eps) + (1 - y) * np.log(1 - s + eps))) / n
        dlogits = (w * (s - y) / n)[:, None]
        return loss, self._backprop(acts, dlogits)

    # -- updates / io ----------------------------------------------------------

    def sgd_step(self, grads, lr: float) -> None:
        grads_w, grads_b = grads
        for w, gw in zip(self.weights, grads_w):
            w -= lr * gw
        for b, gb in zip(self.biases, grads_b):
            b -= lr * gb

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_parameter(self, index: int, value: np.ndarray) -> None:
        target = self.parameters()[index]
        np.copyto(target, value)

    def copy(self) -> "Mlp":
        spec = MlpSpec(
            layer_sizes=list(self.layer_sizes),
            activation=self.activation,
            head=self.head,
            out_shape=self.out_shape,
            seed=self.seed,
        )
        clone = Mlp(spec)
        for i, arr in enumerate(self.parameters()):
            clone.set_parameter(i, arr)
        return clone

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for arr in self.parameters():
            digest.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return digest.hexdigest()
