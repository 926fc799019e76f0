"""Feedforward value approximator and its training machinery.

A small fully connected network (12, 6, 3, 1) with tanh hidden layers and a
linear output, trained by Adam on mean squared error against Monte-Carlo
targets.  Implemented directly on numpy so gradients can be checked against
finite differences and training is bit-reproducible under a seed.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SIZES = (12, 6, 3, 1)
WEIGHTS_FORMAT = "vrptools.value-net/1"


class WeightFormatError(ValueError):
    """Raised when a weight file is unreadable or does not match the expected shape."""


class Network:
    """Tanh MLP with a linear scalar output.  Weight matrices are (fan_in, fan_out)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases
        sizes = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        self.sizes = tuple(sizes)
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match weight matrix")

    @classmethod
    def initialise(cls, seed: int, sizes: tuple[int, ...] = DEFAULT_SIZES) -> "Network":
        """Seeded uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes: tuple[int, ...] = DEFAULT_SIZES) -> "Network":
        weights = [np.zeros((i, o)) for i, o in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(o) for o in sizes[1:]]
        return cls(weights, biases)

    def clone(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input of width {self.sizes[0]}, got shape {X.shape}")
        h = X
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer != last:
                h = np.tanh(h)
        return h[:, 0]

    def forward(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.sizes[0],):
            raise ValueError(f"expected input of length {self.sizes[0]}, got shape {x.shape}")
        return float(self.forward_batch(x[None, :])[0])

    def _activations(self, X: np.ndarray) -> list[np.ndarray]:
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer != last:
                h = np.tanh(h)
            acts.append(h)
        return acts


def mse_loss(net: Network, X: np.ndarray, targets: np.ndarray) -> float:
    pred = net.forward_batch(X)
    diff = pred - targets
    return float(np.mean(diff * diff))


def loss_and_gradients(
    net: Network, X: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean-squared-error loss and its analytic gradients via backprop."""
    X = np.asarray(X, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = X.shape[0]
    acts = net._activations(X)
    pred = acts[-1][:, 0]
    diff = pred - targets
    loss = float(np.mean(diff * diff))

    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]
    # d(loss)/d(output) for the linear output layer.
    delta = (2.0 / n) * diff[:, None]
    for layer in range(len(net.weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            # Backprop through tanh: act[layer] holds tanh of the pre-activation.
            delta = (delta @ net.weights[layer].T) * (1.0 - acts[layer] * acts[layer])
    return loss, grad_w, grad_b


@dataclass
class AdamState:
    """Adam with the optimizer's canonical constants and bias correction."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    def _ensure(self, net: Network) -> None:
        if not self.m_w:
            self.m_w = [np.zeros_like(w) for w in net.weights]
            self.v_w = [np.zeros_like(w) for w in net.weights]
            self.m_b = [np.zeros_like(b) for b in net.biases]
            self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self, net: Network, grad_w: list[np.ndarray], grad_b: list[np.ndarray]) -> None:
        self._ensure(net)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i in range(len(net.weights)):
            for params, grads, m, v in (
                (net.weights, grad_w, self.m_w, self.v_w),
                (net.biases, grad_b, self.m_b, self.v_b),
            ):
                m[i] *= self.beta1
                m[i] += (1.0 - self.beta1) * grads[i]
                v[i] *= self.beta2
                v[i] += (1.0 - self.beta2) * (grads[i] * grads[i])
                m_hat = m[i] / bc1
                v_hat = v[i] / bc2
                params[i] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def train_batch(net: Network, adam: AdamState, X: np.ndarray, targets: np.ndarray) -> float:
    """One Adam step on the batch MSE; returns the loss before the step."""
    X = np.asarray(X, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if X.shape[0] < 1:
        raise ValueError("batch must contain at least one sample")
    if not np.all(np.isfinite(targets)) or not np.all(np.isfinite(X)):
        raise ValueError("non-finite training data rejected")
    loss, grad_w, grad_b = loss_and_gradients(net, X, targets)
    adam.step(net, grad_w, grad_b)
    return loss


@dataclass
class Experience:
    """One decision: the network input, its immediate reward and bookkeeping
    needed to attach the discounted terminal bonus after the episode ends."""

    features: np.ndarray
    step_reward: float
    q_pred: float  # value at decision time, kept for diagnostics
    episode: int
    stage: int
    vehicle_id: int
    is_terminal_leg: bool = False
    terminal_bonus: float | None = None

    @property
    def target(self) -> float:
        if self.terminal_bonus is None:
            raise ValueError("terminal bonus not filled in yet")
        return self.step_reward + self.terminal_bonus


class ReplayBuffer:
    """FIFO buffer of the latest experiences; oldest entries are evicted first."""

    def __init__(self, capacity: int = 50000):
        self.capacity = capacity
        self._entries: deque[Experience] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, exp: Experience) -> None:
        self._entries.append(exp)

    def ready(self, batch_size: int) -> bool:
        return len(self._entries) >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience] | None:
        """Uniform sample without replacement; None when not yet ready."""
        if not self.ready(batch_size):
            return None
        idx = rng.choice(len(self._entries), size=batch_size, replace=False)
        entries = list(self._entries)
        return [entries[i] for i in idx]


def save_weights(net: Network, path) -> None:
    payload = {
        "format": WEIGHTS_FORMAT,
        "layer_sizes": list(net.sizes),
        "hidden_activation": "tanh",
        "output_activation": "linear",
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_weights(path, expected_sizes: tuple[int, ...] = DEFAULT_SIZES) -> Network:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"cannot read weight file {path}: {exc}")
    if payload.get("format") != WEIGHTS_FORMAT:
        raise WeightFormatError(f"unexpected weight file format {payload.get('format')!r}")
    sizes = tuple(payload.get("layer_sizes", ()))
    if expected_sizes is not None and sizes != tuple(expected_sizes):
        raise WeightFormatError(
            f"layer sizes {sizes} do not match expected {tuple(expected_sizes)}"
        )
    try:
        weights = [np.array(w, dtype=float) for w in payload["weights"]]
        biases = [np.array(b, dtype=float) for b in payload["biases"]]
        net = Network(weights, biases)
    except (KeyError, ValueError, TypeError) as exc:
        raise WeightFormatError(f"malformed weight file {path}: {exc}")
    if net.sizes != sizes:
        raise WeightFormatError("stored arrays do not match declared layer sizes")
    return net
