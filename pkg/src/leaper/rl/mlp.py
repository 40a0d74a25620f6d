"""Dense ReLU networks with hand-written reverse mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OUTPUTS = ("linear", "tanh")


@dataclass
class MLP:
    """Layers are (W, b) with W of shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = "linear"

    def __post_init__(self):
        if self.output not in OUTPUTS:
            raise ValueError(f"output activation must be one of {OUTPUTS}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching nonempty weight and bias lists")

    @classmethod
    def create(cls, sizes: list[int], rng: np.random.Generator, output: str = "linear") -> "MLP":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            bs.append(rng.uniform(-lim, lim, fan_out))
        return cls(ws, bs, output)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def set_params(self, flat: list[np.ndarray]) -> None:
        self.weights = list(flat[0::2])
        self.biases = list(flat[1::2])

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)


def mlp_forward(net: MLP, x: np.ndarray, return_cache: bool = False):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.weights[0].shape[0]:
        raise ValueError(f"input width {x.shape[-1]} != {net.weights[0].shape[0]}")
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i < last:
            h = np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if net.output == "tanh" else z
        acts.append(h)
    return (h, acts) if return_cache else h


def mlp_gradients(net: MLP, x: np.ndarray, upstream: np.ndarray, cache=None):
    """Gradients of ``sum(output * upstream)`` w.r.t. parameters and input.

    Returns ``(param_grads, input_grad)``; ``param_grads`` follows ``net.params()``.
    """
    if cache is None:
        _, cache = mlp_forward(net, x, return_cache=True)
    acts = cache
    out = acts[-1]
    g = np.asarray(upstream, dtype=float)
    if g.shape != out.shape:
        raise ValueError(f"upstream shape {g.shape} != output shape {out.shape}")
    if net.output == "tanh":
        g = g * (1.0 - out * out)
    grads = []
    for i in range(len(net.weights) - 1, -1, -1):
        a = acts[i]
        if a.ndim == 1:
            gw = np.outer(a, g)
            gb = g.copy()
        else:
            gw = a.T @ g
            gb = g.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        g = g @ net.weights[i].T
        if i > 0:
            g = g * (acts[i] > 0.0)
    grads.reverse()
    return grads, g
