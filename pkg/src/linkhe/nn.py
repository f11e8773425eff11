"""Dense numpy building blocks with hand-written backward passes.

Every forward function returns what its backward needs; backward functions
return input gradients and accumulate parameter gradients in place.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import expit

from .graph import Graph


class Param:
    """A trainable array with a same-shaped gradient buffer.

    ``row_sparse`` marks lookup tables whose untouched rows must stay frozen
    during an optimizer step.
    """

    def __init__(self, name: str, value: np.ndarray, row_sparse: bool = False):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.row_sparse = row_sparse

    def zero_grad(self):
        self.grad[...] = 0.0

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class Init(str, enum.Enum):
    XAVIER = "xavier"
    HE = "he"


def init_params(shape, scheme, rng: np.random.Generator, fan_in=None, fan_out=None) -> np.ndarray:
    """Uniform Glorot or He initialization.

    Fans default to ``shape[0]`` and ``shape[1]`` (a weight mapping rows to
    columns); lookup tables pass their own.
    """
    scheme = Init(scheme)
    fan_in = shape[0] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    if scheme is Init.XAVIER:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
    else:
        bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout; returns (output, scale mask or None)."""
    if not training or rate <= 0.0:
        return x, None
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def relu(x):
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# aggregation


def mean_aggregate(g: Graph, h: np.ndarray, include_self: bool = True) -> np.ndarray:
    """Row i becomes the mean of h over Γ_i (and i itself when include_self).

    Rows are summed in CSR order and divided once, so equal-mean neighbour
    multisets give bit-identical results. Isolated nodes without self keep 0.
    """
    if h.shape[0] != g.node_count:
        raise ValueError(f"representation has {h.shape[0]} rows, graph has {g.node_count} nodes")
    total = g.adjacency @ h
    count = g.degrees.astype(np.float64)
    if include_self:
        total = total + h
        count = count + 1.0
    return total / np.maximum(count, 1.0)[:, None]


def mean_aggregate_backward(g: Graph, grad: np.ndarray, include_self: bool = True) -> np.ndarray:
    count = g.degrees.astype(np.float64)
    if include_self:
        count = count + 1.0
    scaled = grad / np.maximum(count, 1.0)[:, None]
    # adjacency is symmetric, so its transpose is itself
    out = g.adjacency @ scaled
    if include_self:
        out = out + scaled
    return out


def gcn_forward(g: Graph, h_in: np.ndarray, weight: np.ndarray):
    """Mean over Γ_i ∪ {i}, then a shared linear map. Returns (output, aggregated)."""
    if h_in.shape[1] != weight.shape[0]:
        raise ValueError(f"input width {h_in.shape[1]} does not match weight rows {weight.shape[0]}")
    agg = mean_aggregate(g, h_in)
    return agg @ weight, agg


def gcn_backward(g: Graph, agg: np.ndarray, weight: Param, grad_out: np.ndarray) -> np.ndarray:
    weight.grad += agg.T @ grad_out
    return mean_aggregate_backward(g, grad_out @ weight.value.T)


# ---------------------------------------------------------------------------
# pair combination


class Combine(str, enum.Enum):
    HADAMARD = "hadamard"
    CONCAT = "concat"


def combine(hv: np.ndarray, hu: np.ndarray, mode=Combine.HADAMARD) -> np.ndarray:
    if Combine(mode) is Combine.HADAMARD:
        return hv * hu
    return np.concatenate([hv, hu], axis=-1)


def combine_backward(hv, hu, grad, mode=Combine.HADAMARD):
    if Combine(mode) is Combine.HADAMARD:
        return grad * hu, grad * hv
    d = hv.shape[-1]
    return grad[..., :d], grad[..., d:]


# ---------------------------------------------------------------------------
# predictor


class Mlp:
    """Stack of affine layers with ReLU and dropout between them; scalar output."""

    def __init__(self, prefix: str, widths: list[int], rng: np.random.Generator):
        if widths[-1] != 1:
            raise ValueError("predictor must end in a single logit")
        self.layers: list[tuple[Param, Param]] = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            w = init_params((a, b), Init.XAVIER if last else Init.HE, rng)
            self.layers.append((Param(f"{prefix}.{i}.weight", w), Param(f"{prefix}.{i}.bias", np.zeros(b))))

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer]

    def forward(self, x, dropout_rate=0.0, rng=None, training=False):
        cache = []
        for i, (w, b) in enumerate(self.layers):
            z = x @ w.value + b.value
            if i == len(self.layers) - 1:
                cache.append((x, None, None))
                x = z
            else:
                a, mask = dropout(relu(z), dropout_rate, rng, training)
                cache.append((x, z, mask))
                x = a
        return x[:, 0], cache

    def backward(self, cache, grad_logits):
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        grad = grad_logits[:, None]
        for (w, b), (x, z, mask) in zip(reversed(self.layers), reversed(cache)):
            if z is not None:
                if mask is not None:
                    grad = grad * mask
                grad = grad * (z > 0)
            w.grad += x.T @ grad
            b.grad += grad.sum(axis=0)
            grad = grad @ w.value.T
        return grad


def mlp_forward(p: Mlp, x, dropout_rate=0.0, rng=None, training=False):
    return p.forward(x, dropout_rate, rng, training)


def bce_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    # log(1 + exp(-|z|)) + max(z, 0) - y z
    loss = np.logaddexp(0.0, logits) - labels * logits
    return float(loss.mean()), (expit(logits) - labels) / len(logits)


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, np.ndarray] = {}

    def step(self, params: list[Param], lr: float) -> None:
        """One update. Row-sparse params only touch rows with a nonzero gradient,
        each row keeping its own step count for bias correction."""
        b1, b2 = self.beta1, self.beta2
        for p in params:
            if p.name not in self.m:
                self.m[p.name] = np.zeros_like(p.value)
                self.v[p.name] = np.zeros_like(p.value)
                self.t[p.name] = np.zeros(p.value.shape[0] if p.row_sparse else 1)
            m, v, t = self.m[p.name], self.v[p.name], self.t[p.name]
            if p.row_sparse:
                rows = np.flatnonzero(np.any(p.grad.reshape(len(p.grad), -1) != 0, axis=1))
                if not len(rows):
                    continue
                g = p.grad[rows]
                m[rows] = b1 * m[rows] + (1 - b1) * g
                v[rows] = b2 * v[rows] + (1 - b2) * g * g
                t[rows] += 1
                shape = (-1,) + (1,) * (p.value.ndim - 1)
                mhat = m[rows] / (1 - b1 ** t[rows]).reshape(shape)
                vhat = v[rows] / (1 - b2 ** t[rows]).reshape(shape)
                p.value[rows] -= lr * mhat / (np.sqrt(vhat) + self.eps)
            else:
                m *= b1
                m += (1 - b1) * p.grad
                v *= b2
                v += (1 - b2) * p.grad * p.grad
                t += 1
                mhat = m / (1 - b1 ** t[0])
                vhat = v / (1 - b2 ** t[0])
                p.value -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
            out[f"adam.t.{name}"] = self.t[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key, arr in arrays.items():
            kind, name = key[len("adam.") :].split(".", 1)
            getattr(self, kind)[name] = np.array(arr, dtype=np.float64)


def adam_step(params: list[Param], state: Adam, lr: float) -> None:
    state.step(params, lr)


def lr_decay(base_lr: float, gamma: float, epoch: int) -> float:
    """Exponential schedule: base_lr * gamma ** epoch."""
    return base_lr * gamma**epoch


def clip_grad_norm(params: list[Param], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total
