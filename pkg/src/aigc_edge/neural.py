"""Minimal dense-network engine in double precision.

Forward pass with cached activations, exact reverse-mode gradients,
Adam, soft target updates, and checkpointing. Sized for the 2-3 hidden
layer networks used here; batch-first numpy throughout.
"""
from __future__ import annotations

import copy
import json

import numpy as np

ACTIVATIONS = ("relu", "identity")


def _act(tag, z):
    if tag == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(tag, z):
    if tag == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


class DenseNet:
    """Ordered (weights, bias, activation) layers with chained dimensions."""

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("layer list lengths differ")
        for tag in activations:
            if tag not in ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}")
        for i in range(1, len(weights)):
            if weights[i].shape[1] != weights[i - 1].shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape mismatch")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.activations = list(activations)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def clone(self):
        return copy.deepcopy(self)

    def check_finite(self):
        for p in self.parameters():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("non-finite network parameter")


def init_dense(dims, rng, out_activation="identity") -> DenseNet:
    """Fan-based uniform init in [-sqrt(6/(fin+fout)), +], zero biases."""
    weights, biases, acts = [], [], []
    for i in range(len(dims) - 1):
        fin, fout = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fin + fout))
        weights.append(rng.uniform(-bound, bound, size=(fout, fin)))
        biases.append(np.zeros(fout))
        acts.append("relu" if i < len(dims) - 2 else out_activation)
    return DenseNet(weights, biases, acts)


def forward(net: DenseNet, x):
    """Affine+activation composition. Returns (output, cache).

    x may be (in,) or (batch, in); output matches. The cache holds the
    per-layer inputs and pre-activations needed by backward().
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.input_dim:
        raise ValueError(f"input dim {h.shape[1]} != {net.input_dim}")
    inputs, pres = [], []
    for w, b, tag in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w.T + b
        pres.append(z)
        h = _act(tag, z)
    cache = (inputs, pres)
    return (h[0] if squeeze else h), cache


def backward(net: DenseNet, cache, gout):
    """Reverse-mode gradients given d(scalar)/d(output).

    Returns ([(dW, db) per layer], d(scalar)/d(input)). Batched output
    gradients produce parameter gradients summed over the batch.
    """
    inputs, pres = cache
    g = np.atleast_2d(np.asarray(gout, dtype=float))
    squeeze = np.asarray(gout).ndim == 1
    if g.shape != pres[-1].shape:
        raise ValueError("output-gradient shape does not match forward cache")
    grads = [None] * len(net.weights)
    for i in reversed(range(len(net.weights))):
        if net.activations[i] == "relu":
            g = g * (pres[i] > 0)
        grads[i] = (g.T @ inputs[i], g.sum(axis=0))
        g = g @ net.weights[i]
    return grads, (g[0] if squeeze else g)


def zero_grads(net: DenseNet):
    return [(np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(net.weights, net.biases)]


def add_grads(acc, grads, scale=1.0):
    for (aw, ab), (gw, gb) in zip(acc, grads):
        aw += scale * gw
        ab += scale * gb
    return acc


class AdamState:
    """Adam with bias correction; moments shaped like the parameters."""

    def __init__(self, net: DenseNet, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]


def adam_step(state: AdamState, net: DenseNet, grads):
    """One Adam update in place; aborts on NaN gradients."""
    flat = []
    for gw, gb in grads:
        flat.extend((gw, gb))
    params = list(net.parameters())
    if len(flat) != len(params):
        raise ValueError("gradient/parameter count mismatch")
    for g, p in zip(flat, params):
        if g.shape != p.shape:
            raise ValueError("gradient shape mismatch")
        # One reduction per array: the sum is NaN/Inf iff some entry is.
        if not np.isfinite(np.sum(np.abs(g))):
            raise FloatingPointError("NaN/Inf gradient")
    state.step_count += 1
    t = state.step_count
    bc1 = 1 - state.beta1 ** t
    bc2 = 1 - state.beta2 ** t
    # Fused bias correction: lr * (m/bc1) / (sqrt(v/bc2) + eps)
    #                      = lr*sqrt(bc2)/bc1 * m / (sqrt(v) + eps*sqrt(bc2))
    step = state.lr * np.sqrt(bc2) / bc1
    eps = state.eps * np.sqrt(bc2)
    for i, (g, p) in enumerate(zip(flat, params)):
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        denom = np.sqrt(v)
        denom += eps
        p -= step * m / denom
    return net


def soft_update(target: DenseNet, online: DenseNet, rate: float) -> DenseNet:
    """target <- rate * online + (1 - rate) * target, parameter-wise."""
    for tp, op in zip(target.parameters(), online.parameters()):
        if tp.shape != op.shape:
            raise ValueError("architecture mismatch in soft update")
        tp *= (1.0 - rate)
        tp += rate * op
    return target


def save_net(net: DenseNet, path):
    """Checkpoint: architecture header + parameters, row-major, float64."""
    arrays = {"header": np.frombuffer(
        json.dumps({"activations": net.activations}).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_net(path) -> DenseNet:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        acts = header["activations"]
        weights = [data[f"w{i}"] for i in range(len(acts))]
        biases = [data[f"b{i}"] for i in range(len(acts))]
    return DenseNet(weights, biases, acts)


def sigmoid(x):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out.reshape(np.asarray(x).shape)


def sigmoid_grad(y):
    """Derivative expressed through the output y = sigmoid(x)."""
    return y * (1.0 - y)
