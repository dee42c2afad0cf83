"""Minimal dense-network engine: layers, forward/backward, Adam, spectral norm.

A :class:`Network` owns one flat float64 parameter vector; each layer's
weight matrix and bias are views into it, so optimizer updates, snapshots
and checkpoints act on a single buffer. Matrices (the 2-D arrays passed
around everywhere) are row-major, one sample per row.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

ACTIVATIONS = {
    "identity": kernels.IDENTITY,
    "relu": kernels.RELU,
    "leaky_relu": kernels.LEAKY_RELU,
    "sigmoid": kernels.SIGMOID,
    "softmax": kernels.SOFTMAX,
    "tanh": kernels.TANH,
}
ACTIVATION_NAMES = {code: name for name, code in ACTIVATIONS.items()}

PROB_CLAMP = 1e-7
SPECTRAL_EPS = 1e-12

CHECKPOINT_MAGIC = b"GOLDCKPT"
CHECKPOINT_VERSION = 1


class DimensionError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class CheckpointFormatError(ValueError):
    pass


def clamp_prob(p):
    """Clamp probabilities to [1e-7, 1 - 1e-7] so their logs stay finite."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def as_matrix(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {x.shape}")
    return x


class DenseLayer:
    """Fully connected layer ``a = act(x W^T + b)``.

    ``weight`` and ``bias`` are views into the owning network's parameter
    buffer. With ``spectral`` set, the forward pass uses ``W / sigma`` where
    ``sigma = ||W^T u||`` and ``u`` is refined by power iteration.
    """

    def __init__(self, n_in, n_out, activation="identity", spectral=False):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.activation = activation
        self.act_code = ACTIVATIONS[activation]
        self.spectral = bool(spectral)
        self.spectral_u = None
        self._v = np.zeros(self.n_in) if spectral else None
        self.weight = np.zeros((self.n_out, self.n_in))
        self.bias = np.zeros(self.n_out)

    @property
    def size(self):
        return self.n_out * self.n_in + self.n_out

    def bind(self, params, grads, offset):
        k = self.n_out * self.n_in
        params[offset:offset + k] = self.weight.ravel()
        params[offset + k:offset + self.size] = self.bias
        self.weight = params[offset:offset + k].reshape(self.n_out, self.n_in)
        self.bias = params[offset + k:offset + self.size]
        self.grad_weight = grads[offset:offset + k].reshape(self.n_out, self.n_in)
        self.grad_bias = grads[offset + k:offset + self.size]
        return offset + self.size

    def init_spectral_u(self, rng):
        u = rng.standard_normal(self.n_out)
        self.spectral_u = u / np.linalg.norm(u)

    def sigma(self):
        """Current spectral-norm estimate ``||W^T u||`` (also refreshes v)."""
        return kernels.spectral_sigma(self.weight, self.spectral_u, self._v)

    def effective_weight(self):
        """Return ``(W_eff, spectral)`` where spectral is ``(sigma, u, v)`` or None."""
        if not self.spectral:
            return self.weight, None
        s = self.sigma()
        return self.weight / s, (s, self.spectral_u.copy(), self._v.copy())

    def power_step(self, n_iter=1):
        if self.spectral:
            kernels.power_iteration(self.weight, self.spectral_u, self._v, n_iter)


def spectral_normalize(layer: DenseLayer, iterations=1, rng=None) -> np.ndarray:
    """Run power iteration on ``layer`` and return its normalized weight.

    ``spectral_u`` persists on the layer across calls. A zero matrix is
    returned unchanged (sigma clamps to 1e-12).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if layer.spectral_u is None:
        layer.init_spectral_u(rng or np.random.default_rng(0))
    if layer._v is None:
        layer._v = np.zeros(layer.n_in)
    kernels.power_iteration(layer.weight, layer.spectral_u, layer._v, iterations)
    s = kernels.spectral_sigma(layer.weight, layer.spectral_u, layer._v)
    return layer.weight / s


@dataclass
class ForwardCache:
    inputs: list
    preacts: list
    outputs: list
    weights: list
    spectral: list


class Network:
    """A sequence of dense layers sharing one flat parameter buffer."""

    def __init__(self, layers):
        self.layers = list(layers)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise DimensionError(
                    f"layer dims do not chain: {prev.n_out} -> {nxt.n_in}")
        n = sum(layer.size for layer in self.layers)
        self.params = np.zeros(n)
        self.grads = np.zeros(n)
        offset = 0
        for layer in self.layers:
            offset = layer.bind(self.params, self.grads, offset)

    @classmethod
    def mlp(cls, sizes, hidden_activation, output_activation, rng,
            spectral=False, zero_last=False):
        """Build an MLP with He-style init (Glorot for saturating outputs)."""
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            last = i == len(sizes) - 2
            act = output_activation if last else hidden_activation
            layer = DenseLayer(n_in, n_out, act, spectral=spectral)
            if not (last and zero_last):
                gain = 2.0 if act in ("relu", "leaky_relu") else 1.0
                layer.weight[...] = rng.standard_normal((n_out, n_in)) * np.sqrt(gain / n_in)
            if spectral:
                layer.init_spectral_u(rng)
            layers.append(layer)
        return cls(layers)

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def power_step(self, n_iter=1):
        for layer in self.layers:
            layer.power_step(n_iter)

    def forward(self, x, keep_cache=True):
        """Return ``(output, cache)``; cache is None when not kept."""
        x = as_matrix(x)
        n = x.shape[0]
        cache = ForwardCache([], [], [], [], []) if keep_cache else None
        for i, layer in enumerate(self.layers):
            if x.shape[1] != layer.n_in:
                raise DimensionError(
                    f"layer {i} expects {layer.n_in} input columns, got {x.shape[1]}")
            W, s = layer.effective_weight()
            z = np.empty((n, layer.n_out))
            a = np.empty((n, layer.n_out))
            kernels.dense_forward(x, W, layer.bias, layer.act_code, z, a)
            if keep_cache:
                cache.inputs.append(x)
                cache.preacts.append(z)
                cache.outputs.append(a)
                cache.weights.append(W)
                cache.spectral.append(s)
            x = a
        return x, cache

    def __call__(self, x):
        return self.forward(x, keep_cache=False)[0]

    def backward(self, cache, grad_out, from_preact=False, accumulate=False,
                 need_input_grad=True):
        """Backpropagate ``grad_out`` through the cached forward pass.

        Parameter gradients land in ``self.grads`` (added when
        ``accumulate``). With ``from_preact``, ``grad_out`` is taken w.r.t.
        the last layer's pre-activation. Returns the input gradient.
        """
        if cache is None or not cache.inputs:
            raise StateError("backward called without a forward cache")
        if not accumulate:
            self.grads[...] = 0.0
        g = as_matrix(grad_out)
        if g.shape != cache.outputs[-1].shape:
            raise DimensionError(
                f"output gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            W, spec = cache.weights[i], cache.spectral[i]
            dW = np.empty_like(W)
            db = np.empty(layer.n_out)
            x = cache.inputs[i]
            dx = np.empty_like(x) if (i > 0 or need_input_grad) else None
            kernels.dense_backward(x, W, cache.preacts[i], cache.outputs[i], g,
                                   layer.act_code, from_preact and i == len(self.layers) - 1,
                                   dW, db, dx)
            if spec is not None:
                # W_eff = W / sigma(W), sigma = u^T W v  =>  dL/dW = (G - <G, W_eff> u v^T) / sigma
                s, u, v = spec
                dW = (dW - np.sum(dW * W) * np.outer(u, v)) / s
            layer.grad_weight += dW
            layer.grad_bias += db
            g = dx
        return g

    def snapshot(self):
        """Copy of all mutable state (parameters and spectral vectors)."""
        return (self.params.copy(),
                [None if l.spectral_u is None else l.spectral_u.copy() for l in self.layers])

    def restore(self, snap):
        params, us = snap
        self.params[...] = params
        for layer, u in zip(self.layers, us):
            layer.spectral_u = None if u is None else u.copy()

    def clone(self):
        layers = []
        for l in self.layers:
            c = DenseLayer(l.n_in, l.n_out, l.activation, spectral=l.spectral)
            c.weight[...] = l.weight
            c.bias[...] = l.bias
            c.spectral_u = None if l.spectral_u is None else l.spectral_u.copy()
            layers.append(c)
        return Network(layers)

    def __deepcopy__(self, memo):
        # a plain deepcopy would detach the layer views from the flat buffers
        new = self.clone()
        new.grads[...] = self.grads
        for src, dst in zip(self.layers, new.layers):
            if src._v is not None:
                dst._v = src._v.copy()
        memo[id(self)] = new
        return new


@dataclass
class AdamState:
    """Adam moments for one flat parameter vector."""

    size: int
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def copy(self):
        return AdamState(self.size, self.lr, self.beta1, self.beta2, self.eps,
                         self.step, self.m.copy(), self.v.copy())


def adam_step(params, grads, state: AdamState) -> bool:
    """Apply one bias-corrected Adam update in place.

    A non-finite gradient rejects the step (parameters and state untouched)
    and returns False.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError(
            f"adam shapes differ: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        log.warning("rejected Adam step %d: %d non-finite gradient entries (first at %d)",
                    state.step + 1, bad.size, bad[0])
        return False
    state.step += 1
    kernels.adam_update(params, grads, state.m, state.v, state.lr,
                        state.beta1, state.beta2, state.eps, state.step)
    return True


# -- checkpoints ------------------------------------------------------------

def write_network(f, net: Network):
    f.write(CHECKPOINT_MAGIC)
    f.write(struct.pack("<II", CHECKPOINT_VERSION, len(net.layers)))
    for layer in net.layers:
        has_u = layer.spectral_u is not None
        f.write(struct.pack("<IIBB", layer.n_out, layer.n_in, layer.act_code, int(has_u)))
        f.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
        if has_u:
            f.write(np.ascontiguousarray(layer.spectral_u, dtype="<f8").tobytes())


def _read_exact(f, n, what):
    pos = f.tell()
    data = f.read(n)
    if len(data) != n:
        raise CheckpointFormatError(f"truncated checkpoint reading {what} at byte {pos}")
    return data


def read_network(f) -> Network:
    pos = f.tell()
    magic = _read_exact(f, 8, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad checkpoint magic {magic!r} at byte {pos}")
    version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    layers = []
    for i in range(count):
        n_out, n_in, act, has_u = struct.unpack("<IIBB", _read_exact(f, 10, f"layer {i} header"))
        if act not in ACTIVATION_NAMES:
            raise CheckpointFormatError(f"unknown activation tag {act} in layer {i}")
        layer = DenseLayer(n_in, n_out, ACTIVATION_NAMES[act], spectral=bool(has_u))
        layer.weight[...] = np.frombuffer(
            _read_exact(f, 8 * n_out * n_in, f"layer {i} weights"), dtype="<f8").reshape(n_out, n_in)
        layer.bias[...] = np.frombuffer(_read_exact(f, 8 * n_out, f"layer {i} bias"), dtype="<f8")
        if has_u:
            layer.spectral_u = np.frombuffer(
                _read_exact(f, 8 * n_out, f"layer {i} spectral u"), dtype="<f8").copy()
        layers.append(layer)
    return Network(layers)


def save_network(path, net: Network):
    with open(path, "wb") as f:
        write_network(f, net)


def load_network(path) -> Network:
    with open(path, "rb") as f:
        return read_network(f)


def network_bytes(net: Network) -> bytes:
    buf = io.BytesIO()
    write_network(buf, net)
    return buf.getvalue()
