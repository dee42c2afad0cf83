"""Pure numpy implementation of the dense-network hot kernels.

Signatures mirror ``_ckernels`` exactly; outputs are written into
caller-provided C-contiguous float64 buffers.
"""

import numpy as np

IDENTITY, RELU, LEAKY_RELU, SIGMOID, SOFTMAX, TANH = range(6)
LEAKY_SLOPE = 0.2


def _sigmoid(z, out):
    # split by sign so exp never overflows
    pos = z >= 0
    ez = np.exp(-np.abs(z))
    np.divide(1.0, 1.0 + ez, out=out, where=pos)
    np.divide(ez, 1.0 + ez, out=out, where=~pos)
    return out


def activate(z, act, out):
    if act == IDENTITY:
        out[...] = z
    elif act == RELU:
        np.maximum(z, 0.0, out=out)
    elif act == LEAKY_RELU:
        np.multiply(z, np.where(z > 0, 1.0, LEAKY_SLOPE), out=out)
    elif act == SIGMOID:
        _sigmoid(z, out)
    elif act == SOFTMAX:
        np.subtract(z, z.max(axis=1, keepdims=True), out=out)
        np.exp(out, out=out)
        out /= out.sum(axis=1, keepdims=True)
    elif act == TANH:
        np.tanh(z, out=out)
    else:
        raise ValueError(f"unknown activation code {act}")
    return out


def dense_forward(x, W, b, act, z, a):
    np.matmul(x, W.T, out=z)
    z += b
    activate(z, act, a)


def activation_grad(z, a, ga, act):
    if act == IDENTITY:
        return ga.copy()
    if act == RELU:
        return ga * (z > 0)
    if act == LEAKY_RELU:
        return ga * np.where(z > 0, 1.0, LEAKY_SLOPE)
    if act == SIGMOID:
        return ga * a * (1.0 - a)
    if act == SOFTMAX:
        return a * (ga - (ga * a).sum(axis=1, keepdims=True))
    if act == TANH:
        return ga * (1.0 - a * a)
    raise ValueError(f"unknown activation code {act}")


def dense_backward(x, W, z, a, ga, act, from_preact, dW, db, dx):
    """Write parameter gradients into ``dW``/``db`` and, if given, ``dx``.

    With ``from_preact`` set, ``ga`` is already the gradient w.r.t. the
    pre-activation and the activation derivative is skipped.
    """
    dz = ga if from_preact else activation_grad(z, a, ga, act)
    np.matmul(dz.T, x, out=dW)
    np.sum(dz, axis=0, out=db)
    if dx is not None:
        np.matmul(dz, W, out=dx)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def spectral_sigma(W, u, v):
    """sigma = ||W^T u||, with v <- W^T u / sigma written in place."""
    np.matmul(u, W, out=v)
    sigma = float(np.sqrt(np.dot(v, v)))
    if sigma < 1e-12:
        sigma = 1e-12
    v /= sigma
    return sigma


def power_iteration(W, u, v, n_iter):
    for _ in range(n_iter):
        spectral_sigma(W, u, v)
        w = W @ v
        norm = float(np.sqrt(np.dot(w, w)))
        if norm > 1e-12:
            np.divide(w, norm, out=u)
    return spectral_sigma(W, u, v)
