"""Activation functions available to each neuron and their derivatives.

All functions accept scalars or numpy arrays and are vectorised.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

LEAKY_SLOPE = 0.01


class ActivationKind(IntEnum):
    LEAKY_RELU = 1
    SIGMOID = 2
    RELU = 3
    TANH = 4

    @classmethod
    def parse(cls, value) -> "ActivationKind":
        """Accept an ActivationKind, its integer code or a case-insensitive name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"LEAKYRELU": "LEAKY_RELU"}
        return cls[aliases.get(key, key)]


ALL_KINDS = tuple(ActivationKind)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _leaky_relu(z):
    return np.where(z < 0, LEAKY_SLOPE * z, z)


def _relu(z):
    return np.maximum(z, 0.0)


def _leaky_relu_grad(z):
    return np.where(z < 0, LEAKY_SLOPE, 1.0)


def _relu_grad(z):
    return np.where(z < 0, 0.0, 1.0)


def _sigmoid_grad(z):
    s = sigmoid(z)
    return s * (1.0 - s)


def _tanh_grad(z):
    t = np.tanh(z)
    return 1.0 - t * t


_EVAL = {
    ActivationKind.LEAKY_RELU: _leaky_relu,
    ActivationKind.SIGMOID: sigmoid,
    ActivationKind.RELU: _relu,
    ActivationKind.TANH: np.tanh,
}

_GRAD = {
    ActivationKind.LEAKY_RELU: _leaky_relu_grad,
    ActivationKind.SIGMOID: _sigmoid_grad,
    ActivationKind.RELU: _relu_grad,
    ActivationKind.TANH: _tanh_grad,
}


def _unwrap(z, out):
    return float(out) if np.ndim(z) == 0 else out


def act_eval(kind, z):
    """Evaluate activation ``kind`` at ``z``.

    Saturating kinds never overflow: sigmoid branches on the sign of ``z``
    and ``np.tanh`` is bounded for any finite input.
    """
    kind = ActivationKind.parse(kind)
    return _unwrap(z, _EVAL[kind](np.asarray(z, dtype=float)))


def act_grad(kind, z):
    """First derivative of activation ``kind`` at ``z``.

    The kinked activations use the right-limit derivative at ``z == 0``.
    """
    kind = ActivationKind.parse(kind)
    return _unwrap(z, _GRAD[kind](np.asarray(z, dtype=float)))


def apply_columns(Z, kinds):
    """Apply a per-column activation to a ``(T, Q)`` matrix of neuron inputs."""
    Z = np.asarray(Z, dtype=float)
    kinds = np.asarray(kinds, dtype=int)
    out = np.empty_like(Z)
    for kind in ALL_KINDS:
        cols = kinds == kind
        if cols.any():
            out[:, cols] = _EVAL[kind](Z[:, cols])
    return out
