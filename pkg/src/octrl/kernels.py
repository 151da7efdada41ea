"""Squared-exponential state kernels with closed-form derivatives.

All functions treat the *first* argument as the differentiated one, so
``kernel_grad_x(spec, x, y)`` is the gradient of ``y -> k(x, y)`` taken with
respect to ``x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "kernel_eval",
    "kernel_grad_x",
    "kernel_hess_trace_x",
    "gram",
    "sq_dists",
    "kernel_vector",
]


class KernelFamily(str, enum.Enum):
    SQUARED_EXPONENTIAL = "se"


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic stationary kernel ``k(x, y) = exp(-|x - y|^2 / (2 sigma^2))``.

    Parameters
    ----------
    sigma : float
        Lengthscale, in state-space units. Must be positive.
    family : KernelFamily
        Only the squared-exponential family is implemented.
    """

    sigma: float
    family: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL

    def __post_init__(self):
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise InputError(f"kernel lengthscale must be positive, got {self.sigma!r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "family", KernelFamily(self.family))

    def to_dict(self):
        return {"family": self.family.value, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(sigma=d["sigma"], family=d.get("family", "se"))


def _pair(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise InputError(f"state dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x, y = _pair(x, y)
    d2 = float(np.dot(x - y, x - y))
    return float(np.exp(-d2 / (2.0 * spec.sigma**2)))


def kernel_grad_x(spec: KernelSpec, x, y) -> np.ndarray:
    x, y = _pair(x, y)
    return -(x - y) / spec.sigma**2 * kernel_eval(spec, x, y)


def kernel_hess_trace_x(spec: KernelSpec, x, y) -> float:
    """Laplacian of ``k(., y)`` evaluated at ``x``."""
    x, y = _pair(x, y)
    s2 = spec.sigma**2
    d2 = float(np.dot(x - y, x - y))
    return (d2 / s2**2 - x.size / s2) * kernel_eval(spec, x, y)


def _as_states(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"{name} must be a non-empty list of states, got shape {X.shape}")
    return X


def sq_dists(X, Y) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape ``(len(X), len(Y))``.

    Uses the expansion ``|x|^2 + |y|^2 - 2 x.y`` when there are many
    points, which keeps peak memory at one ``N x M`` array.
    """
    X = _as_states(X, "X")
    Y = _as_states(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"state dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[1] == 1:
        return (X[:, :1] - Y[:, 0][None, :]) ** 2
    if X.shape[0] * Y.shape[0] * X.shape[1] <= 4_000_000:
        diff = X[:, None, :] - Y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    D = np.multiply(X @ Y.T, -2.0)
    D += np.einsum("ij,ij->i", X, X)[:, None]
    D += np.einsum("ij,ij->i", Y, Y)[None, :]
    np.maximum(D, 0.0, out=D)
    return D


def gram(spec: KernelSpec, X, Y) -> np.ndarray:
    """Kernel matrix with entries ``k(X[i], Y[j])``."""
    D = sq_dists(X, Y)
    D *= -0.5 / spec.sigma**2
    return np.exp(D, out=D)


def kernel_vector(spec: KernelSpec, x, X) -> np.ndarray:
    """Kernel section ``(k(x, X[i]))_i``; ``x`` may be one state or a batch.

    Returns shape ``(N,)`` for a single state and ``(M, N)`` for a batch.
    """
    X = _as_states(X, "X")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and (x.ndim == 0 or x.size == X.shape[1])
    if single:
        x = np.reshape(x, (1, -1))
    elif x.ndim == 1:
        x = x[:, None]
    K = gram(spec, x, X)
    return K[0] if single else K
