"""Separable quadratic action penalties and their convex conjugates.

For ``c(u) = sum_k w_k u_k^2`` restricted to ``|u_k| <= u_max_k`` the
conjugate ``D(lam) = max_u <u, lam> - c(u)`` and its maximizer are available
in closed form per component, so no inner optimisation is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import InputError

__all__ = [
    "ActionPenalty",
    "argmax_action",
    "conjugate",
    "conjugate_vector",
    "penalty_cost",
]


@dataclass(frozen=True)
class ActionPenalty:
    """Diagonal quadratic action cost with optional symmetric box bounds.

    Parameters
    ----------
    weights : array_like, shape (n_a,)
        Strictly positive quadratic weights.
    u_max : array_like or None
        Per-component bound; actions are restricted to ``[-u_max, u_max]``.
    """

    weights: np.ndarray
    u_max: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InputError(f"penalty weights must be positive, got {self.weights!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.u_max is not None:
            b = np.atleast_1d(np.asarray(self.u_max, dtype=float))
            if b.size == 1 and w.size > 1:
                b = np.full(w.size, b[0])
            if b.shape != w.shape or np.any(~(b > 0)):
                raise InputError(f"u_max must be positive with one entry per action, got {self.u_max!r}")
            b.setflags(write=False)
            object.__setattr__(self, "u_max", b)

    @property
    def n_a(self) -> int:
        return self.weights.size

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "u_max": None if self.u_max is None else self.u_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(weights=d["weights"], u_max=d.get("u_max"))

    def __eq__(self, other):
        if not isinstance(other, ActionPenalty):
            return NotImplemented
        same_bounds = (self.u_max is None and other.u_max is None) or (
            self.u_max is not None and other.u_max is not None and np.array_equal(self.u_max, other.u_max)
        )
        return np.array_equal(self.weights, other.weights) and same_bounds

    __hash__ = None


def _costates(penalty, lam):
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1:] != (penalty.n_a,) and not (lam.ndim == 0 and penalty.n_a == 1):
        raise InputError(f"costate must have trailing dimension {penalty.n_a}, got shape {lam.shape}")
    return np.reshape(lam, lam.shape if lam.ndim else (1,))


def penalty_cost(penalty: ActionPenalty, u, x=None):
    """``c(u)``; the state argument is accepted for interface parity and ignored."""
    u = _costates(penalty, u)
    return np.sum(penalty.weights * u**2, axis=-1)


def argmax_action(penalty: ActionPenalty, lam, x=None):
    """Unique maximizer ``u*(lam)`` of ``<u, lam> - c(u)``.

    Works on a single costate of shape ``(n_a,)`` or a batch ``(..., n_a)``.
    """
    lam = _costates(penalty, lam)
    u = lam / (2.0 * penalty.weights)
    if penalty.u_max is not None:
        u = np.clip(u, -penalty.u_max, penalty.u_max)
    return u


def conjugate(penalty: ActionPenalty, lam, x=None):
    """Fenchel conjugate ``D(lam)``; scalar for one costate, array for a batch."""
    lam = _costates(penalty, lam)
    w = penalty.weights
    val = lam**2 / (4.0 * w)
    if penalty.u_max is not None:
        b = penalty.u_max
        clipped = np.abs(lam) > 2.0 * w * b
        val = np.where(clipped, b * np.abs(lam) - w * b**2, val)
    out = np.sum(val, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def conjugate_vector(penalty: ActionPenalty, costates, kgamma_factor):
    """Coefficient vector ``K_gamma^{-1} [D(lam(x_i))]_i``.

    Parameters
    ----------
    costates : ndarray, shape (N, n_a)
        Costate evaluated at every training state.
    kgamma_factor : tuple
        Cholesky factor of ``K_gamma`` as returned by ``scipy.linalg.cho_factor``.
    """
    if kgamma_factor is None:
        raise InputError("conjugate_vector needs a fitted K_gamma factorization")
    costates = np.asarray(costates, dtype=float)
    if costates.ndim == 1:
        costates = costates[:, None]
    n = kgamma_factor[0].shape[0]
    if costates.shape[0] != n:
        raise InputError(f"expected {n} costate rows, got {costates.shape[0]}")
    values = np.atleast_1d(conjugate(penalty, costates))
    return sla.cho_solve(kgamma_factor, values, check_finite=False)
