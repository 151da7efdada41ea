"""Kernel ridge regression of the controlled generator.

The state-action kernel is ``k((x, a), (x', a')) = k_S(x, x') (1 + <a, a'>)``,
which makes the estimated generator affine in the action. With
``U = [a_1 ... a_N]^T`` the fitted objects are::

    K_gamma = K_S + K_S * (U U^T) + N gamma I          (Gram, * is Hadamard)
    (K_d)_ij = <xdot_i, grad_x k(x_i, x_j)> + eps * lap_x k(x_i, x_j)
    A   = K_gamma^{-1} K_d
    B_k = diag(U e_k) A
    r   = K_gamma^{-1} y_r

A value function ``V(x) = sum_i v_i k_S(x, x_i)`` is mapped by the estimated
autonomous part to coefficients ``A v`` and by the k-th action part to
``B_k v``.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .dataset import Dataset
from .errors import FitError, InputError, LoadError
from .kernels import KernelSpec, gram, sq_dists

__all__ = [
    "WorldModel",
    "assemble_gram",
    "assemble_target",
    "fit",
    "reward_coefficients",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1


def _states(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _gram_from_ks(KS, U, gamma):
    n = KS.shape[0]
    K = U @ U.T
    K += 1.0
    K *= KS
    K[np.diag_indices(n)] += n * gamma
    return K


def assemble_gram(states, actions, kernel: KernelSpec, gamma: float, K_S=None) -> np.ndarray:
    """Regularised state-action Gram matrix ``K_gamma``."""
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    X, U = _states(states), _states(actions)
    if X.shape[0] != U.shape[0] or X.shape[0] < 1:
        raise InputError("states and actions must be non-empty with equal row counts")
    KS = gram(kernel, X, X) if K_S is None else K_S
    return _gram_from_ks(KS, U, gamma)


def assemble_target(states, derivs, kernel: KernelSpec, epsilon: float, K_S=None, D2=None) -> np.ndarray:
    """Generator target matrix ``K_d`` (generally not symmetric).

    Row ``i`` is the sampled generator applied to each section
    ``k_S(., x_j)`` at ``x_i``: a directional derivative along ``xdot_i``
    plus ``epsilon`` times the Laplacian. ``D2`` (pairwise squared distances)
    may be passed in to be overwritten in place.
    """
    if epsilon < 0:
        raise InputError(f"epsilon must be nonnegative, got {epsilon}")
    X, Xd = _states(states), _states(derivs)
    if X.shape != Xd.shape:
        raise InputError(f"states {X.shape} and derivs {Xd.shape} differ in shape")
    n, n_s = X.shape
    s2 = kernel.sigma**2
    if D2 is None:
        D2 = sq_dists(X, X)
    if K_S is None:
        K_S = np.exp(D2 * (-0.5 / s2))
    Kd = D2
    Kd *= epsilon / s2**2
    Kd -= epsilon * n_s / s2
    tmp = np.empty_like(Kd)
    for c in range(n_s):
        np.subtract.outer(X[:, c], X[:, c], out=tmp)
        tmp *= Xd[:, c : c + 1] / s2
        Kd -= tmp
    del tmp
    Kd *= K_S
    return Kd


@dataclass(eq=False)
class WorldModel:
    """Fitted generator model. Everything except ``r`` is fixed after :func:`fit`.

    ``gamma`` is the regulariser actually used, which differs from the one
    requested if the Gram factorization had to be retried.
    """

    train_states: np.ndarray
    train_actions: np.ndarray
    kernel: KernelSpec
    gamma: float
    epsilon: float
    kgamma_factor: tuple = field(repr=False)
    A: np.ndarray = field(repr=False)
    K_S: np.ndarray = field(repr=False)
    r: Optional[np.ndarray] = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.train_states.shape[0]

    @property
    def n_s(self) -> int:
        return self.train_states.shape[1]

    @property
    def n_a(self) -> int:
        return self.train_actions.shape[1]

    @property
    def B(self) -> list:
        """Action operators ``[diag(U e_k) A]_k``; materialised on every access."""
        return [self.train_actions[:, k : k + 1] * self.A for k in range(self.n_a)]

    def apply_B(self, v) -> np.ndarray:
        """Table whose column ``k`` is ``B_k v``, shape ``(N, n_a)``."""
        return self.train_actions * (self.A @ v)[:, None]

    def kgamma_solve(self, y) -> np.ndarray:
        return sla.cho_solve(self.kgamma_factor, y, check_finite=False)


def _factor(K):
    return sla.cho_factor(K, lower=False, overwrite_a=True, check_finite=False)


def fit(dataset: Dataset, kernel: KernelSpec, gamma: float, epsilon: float) -> WorldModel:
    """Assemble ``K_gamma`` and ``K_d``, factor once, and solve for ``A``.

    If the Cholesky factorization fails, ``gamma`` is raised tenfold once
    (with a warning) before giving up with :class:`FitError`.
    """
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    if epsilon < 0:
        raise InputError(f"epsilon must be nonnegative, got {epsilon}")
    t0 = time.perf_counter()
    X = np.array(dataset.states)
    U = np.array(dataset.actions)
    D2 = sq_dists(X, X)
    KS = np.exp(D2 * (-0.5 / kernel.sigma**2))

    used = gamma
    try:
        factor = _factor(_gram_from_ks(KS, U, used))
    except np.linalg.LinAlgError:
        used = 10.0 * gamma
        warnings.warn(f"K_gamma is not numerically positive definite; retrying with gamma={used:g}", RuntimeWarning, stacklevel=2)
        try:
            factor = _factor(_gram_from_ks(KS, U, used))
        except np.linalg.LinAlgError:
            raise FitError(f"K_gamma could not be factored even with gamma={used:g}; use a larger gamma") from None
    t_factor = time.perf_counter()

    Kd = assemble_target(X, dataset.derivs, kernel, epsilon, K_S=KS, D2=D2)
    kd_norm = float(np.linalg.norm(Kd))
    A = sla.cho_solve(factor, Kd, overwrite_b=True, check_finite=False)
    del Kd, D2

    diag = np.abs(np.diag(factor[0]))
    info = {
        "n": int(X.shape[0]),
        "gamma_requested": float(gamma),
        "gamma_used": float(used),
        "kd_fro_norm": kd_norm,
        "cond_estimate": float((diag.max() / diag.min()) ** 2),
        "factor_seconds": t_factor - t0,
        "fit_seconds": time.perf_counter() - t0,
    }
    X.setflags(write=False)
    U.setflags(write=False)
    return WorldModel(
        train_states=X,
        train_actions=U,
        kernel=kernel,
        gamma=used,
        epsilon=float(epsilon),
        kgamma_factor=factor,
        A=A,
        K_S=KS,
        info=info,
    )


def reward_coefficients(model: WorldModel, y_r) -> np.ndarray:
    """Solve ``K_gamma r = y_r`` and store ``r`` on the model.

    Only ``model.r`` changes, so a fitted model can be reused for any number
    of state rewards.
    """
    y = np.asarray(y_r, dtype=float).reshape(-1)
    if y.shape != (model.n,):
        raise InputError(f"reward vector must have length {model.n}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("reward vector contains non-finite entries")
    model.r = model.kgamma_solve(y)
    return model.r


def save_model(model: WorldModel, path) -> Path:
    """Write the model as a compressed ``.npz`` archive."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel.to_dict(),
        "gamma": model.gamma,
        "epsilon": model.epsilon,
        "info": model.info,
    }
    arrays = {
        "train_states": model.train_states,
        "train_actions": model.train_actions,
        "A": model.A,
        "B": np.stack(model.B),
    }
    if model.r is not None:
        arrays["r"] = model.r
    with open(path, "wb") as fh:
        np.savez_compressed(fh, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_model(path) -> WorldModel:
    """Inverse of :func:`save_model`; the ``K_gamma`` factor is recomputed."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            data = {k: z[k] for k in z.files if k != "meta"}
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise LoadError(f"{path}: not a model artifact ({exc})") from None
    if meta.get("version") != MODEL_FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported model format version {meta.get('version')!r}")
    kernel = KernelSpec.from_dict(meta["kernel"])
    X, U = data["train_states"], data["train_actions"]
    KS = gram(kernel, X, X)
    factor = _factor(_gram_from_ks(KS, U, meta["gamma"]))
    X.setflags(write=False)
    U.setflags(write=False)
    return WorldModel(
        train_states=X,
        train_actions=U,
        kernel=kernel,
        gamma=meta["gamma"],
        epsilon=meta["epsilon"],
        kgamma_factor=factor,
        A=data["A"],
        K_S=KS,
        r=data.get("r"),
        info=meta.get("info", {}),
    )
