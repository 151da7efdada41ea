"""IMEX value iteration for the learned discounted HJB equation.

In coefficient space the learned HJB flow reads::

    dv/dt = -(rho I - A) v + r + Dvec(B v)

where ``Dvec(B v) = K_gamma^{-1} [D(lam(x_i))]_i`` and
``lam_k(x_i) = (K_S B_k v)_i`` is the costate at training state ``i``.
The linear part is integrated implicitly and the conjugate term explicitly::

    v_{k+1} = M [v_k + dt (r + Dvec(B v_k))],   M = (I + dt (rho I - A))^{-1}

starting from ``v_0 = 0`` until ``|v_{k+1} - v_k|_2 <= tol`` or ``k_max``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import DivergenceError, InputError, LoadError, SolverError
from .fenchel import ActionPenalty, argmax_action, conjugate_vector
from .io import write_csv
from .kernels import kernel_vector
from .world_model import WorldModel

__all__ = [
    "DpConfig",
    "Propagator",
    "HjbSolution",
    "build_propagator",
    "imex_step",
    "solve",
    "hjb_residual",
    "value_at",
    "costate_at",
    "policy_at",
    "save_solution",
    "load_solution",
]


@dataclass(frozen=True)
class DpConfig:
    """Discount ``rho`` (1/s), pseudo-time step ``dt`` (s), stopping rule."""

    rho: float
    dt: float = 0.01
    tol: float = 1e-8
    k_max: int = 1000

    def __post_init__(self):
        if not self.rho >= 0:
            raise InputError(f"rho must be nonnegative, got {self.rho}")
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise InputError(f"k_max must be a positive integer, got {self.k_max}")


class Propagator:
    """LU factorization of ``I + dt (rho I - A)``; calling it applies ``M``."""

    def __init__(self, lu, dt, rho):
        self.lu = lu
        self.dt = dt
        self.rho = rho

    def __call__(self, b):
        return sla.lu_solve(self.lu, b, check_finite=False)


def build_propagator(model: WorldModel, config: DpConfig) -> Propagator:
    n = model.n
    P = model.A * (-config.dt)
    P[np.diag_indices(n)] += 1.0 + config.dt * config.rho
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(P, overwrite_a=True, check_finite=False)
        except (sla.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"propagator I + dt(rho I - A) is singular ({exc}); use rho > 0 or a smaller dt") from None
    if np.any(np.diag(lu[0]) == 0):
        raise SolverError("propagator I + dt(rho I - A) is singular; use rho > 0 or a smaller dt")
    return Propagator(lu, config.dt, config.rho)


def imex_step(M: Propagator, v, config: DpConfig, r, d):
    """One step ``M [v + dt (r + d)]``; ``d`` is the conjugate coefficient vector."""
    if r is None:
        raise SolverError("reward coefficients are missing; call reward_coefficients first")
    return M(np.asarray(v) + config.dt * (np.asarray(r) + np.asarray(d)))


def _train_costates(model: WorldModel, v):
    return model.K_S @ model.apply_B(v)


def _dual_vector(model, penalty, v):
    return conjugate_vector(penalty, _train_costates(model, v), model.kgamma_factor)


@dataclass(eq=False)
class HjbSolution:
    """Result of :func:`solve`; evaluable through ``value_at`` and friends.

    ``changes`` holds ``|v_k - v_{k-1}|_2`` for every iteration and
    ``contraction_ratio`` the ratio of the last two, an empirical stand-in
    for the unknown closed-loop stability margin.
    """

    v: np.ndarray
    iterations: int
    final_change: float
    converged: bool
    model: WorldModel = field(repr=False)
    penalty: ActionPenalty = field(repr=False)
    config: DpConfig = field(repr=False)
    changes: np.ndarray = field(default=None, repr=False)
    _Bv: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def Bv(self):
        if self._Bv is None:
            self._Bv = self.model.apply_B(self.v)
        return self._Bv

    @property
    def contraction_ratio(self) -> float:
        if self.changes is None or len(self.changes) < 2 or self.changes[-2] == 0:
            return float("nan")
        return float(self.changes[-1] / self.changes[-2])

    def value(self, x):
        return value_at(self, x)

    def costate(self, x):
        return costate_at(self, x)

    def policy(self, x):
        return policy_at(self, x)

    def write_trace(self, path):
        return write_csv(path, ["iter", "change"], [(i + 1, c) for i, c in enumerate(self.changes)])


def solve(model: WorldModel, penalty: ActionPenalty, config: DpConfig, v0=None, callback=None) -> HjbSolution:
    """Run the IMEX recursion to tolerance or ``k_max`` iterations.

    Reaching ``k_max`` is not an error: the result carries ``converged=False``.
    A non-finite iterate raises :class:`DivergenceError`. ``callback(k, v)``
    is invoked after every step when given.
    """
    if model.r is None:
        raise SolverError("reward coefficients are missing; call reward_coefficients first")
    if penalty.n_a != model.n_a:
        raise InputError(f"penalty has {penalty.n_a} actions, model has {model.n_a}")
    if config.rho == 0:
        warnings.warn("rho = 0: the value is defined only up to an additive constant", RuntimeWarning, stacklevel=2)
    M = build_propagator(model, config)
    v = np.zeros(model.n) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (model.n,):
        raise InputError(f"v0 must have length {model.n}")
    changes = []
    converged = False
    for k in range(1, int(config.k_max) + 1):
        v_new = imex_step(M, v, config, model.r, _dual_vector(model, penalty, v))
        if not np.all(np.isfinite(v_new)):
            raise DivergenceError(
                f"iterate {k} is not finite (last max|v| = {np.max(np.abs(v)):.3g})",
                iteration=k,
                max_abs=float(np.max(np.abs(v))),
            )
        change = float(np.linalg.norm(v_new - v))
        changes.append(change)
        v = v_new
        if callback is not None:
            callback(k, v)
        if change <= config.tol:
            converged = True
            break
    return HjbSolution(
        v=v,
        iterations=k,
        final_change=changes[-1],
        converged=converged,
        model=model,
        penalty=penalty,
        config=config,
        changes=np.asarray(changes),
    )


def hjb_residual(model: WorldModel, penalty: ActionPenalty, rho: float, v) -> np.ndarray:
    """Coefficient-space residual ``-(rho I - A) v + r + Dvec(B v)``."""
    v = np.asarray(v, dtype=float)
    return -(rho * v - model.A @ v) + model.r + _dual_vector(model, penalty, v)


def _sections(solution, x):
    model = solution.model
    x = np.asarray(x, dtype=float)
    n_s = model.n_s
    if x.ndim == 0 and n_s == 1:
        single, X = True, x.reshape(1, 1)
    elif x.ndim == 1 and (x.size == n_s or n_s == 1):
        # a length-M vector is a batch of scalar states when n_s == 1
        single, X = x.size == n_s, x.reshape(-1, n_s)
    elif x.ndim == 2 and x.shape[1] == n_s:
        single, X = False, x
    else:
        raise InputError(f"states must have {n_s} components, got shape {x.shape}")
    if X.shape[0] == 0:
        raise InputError("no states given")
    return kernel_vector(model.kernel, X, model.train_states), single


def value_at(solution: HjbSolution, x):
    """``V(x) = sum_i v_i k_S(x, x_i)``; scalar for one state, array for a batch."""
    K, single = _sections(solution, x)
    out = K @ solution.v
    return float(out[0]) if single else out


def costate_at(solution: HjbSolution, x):
    """``lam_k(x) = sum_i (B_k v)_i k_S(x, x_i)``, shape ``(n_a,)`` or ``(M, n_a)``."""
    K, single = _sections(solution, x)
    out = K @ solution.Bv
    return out[0] if single else out


def policy_at(solution: HjbSolution, x):
    """Greedy action ``u*(lam(x))``."""
    return argmax_action(solution.penalty, costate_at(solution, x))


def save_solution(solution: HjbSolution, path) -> Path:
    """Write ``v`` and the solver settings; the model is stored separately."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": 1,
        "iterations": solution.iterations,
        "final_change": solution.final_change,
        "converged": solution.converged,
        "penalty": solution.penalty.to_dict(),
        "config": {"rho": solution.config.rho, "dt": solution.config.dt, "tol": solution.config.tol, "k_max": solution.config.k_max},
    }
    with open(path, "wb") as fh:
        np.savez_compressed(fh, meta=np.array(json.dumps(meta)), v=solution.v, changes=solution.changes)
    return path


def load_solution(path, model: WorldModel) -> HjbSolution:
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            v, changes = z["v"], z["changes"]
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise LoadError(f"{path}: not a solution artifact ({exc})") from None
    if meta.get("version") != 1:
        raise LoadError(f"{path}: unsupported solution format version")
    if v.shape != (model.n,):
        raise LoadError(f"{path}: solution has {v.shape[0]} coefficients, model has {model.n}")
    return HjbSolution(
        v=v,
        iterations=meta["iterations"],
        final_change=meta["final_change"],
        converged=meta["converged"],
        model=model,
        penalty=ActionPenalty.from_dict(meta["penalty"]),
        config=DpConfig(**meta["config"]),
        changes=changes,
    )
