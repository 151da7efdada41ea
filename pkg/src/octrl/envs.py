"""Benchmark environments for controlled diffusions ``dX = (f + G a) dt + sqrt(2 eps) dW``.

Three built-ins are provided:

``ou``
    Ornstein-Uhlenbeck, ``f(s) = -s``, ``G = 1``, state reward ``-3 s^2``,
    action cost ``a^2``. The undiscounted optimal cost-to-go is ``s^2`` (up to
    a constant).
``nonlinear``
    ``g(s) = 1/2 + sin s``, ``f(s) = -(1 - g(s)^2) s / 2``, state reward
    ``-s^2``, action cost ``a^2``. For small noise the cost-to-go tends to
    ``s^2``.
``pendulum``
    Gym-style pendulum observed as ``(cos th, sin th, th_dot)`` with torque in
    ``[-2, 2]``, reward ``-(th^2 + 0.1 th_dot^2) - 0.001 a^2`` per step.

All callables on :class:`EnvSpec` are batched: they take an ``(M, n_s)`` array
of states.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InputError, SimulationError
from .fenchel import ActionPenalty, penalty_cost

__all__ = [
    "EnvSpec",
    "RolloutStats",
    "builtin",
    "BUILTIN_ENVS",
    "em_step",
    "rollout",
    "reference_value",
    "uniform_random_policy",
    "pendulum_angle",
    "pendulum_energy",
]


@dataclass(frozen=True)
class EnvSpec:
    """Controlled diffusion with reward split ``r(x, a) = r_x(x) - c(a)``.

    ``integrator`` replaces the default Euler-Maruyama update when set; it is
    called as ``integrator(env, X, A, h, noise)`` with standard-normal
    ``noise`` of the same shape as ``X``.
    ``reward_convention`` is ``"continuous"`` (per-step reward times
    ``dt_sim``) or ``"discrete"`` (per-step reward summed unscaled).
    """

    name: str
    n_s: int
    n_a: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    epsilon: float
    state_reward: Callable[[np.ndarray], np.ndarray]
    penalty: ActionPenalty
    dt_sim: float
    horizon: int
    state_bounds: Optional[tuple] = None
    init_sampler: Optional[Callable] = None
    integrator: Optional[Callable] = None
    reward_convention: str = "continuous"
    state_box: Optional[tuple] = None
    action_box: Optional[tuple] = None

    def __post_init__(self):
        if not self.dt_sim > 0:
            raise InputError(f"dt_sim must be positive, got {self.dt_sim}")
        if self.epsilon < 0:
            raise InputError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.horizon < 1:
            raise InputError(f"horizon must be >= 1, got {self.horizon}")
        if self.reward_convention not in ("continuous", "discrete"):
            raise InputError(f"unknown reward convention {self.reward_convention!r}")

    def replace(self, **changes) -> "EnvSpec":
        return dataclasses.replace(self, **changes)

    def drift_and_control(self, X, A):
        """``f(x) + G(x) a`` row by row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return self.drift(X) + np.einsum("mij,mj->mi", self.input_map(X), A)

    def sample_initial(self, rng, size):
        if self.init_sampler is not None:
            return self.init_sampler(rng, size)
        lo, hi = (np.asarray(b, dtype=float) for b in self.state_box)
        return rng.uniform(lo, hi, size=(size, self.n_s))


@dataclass
class RolloutStats:
    mean: float
    std: float
    returns: np.ndarray = field(repr=False)

    def to_csv(self, path):
        from .io import write_csv

        write_csv(path, ["episode", "return"], [(i, r) for i, r in enumerate(self.returns)])


def _clip_bounds(env, X):
    if env.state_bounds is None:
        return X
    lo, hi = env.state_bounds
    return np.clip(X, lo, hi)


def _advance(env, X, A, h, noise):
    with np.errstate(invalid="ignore", over="ignore"):
        if env.integrator is not None:
            Xn = env.integrator(env, X, A, h, noise)
        else:
            Xn = X + env.drift_and_control(X, A) * h + np.sqrt(2.0 * env.epsilon * h) * noise
            Xn = _clip_bounds(env, Xn)
    if not np.all(np.isfinite(Xn)):
        raise SimulationError(f"non-finite state after a step of environment {env.name!r}")
    return Xn


def em_step(env: EnvSpec, x, a, h: float, rng=None):
    """One Euler-Maruyama step of length ``h``.

    ``x`` and ``a`` may be single vectors or ``(M, n)`` batches; the result
    has the same shape as ``x``. With ``epsilon == 0`` no random numbers are
    drawn and ``rng`` may be omitted.
    """
    if not h > 0:
        raise InputError(f"step length must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = np.reshape(x, (-1, env.n_s))
    A = np.reshape(np.asarray(a, dtype=float), (X.shape[0], env.n_a))
    if env.epsilon > 0:
        if rng is None:
            raise InputError("a random generator is required when epsilon > 0")
        noise = rng.standard_normal(X.shape)
    else:
        noise = np.zeros_like(X)
    Xn = _advance(env, X, A, h, noise)
    return Xn[0] if single else Xn


def rollout(env: EnvSpec, policy, episodes: int, rng_seed: int, horizon=None, vectorized=True):
    """Simulate ``episodes`` independent episodes and summarise their returns.

    Episode ``e`` draws its initial state and noise from its own generator
    seeded with ``rng_seed + e``, so results do not depend on how episodes
    are batched. ``policy`` maps an ``(M, n_s)`` batch to ``(M, n_a)`` actions
    (or a single state to one action when ``vectorized=False``).
    """
    if episodes < 1:
        raise InputError("episodes must be >= 1")
    T = env.horizon if horizon is None else int(horizon)
    rngs = [np.random.default_rng(rng_seed + e) for e in range(episodes)]
    X = np.vstack([env.sample_initial(r, 1) for r in rngs])
    returns = np.zeros(episodes)
    scale = env.dt_sim if env.reward_convention == "continuous" else 1.0
    for _ in range(T):
        if vectorized:
            A = np.asarray(policy(X), dtype=float).reshape(episodes, env.n_a)
        else:
            A = np.vstack([np.reshape(policy(x), (env.n_a,)) for x in X])
        if not np.all(np.isfinite(A)):
            raise SimulationError("policy returned a non-finite action")
        if env.penalty.u_max is not None:
            A = np.clip(A, -env.penalty.u_max, env.penalty.u_max)
        returns += scale * (env.state_reward(X) - penalty_cost(env.penalty, A))
        if env.epsilon > 0:
            noise = np.vstack([r.standard_normal(env.n_s) for r in rngs])
        else:
            noise = np.zeros_like(X)
        X = _advance(env, X, A, env.dt_sim, noise)
    return RolloutStats(mean=float(returns.mean()), std=float(returns.std()), returns=returns)


def uniform_random_policy(env: EnvSpec, seed: int):
    """Policy drawing actions uniformly from the env's action box."""
    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(b, dtype=float) for b in env.action_box)

    def policy(X):
        X = np.atleast_2d(X)
        return rng.uniform(lo, hi, size=(X.shape[0], env.n_a))

    return policy


# --- Ornstein-Uhlenbeck ---------------------------------------------------


def _ou_drift(X):
    return -X


def _ou_input(X):
    return np.ones((X.shape[0], 1, 1))


def _ou_reward(X):
    return -3.0 * X[:, 0] ** 2


# --- action-affine nonlinear SDE -------------------------------------------


def _nl_g(s):
    return 0.5 + np.sin(s)


def _nl_drift(X):
    s = X[:, :1]
    return -0.5 * (1.0 - _nl_g(s) ** 2) * s


def _nl_input(X):
    return _nl_g(X[:, 0])[:, None, None]


def _nl_reward(X):
    return -X[:, 0] ** 2


# --- pendulum ----------------------------------------------------------------

PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_MAX_SPEED = 8.0
PENDULUM_MAX_TORQUE = 2.0


def pendulum_angle(X):
    """Angle in ``(-pi, pi]`` recovered from the ``(cos, sin)`` observation."""
    X = np.atleast_2d(X)
    return np.arctan2(X[:, 1], X[:, 0])


def _pendulum_drift(X):
    th = pendulum_angle(X)
    w = X[:, 2]
    return np.stack(
        [-np.sin(th) * w, np.cos(th) * w, 3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * np.sin(th)],
        axis=1,
    )


def _pendulum_input(X):
    G = np.zeros((X.shape[0], 3, 1))
    G[:, 2, 0] = 3.0 / (PENDULUM_M * PENDULUM_L**2)
    return G


def _pendulum_reward(X):
    return -(pendulum_angle(X) ** 2 + 0.1 * X[:, 2] ** 2)


def _pendulum_integrator(env, X, A, h, noise):
    # semi-implicit Euler on (th, th_dot), as in the reference gym environment
    th = pendulum_angle(X)
    u = np.clip(A[:, 0], -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE)
    acc = 3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * np.sin(th) + 3.0 / (PENDULUM_M * PENDULUM_L**2) * u
    w = X[:, 2] + acc * h + np.sqrt(2.0 * env.epsilon * h) * noise[:, 2]
    w = np.clip(w, -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED)
    th = th + w * h
    return np.stack([np.cos(th), np.sin(th), w], axis=1)


def _pendulum_init(rng, size):
    th = rng.uniform(-np.pi, np.pi, size)
    w = rng.uniform(-1.0, 1.0, size)
    return np.stack([np.cos(th), np.sin(th), w], axis=1)


def pendulum_energy(X):
    """Mechanical energy of the uniform rod, zero at the upright rest state."""
    X = np.atleast_2d(X)
    inertia = PENDULUM_M * PENDULUM_L**2 / 3.0
    return 0.5 * inertia * X[:, 2] ** 2 + PENDULUM_M * PENDULUM_G * PENDULUM_L / 2.0 * (X[:, 0] - 1.0)


def _make_ou():
    return EnvSpec(
        name="ou",
        n_s=1,
        n_a=1,
        drift=_ou_drift,
        input_map=_ou_input,
        epsilon=0.01,
        state_reward=_ou_reward,
        penalty=ActionPenalty(weights=[1.0]),
        dt_sim=0.01,
        horizon=500,
        state_box=([-3.0], [3.0]),
        action_box=([-3.5], [3.5]),
    )


def _make_nonlinear():
    return EnvSpec(
        name="nonlinear",
        n_s=1,
        n_a=1,
        drift=_nl_drift,
        input_map=_nl_input,
        epsilon=0.01,
        state_reward=_nl_reward,
        penalty=ActionPenalty(weights=[1.0]),
        dt_sim=0.01,
        horizon=500,
        state_box=([-3.0], [3.0]),
        action_box=([-3.5], [3.5]),
    )


def _make_pendulum():
    return EnvSpec(
        name="pendulum",
        n_s=3,
        n_a=1,
        drift=_pendulum_drift,
        input_map=_pendulum_input,
        epsilon=0.0,
        state_reward=_pendulum_reward,
        penalty=ActionPenalty(weights=[0.001], u_max=[PENDULUM_MAX_TORQUE]),
        dt_sim=0.05,
        horizon=200,
        state_bounds=(
            np.array([-1.0, -1.0, -PENDULUM_MAX_SPEED]),
            np.array([1.0, 1.0, PENDULUM_MAX_SPEED]),
        ),
        init_sampler=_pendulum_init,
        integrator=_pendulum_integrator,
        reward_convention="discrete",
        state_box=([-1.0, -1.0, -PENDULUM_MAX_SPEED], [1.0, 1.0, PENDULUM_MAX_SPEED]),
        action_box=([-PENDULUM_MAX_TORQUE], [PENDULUM_MAX_TORQUE]),
    )


BUILTIN_ENVS = {"ou": _make_ou, "nonlinear": _make_nonlinear, "pendulum": _make_pendulum}


def builtin(name: str, **overrides) -> EnvSpec:
    """Construct a built-in environment, optionally overriding fields."""
    try:
        env = BUILTIN_ENVS[name]()
    except KeyError:
        raise InputError(f"unknown environment {name!r}; choose from {sorted(BUILTIN_ENVS)}") from None
    return env.replace(**overrides) if overrides else env


def reference_value(env_name: str, x):
    """Closed-form optimal cost-to-go ``s^2`` for the scalar benchmarks.

    This is a *cost*; the learned value maximises reward, so compare it with
    ``-V`` after removing the mean offset.
    """
    if env_name not in ("ou", "nonlinear"):
        if env_name in BUILTIN_ENVS:
            raise InputError(f"environment {env_name!r} has no closed-form reference value")
        raise InputError(f"unknown environment {env_name!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return float(x**2)
    if x.ndim == 2:
        x = x[:, 0]
    return x**2
