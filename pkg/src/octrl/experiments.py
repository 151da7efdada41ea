"""End-to-end runs shared by the command line, the tests and the demos."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, sample_iid, sample_random_policy
from .envs import EnvSpec, reference_value
from .errors import InputError, OctrlError
from .hjb import DpConfig, HjbSolution, policy_at, solve, value_at
from .kernels import KernelSpec
from .world_model import fit, reward_coefficients

log = logging.getLogger(__name__)

__all__ = [
    "eval_grid",
    "offset_l2_error",
    "pendulum_states",
    "make_dataset",
    "fit_and_solve",
    "benchmark_error",
    "RateRun",
    "rate_study",
    "summarize_rates",
    "loglog_slope",
    "pendulum_theta_grid",
    "greedy_policy",
]


def eval_grid(lo: float = -3.0, hi: float = 3.0, points: int = 1000) -> np.ndarray:
    """Uniform grid including both endpoints, as an ``(points, 1)`` state batch."""
    if points < 1 or not lo <= hi:
        raise InputError(f"invalid grid lo={lo}, hi={hi}, points={points}")
    return np.linspace(lo, hi, int(points))[:, None]


def offset_l2_error(values, reference_cost) -> float:
    """Relative L2 distance between ``-values`` and a reference cost, up to a constant.

    Learned values are rewards-to-go while the references are costs, hence
    the sign flip. The best constant shift is the mean difference, so both
    sides are centred before comparison::

        d   = -values - reference
        err = |d - mean(d)| / |reference - mean(reference)|
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    ref = np.asarray(reference_cost, dtype=float).reshape(-1)
    if v.shape != ref.shape:
        raise InputError("values and reference differ in length")
    d = -v - ref
    d = d - d.mean()
    scale = np.linalg.norm(ref - ref.mean())
    if scale == 0:
        raise InputError("reference is constant on the grid; relative error undefined")
    return float(np.linalg.norm(d) / scale)


def pendulum_states(theta, theta_dot=0.0) -> np.ndarray:
    """Embed angles and angular velocities as ``(cos, sin, theta_dot)`` observations."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    td = np.broadcast_to(np.asarray(theta_dot, dtype=float), theta.shape)
    return np.column_stack([np.cos(theta), np.sin(theta), td])


def make_dataset(
    env: EnvSpec,
    N: int,
    seed: int,
    sampler: str = "iid",
    h: float = 1e-3,
    exact_drift: bool = False,
    state_box=None,
    action_box=None,
    episodes: Optional[int] = None,
) -> Dataset:
    """Dispatch to the i.i.d. or the random-policy sampler."""
    if sampler == "iid":
        return sample_iid(
            env,
            env.state_box if state_box is None else state_box,
            env.action_box if action_box is None else action_box,
            N,
            h=h,
            rng_seed=seed,
            exact_drift=exact_drift,
        )
    if sampler == "random_policy":
        return sample_random_policy(env, N, episodes=episodes, rng_seed=seed)
    raise InputError(f"unknown sampler {sampler!r}; use 'iid' or 'random_policy'")


def fit_and_solve(dataset: Dataset, env: EnvSpec, kernel: KernelSpec, gamma: float, epsilon: float, dp: DpConfig, penalty=None) -> HjbSolution:
    """Fit the world model, attach the state reward and run value iteration."""
    model = fit(dataset, kernel, gamma, epsilon)
    rewards = dataset.state_rewards if dataset.state_rewards is not None else env.state_reward(dataset.states)
    reward_coefficients(model, rewards)
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="rho = 0")
        return solve(model, env.penalty if penalty is None else penalty, dp)


def benchmark_error(solution: HjbSolution, env_name: str, grid=None) -> float:
    """Offset-corrected error of a scalar benchmark on the evaluation grid."""
    grid = eval_grid() if grid is None else grid
    return offset_l2_error(value_at(solution, grid), reference_value(env_name, grid))


@dataclass(frozen=True)
class RateRun:
    N: int
    seed: int
    error: float
    seconds: float


def _rate_cell(args):
    env, N, seed, kernel, gamma, epsilon, dp, data_kw, grid = args
    t0 = time.perf_counter()
    try:
        ds = make_dataset(env, N, seed, **data_kw)
        err = benchmark_error(fit_and_solve(ds, env, kernel, gamma, epsilon, dp), env.name, grid)
    except (OctrlError, np.linalg.LinAlgError) as exc:
        log.warning("rates cell N=%d seed=%d failed: %s", N, seed, exc)
        err = float("nan")
    return RateRun(N, seed, err, time.perf_counter() - t0)


def rate_study(
    env: EnvSpec,
    N_list: Sequence[int],
    seeds: Sequence[int],
    kernel: KernelSpec,
    gamma: float,
    epsilon: float,
    dp: DpConfig,
    data_kw: Optional[dict] = None,
    grid=None,
    workers: int = 1,
) -> list:
    """Error for every ``(N, seed)`` cell, sorted by ``N`` then seed.

    Failed cells are kept with a NaN error. Each cell seeds its own generator,
    so the results do not depend on ``workers``.
    """
    grid = eval_grid() if grid is None else grid
    cells = [(env, int(N), int(s), kernel, gamma, epsilon, dp, dict(data_kw or {}), grid) for N in N_list for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_rate_cell, cells))
    else:
        runs = [_rate_cell(c) for c in cells]
    for run in runs:
        log.info("rates N=%d seed=%d error=%.6g wall=%.2fs", run.N, run.seed, run.error, run.seconds)
    return sorted(runs, key=lambda r: (r.N, r.seed))


def loglog_slope(Ns, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(N)``."""
    Ns, errors = np.asarray(Ns, dtype=float), np.asarray(errors, dtype=float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(Ns[ok]), np.log(errors[ok]), 1)[0])


def summarize_rates(runs) -> tuple:
    """Per-N ``(N, median, q25, q75, min, max, failures)`` rows and the median slope."""
    rows = []
    for N in sorted({r.N for r in runs}):
        e = np.array([r.error for r in runs if r.N == N])
        ok = e[np.isfinite(e)]
        if ok.size:
            q = np.quantile(ok, [0.5, 0.25, 0.75])
            rows.append((N, q[0], q[1], q[2], ok.min(), ok.max(), int(e.size - ok.size)))
        else:
            nan = float("nan")
            rows.append((N, nan, nan, nan, nan, nan, int(e.size)))
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    return rows, slope


def pendulum_theta_grid(points: int = 200) -> np.ndarray:
    """Angles on ``(-pi, pi]`` used for pendulum value slices."""
    return np.linspace(-np.pi, np.pi, int(points) + 1)[1:]


def greedy_policy(solution: HjbSolution):
    """Batched state-to-action map for :func:`octrl.envs.rollout`."""

    def policy(X):
        return policy_at(solution, np.atleast_2d(X))

    return policy

