"""Command-line driver: ``octrl {gen-data,fit,solve,eval,rollout,rates}``.

Every command reads a JSON experiment config (``--config``), applies flag
overrides (flags win), validates the result and only then computes. Outputs
go to ``--out`` (default: the config's ``out``). Exit codes: 0 success,
1 I/O failure, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, apply_override, load_config, write_config
from .dataset import load_dataset, save_dataset
from .envs import reference_value, rollout, uniform_random_policy
from .errors import DivergenceError, FitError, InputError, SimulationError, SolverError
from .experiments import (
    eval_grid,
    greedy_policy,
    make_dataset,
    offset_l2_error,
    pendulum_states,
    rate_study,
    summarize_rates,
)
from .hjb import load_solution, policy_at, save_solution, solve, value_at
from .io import write_csv
from .world_model import fit, load_model, reward_coefficients, save_model

log = logging.getLogger("octrl")

EXIT_OK, EXIT_IO, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> dotted config key
_FLAG_KEYS = {
    "env": "env",
    "N": "data.N",
    "sigma": "kernel.sigma",
    "gamma": "gamma",
    "epsilon": "epsilon",
    "rho": "rho",
    "dt": "dt",
    "tol": "tol",
    "k_max": "k_max",
    "h": "data.h",
    "episodes": "rollout.episodes",
    "policy": "rollout.policy",
}


def _workers() -> int:
    raw = os.environ.get("OCTRL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"OCTRL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("OCTRL_THREADS must be >= 1")
    return n


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg = apply_override(cfg, f"{key}={json.dumps(value)}")
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "data", None):
        cfg.data.source, cfg.data.path = "file", args.data
    for assignment in args.set or []:
        cfg = apply_override(cfg, assignment)
    if args.out:
        cfg.out = args.out
    return cfg.validate()


def _dataset(cfg: ExperimentConfig):
    env = cfg.env_spec()
    d = cfg.data
    if d.source == "file":
        ds = load_dataset(d.path, d.format)
        if ds.n_s != env.n_s or ds.n_a != env.n_a:
            raise InputError(f"dataset dimensions ({ds.n_s}, {ds.n_a}) do not match env {cfg.env!r} ({env.n_s}, {env.n_a})")
        return ds
    return make_dataset(
        env,
        d.N,
        cfg.data_seed(),
        sampler=d.sampler,
        h=d.h,
        exact_drift=d.exact_drift,
        state_box=d.state_box,
        action_box=d.action_box,
        episodes=d.episodes,
    )


def _out(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _artifact(arg, out, name) -> Path:
    return Path(arg) if arg else out / name


def cmd_gen_data(cfg, args) -> int:
    out = _out(cfg)
    fmt = args.format or "jsonl"
    path = save_dataset(_dataset(cfg), out / f"dataset.{fmt}", fmt)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_fit(cfg, args) -> int:
    out = _out(cfg)
    env = cfg.env_spec()
    ds = _dataset(cfg)
    if cfg.data.reward == "dataset":
        if ds.state_rewards is None:
            raise InputError("data.reward is 'dataset' but the dataset has no reward column")
        y = ds.state_rewards
    else:
        y = env.state_reward(ds.states)
    model = fit(ds, cfg.kernel_spec(), cfg.gamma, cfg.diffusion())
    reward_coefficients(model, y)
    save_model(model, out / "model.npz")
    write_config(cfg, out / "config.json")
    with open(out / "fit_log.json", "w") as fh:
        json.dump(model.info, fh, indent=2, sort_keys=True)
    log.info("fit N=%d gamma=%g cond~%.3g in %.2fs", model.n, model.gamma, model.info["cond_estimate"], model.info["fit_seconds"])
    return EXIT_OK


def cmd_solve(cfg, args) -> int:
    out = _out(cfg)
    model = load_model(_artifact(args.model, out, "model.npz"))
    if model.r is None:
        raise InputError("model artifact has no reward coefficients; refit with a reward")
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="rho = 0")
        if cfg.rho == 0:
            log.warning("rho = 0: the value is defined only up to an additive constant")
        sol = solve(model, cfg.action_penalty(), cfg.dp_config())
    save_solution(sol, out / "solution.npz")
    sol.write_trace(out / "trace.csv")
    write_csv(
        out / "solve_summary.csv",
        ["iterations", "final_change", "converged", "contraction_ratio"],
        [(sol.iterations, sol.final_change, sol.converged, sol.contraction_ratio)],
    )
    log.info("solve: %d iterations, final change %.3g, converged=%s", sol.iterations, sol.final_change, sol.converged)
    return EXIT_OK


def _load_solution(cfg, args):
    out = _out(cfg)
    model = load_model(_artifact(args.model, out, "model.npz"))
    return load_solution(_artifact(args.solution, out, "solution.npz"), model), out


def cmd_eval(cfg, args) -> int:
    sol, out = _load_solution(cfg, args)
    e = cfg.eval
    if cfg.env == "pendulum":
        theta = np.linspace(e.lo, e.hi, int(e.points))
        X = pendulum_states(theta, e.theta_dot)
        V, U = value_at(sol, X), policy_at(sol, X)
        rows = [(t, e.theta_dot, v, *u) for t, v, u in zip(theta, V, U)]
        header = ["theta", "theta_dot", "value"] + [f"policy_{k}" for k in range(U.shape[1])]
        write_csv(out / "eval.csv", header, rows)
        write_csv(out / "eval_summary.csv", ["points", "value_min", "value_max"], [(len(theta), V.min(), V.max())])
        return EXIT_OK
    if sol.model.n_s != 1:
        raise InputError("grid evaluation supports scalar-state environments and the pendulum")
    X = eval_grid(e.lo, e.hi, e.points)
    V, U = value_at(sol, X), policy_at(sol, X)
    ref = reference_value(cfg.env, X)
    d = -V - ref
    pointwise = d - d.mean()
    err = offset_l2_error(V, ref) if e.points > 1 else float("nan")
    rows = [(x, v, *u, r, p) for x, v, u, r, p in zip(X[:, 0], V, U, ref, pointwise)]
    header = ["x", "value"] + [f"policy_{k}" for k in range(U.shape[1])] + ["reference", "error"]
    write_csv(out / "eval.csv", header, rows)
    write_csv(out / "eval_summary.csv", ["points", "offset_l2_error"], [(len(X), err)])
    log.info("eval: offset-corrected relative L2 error %.6g", err)
    return EXIT_OK


def cmd_rollout(cfg, args) -> int:
    out = _out(cfg)
    env = cfg.env_spec()
    ro = cfg.rollout
    if ro.policy == "learned":
        sol, _ = _load_solution(cfg, args)
        policy = greedy_policy(sol)
    elif ro.policy == "random":
        policy = uniform_random_policy(env, cfg.seed)
    else:
        policy = lambda X: np.zeros((np.atleast_2d(X).shape[0], env.n_a))  # noqa: E731
    stats = rollout(env, policy, ro.episodes, cfg.seed, horizon=ro.horizon)
    stats.to_csv(out / "rollout.csv")
    write_csv(out / "rollout_summary.csv", ["episodes", "mean", "std"], [(ro.episodes, stats.mean, stats.std)])
    log.info("rollout %s: mean return %.3f +- %.3f", ro.policy, stats.mean, stats.std)
    return EXIT_OK


def cmd_rates(cfg, args) -> int:
    out = _out(cfg)
    d = cfg.data
    if d.sampler != "iid":
        raise InputError("the rate study needs the i.i.d. sampler")
    reference_value(cfg.env, 0.0)  # fails early for envs without a reference
    data_kw = dict(sampler="iid", h=d.h, exact_drift=d.exact_drift, state_box=d.state_box, action_box=d.action_box)
    # Each cell uses its listed seed directly; --seed shifts all of them.
    seeds = [s + cfg.seed for s in cfg.rates.seeds]
    runs = rate_study(
        cfg.env_spec(),
        cfg.rates.N_list,
        seeds,
        cfg.kernel_spec(),
        cfg.gamma,
        cfg.diffusion(),
        cfg.dp_config(),
        data_kw=data_kw,
        grid=eval_grid(cfg.eval.lo, cfg.eval.hi, cfg.eval.points),
        workers=_workers(),
    )
    write_csv(out / "rates.csv", ["N", "seed", "l2_error"], [(r.N, r.seed, r.error) for r in runs])
    rows, slope = summarize_rates(runs)
    write_csv(out / "rates_summary.csv", ["N", "median", "q25", "q75", "min", "max", "failed"], rows)
    write_csv(out / "rates_slope.csv", ["statistic", "loglog_slope"], [("median", slope)])
    log.info("rates: median log-log slope %.4f", slope)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "solve": cmd_solve,
    "eval": cmd_eval,
    "rollout": cmd_rollout,
    "rates": cmd_rates,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, help="experiment seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key; value parsed as JSON")
    common.add_argument("--env", choices=["ou", "nonlinear", "pendulum"])
    common.add_argument("--N", type=int, help="number of training samples")
    common.add_argument("--sigma", type=float, help="kernel lengthscale")
    common.add_argument("--gamma", type=float, help="ridge regulariser")
    common.add_argument("--epsilon", type=float, help="diffusion coefficient")
    common.add_argument("--rho", type=float, help="discount rate")
    common.add_argument("--dt", type=float, help="pseudo-time step")
    common.add_argument("--tol", type=float)
    common.add_argument("--k-max", dest="k_max", type=int)
    common.add_argument("--h", type=float, help="finite-difference step for generated data")
    common.add_argument("--data", help="dataset file (jsonl or csv); implies data.source=file")
    common.add_argument("--model", help="model artifact (default <out>/model.npz)")
    common.add_argument("--solution", help="solution artifact (default <out>/solution.npz)")
    common.add_argument("--episodes", type=int, help="rollout episodes")
    common.add_argument("--policy", choices=["learned", "random", "zero"], help="rollout policy")
    common.add_argument("--format", choices=["jsonl", "csv"], help="gen-data output format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="octrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "generate a synthetic dataset",
        "fit": "fit the world model and reward coefficients",
        "solve": "run value iteration on a fitted model",
        "eval": "evaluate value and policy on a grid",
        "rollout": "simulate episodes under a policy",
        "rates": "error versus sample size study",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except InputError as exc:
        print(f"octrl: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"octrl: diverged at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FitError, SolverError, SimulationError) as exc:
        print(f"octrl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"octrl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
