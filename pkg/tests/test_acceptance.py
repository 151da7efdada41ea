"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``; add ``-m "not slow"``
to skip the rate study and the pendulum run.
"""

import json
import time
import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from octrl import cli
from octrl.dataset import Dataset
from octrl.envs import builtin, rollout, uniform_random_policy
from octrl.experiments import benchmark_error, fit_and_solve, greedy_policy, make_dataset, rate_study, summarize_rates
from octrl.fenchel import ActionPenalty, argmax_action, conjugate
from octrl.hjb import DpConfig, _dual_vector, build_propagator, hjb_residual, imex_step, solve
from octrl.kernels import KernelSpec, gram, kernel_eval, kernel_grad_x, kernel_hess_trace_x
from octrl.world_model import WorldModel, assemble_gram, assemble_target, fit, reward_coefficients


def test_criterion_1_kernel_derivatives_match_finite_differences(report):
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst_grad = worst_lap = 0.0
    ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        spec = KernelSpec(rng.uniform(0.5, 3.0))
        x, y = rng.normal(size=n), rng.normal(size=n)
        g = kernel_grad_x(spec, x, y)
        fd = np.empty(n)
        lap = 0.0
        k0 = kernel_eval(spec, x, y)
        for c in range(n):
            e = np.zeros(n)
            e[c] = 1e-5
            fd[c] = (kernel_eval(spec, x + e, y) - kernel_eval(spec, x - e, y)) / 2e-5
            e[c] = 1e-4
            lap += (kernel_eval(spec, x + e, y) - 2 * k0 + kernel_eval(spec, x - e, y)) / 1e-8
        grad_err = np.abs(g - fd)
        ok &= bool(np.all(grad_err <= 1e-6 * np.abs(fd) + 1e-5))
        lap_err = abs(kernel_hess_trace_x(spec, x, y) - lap)
        ok &= lap_err <= 1e-6 * abs(lap) + 1e-5
        worst_grad, worst_lap = max(worst_grad, grad_err.max()), max(worst_lap, lap_err)
    secs = time.perf_counter() - t0
    ok &= secs < 5
    assert report(1, "kernel derivative oracle", ok, f"max |grad err|={worst_grad:.2e}, max |lap err|={worst_lap:.2e}, {secs:.2f}s")


def test_criterion_2_fenchel_closed_forms_match_grid_search(report):
    rng = np.random.default_rng(200)
    t0 = time.perf_counter()
    worst_u = worst_d = 0.0
    clipped = 0
    for trial in range(100):
        w = rng.uniform(0.001, 2.0)
        u_max = rng.uniform(0.5, 3.0)
        lam = rng.normal(scale=3.0)
        p = ActionPenalty([w], u_max=[u_max])
        grid = np.linspace(-u_max, u_max, 1_000_000)
        obj = grid * lam - w * grid**2
        i = np.argmax(obj)
        clipped += abs(lam) > 2 * w * u_max
        worst_u = max(worst_u, abs(argmax_action(p, [lam])[0] - grid[i]))
        worst_d = max(worst_d, abs(conjugate(p, [lam]) - obj[i]))
    secs = time.perf_counter() - t0
    ok = worst_u <= 1e-3 and worst_d <= 1e-3 and secs < 10 and 0 < clipped < 100
    assert report(2, "Fenchel oracle", ok, f"max |u err|={worst_u:.2e}, max |D err|={worst_d:.2e}, {clipped} clipped cases, {secs:.2f}s")


def test_criterion_3_linear_solve_residuals(report):
    rng = np.random.default_rng(300)
    worst = 0.0
    for N in (10, 50, 120, 200):
        X = rng.uniform(-2, 2, size=(N, 2))
        U = rng.uniform(-1, 1, size=(N, 1))
        ds = Dataset(X, U, rng.normal(size=(N, 2)), state_rewards=rng.normal(size=N))
        spec, gamma, eps = KernelSpec(1.0), 1e-6, 0.01
        m = fit(ds, spec, gamma, eps)
        r = reward_coefficients(m, ds.state_rewards)
        K = assemble_gram(X, U, spec, gamma)
        Kd = assemble_target(X, ds.derivs, spec, eps)
        rel_A = np.linalg.norm(K @ m.A - Kd) / (1 + np.linalg.norm(Kd))
        rel_r = np.linalg.norm(K @ r - ds.state_rewards) / (1 + np.linalg.norm(ds.state_rewards))
        worst = max(worst, rel_A, rel_r)
    assert report(3, "linear-solve residuals", worst <= 1e-8, f"max scaled residual={worst:.2e} (bound 1e-8)")


def _scalar_model(r, A=0.0):
    X = np.zeros((1, 1))
    KS = gram(KernelSpec(1.0), X, X)
    return WorldModel(X, np.zeros((1, 1)), KernelSpec(1.0), 1.0, 0.0, sla.cho_factor(KS + 1.0), np.array([[A]]), KS, r=np.array([r]))


def test_criterion_4_imex_fixed_point(report):
    # closed-form geometric sequence with A = B = 0
    rho, dt, r = 0.8, 0.05, 2.0
    m = _scalar_model(r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve(m, ActionPenalty([1.0]), DpConfig(rho=rho, dt=dt, tol=1e-300, k_max=10))
    q = 1 / (1 + dt * rho)
    geo_err = abs(sol.v[0] - r / rho * (1 - q**10))

    # residual bound at convergence on a fitted benchmark model
    env = builtin("ou")
    ds = make_dataset(env, 100, 0, exact_drift=True)
    fm = fit(ds, KernelSpec(1.0), 1e-6, 0.01)
    reward_coefficients(fm, ds.state_rewards)
    cfg = DpConfig(rho=1.0, dt=0.05, tol=1e-8, k_max=20_000)
    pen = env.penalty
    fs = solve(fm, pen, cfg)
    L = cfg.rho * np.eye(fm.n) - fm.A
    res = np.linalg.norm(hjb_residual(fm, pen, cfg.rho, fs.v))
    bound = (2 / cfg.dt) * cfg.tol * (1 + np.linalg.norm(L, 2))
    step = np.linalg.norm(imex_step(build_propagator(fm, cfg), fs.v, cfg, fm.r, _dual_vector(fm, pen, fs.v)) - fs.v)
    ok = geo_err <= 1e-12 and fs.converged and res <= bound and step <= cfg.tol
    assert report(
        4, "IMEX fixed point", ok,
        f"geometric err={geo_err:.1e}; converged={fs.converged} in {fs.iterations} its, residual={res:.2e} <= {bound:.2e}, extra step={step:.1e}",
    )


def _scalar_benchmark(name, sigma, gamma, seeds=range(5)):
    env = builtin(name)
    errs, secs = [], []
    for seed in seeds:
        t0 = time.perf_counter()
        ds = make_dataset(env, 200, seed, exact_drift=True)
        sol = fit_and_solve(ds, env, KernelSpec(sigma), gamma, 0.01, DpConfig(rho=0.0, dt=0.01, k_max=1000))
        errs.append(benchmark_error(sol, name))
        secs.append(time.perf_counter() - t0)
    return np.array(errs), max(secs), sol


def test_criterion_5_ou_benchmark(report):
    errs, secs, sol = _scalar_benchmark("ou", 10.0, 1e-10)
    ok = bool(np.all(errs <= 0.1)) and secs < 30
    assert report(5, "OU value vs s^2", ok, f"offset-corrected L2 error max={errs.max():.2e} over {errs.size} seeds (bound 0.1), converged={sol.converged}, {secs:.2f}s/run")


def test_criterion_6_nonlinear_benchmark(report):
    errs, secs, _ = _scalar_benchmark("nonlinear", 1.0, 1e-8)
    ok = bool(np.all(errs <= 0.2)) and secs < 30
    assert report(6, "nonlinear value vs s^2", ok, f"offset-corrected L2 error max={errs.max():.2e} over {errs.size} seeds (bound 0.2), {secs:.2f}s/run")


@pytest.mark.slow
def test_criterion_7_rate_study(report):
    t0 = time.perf_counter()
    runs = rate_study(
        builtin("ou"), [25, 50, 100, 200, 400], range(8), KernelSpec(10.0), 1e-8, 0.01,
        DpConfig(rho=0.0, dt=0.01, k_max=1000), data_kw={"h": 0.01},
    )
    rows, slope = summarize_rates(runs)
    med = np.array([r[1] for r in rows])
    secs = time.perf_counter() - t0
    ok = bool(np.all(np.diff(med) < 0)) and slope <= -0.2 and secs < 600
    assert report(7, "OU error rate", ok, f"medians={np.round(med, 4).tolist()}, slope={slope:.3f} (bound -0.2), {secs:.1f}s")


@pytest.mark.slow
def test_criterion_8_pendulum(report):
    t0 = time.perf_counter()
    env = builtin("pendulum")
    ds = make_dataset(env, 8000, 0, sampler="random_policy")
    sol = fit_and_solve(ds, env, KernelSpec(3.0), 1e-7, 0.0, DpConfig(rho=0.1, dt=1e-3, k_max=1000))
    learned = rollout(env, greedy_policy(sol), 50, rng_seed=1000)
    baseline = rollout(env, uniform_random_policy(env, 1000), 50, rng_seed=1000)
    secs = time.perf_counter() - t0
    ok = learned.mean >= -400 and baseline.mean <= -1000 and secs < 900
    assert report(
        8, "pendulum returns", ok,
        f"learned {learned.mean:.1f} +- {learned.std:.1f} (bound -400), random {baseline.mean:.1f} (bound -1000), converged={sol.converged}, {secs:.0f}s",
    )


def test_criterion_9_cli_determinism(tmp_path, report):
    cfg = {
        "env": "ou", "kernel": {"sigma": 10.0}, "gamma": 1e-8, "epsilon": 0.01, "rho": 0.0, "dt": 0.01, "k_max": 300,
        "data": {"N": 80, "h": 0.01}, "eval": {"points": 200}, "rollout": {"episodes": 5, "horizon": 100},
        "rates": {"N_list": [20, 40], "seeds": [0, 1, 2]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for rep in ("a", "b"):
        out = tmp_path / rep
        codes = [cli.main([cmd, "--config", str(path), "--out", str(out), "--seed", "42"]) for cmd in ("gen-data", "fit", "solve", "eval", "rollout", "rates")]
        codes.append(cli.main(["gen-data", "--config", str(path), "--out", str(out / "csv"), "--seed", "42", "--format", "csv"]))
        codes.append(cli.main(["rollout", "--config", str(path), "--out", str(out / "rand"), "--seed", "42", "--policy", "random"]))
        assert codes == [0] * len(codes)
        outputs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    same = outputs[0] == outputs[1] and len(outputs[0]) >= 10
    assert report(9, "CLI determinism", same, f"{len(outputs[0])} CSV files byte-identical across reruns: {same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
