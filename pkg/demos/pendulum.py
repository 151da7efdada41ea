"""Pendulum swing-up from random-policy data.

``python3 demos/pendulum.py --N 2000`` takes well under a minute; the
full-size ``--N 8000`` run takes a few minutes and about 2.5 GB of memory.

The learned value flow is only stable for a limited pseudo-time here: the
fitted generator has a few spurious unstable modes, and with bang-bang
torques the explicit conjugate term amplifies them. A step of 1 ms over
1000 iterations (one second of pseudo-time) stays inside that window.
"""

import argparse
import time

import numpy as np

from octrl import DpConfig, KernelSpec, builtin, rollout
from octrl.envs import uniform_random_policy
from octrl.experiments import fit_and_solve, greedy_policy, make_dataset, pendulum_states
from octrl.hjb import value_at

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--N", type=int, default=2000)
parser.add_argument("--dt", type=float, default=1e-3)
parser.add_argument("--k-max", type=int, default=1000)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

env = builtin("pendulum")
t0 = time.perf_counter()
data = make_dataset(env, args.N, args.seed, sampler="random_policy")
sol = fit_and_solve(data, env, KernelSpec(3.0), 1e-7, 0.0, DpConfig(rho=0.1, dt=args.dt, k_max=args.k_max))
print(f"fit + solve: {time.perf_counter() - t0:.1f}s, contraction ratio {sol.contraction_ratio:.4f}")

theta = np.linspace(-np.pi, np.pi, 9)
V = value_at(sol, pendulum_states(theta))
print("theta   V(theta, 0)")
for t, v in zip(theta, V):
    print(f"{t:6.2f}  {v:10.2f}")

learned = rollout(env, greedy_policy(sol), 50, rng_seed=1000)
random = rollout(env, uniform_random_policy(env, 1000), 50, rng_seed=1000)
print(f"learned policy: {learned.mean:8.1f} +- {learned.std:.1f}")
print(f"random policy : {random.mean:8.1f} +- {random.std:.1f}")
