"""Action-affine nonlinear SDE with input gain g(s) = 1/2 + sin(s).

The drift is chosen so that s^2 is the exact cost-to-go of the noiseless
problem; with a small diffusion the learned value should stay close to it.
"""

import warnings

from octrl import DpConfig, KernelSpec, builtin
from octrl.experiments import benchmark_error, fit_and_solve, make_dataset

env = builtin("nonlinear")
for eps in (0.01, 0.1):
    errs = []
    for seed in range(4):
        data = make_dataset(env.replace(epsilon=eps), 200, seed, exact_drift=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = fit_and_solve(data, env, KernelSpec(1.0), 1e-8, eps, DpConfig(rho=0.0, dt=0.01, k_max=1000))
        errs.append(benchmark_error(sol, "nonlinear"))
    print(f"eps={eps:<5} errors: " + "  ".join(f"{e:.2e}" for e in errs))
