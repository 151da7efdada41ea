"""Error against sample size on the OU benchmark with noisy finite-difference data.

Each derivative comes from one Euler-Maruyama step of 10 ms, so it carries
noise of standard deviation sqrt(2 eps / h) ~ 1.4. More data averages that
noise away; the median error should fall roughly like N^(-1/2).
"""

import logging

import numpy as np

from octrl import DpConfig, KernelSpec, builtin
from octrl.experiments import rate_study, summarize_rates

logging.basicConfig(level=logging.WARNING)

runs = rate_study(
    builtin("ou"),
    N_list=[25, 50, 100, 200, 400],
    seeds=range(8),
    kernel=KernelSpec(10.0),
    gamma=1e-8,
    epsilon=0.01,
    dp=DpConfig(rho=0.0, dt=0.01, k_max=1000),
    data_kw={"h": 0.01},
)
rows, slope = summarize_rates(runs)
print("    N   median     q25      q75")
for N, med, q25, q75, *_ in rows:
    print(f"{N:5d}  {med:.4f}  {q25:.4f}  {q75:.4f}")
print(f"log-log slope of the median: {slope:.3f}")
print(f"total wall time {sum(r.seconds for r in runs):.1f}s over {len(runs)} fits")
assert np.all(np.diff([r[1] for r in rows]) < 0)
