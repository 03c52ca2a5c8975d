"""Dyson series Monte Carlo with and without functional reuse.

Both modes draw the same sequences, so the trajectories are bitwise equal;
only the number of bath-functional evaluations differs.
"""

import numpy as np

from fastbath.bath import BathSpec, build_bath
from fastbath.costmodel import r_dyson
from fastbath.dyson import run_dyson
from fastbath.sampling import SamplingConfig
from fastbath.spinsys import ModelConfig

model = ModelConfig()
bath = build_bath(BathSpec(xi=0.2, omega_c=2.5, beta=5.0, num_modes=400))
sampling = SamplingConfig(B_emp=0.2, M_bar=5, M0_hat=200, h=0.05, N=20, seed=7)

fast = run_dyson(model, bath, sampling, mode="reuse")
slow = run_dyson(model, bath, sampling, mode="no-reuse")
print("bitwise equal:", np.array_equal(fast.G, slow.G))

for m in sampling.orders:
    saved = 1 - fast.cost.evaluations[m] / slow.cost.evaluations[m]
    print(f"m={m}: evaluations {fast.cost.evaluations[m]:7d} vs {slow.cost.evaluations[m]:7d}, "
          f"saved {saved:.3f}, closed form {r_dyson(m, sampling.N):.3f}")

print("\n t      <sigma_z>")
for t, v in zip(fast.times[::4], fast.expectation()[::4]):
    print(f"{t:4.2f}  {v.real:+.5f}")
