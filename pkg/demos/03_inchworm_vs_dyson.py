"""Observable trajectory from both solvers at weak coupling.

A shortened version of the cross-solver comparison: Dyson with more
samples, inchworm with fewer, both to t = 1.
"""

from dataclasses import replace

from fastbath.experiments import preset, solve

cfg = preset("fig6-left")
s = cfg.sampling_config(N=20)
dyson = solve(replace(cfg, solver="dyson"), replace(s, M0_hat=2000)).expectation()
inch = solve(replace(cfg, solver="inchworm"), replace(s, M0_hat=200)).expectation()

print(" t      dyson     inchworm")
for n in range(0, s.N + 1, 2):
    print(f"{n * s.h:4.2f}  {dyson[n].real:+.5f}  {inch[n].real:+.5f}")
print("max difference:", abs(dyson.real - inch.real).max())
