"""Monte Carlo convergence at small scale.

The deviation from a large-sample reference should fall like M0^(-1/2).
Uses 20 repetitions instead of 100 so it runs in well under a minute.
"""

from dataclasses import replace

from fastbath.experiments import convergence_study, preset

cfg = replace(preset("convergence"), repetitions=20, reference_M0=4000)
rows, slope = convergence_study(cfg, ladder=[25, 100, 400])
for t, M0, sig in rows:
    if abs(t - 1.0) < 1e-9:
        print(f"M0={M0:4d}  sigma(t=1)={sig:.3e}")
print(f"fitted slope {slope:.3f}")
