"""Bath correlation and pairing diagrams.

Builds the discretized Ohmic bath, prints a few values of B*(x), and
enumerates the pairings of 4 and 6 points together with their linked
subsets.  Then evaluates the full and linked bath functionals on one
sequence.
"""

import numpy as np

from fastbath.bath import BathSpec, b_star, build_bath
from fastbath.diagrams import enumerate_pairings, is_linked, lb_connected, lb_full

bath = build_bath(BathSpec(xi=0.2, omega_c=2.5, beta=5.0, num_modes=400))

x = np.linspace(-2.0, 2.0, 9)
for xi, b in zip(x, b_star(bath, x)):
    print(f"B*({xi:+.1f}) = {b.real:+.5f} {b.imag:+.5f}i")

for M in (4, 6):
    pairs = enumerate_pairings(M)
    linked = [p for p in pairs if is_linked(p)]
    print(f"\n{M} points: {len(pairs)} pairings, {len(linked)} linked")
    for p in linked:
        print("  ", [(a + 1, b + 1) for a, b in p])

s = np.array([-0.9, -0.4, 0.2, 0.7, 1.1, 1.5])
print(f"\nL_b   = {lb_full(bath, s):.6f}")
print(f"L_b^c = {lb_connected(bath, s):.6f}")
