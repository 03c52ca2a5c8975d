"""Closed-form saving ratios and their large-N limits."""

from fastbath.costmodel import r_dyson, r_dyson_asymptotic, r_inch, r_inch_asymptotic

print("  N   m   dyson  (limit)   inchworm (limit)")
for N in (10, 50, 500):
    for m in (1, 5, 11):
        print(f"{N:4d} {m:3d}  {r_dyson(m, N):.4f} ({r_dyson_asymptotic(m, N):.4f})"
              f"  {r_inch(m, N):.4f}  ({r_inch_asymptotic(m, N):.4f})")
