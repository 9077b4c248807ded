"""Counting and fitting experiments for two-layer squared-activation networks."""
from kahlernet.experiments import SweepConfig, asymp_width, capacity_sweep, estB_bound, match_width

for n, k in ((1, 64), (2, 4), (64, 2)):
    frac, ceil = match_width(n, k)
    a = asymp_width(n, k)
    print(f"n={n:>2} k={k:>2}: D_match = {ceil} (exact {float(frac):.4g}, {a.regime} estimate {a.value:.4g})")

print("estB at n=2, k=4:", [round(estB_bound(2, 4, d, 1.0), 3) for d in range(1, 8)])

# identity spectrum is the worst case: error^2 = 1 - D_1/D
for row in capacity_sweep(SweepConfig(n=2, k=4, ensemble="identity")):
    print(f"D_1={row['D_1']}: relative error^2 {row['error_sq']:.4f}")
