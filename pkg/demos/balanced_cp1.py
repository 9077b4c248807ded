"""Donaldson's T-map on CP^1 and CP^2, and the 1/k decay of the Bergman density.

On projective space the round metric is balanced, so the iteration should
return a Gram matrix proportional to the identity from any start.
"""
import numpy as np

from kahlernet.balanced import identity_distance, t_map_iterate, tyz_profile
from kahlernet.projective import section_count
from kahlernet.sampling import projective_cubature

rng = np.random.default_rng(0)
for num_vars, rule in ((2, (40, 16)), (3, (12, 12))):
    cub = projective_cubature(num_vars, *rule)
    for k in (1, 2, 3):
        S = section_count(num_vars, k)
        A = np.eye(S) + 0.5 * (rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S)))
        res = t_map_iterate(A @ A.conj().T, k, cub, max_iters=60, tol=1e-10)
        print(f"CP^{num_vars - 1} k={k}: {res.status} after {res.iterations} steps, "
              f"distance to identity {identity_distance(res.G):.1e}")

errs, slope = tyz_profile()
print("max|rho - 1| for k = 4, 8, 16, 32:", np.array2string(errs, precision=4))
print(f"log-log slope {slope:.2f} (leading order predicts -1)")
