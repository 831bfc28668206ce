"""
Spectra of the subset chains
============================

Leading eigenvalues of the transition operator on m-subsets for the local
Toffoli-type family, compared with the single-particle closed form and with
the reduced pair chain.
"""

import math

import numpy as np

from pseudotherm.chain import RelativeChain, TransitionOperator, top_eigenvalues
from pseudotherm.gates import GateFamily

# single particle: eigenvalues 1 - k/(2n) with multiplicity C(n, k)
n = 6
fam = GateFamily("local", n)
spec = top_eigenvalues(TransitionOperator(fam, 1), k=1 << n)
vals, counts = np.unique(np.round(spec.eigenvalues, 12), return_counts=True)
for v, c in zip(vals[::-1], counts[::-1]):
    k = round((1 - v) * 2 * n)
    print(f"lambda = {v:.6f}  multiplicity {c}  (C({n},{k}) = {math.comb(n, k)})")

# m >= 2 at n = 5: a new leading mode appears above the dipole value 0.9
fam = GateFamily("local", 5)
for m in (1, 2, 3, 4):
    T = TransitionOperator(fam, m)
    lam = top_eigenvalues(T, k=4).eigenvalues
    print(f"m={m} dim={T.dim:6d} lambda_1={lam[1]:.8f} t_rel={1 / (1 - lam[1]):.3f}")

# the pair chain reduces to a walk on r = z xor z'
for n in (5, 6, 7, 8):
    full = top_eigenvalues(TransitionOperator(GateFamily("local", n), 2), k=3).eigenvalues[1]
    rel = top_eigenvalues(RelativeChain(n), k=3).eigenvalues[1]
    print(f"n={n} full={full:.12f} relative={rel:.12f} diff={abs(full - rel):.1e}")

# relaxation time of the relative chain grows roughly linearly in n
ns = np.arange(5, 15)
trel = [1 / (1 - top_eigenvalues(RelativeChain(int(n)), k=3).eigenvalues[1]) for n in ns]
print("t_rel / n:", np.round(np.array(trel) / ns, 3))
