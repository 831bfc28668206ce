"""
Moments of subset ensembles
===========================

Trace distances of the m-copy moments of subset and subset-phase ensembles
to the Haar moment, the TV distance of the pushed-forward distribution, and
the dephasing bound from the M matrix, along a circuit evolution.
"""

import numpy as np

from pseudotherm.chain import TransitionOperator
from pseudotherm.dynamics import SubsetDistribution, phi_map, tv_to_uniform
from pseudotherm.gates import GateFamily
from pseudotherm.moments import (
    entanglement_entropy,
    haar_moment,
    m_matrix,
    subset_moment,
    subset_phase_moment,
    trace_distance,
)
from pseudotherm.subsetcore import Subset

n, K, m = 3, 4, 2
S0 = Subset((0, 1, 2, 3), n)
T = TransitionOperator(GateFamily("local", n), K)
haar = haar_moment(1 << n, m)
p = SubsetDistribution.delta(S0).probs
print(" t   2TV    phase   plain   ||M||_tr")
for t in range(0, 41):
    if t:
        p = T.apply(p)
    if t % 5:
        continue
    d = SubsetDistribution(n, K, p, check=False)
    tv = tv_to_uniform(phi_map(d, m))
    print(f"{t:2d}  {2 * tv:.4f}  {trace_distance(subset_phase_moment(d, m), haar):.4f}"
          f"  {trace_distance(subset_moment(d, m), haar):.4f}  {m_matrix(d, m).trace_norm:.4f}")

# random subset-phase states carry entanglement bounded by min(|A|, log2 K)
rng = np.random.default_rng(0)
S = Subset.of(rng.choice(1 << 10, size=64, replace=False), 10)
print("entropy across the middle cut:", round(entanglement_entropy(S, rng.integers(0, 2, 64), cut=5), 3),
      "bits, bound", min(5, np.log2(64)))
