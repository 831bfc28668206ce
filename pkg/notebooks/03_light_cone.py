"""
Light cone of <Z_i>^2
=====================

Monte Carlo over circuit realizations from a block of |+> sites in a ring of
zeros. The squared expectation equilibrates behind a front moving away from
the block, while the plain average relaxes everywhere at once.
"""

import numpy as np

from pseudotherm.cli import front_times
from pseudotherm.dynamics import linear_r2, observable_trace, parse_initial_state
from pseudotherm.gates import GateFamily

n, na, R = 32, 3, 2000
S0 = parse_initial_state("+" * na + "0" * (n - na))
trace = observable_trace(GateFamily("local", n), S0, 60 * n, realizations=R, seed=1, record_every=8)

z2 = front_times(trace, list(range(na)), 0.5 * (1 + 1 / S0.m), "z2bar")
z1 = front_times(trace, list(range(na)), 0.5, "zbar")
for (ell, tau2), (_, tau1) in zip(z2, z1):
    print(f"distance {int(ell):2d}: z2bar crosses at tau={tau2:6.2f}, zbar at tau={tau1:5.2f}")

ok = ~np.isnan(z2[:, 1])
slope, icpt, r2 = linear_r2(z2[ok, 0], z2[ok, 1])
print(f"front: tau ~ {slope:.2f} l + {icpt:.2f} (R^2 {r2:.3f}), velocity {1 / slope:.3f}")
