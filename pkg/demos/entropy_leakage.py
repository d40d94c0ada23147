"""
How much a broadcast leaks to the receiver it is not serving
============================================================

With one-slot-late link states a transmitter cannot hide its signal from
the second receiver: the second receiver's output entropy stays above a
``1/(2 - p)`` share of the first's.  Exact enumeration over small horizons
shows it.
"""

import numpy as np

from bfic.entropy import (exact_entropies, leakage_bound, leakage_delivery_closed_form,
                          leakage_delivery_fraction, leakage_strategy, random_strategy,
                          verify_leakage_bound)

rng = np.random.default_rng(0)

for check in verify_leakage_bound([0.3, 0.5, 0.8], 50, rng):
    print(f"p={check.p}: bound {check.bound:.4f}, smallest ratio {check.min_ratio:.4f} "
          f"({check.worst}), violations {check.violations}")

###############################################################################
# The retransmit-until-heard rule gets closer to the bound as the horizon
# grows.

for n in (2, 4, 6):
    rep = exact_entropies(leakage_strategy(3, n), 0.5)
    print(f"n={n}: H1={rep.h1:.4f} H2={rep.h2:.4f} ratio={rep.ratio:.4f} "
          f"(bound {leakage_bound(0.5):.4f})")

rep = exact_entropies(random_strategy(3, 4, rng), 0.5)
print(f"a random rule: ratio {rep.ratio:.4f}")

###############################################################################
# Over a long horizon the second receiver hears a 1/(1+q) share of the bits.

for p in (0.3, 0.5, 0.8):
    frac = leakage_delivery_fraction(5000, p, rng)
    print(f"p={p}: heard {frac:.4f}, predicted {leakage_delivery_closed_form(p):.4f}")
