"""
Capacity regions under five kinds of transmitter knowledge
==========================================================

Corner points of each region at a few link probabilities, then the sum
capacity curves and where the feedback curves split off.
"""

import numpy as np

from bfic import regions
from bfic.regions import Scenario

for p in (0.2, 0.5, 0.8):
    print(f"p = {p}")
    for s in Scenario:
        corners = regions.corner_points(regions.region(s, p))
        print(f"  {s.value:<9}", "  ".join(f"({a:.3f}, {b:.3f})" for a, b in corners))

###############################################################################
# Sum capacity on a grid.  Delayed knowledge buys most of the gap between no
# knowledge and instantaneous knowledge at moderate p.

grid = np.linspace(0.1, 0.9, 9)
print("\n   p  " + "  ".join(f"{s.value:>9}" for s in Scenario))
for p in grid:
    print(f"{p:5.2f} " + "  ".join(f"{regions.sum_capacity(s, p):9.4f}" for s in Scenario))

###############################################################################
# Feedback helps the delayed scheme only below one threshold and the
# instantaneous scheme only above another.  Bisection finds both.

low = regions.locate_crossover(Scenario.DcsitOfb, Scenario.Dcsit)
high = regions.locate_crossover(Scenario.IcsitOfb, Scenario.Icsit)
print(f"\nfeedback gap closes at p = {low:.9f} (delayed) and opens at p = {high:.9f} (instantaneous)")

rep = regions.region_consistency_report(0.3)
print("consistency checks at p=0.3:", rep.checks)
