"""
Retrospective alignment with one-slot-late channel knowledge
============================================================

Runs the symmetric sum-rate scheme at a moderate size and shows how the
slots split over its phases.  The full-size check lives in the acceptance
tests; this is the quick tour.
"""

import numpy as np

from bfic import regions
from bfic.delayed import Kind, Table, phase1, phase1_expectations, run_point_A
from bfic.queues import tag

p, m = 0.5, 20_000
rng = np.random.default_rng(2024)

###############################################################################
# Phase 1 alone: every fresh bit is sent once and then filed by what the
# receivers saw.  Queue sizes land close to their expectations.

qs, halt = phase1(m, m, p, 2 * m, Table.TableI, rng)
expect = phase1_expectations(p, m)
print(f"phase 1 halt: {halt}")
for kind in (Kind.C1, Kind.NeedOwn, Kind.NeedOther, Kind.ToBoth):
    print(f"  {kind.name:<10} tx1={qs.count(tag(kind, 1)):6d}  tx2={qs.count(tag(kind, 2)):6d}"
          f"  expected {expect[kind]:8.0f}")

###############################################################################
# The whole scheme: merging, the multicast of common-interest bits and the
# coded phases.  Both receivers decode from outputs and gains alone.

res = run_point_A(m, p, 0.02, np.random.default_rng(7))
print(f"\nhalted: {res.halted}  slots: {res.slots_used}")
for ph in res.phase_stats:
    print(f"  {ph.name:<28} {ph.slots:7d} slots")
target = regions.point_a_rate(p)
print(f"rates ({res.empirical_rates.r1:.4f}, {res.empirical_rates.r2:.4f}) vs {target:.4f} "
      f"at infinite length")
