"""Capacity regions of the two-user binary fading interference channel.

Each region is a 2-D polytope stored as half-planes ``a*R1 + b*R2 <= c``
intersected with the nonnegative quadrant.  Vertices come from pairwise
line intersections, which is all a planar polytope needs.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_TOL = 1e-9
_DEDUP = 1e-12

# p below which delayed CSIT with and without feedback share a sum capacity
OFB_DCSIT_THRESHOLD = (3.0 - math.sqrt(5.0)) / 2.0
# p below which instantaneous CSIT gains from output feedback
OFB_ICSIT_THRESHOLD = 0.5


class Scenario(enum.Enum):
    NoCsit = "NoCsit"
    Icsit = "Icsit"
    Dcsit = "Dcsit"
    DcsitOfb = "DcsitOfb"
    IcsitOfb = "IcsitOfb"


class RateTuple(NamedTuple):
    r1: float
    r2: float


@dataclass(frozen=True)
class Region:
    scenario: Scenario | None
    constraints: tuple
    p: float

    def contains(self, rate, tol: float = DEFAULT_TOL) -> bool:
        return contains(self, rate, tol)


def _check_p(p):
    if not (0.0 <= p <= 1.0) or p != p:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")


def _as_scenario(scenario) -> Scenario:
    if isinstance(scenario, Scenario):
        return scenario
    try:
        return Scenario(scenario)
    except ValueError:
        lowered = {s.value.lower(): s for s in Scenario}
        key = str(scenario).lower().replace("_", "").replace("-", "")
        if key in lowered:
            return lowered[key]
        raise ValueError(f"unknown scenario {scenario!r}") from None


def region(scenario, p: float) -> Region:
    _check_p(p)
    scenario = _as_scenario(scenario)
    q = 1.0 - p
    single = [(1.0, 0.0, p), (0.0, 1.0, p)]
    if scenario is Scenario.NoCsit:
        cons = single + [(1.0, 1.0, 1.0 - q * q)]
    elif scenario is Scenario.Icsit:
        cons = single + [(1.0, 1.0, 1.0 - q * q + p * q)]
    elif scenario is Scenario.Dcsit:
        cons = single + _delayed_pair(p)
    elif scenario is Scenario.DcsitOfb:
        cons = _delayed_pair(p)
    else:
        cons = [(1.0, 0.0, 1.0 - q * q), (0.0, 1.0, 1.0 - q * q),
                (1.0, 1.0, 1.0 - q * q + p * q)]
    return Region(scenario, tuple(cons), p)


def _delayed_pair(p):
    q = 1.0 - p
    rhs = p * (1.0 + q) ** 2
    return [(1.0, 1.0 + q, rhs), (1.0 + q, 1.0, rhs)]


def contains(reg: Region, rate, tol: float = DEFAULT_TOL) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    r1, r2 = float(rate[0]), float(rate[1])
    if r1 < -tol or r2 < -tol:
        return False
    return all(a * r1 + b * r2 <= c + tol for a, b, c in reg.constraints)


def contains_many(reg: Region, rates: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised membership over an ``(n, 2)`` array of rate pairs."""
    rates = np.asarray(rates, dtype=float)
    ok = (rates >= -tol).all(axis=1)
    for a, b, c in reg.constraints:
        ok &= a * rates[:, 0] + b * rates[:, 1] <= c + tol
    return ok


def corner_points(reg: Region) -> list[RateTuple]:
    lines = list(reg.constraints) + [(-1.0, 0.0, 0.0), (0.0, -1.0, 0.0)]
    pts = []
    for i in range(len(lines)):
        a1, b1, c1 = lines[i]
        for j in range(i + 1, len(lines)):
            a2, b2, c2 = lines[j]
            det = a1 * b2 - a2 * b1
            if abs(det) < 1e-15:
                continue
            x = (c1 * b2 - c2 * b1) / det
            y = (a1 * c2 - a2 * c1) / det
            # snap tiny negatives produced by rounding
            x = 0.0 if abs(x) < _DEDUP else x
            y = 0.0 if abs(y) < _DEDUP else y
            # nearly parallel lines (q -> 0) leave ~eps/|det| of rounding in the vertex
            if contains(reg, (x, y), max(1e-12, 1e-14 / abs(det))):
                pts.append((x, y))
    pts.sort()
    out: list[RateTuple] = []
    for x, y in pts:
        if any(abs(x - u) <= _DEDUP and abs(y - v) <= _DEDUP for u, v in out):
            continue
        out.append(RateTuple(x, y))
    return out


def sum_capacity(scenario, p: float) -> float:
    pts = corner_points(region(scenario, p))
    return max(r1 + r2 for r1, r2 in pts)


def sum_capacity_curve(scenario, p_grid: Iterable[float]) -> list[tuple[float, str, float]]:
    scenario = _as_scenario(scenario)
    rows = []
    for p in p_grid:
        p = float(p)
        rows.append((p, scenario.value, sum_capacity(scenario, p)))
    return rows


def write_curve_csv(rows, out=None) -> str:
    """Emit ``p,scenario,sum_rate`` rows with 12 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "scenario", "sum_rate"])
    for p, scen, val in rows:
        w.writerow([f"{p:.12g}", scen, f"{val:.12g}"])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass
class ConsistencyReport:
    p: float
    checks: dict          # name -> "pass" | "fail" | "n/a"
    strict: dict          # name -> bool, strictness of the inclusions in (c)

    @property
    def passed(self) -> bool:
        return all(v != "fail" for v in self.checks.values())


def region_consistency_report(p: float, samples: int = 10_000, rng=None) -> ConsistencyReport:
    _check_p(p)
    if rng is None:
        rng = np.random.default_rng(0)
    pts = rng.random((samples, 2))
    # extra mass near the boundaries where the regions differ
    near = rng.random((samples, 2)) * max(p, 1e-3) * 1.2
    pts = np.vstack([pts, near])

    member = {s: contains_many(region(s, p), pts) for s in Scenario}
    individual = (pts[:, 0] <= p + DEFAULT_TOL) & (pts[:, 1] <= p + DEFAULT_TOL)

    checks = {}
    strict = {}
    checks["a"] = "pass" if np.array_equal(member[Scenario.Dcsit],
                                           individual & member[Scenario.DcsitOfb]) else "fail"
    if p <= OFB_DCSIT_THRESHOLD:
        same = np.array_equal(member[Scenario.Dcsit], member[Scenario.Icsit])
        checks["b"] = "pass" if same else "fail"
    else:
        checks["b"] = "n/a"
    no, dl, ic = member[Scenario.NoCsit], member[Scenario.Dcsit], member[Scenario.Icsit]
    nested = (not np.any(no & ~dl)) and (not np.any(dl & ~ic))
    checks["c"] = "pass" if nested else "fail"
    strict["NoCsit<Dcsit"] = bool(np.any(dl & ~no))
    strict["Dcsit<Icsit"] = bool(np.any(ic & ~dl))
    return ConsistencyReport(p, checks, strict)


def locate_crossover(upper, lower, lo: float = 1e-6, hi: float = 1.0 - 1e-6,
                     tol: float = 1e-12, gap: float = 1e-13) -> float:
    """Bisect for the smallest p beyond which ``sum_capacity(upper) - sum_capacity(lower)``
    stops being positive."""
    def positive(p):
        return sum_capacity(upper, p) - sum_capacity(lower, p) > gap

    if not positive(lo) or positive(hi):
        raise ValueError("difference does not change sign on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def point_a_rate(p: float) -> float:
    """Symmetric per-user rate at the delayed-CSIT sum-rate point."""
    q = 1.0 - p
    s = 1.0 - q * q
    return s / (1.0 + p / s)


def corner_c(p: float) -> RateTuple:
    q = 1.0 - p
    return RateTuple(p * q * (1.0 + q), p)
