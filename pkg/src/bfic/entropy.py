"""Exact output entropies for a one-transmitter, two-receiver fading broadcast.

A transmitter holding ``m`` uniform message bits sends one bit per slot to
two receivers over independent on/off links, ``y_i[t] = g_i[t] x[t]``.  The
transmitter sees the link states one slot late, so its rule may depend on
the message and on the gains of strictly earlier slots only.

:func:`exact_entropies` enumerates every gain sequence and every message and
returns ``H(Y_i^n | G^n)`` in bits.  With delayed state the weaker receiver
always keeps at least a ``1/(2 - p)`` share of the stronger receiver's
entropy; :func:`verify_leakage_bound` tries to falsify that on random rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_M = 12
MAX_N = 8

# rule(t, past_g1, past_g2, msgs) -> bits, one per row of msgs
Rule = Callable[[int, tuple, tuple, np.ndarray], np.ndarray]


@dataclass
class BcStrategy:
    m: int
    n: int
    rule: Rule
    name: str = "rule"


@dataclass
class EntropyReport:
    h1: float
    h2: float
    ratio: float | None
    bound: float

    @property
    def undefined(self) -> bool:
        return self.ratio is None

    @property
    def holds(self) -> bool:
        return self.ratio is None or self.ratio >= self.bound - 1e-9


def leakage_bound(p: float) -> float:
    return 1.0 / (2.0 - p)


def all_messages(m: int) -> np.ndarray:
    """Every ``m``-bit message as a row; row ``i`` spells ``i`` least-significant bit first."""
    idx = np.arange(1 << m)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(np.uint8)


def message_index(msgs: np.ndarray) -> np.ndarray:
    msgs = np.asarray(msgs, dtype=np.int64)
    return msgs @ (1 << np.arange(msgs.shape[1], dtype=np.int64))


def _label_entropy(labels: np.ndarray) -> float:
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    prob = counts / labels.size
    return float(-(prob * np.log2(prob)).sum())


def exact_entropies(strategy: BcStrategy, p: float) -> EntropyReport:
    """``H(Y_1^n | G^n)`` and ``H(Y_2^n | G^n)`` by full enumeration."""
    m, n = strategy.m, strategy.n
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if not (1 <= m <= MAX_M and 1 <= n <= MAX_N):
        raise ValueError(f"enumeration limited to m <= {MAX_M}, n <= {MAX_N}")
    q = 1.0 - p
    msgs = all_messages(m)
    h = [0.0, 0.0]

    # depth-first over gain histories; labels encode each receiver's outputs so far
    stack = [((), (), 1.0, np.zeros(msgs.shape[0], np.int64), np.zeros(msgs.shape[0], np.int64))]
    while stack:
        g1, g2, prob, lab1, lab2 = stack.pop()
        t = len(g1)
        if t == n:
            h[0] += prob * _label_entropy(lab1)
            h[1] += prob * _label_entropy(lab2)
            continue
        x = np.asarray(strategy.rule(t, g1, g2, msgs), dtype=np.int64).ravel()
        if x.shape[0] != msgs.shape[0] or np.any((x != 0) & (x != 1)):
            raise ValueError(f"rule {strategy.name!r} must return one bit per message")
        for a in (0, 1):
            for b in (0, 1):
                w = prob * (p if a else q) * (p if b else q)
                if w == 0.0:
                    continue
                stack.append((g1 + (a,), g2 + (b,), w, 2 * lab1 + a * x, 2 * lab2 + b * x))
    h1, h2 = h
    ratio = h2 / h1 if h1 > 1e-12 else None
    return EntropyReport(h1, h2, ratio, leakage_bound(p))


# -- strategies ----------------------------------------------------------------

def leakage_strategy(m: int, n: int | None = None) -> BcStrategy:
    """Resend the head bit until a past slot shows receiver 1 got it, then advance."""
    if m < 1:
        raise ValueError("m must be positive")

    def rule(t, g1, g2, msgs):
        head = sum(g1)
        if head >= m:
            return np.zeros(msgs.shape[0], dtype=np.uint8)
        return msgs[:, head]

    return BcStrategy(m, n if n is not None else m, rule, "leakage")


def constant_strategy(m: int, n: int, bit: int = 0) -> BcStrategy:
    return BcStrategy(m, n, lambda t, g1, g2, msgs: np.full(msgs.shape[0], bit, np.uint8),
                      f"constant{bit}")


def _history_index(g1: tuple, g2: tuple) -> int:
    return sum((2 * a + b) << (2 * s) for s, (a, b) in enumerate(zip(g1, g2)))


def random_history_strategy(m: int, n: int, rng: np.random.Generator) -> BcStrategy:
    """Uniform truth table over (full gain history, message)."""
    if n > 4:
        raise ValueError("full-history tables are limited to n <= 4")
    offsets = np.concatenate([[0], np.cumsum(4 ** np.arange(n))])
    table = rng.integers(0, 2, (int(offsets[-1]), 1 << m), dtype=np.uint8)

    def rule(t, g1, g2, msgs):
        return table[offsets[t] + _history_index(g1, g2), message_index(msgs)]

    return BcStrategy(m, n, rule, "history-table")


def random_count_strategy(m: int, n: int, rng: np.random.Generator) -> BcStrategy:
    """Uniform truth table over (slot, past ones on each link, message)."""
    table = rng.integers(0, 2, (n, n + 1, n + 1, 1 << m), dtype=np.uint8)

    def rule(t, g1, g2, msgs):
        return table[t, sum(g1), sum(g2), message_index(msgs)]

    return BcStrategy(m, n, rule, "count-table")


def random_strategy(m: int, n: int, rng: np.random.Generator) -> BcStrategy:
    if n <= 4:
        return random_history_strategy(m, n, rng)
    return random_count_strategy(m, n, rng)


def permuted(strategy: BcStrategy, perm) -> BcStrategy:
    """Same rule with the message bits relabelled by ``perm``."""
    perm = np.asarray(perm)

    def rule(t, g1, g2, msgs):
        return strategy.rule(t, g1, g2, msgs[:, perm])

    return BcStrategy(strategy.m, strategy.n, rule, strategy.name + "-permuted")


# -- Monte Carlo delivery of the leakage strategy ---------------------------------

def leakage_delivery_fraction(m: int, p: float, rng: np.random.Generator) -> float:
    """Fraction of bits receiver 2 hears while the leakage strategy serves receiver 1.

    Each bit is resent until receiver 1 gets it; receiver 2 learns it if its
    link was on in any of those slots.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    heard = 0
    for _ in range(m):
        got = False
        while True:
            g1, g2 = rng.random(2) < p
            got |= bool(g2)
            if g1:
                break
        heard += got
    return heard / m


def leakage_delivery_closed_form(p: float) -> float:
    """Per bit: sent Geometric(p) times; receiver 2 misses it with probability pq / (1 - q^2)."""
    q = 1.0 - p
    return 1.0 - p * q / (1.0 - q * q)


# -- falsification harness ------------------------------------------------------------

@dataclass
class BoundCheck:
    p: float
    bound: float
    min_ratio: float
    worst: str
    leakage_ratio: float | None
    violations: int
    trials: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_leakage_bound(p_grid, trials: int, rng: np.random.Generator, *, m: int = 2,
                         n: int = 3) -> list[BoundCheck]:
    """Random rules against the bound, one row per ``p``.  The leakage rule is always included."""
    out = []
    for p in p_grid:
        if not 0 < p < 1:
            raise ValueError("grid points must lie in (0, 1)")
        bound = leakage_bound(p)
        best, worst, bad = math.inf, "", 0
        for i in range(trials):
            rep = exact_entropies(random_strategy(m, n, rng), p)
            if rep.ratio is None:
                continue
            if rep.ratio < bound - 1e-9:
                bad += 1
            if rep.ratio < best:
                best, worst = rep.ratio, f"random#{i}"
        leak = exact_entropies(leakage_strategy(m, n), p).ratio
        if leak is not None:
            if leak < bound - 1e-9:
                bad += 1
            if leak <= best:
                best, worst = leak, "leakage"
        out.append(BoundCheck(p, bound, best, worst, leak, bad, trials))
    return out
