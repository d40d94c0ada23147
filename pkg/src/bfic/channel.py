"""Binary fading interference channel: state sampling, case labels, reception.

Gains are stored in the order ``(g11, g12, g21, g22)`` where ``gij`` is the
link from transmitter ``i`` to receiver ``j``.  Case labels 1..16 follow the
canonical table indexed in ``(g11, g21, g12, g22)`` order.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ChannelState(NamedTuple):
    g11: int
    g12: int
    g21: int
    g22: int


# (g11, g21, g12, g22) for case ids 1..16
CASE_TUPLES = (
    (1, 1, 1, 1),
    (1, 0, 1, 1),
    (1, 1, 0, 1),
    (1, 0, 0, 1),
    (1, 0, 0, 0),
    (1, 0, 1, 0),
    (1, 1, 0, 0),
    (1, 1, 1, 0),
    (0, 0, 0, 1),
    (0, 1, 0, 1),
    (0, 0, 1, 1),
    (0, 1, 1, 1),
    (0, 1, 0, 0),
    (0, 0, 1, 0),
    (0, 1, 1, 0),
    (0, 0, 0, 0),
)


def _build_lookup(tuples):
    table = np.zeros(16, dtype=np.int8)
    for case, (g11, g21, g12, g22) in enumerate(tuples, start=1):
        table[8 * g11 + 4 * g21 + 2 * g12 + g22] = case
    if sorted(table.tolist()) != list(range(1, 17)):
        raise ValueError("case table is not a bijection")
    return table


_CASE_LOOKUP = _build_lookup(CASE_TUPLES)

# Gains per case id in storage order (g11, g12, g21, g22); row 0 unused.
CASE_GAINS = np.zeros((17, 4), dtype=np.uint8)
for _c, (_g11, _g21, _g12, _g22) in enumerate(CASE_TUPLES, start=1):
    CASE_GAINS[_c] = (_g11, _g12, _g21, _g22)


def _check_p(p):
    if not (0.0 <= p <= 1.0) or p != p:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")


def sample_state(p: float, rng: np.random.Generator) -> ChannelState:
    _check_p(p)
    g = (rng.random(4) < p).astype(int)
    return ChannelState(*g.tolist())


def sample_gains(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. slots; returns an ``(n, 4)`` uint8 array of gains."""
    _check_p(p)
    return (rng.random((n, 4)) < p).astype(np.uint8)


def classify_case(state) -> int:
    g11, g12, g21, g22 = (int(v) for v in state)
    for v in (g11, g12, g21, g22):
        if v not in (0, 1):
            raise ValueError("channel gains must be 0 or 1")
    return int(_CASE_LOOKUP[8 * g11 + 4 * g21 + 2 * g12 + g22])


def classify_cases(gains: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify_case` over an ``(n, 4)`` gain array."""
    g = np.asarray(gains, dtype=np.int64)
    idx = 8 * g[:, 0] + 4 * g[:, 2] + 2 * g[:, 1] + g[:, 3]
    return _CASE_LOOKUP[idx]


def state_of_case(case: int) -> ChannelState:
    if not 1 <= case <= 16:
        raise ValueError(f"case id must be in 1..16, got {case}")
    return ChannelState(*CASE_GAINS[case].tolist())


def case_probability(case: int, p: float) -> float:
    _check_p(p)
    state_of_case(case)
    ones = int(CASE_GAINS[case].sum())
    return p**ones * (1.0 - p) ** (4 - ones)


def case_probabilities(p: float) -> np.ndarray:
    """Array of length 17; entry ``c`` is the probability of case ``c``."""
    _check_p(p)
    ones = CASE_GAINS.sum(axis=1).astype(float)
    out = p**ones * (1.0 - p) ** (4 - ones)
    out[0] = 0.0
    return out


def receive(state, x1: int, x2: int) -> tuple[int, int]:
    g11, g12, g21, g22 = (int(v) for v in state)
    if x1 not in (0, 1) or x2 not in (0, 1):
        raise ValueError("inputs must be bits")
    y1 = (g11 & x1) ^ (g21 & x2)
    y2 = (g22 & x2) ^ (g12 & x1)
    return y1, y2


def receive_many(gains: np.ndarray, x1: np.ndarray, x2: np.ndarray):
    """Vectorised reception; returns ``(y1, y2)`` uint8 arrays."""
    g = np.asarray(gains, dtype=np.uint8)
    x1 = np.asarray(x1, dtype=np.uint8)
    x2 = np.asarray(x2, dtype=np.uint8)
    y1 = (g[:, 0] & x1) ^ (g[:, 2] & x2)
    y2 = (g[:, 3] & x2) ^ (g[:, 1] & x1)
    return y1, y2


def spawn_rngs(root_seed: int, count: int) -> list[np.random.Generator]:
    """One independent stream per trial, derived from a single root seed."""
    children = np.random.SeedSequence(root_seed).spawn(count)
    return [np.random.default_rng(s) for s in children]
