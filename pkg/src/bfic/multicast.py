"""Two-multicast transport: both transmitters deliver a pool to both receivers.

At the corner (p, pq) transmitter 1 codes at rate ``p - delta`` and
transmitter 2 at ``pq - delta`` over the same slots.  Each receiver first
recovers transmitter 2's codeword from the slots where only that transmitter
reaches it, strips it, then decodes transmitter 1.  The other corner is the
mirror image, and the symmetric point time-shares the two.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import sample_gains
from .regions import Region
from .receiver import Transcript, decode_receiver

DEFAULT_MAX_BLOCK = 12_000


class MulticastMode(enum.Enum):
    CornerP_PQ = "CornerP_PQ"
    CornerPQ_P = "CornerPQ_P"
    SymmetricTimeShare = "SymmetricTimeShare"


@dataclass
class MulticastJob:
    pool1: np.ndarray
    pool2: np.ndarray
    p: float
    delta: float
    mode: MulticastMode = MulticastMode.SymmetricTimeShare

    def __post_init__(self):
        self.pool1 = np.asarray(self.pool1, dtype=np.uint8).ravel()
        self.pool2 = np.asarray(self.pool2, dtype=np.uint8).ravel()
        self.mode = MulticastMode(self.mode)
        check_rates(self.pool1.size, self.pool2.size, self.p, self.delta, self.mode)


@dataclass
class MulticastOutcome:
    slots_used: int
    decoded_at_rx1: tuple
    decoded_at_rx2: tuple
    failure_detail: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.decoded_at_rx1) and all(self.decoded_at_rx2)


def check_rates(k1: int, k2: int, p: float, delta: float, mode) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if k1 == 0 and k2 == 0:
        raise ValueError("at least one pool must be nonempty")
    if delta <= 0:
        raise ValueError("delta must be positive")
    hi, lo = p - delta, p * (1 - p) - delta
    mode = MulticastMode(mode)
    if mode is MulticastMode.SymmetricTimeShare:
        need_lo = k1 > 0 or k2 > 0
        if hi <= 0 or (need_lo and lo <= 0 and (k1 > 0 and k2 > 0)):
            raise ValueError("delta too large for the time-shared rates")
        return
    r1, r2 = (hi, lo) if mode is MulticastMode.CornerP_PQ else (lo, hi)
    if k1 > 0 and r1 <= 0:
        raise ValueError("delta leaves no rate for pool 1")
    if k2 > 0 and r2 <= 0:
        raise ValueError("delta leaves no rate for pool 2")


def _segment_lengths(k1: int, k2: int, r1: float, r2: float, max_block: int):
    """Cut one corner's work into code blocks: yields (slots, n1, n2).

    Blocks are of near-equal length; a short tail block would keep the same
    relative slack but far fewer standard deviations of it.
    """
    while k1 > 0 or k2 > 0:
        need = 0
        if k1 > 0:
            need = max(need, math.ceil(k1 / r1))
        if k2 > 0:
            need = max(need, math.ceil(k2 / r2))
        n = math.ceil(need / math.ceil(need / max_block))
        a = min(k1, math.floor(r1 * n)) if r1 > 0 else 0
        b = min(k2, math.floor(r2 * n)) if r2 > 0 else 0
        if a == 0 and b == 0:
            raise ValueError("block too short to carry any symbol")
        yield n, a, b
        k1 -= a
        k2 -= b


def _corner_slots(x: int, y: int, rx: float, ry: float) -> int:
    n = 0
    if x:
        n = max(n, math.ceil(x / rx))
    if y:
        n = max(n, math.ceil(y / ry))
    return n


def time_share_split(k1: int, k2: int, p: float, delta: float):
    """Symbols per corner: ((k1A, k2A), (k1B, k2B)) with A = (p, pq), B = (pq, p).

    Starts from the real-valued split and searches nearby integer splits for
    the fewest total slots.
    """
    a, c = p - delta, p * (1 - p) - delta
    if c <= 0:
        return (k1, k2), (0, 0)
    det = a * a - c * c
    nA = (a * k1 - c * k2) / det
    nB = (a * k2 - c * k1) / det
    if nB <= 0:
        return (k1, k2), (0, 0)
    if nA <= 0:
        return (0, 0), (k1, k2)
    best = None
    x0, y0 = round(a * nA), round(c * nA)
    for x in range(max(0, x0 - 3), min(k1, x0 + 3) + 1):
        for y in range(max(0, y0 - 3), min(k2, y0 + 3) + 1):
            cost = _corner_slots(x, y, a, c) + _corner_slots(k1 - x, k2 - y, c, a)
            if best is None or cost < best[0]:
                best = (cost, x, y)
    _, x, y = best
    return (x, y), (k1 - x, k2 - y)


def plan_multicast(k1: int, k2: int, p: float, delta: float, mode, max_block: int = DEFAULT_MAX_BLOCK):
    """List of code blocks ``(slots, n_sym_tx1, n_sym_tx2)`` covering both pools."""
    mode = MulticastMode(mode)
    hi, lo = p - delta, p * (1 - p) - delta
    if mode is MulticastMode.CornerP_PQ:
        return list(_segment_lengths(k1, k2, hi, lo, max_block))
    if mode is MulticastMode.CornerPQ_P:
        return list(_segment_lengths(k1, k2, lo, hi, max_block))
    (k1A, k2A), (k1B, k2B) = time_share_split(k1, k2, p, delta)
    plan = list(_segment_lengths(k1A, k2A, hi, lo, max_block)) if k1A or k2A else []
    if k1B or k2B:
        plan += list(_segment_lengths(k1B, k2B, lo, hi, max_block))
    return plan


def schedule_multicast(tr: Transcript, syms1: np.ndarray, syms2: np.ndarray, p: float, delta: float,
                       rng: np.random.Generator, mode=MulticastMode.SymmetricTimeShare,
                       max_block: int = DEFAULT_MAX_BLOCK, label: str = "multicast"):
    """Append a multicast of two symbol pools to a transcript.

    ``syms_i`` are ``(k, 2)`` variable-id pairs (or 1-D ids).  Returns
    ``(slots_used, streams)``.
    """
    syms1 = _as_pairs(syms1)
    syms2 = _as_pairs(syms2)
    k1, k2 = len(syms1), len(syms2)
    if k1 == 0 and k2 == 0:
        return 0, []
    plan = plan_multicast(k1, k2, p, delta, mode, max_block)
    used = 0
    i1 = i2 = 0
    streams = []
    for n, a, b in plan:
        slots = tr.add_slots(sample_gains(n, p, rng))
        used += n
        if a:
            streams.append(tr.add_stream(1, slots, syms1[i1:i1 + a], rng, f"{label}/tx1"))
            i1 += a
        if b:
            streams.append(tr.add_stream(2, slots, syms2[i2:i2 + b], rng, f"{label}/tx2"))
            i2 += b
    return used, streams


def _as_pairs(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.int64)
    if s.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if s.ndim == 1:
        return np.stack([s, np.zeros_like(s)], axis=1)
    return s


def run_multicast(job: MulticastJob, rng: np.random.Generator,
                  max_block: int = DEFAULT_MAX_BLOCK) -> MulticastOutcome:
    tr = Transcript()
    ids1 = tr.alloc(job.pool1)
    ids2 = tr.alloc(job.pool2)
    used, streams = schedule_multicast(tr, ids1, ids2, job.p, job.delta, rng, job.mode, max_block)
    verdict = {}
    detail = []
    for rx in (1, 2):
        rcv = decode_receiver(tr, rx)
        for i, s in enumerate(streams):
            if not rcv.reports[i].decoded:
                detail.append({"rx": rx, "stream": s.label, "rank_deficit": rcv.reports[i].rank_deficit})
        flags = []
        for ids in (ids1, ids2):
            known, val = rcv.recover(ids)
            flags.append(bool(known.all() and np.array_equal(val, tr.values[ids])))
        verdict[rx] = tuple(flags)
    return MulticastOutcome(used, verdict[1], verdict[2], detail)


def multicast_region(p: float) -> Region:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    q = 1.0 - p
    return Region(None, ((1.0, 0.0, p), (0.0, 1.0, p), (1.0, 1.0, 1.0 - q * q)), p)
