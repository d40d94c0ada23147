"""Delayed-CSIT protocols: the symmetric sum-rate point and the asymmetric corner.

Every scheme builds a :class:`~bfic.receiver.Transcript` slot by slot, moves
tracked bits between queues as the delayed channel state becomes known, and
finally runs an independent decoder at each receiver.  A run counts as a
success only when both receivers reproduce their whole message bit-exactly.

Queue boundaries are handled adaptively: a phase that drains a queue stops
as soon as the queue is empty (transmitters learn this from the delayed
state), with the nominal phase length kept as a hard cap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .channel import CASE_GAINS, case_probabilities, classify_cases, sample_gains
from .multicast import DEFAULT_MAX_BLOCK, MulticastMode, schedule_multicast
from .queues import Kind, QueueSet, tag
from .receiver import Transcript, decode_receiver
from .regions import RateTuple

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LOW_REGIME = (3.0 - math.sqrt(5.0)) / 2.0
BLOCK_TARGET = 20_000
TAIL_Z = 4.0

S, F, C1, TB, OWN, OTH, INT, OP = (0, Kind.Final, Kind.C1, Kind.ToBoth, Kind.NeedOwn,
                                   Kind.NeedOther, Kind.Intermediate, Kind.Opportunistic)


class Table(enum.Enum):
    TableI = "TableI"
    TableIV = "TableIV"
    TableV = "TableV"
    Upgrade = "Upgrade"            # retransmission of intermediate bits, sum-rate scheme
    UpgradeLiteral = "UpgradeLiteral"
    UpgradeCorner = "UpgradeCorner"


class Halt(enum.Enum):
    TypeI = "TypeI"
    TypeII = "TypeII"
    DecodeFail = "DecodeFail"


_FRESH = {1: (C1, C1), 2: (OTH, F), 3: (F, OTH), 4: (F, F), 5: (F, S), 6: (F, S),
          7: (F, TB), 8: (F, TB), 9: (S, F), 10: (S, F), 11: (TB, F), 12: (TB, F),
          13: (S, OWN), 14: (OWN, S), 15: (OWN, OWN), 16: (S, S)}

_UPGRADE_LITERAL = {1: (C1, C1), 2: (OTH, F), 3: (F, OTH), 4: (OTH, OTH), 5: (OTH, S),
                    6: (F, S), 7: (C1, S), 8: (F, S), 9: (S, OTH), 10: (S, F), 11: (S, C1),
                    12: (S, F), 13: (S, OWN), 14: (OWN, S), 15: (OWN, OWN), 16: (S, S)}

TRANSITIONS = {
    Table.TableI: _FRESH,
    Table.TableIV: {**_FRESH, 7: (F, INT), 8: (F, INT), 11: (INT, F), 12: (INT, F)},
    Table.TableV: {**_FRESH, 1: (C1, F), 2: (OP, F), 3: (F, OP), 7: (F, INT), 8: (F, INT),
                   11: (INT, F), 12: (INT, F)},
    Table.UpgradeLiteral: _UPGRADE_LITERAL,
    # an intermediate bit is wanted by both receivers, so a bit whose partner
    # reached only one side of a case-2/3 slot must still go to the other one
    Table.Upgrade: {**_UPGRADE_LITERAL, 2: (OTH, OTH), 3: (OTH, OTH)},
    Table.UpgradeCorner: {1: (C1, F), 2: (OP, OP), 3: (C1, OP), 4: (OP, OP), 5: (OP, S),
                          6: (F, S), 7: (OP, S), 8: (F, S), 9: (S, OP), 10: (S, F),
                          11: (S, OP), 12: (S, F), 13: (S, OWN), 14: (OWN, S),
                          15: (OWN, OWN), 16: (S, S)},
}

# Transition when the other transmitter is silent, indexed [direct, cross].
# Fresh bits are wanted by the own receiver only; retransmitted ones by both.
_SOLO_FRESH = ((S, OWN), (F, F))
_SOLO = {
    Table.TableI: _SOLO_FRESH, Table.TableIV: _SOLO_FRESH, Table.TableV: _SOLO_FRESH,
    Table.Upgrade: ((S, OWN), (OTH, F)), Table.UpgradeLiteral: ((S, OWN), (OTH, F)),
    Table.UpgradeCorner: ((S, OWN), (OP, F)),
}


def _table_arrays(table: Table):
    tab = np.zeros((17, 2), dtype=np.int8)
    for c, (a, b) in TRANSITIONS[table].items():
        tab[c] = (int(a), int(b))
    solo = np.array([[[int(v) for v in row] for row in _SOLO[table]]] * 2, dtype=np.int8)
    return tab, solo


@numba.njit(cache=True)
def _drive(gains, cases, n1, n2, tab, solo):
    """Send queue heads slot by slot until both queues drain or slots run out."""
    T = cases.shape[0]
    sent1 = np.full(T, -1, dtype=np.int64)
    sent2 = np.full(T, -1, dtype=np.int64)
    dest1 = np.zeros(n1, dtype=np.int8)
    dest2 = np.zeros(n2, dtype=np.int8)
    left1 = np.full(n1, -1, dtype=np.int64)
    left2 = np.full(n2, -1, dtype=np.int64)
    h1 = 0
    h2 = 0
    t = 0
    while t < T:
        on1 = h1 < n1
        on2 = h2 < n2
        if not on1 and not on2:
            break
        c = cases[t]
        if on1:
            sent1[t] = h1
            d = tab[c, 0] if on2 else solo[0, gains[t, 0], gains[t, 1]]
            if d != 0:
                dest1[h1] = d
                left1[h1] = t
                h1 += 1
        if on2:
            sent2[t] = h2
            d = tab[c, 1] if on1 else solo[1, gains[t, 3], gains[t, 2]]
            if d != 0:
                dest2[h2] = d
                left2[h2] = t
                h2 += 1
        t += 1
    return t, sent1[:t], sent2[:t], dest1, dest2, left1, left2


# -- expectations -------------------------------------------------------

def leave_probability(table: Table, tx: int, p: float) -> float:
    probs = case_probabilities(p)
    return float(sum(probs[c] for c, d in TRANSITIONS[table].items() if d[tx - 1] != S))


def expected_counts(table: Table, m1: float, m2: float, p: float) -> dict:
    """Expected final queue sizes when both queues drain through ``table``."""
    probs = case_probabilities(p)
    out = {}
    for tx, m in ((1, m1), (2, m2)):
        go = leave_probability(table, tx, p)
        for c, d in TRANSITIONS[table].items():
            if d[tx - 1] != S:
                key = tag(d[tx - 1], tx)
                out[key] = out.get(key, 0.0) + probs[c] / go * m
    return out


def phase1_expectations(p: float, m: float) -> dict:
    """Closed forms for the fresh-bit phase of the symmetric scheme, per transmitter."""
    q = 1.0 - p
    s = 1.0 - q * q
    return {Kind.C1: p**4 / s * m, Kind.NeedOwn: p * q * q / s * m,
            Kind.NeedOther: p**3 * q / s * m, Kind.ToBoth: p * p * q / s * m}


def merged_common_mass(p: float, regime: str) -> float:
    """Per-user common-interest mass after merging, as a fraction of ``m (1-q^2)^-1``."""
    q = 1.0 - p
    if regime == "type2":
        return p * p * q + p * q * q + 0.5 * (p**4 - p * q * q + p**3 * q)
    if regime == "type3":
        return p * p * q + p**3 * q + 0.5 * (p**4 - p**3 * q + p * q * q)
    raise ValueError(regime)


# -- results ------------------------------------------------------------

@dataclass
class PhaseStat:
    name: str
    slots: int
    counts: dict = field(default_factory=dict)


@dataclass
class SchemeResult:
    slots_used: int
    bits_delivered: tuple
    halted: Halt | None
    empirical_rates: RateTuple
    phase_stats: list = field(default_factory=list)
    detail: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.halted is None


class _Stop(Exception):
    def __init__(self, kind: Halt, detail: str):
        super().__init__(detail)
        self.kind = kind
        self.detail = detail


# -- shared state ---------------------------------------------------------

class SchemeRun:
    """Transcript, queues and bookkeeping shared by the phases of one run."""

    def __init__(self, m1: int, m2: int, p: float, delta: float, rng: np.random.Generator,
                 forced_cases=None):
        self.p = p
        self.delta = delta
        self.rng = rng
        self.tr = Transcript()
        self.msg = (self.tr.alloc(rng.integers(0, 2, m1)), self.tr.alloc(rng.integers(0, 2, m2)))
        self.qs = QueueSet()
        self.qs.run = self
        self.forced = None if forced_cases is None else np.asarray(forced_cases, dtype=np.int64)
        self.stats: list[PhaseStat] = []
        self.checks: dict = {}
        self.m_scale = max(m1, m2)

    def gains(self, n: int):
        if self.forced is not None:
            cases, self.forced = self.forced[:n], self.forced[n:]
            return CASE_GAINS[cases].copy()
        return sample_gains(n, self.p, self.rng)

    def note(self, name: str, slots: int):
        self.stats.append(PhaseStat(name, slots, self.qs.counts()))

    def drive(self, table: Table, src: Kind, cap: int, only_tx2: bool = False) -> int:
        """Run queue-driven transmission out of ``src`` queues for at most ``cap`` slots."""
        qs = self.qs
        src1, src2 = tag(src, 1), tag(src, 2)
        ids1 = np.zeros(0, np.int64) if only_tx2 else qs.ids(src1)
        ids2 = qs.ids(src2)
        if ids1.size == 0 and ids2.size == 0 or cap <= 0:
            return 0
        g = self.gains(cap)
        tab, solo = _table_arrays(table)
        used, s1, s2, d1, d2, l1, l2 = _drive(g, classify_cases(g).astype(np.int64),
                                              ids1.size, ids2.size, tab, solo)
        sym1 = np.where(s1 >= 0, qs.single_vars(ids1)[np.maximum(s1, 0)] if ids1.size else 0, 0)
        sym2 = np.where(s2 >= 0, qs.single_vars(ids2)[np.maximum(s2, 0)] if ids2.size else 0, 0)
        slots = self.tr.add_slots(g[:used], None if only_tx2 else sym1, sym2)
        base = int(slots[0]) if used else self.tr.T
        for tx, ids, dest, left, src_t in ((1, ids1, d1, l1, src1), (2, ids2, d2, l2, src2)):
            if ids.size == 0:
                continue
            qs.take(src_t, ids.size)
            qs.push(src_t, ids[dest == 0])
            for kind in np.unique(dest[dest != 0]):
                sel = dest == kind
                qs.set_born(ids[sel], base + left[sel])
                qs.push(tag(Kind(int(kind)), tx), ids[sel])
        return used


# -- queue-level operations ----------------------------------------------

def phase1(m1: int, m2: int, p: float, duration: int, table, rng: np.random.Generator, *,
           forced_cases=None, delta: float = 0.02, run: SchemeRun | None = None):
    """Fresh-bit transmission.  Returns ``(QueueSet, halt)``; the run sits at ``qs.run``."""
    table = Table(table)
    if duration < 1:
        raise ValueError("duration must be at least one slot")
    if run is None:
        run = SchemeRun(m1, m2, p, delta, rng, forced_cases)
    qs = run.qs
    qs.values = run.tr.values if run.tr.nvars > 1 else None
    qs.add_initial(1, run.msg[0][:m1])
    qs.add_initial(2, run.msg[1][:m2])
    used = run.drive(table, Kind.Initial, duration)
    qs.values = run.tr.values
    run.note("phase1", used)
    if qs.count(tag(Kind.Initial, 1)) or qs.count(tag(Kind.Initial, 2)):
        return qs, Halt.TypeI
    if forced_cases is None and table in (Table.TableI, Table.TableIV, Table.TableV):
        slack = run.m_scale ** (2.0 / 3.0)
        for key, e in expected_counts(table, m1, m2, p).items():
            if key.kind in (Kind.Final, Kind.ToBoth):
                continue
            if qs.count(key) > e + slack:
                return qs, Halt.TypeII
    return qs, None


def _pair_groups(qs: QueueSet):
    """Split the C1 queues into aligned pairs (same birth slot) and singles."""
    c1, c2 = qs.ids(tag(Kind.C1, 1)), qs.ids(tag(Kind.C1, 2))
    b1, b2 = _keys(qs, c1), _keys(qs, c2)
    common, i1, i2 = np.intersect1d(b1, b2, assume_unique=True, return_indices=True)
    order = np.argsort(common, kind="stable")
    pairs = (c1[i1[order]], c2[i2[order]])
    single1 = np.setdiff1d(c1, pairs[0], assume_unique=True)
    single2 = np.setdiff1d(c2, pairs[1], assume_unique=True)
    return pairs, (single1, single2)


def _keys(qs: QueueSet, ids):
    born = qs.born(ids)
    # hand-built queues carry no birth slot; align them by position
    return np.where(born >= 0, born, -2 - np.arange(ids.size))


def _remove(qs: QueueSet, t, ids):
    cur = qs.ids(t)
    qs.queues[t] = cur[~np.isin(cur, ids)]


def merge_type1(qs: QueueSet) -> QueueSet:
    """XOR NeedOther heads with NeedOwn heads per transmitter into ToBoth."""
    for tx in (1, 2):
        n = min(qs.count(tag(OTH, tx)), qs.count(tag(OWN, tx)))
        if n:
            a = qs.take(tag(OTH, tx), n)
            b = qs.take(tag(OWN, tx), n)
            qs.push(tag(TB, tx), qs.merge(tx, a, b))
    return qs


def _closed_loops(qs: QueueSet, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Positions ``i`` whose merge would close a loop of equations.

    Pair ``i`` is merged as ``a_i ^ xs[i]`` and ``b_i ^ ys[i]`` next to the
    known ``a_i ^ b_i``.  If ``xs[i]`` left its queue in the same slot as
    ``ys[j]`` a receiver may also hold ``xs[i] ^ ys[j]``; following those
    links back to the start gives equations that sum to zero.  Returns one
    position per loop.
    """
    n = min(xs.size, ys.size)
    run = getattr(qs, "run", None)
    if n == 0 or run is None:
        return np.zeros(0, dtype=np.int64)
    bx, by = qs.born(xs[:n]), qs.born(ys[:n])
    g = run.tr.gains
    # a shared slot links the two bits only where some receiver heard their XOR
    mixed = (g[:, G11] & g[:, G21]) | (g[:, G12] & g[:, G22])
    at = {int(b): j for j, b in enumerate(by) if 0 <= b < g.shape[0] and mixed[b]}
    nxt = np.array([at.get(int(b), -1) if b >= 0 else -1 for b in bx], dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    cut = []
    for start in range(n):
        path = []
        i = start
        while i >= 0 and not seen[i]:
            seen[i] = True
            path.append(i)
            i = nxt[i]
        if i >= 0 and i in path:
            cut.append(i)
    return np.array(sorted(cut), dtype=np.int64)


def _merge_with_c1(qs: QueueSet, partner: Kind) -> QueueSet:
    (p1, p2), _ = _pair_groups(qs)
    need = [qs.count(tag(partner, 1)), qs.count(tag(partner, 2))]
    g = min(max(need), p1.size)
    if g == 0:
        return qs
    n1, n2 = min(need[0], g), min(need[1], g)
    xs, ys = qs.take(tag(partner, 1), n1), qs.take(tag(partner, 2), n2)
    # a loop is broken by leaving its tx1 partner unmerged; it goes back to its queue
    cut = _closed_loops(qs, xs, ys)
    keep = np.ones(n1, dtype=bool)
    keep[cut] = False
    qs.queues[tag(partner, 1)] = np.concatenate([xs[~keep], qs.ids(tag(partner, 1))])
    for tx, pr, mates, sel in ((1, p1[:g], xs, keep), (2, p2[:g], ys, np.ones(n2, dtype=bool))):
        n = mates.size
        _remove(qs, tag(C1, tx), pr)
        if n:
            qs.push(tag(TB, tx), qs.merge(tx, pr[:n][sel], mates[sel]))
            qs.push(tag(TB, tx), pr[:n][~sel])
        # pair members on the shorter side ride alone, keeping both sides aligned
        qs.push(tag(TB, tx), pr[n:])
    return qs


def merge_type2(qs: QueueSet) -> QueueSet:
    """XOR aligned C1 pairs with NeedOwn leftovers."""
    return _merge_with_c1(qs, OWN)


def merge_type3(qs: QueueSet) -> QueueSet:
    """XOR aligned C1 pairs with NeedOther leftovers."""
    return _merge_with_c1(qs, OTH)


def split_c1_remainder(qs: QueueSet) -> QueueSet:
    """Deliver one member of each remaining C1 pair to both receivers, alternating sides."""
    (p1, p2), (s1, s2) = _pair_groups(qs)
    half = (p1.size + 1) // 2
    _remove(qs, tag(C1, 1), np.concatenate([p1, s1]))
    _remove(qs, tag(C1, 2), np.concatenate([p2, s2]))
    qs.push(tag(TB, 1), p1[:half])
    qs.push(tag(F, 2), p2[:half])
    qs.push(tag(TB, 2), p2[half:])
    qs.push(tag(F, 1), p1[half:])
    # a bit with no partner reaches nobody through the other side
    qs.push(tag(TB, 1), s1)
    qs.push(tag(TB, 2), s2)
    return qs


def flush_to_both(qs: QueueSet, kinds=(OWN, OTH)) -> QueueSet:
    for tx in (1, 2):
        for k in kinds:
            qs.push(tag(TB, tx), qs.take_all(tag(k, tx)))
    return qs


# -- coded phases --------------------------------------------------------

# gain columns in storage order
G11, G12, G21, G22 = 0, 1, 2, 3
EXTRA_EQUATIONS = 20


@dataclass
class Layer:
    """One coded pool inside a phase.

    ``clean`` lists, per receiver that must decode the pool, the gain pattern
    under which a slot yields a usable equation, as ``((column, value), ...)``.
    """

    tx: int
    ids: np.ndarray
    rate: float
    clean: tuple = ()


def plan_blocks(demands, target: int = BLOCK_TARGET) -> list[int]:
    """Sub-block lengths so that every ``(count, rate)`` demand fits.

    Each block of length ``L`` carries ``floor(rate L)`` symbols of a demand.
    """
    demands = [(int(c), float(r)) for c, r in demands if c > 0]
    if not demands:
        return []
    for _, r in demands:
        if r <= 0:
            raise ValueError("code rate must be positive; lower delta")
    n = max(math.ceil(c / r) for c, r in demands)
    nb = max(1, math.ceil(n / target))
    while True:
        lens = [n // nb + (1 if i < n % nb else 0) for i in range(nb)]
        if all(sum(math.floor(r * L) for L in lens) >= c for c, r in demands):
            return lens
        n += nb


def _chunks(total: int, caps: list[int]) -> list[int]:
    """Spread ``total`` symbols evenly over blocks with the given capacities."""
    out = []
    left = total
    cap_left = sum(caps)
    for c in caps:
        k = min(c, math.ceil(left * c / cap_left)) if cap_left else 0
        out.append(k)
        left -= k
        cap_left -= c
    return out


def _clean_mask(g, pattern):
    mask = np.ones(g.shape[0], dtype=bool)
    for col, val in pattern:
        mask &= g[:, col] == val
    return mask


def _adaptive_gains(run: SchemeRun, needs, step: int = 1024):
    """Draw slots until every ``(pattern, count)`` need has enough clean slots."""
    parts = []
    have = np.zeros(len(needs), dtype=np.int64)
    while True:
        g = run.gains(step)
        hits = np.stack([np.cumsum(_clean_mask(g, pat)) for pat, _ in needs]) + have[:, None]
        want = np.array([c for _, c in needs])[:, None]
        done = np.flatnonzero((hits >= want).all(axis=0))
        if done.size:
            parts.append(g[: done[0] + 1])
            return np.concatenate(parts)
        parts.append(g)
        have = hits[:, -1]


def coded_phase(run: SchemeRun, layers: list[Layer], label: str, adaptive: bool = False) -> int:
    """Append sub-blocks carrying every layer; layers of one transmitter are XORed.

    Fixed mode codes each layer at ``rate - delta`` over planned block lengths.
    Adaptive mode sizes blocks at ``rate`` and stops each block once every
    decoder named in ``clean`` has ``k + EXTRA_EQUATIONS`` usable slots.
    """
    qs = run.qs
    layers = [ly for ly in layers if ly.ids.size]
    if not layers:
        return 0
    shrink = 0.0 if adaptive else run.delta
    lens = plan_blocks([(ly.ids.size, ly.rate - shrink) for ly in layers])
    ks = [_chunks(ly.ids.size, [math.floor((ly.rate - shrink) * L) for L in lens]) for ly in layers]
    pos = [0] * len(layers)
    used = 0
    for b, L in enumerate(lens):
        if adaptive:
            needs = [(pat, ks[j][b] + EXTRA_EQUATIONS) for j, ly in enumerate(layers)
                     for pat in ly.clean if ks[j][b]]
            g = _adaptive_gains(run, needs)
        else:
            g = run.gains(L)
        slots = run.tr.add_slots(g)
        used += g.shape[0]
        for j, ly in enumerate(layers):
            k = ks[j][b]
            if k:
                chunk = ly.ids[pos[j]:pos[j] + k]
                run.tr.add_stream(ly.tx, slots, qs.var_pairs(chunk), run.rng, f"{label}/tx{ly.tx}/{j}")
                pos[j] += k
    return used


def _pairs(qs: QueueSet, ids):
    return qs.var_pairs(ids)


# -- finishing ------------------------------------------------------------

def _multicast_common(run: SchemeRun, name: str, max_block: int = DEFAULT_MAX_BLOCK) -> int:
    qs = run.qs
    t1, t2 = tag(TB, 1), tag(TB, 2)
    a, b = qs.take_all(t1), qs.take_all(t2)
    used, _ = schedule_multicast(run.tr, _pairs(qs, a), _pairs(qs, b), run.p, run.delta, run.rng,
                                 MulticastMode.SymmetricTimeShare, max_block)
    qs.push(tag(F, 1), a)
    qs.push(tag(F, 2), b)
    run.note(name, used)
    return used


def _finish(run: SchemeRun, halt: Halt | None = None, detail: str = "",
            receivers=(1, 2)) -> SchemeResult:
    slots = run.tr.T
    m1, m2 = run.msg[0].size, run.msg[1].size
    if halt is None:
        bad = []
        for rx, ids in ((1, run.msg[0]), (2, run.msg[1])):
            if rx not in receivers or ids.size == 0:
                continue
            rcv = decode_receiver(run.tr, rx)
            known, val = rcv.recover(ids)
            n_unknown = int((~known).sum())
            n_wrong = int((known & (val != run.tr.values[ids])).sum())
            if n_unknown or n_wrong:
                fails = [run.tr.streams[i].label for i in rcv.failed_streams()][:5]
                bad.append(f"rx{rx}: {n_unknown} unknown, {n_wrong} wrong, stuck streams {fails}")
        if bad:
            halt, detail = Halt.DecodeFail, "; ".join(bad)
    if halt is not None:
        return SchemeResult(slots, (0, 0), halt, RateTuple(0.0, 0.0), run.stats, detail, run.checks)
    rates = RateTuple(m1 / slots, m2 / slots) if slots else RateTuple(0.0, 0.0)
    return SchemeResult(slots, (m1, m2), None, rates, run.stats, detail, run.checks)


# -- symmetric sum-rate point ------------------------------------------------

def _phase1_cap(p: float, m: int) -> int:
    q = 1.0 - p
    return math.ceil(m / (1.0 - q * q) + m ** (2.0 / 3.0))


def run_point_A(m: int, p: float, delta: float, rng: np.random.Generator) -> SchemeResult:
    """Equal-rate sum-capacity point; dispatches on the erasure regime."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if m < 1:
        raise ValueError("m must be positive")
    run = SchemeRun(m, m, p, delta, rng)
    try:
        if p >= 0.5:
            _point_a_high(run, m)
        else:
            _point_a_low(run, m)
    except _Stop as stop:
        return _finish(run, stop.kind, stop.detail)
    run.qs.check_conservation()
    return _finish(run)


def _check(halt):
    if halt is not None:
        raise _Stop(halt, "phase 1")


def _point_a_high(run: SchemeRun, m: int):
    p = run.p
    qs, halt = phase1(m, m, p, _phase1_cap(p, m), Table.TableI, run.rng, run=run)
    _check(halt)
    merge_type1(qs)
    if p <= GOLDEN:
        merge_type2(qs)
    else:
        merge_type3(qs)
    flush_to_both(qs)
    split_c1_remainder(qs)
    run.note("merge", 0)
    _multicast_common(run, "multicast")


def _point_a_low(run: SchemeRun, m: int):
    p, delta = run.p, run.delta
    q = 1.0 - p
    qs, halt = phase1(m, m, p, _phase1_cap(p, m), Table.TableIV, run.rng, run=run)
    _check(halt)

    # retransmit intermediate bits until both receivers hold what they need
    n_int = m * p * p * q / (1.0 - q * q)
    cap2 = math.ceil(n_int / (1.0 - (p * p * q + q * q)) + 2 * m ** (2.0 / 3.0))
    used = run.drive(Table.Upgrade, INT, cap2)
    run.note("phase2", used)
    if qs.count(tag(INT, 1)) or qs.count(tag(INT, 2)):
        raise _Stop(Halt.TypeI, "intermediate queues not drained")

    # layered codes: own-receiver bits at rate p, cross bits at rate pq
    hi, lo = p - delta, p * q - delta
    own = [qs.take_all(tag(OWN, 1)), qs.take_all(tag(OWN, 2))]
    lens = plan_blocks([(own[0].size, hi), (own[1].size, hi)])
    pools = _cross_pools(qs, sum(math.floor(lo * L) for L in lens))
    used = coded_phase(run, [
        Layer(1, own[0], p, (((G11, 1),),)),
        Layer(1, pools[0], p * q, (((G12, 1), (G22, 0)),)),
        Layer(2, own[1], p, (((G22, 1),),)),
        Layer(2, pools[1], p * q, (((G21, 1), (G11, 0)),)),
    ], "layered")
    for tx in (1, 2):
        qs.push(tag(F, tx), own[tx - 1])
        qs.push(tag(F, tx), pools[tx - 1])
    run.note("phase3", used)

    merge_type3(qs)
    flush_to_both(qs)
    split_c1_remainder(qs)
    _multicast_common(run, "phase4")


def _cross_pools(qs: QueueSet, cap: int):
    """Take NeedOther bits, then whole C1 groups in birth order, up to ``cap`` per side."""
    oth = [qs.take(tag(OTH, 1), cap), qs.take(tag(OTH, 2), cap)]
    room = [cap - oth[0].size, cap - oth[1].size]
    c1 = [qs.ids(tag(C1, 1)), qs.ids(tag(C1, 2))]
    keys = [_keys(qs, c1[0]), _keys(qs, c1[1])]
    groups = np.union1d(keys[0], keys[1])
    # number of C1 entries each side spends when the first g groups are taken
    spend = [np.searchsorted(np.sort(keys[i]), groups, side="right") for i in (0, 1)]
    ok = (spend[0] <= room[0]) & (spend[1] <= room[1])
    g = int(np.argmin(ok)) if not ok.all() else groups.size
    out = []
    for i in (0, 1):
        if g:
            sel = keys[i] <= groups[g - 1]
        else:
            sel = np.zeros(c1[i].size, dtype=bool)
        _remove(qs, tag(C1, i + 1), c1[i][sel])
        out.append(np.concatenate([oth[i], c1[i][sel]]))
    return out


# -- asymmetric corner ---------------------------------------------------------

def corner_tx1_pool(m: int, p: float) -> int:
    q = 1.0 - p
    return math.ceil(q * (1.0 + q) * m)


def run_corner_C(m: int, p: float, delta: float, rng: np.random.Generator, *,
                 adaptive: bool = False) -> SchemeResult:
    """Corner where transmitter 2 runs at its interference-free rate.

    With ``adaptive`` the coded phases end each sub-block as soon as the
    delayed state shows enough clean slots at every decoder, instead of
    using fixed ``rate - delta`` codes.
    """
    if not LOW_REGIME < p < 1.0:
        raise ValueError("corner C needs (3-sqrt5)/2 < p < 1")
    if m < 1:
        raise ValueError("m must be positive")
    q = 1.0 - p
    m1 = corner_tx1_pool(m, p)
    run = SchemeRun(m1, m, p, delta, rng)
    qs = run.qs
    try:
        # phase 1: both send m1 fresh bits; transmitter 2 holds the rest back
        qs.add_initial(1, run.msg[0])
        qs.add_initial(2, run.msg[1][:m1])
        held = run.msg[1][m1:]
        cap1 = math.ceil(q / p * m + m ** (2.0 / 3.0))
        used = run.drive(Table.TableV, Kind.Initial, cap1)
        qs.values = run.tr.values
        run.note("phase1", used)
        if qs.count(tag(Kind.Initial, 1)) or qs.count(tag(Kind.Initial, 2)):
            raise _Stop(Halt.TypeI, "phase 1")

        # phase 2: intermediate bits
        wait = 1.0 - (p**3 * q + 2 * p * q * q + q**4)
        cap2 = math.ceil(p * q * q * m / wait + 2 * m ** (2.0 / 3.0))
        used = run.drive(Table.UpgradeCorner, INT, cap2)
        run.note("phase2", used)
        if qs.count(tag(INT, 1)) or qs.count(tag(INT, 2)):
            raise _Stop(Halt.TypeI, "phase 2")

        _corner_phase3(run, held, adaptive)
        _corner_phase45(run, adaptive)
    except _Stop as stop:
        return _finish(run, stop.kind, stop.detail)
    qs.check_conservation()
    return _finish(run)


_TX1_AT_RX1 = ((G11, 1), (G21, 0))
_TX1_AT_RX2 = ((G12, 1), (G22, 0))
_TX2_AT_RX1 = ((G21, 1), (G11, 0))


def _corner_phase3(run: SchemeRun, held, adaptive: bool):
    """Transmitter 1 codes C1/OP bits at rate pq while transmitter 2 sends its held bits."""
    p, delta, qs = run.p, run.delta, run.qs
    q = 1.0 - p
    go = 1.0 - q * q
    tab, solo = _table_arrays(Table.TableI)
    qs.add_initial(2, held)
    src2 = tag(Kind.Initial, 2)
    total = 0
    while qs.count(src2):
        r = qs.count(src2)
        if adaptive:
            L = min(BLOCK_TARGET, math.ceil(r / go))
            k = math.floor(p * q * L)
        else:
            L = min(BLOCK_TARGET, math.ceil((r + TAIL_Z * math.sqrt(r * q * q)) / go) + 1)
            k = math.floor((p * q - delta) * L)
        take = qs.take(tag(C1, 1), k)
        take = np.concatenate([take, qs.take(tag(OP, 1), k - take.size)])
        if adaptive and take.size:
            need = take.size + EXTRA_EQUATIONS
            g = _adaptive_gains(run, [(_TX1_AT_RX1, need), (_TX1_AT_RX2, need)])
        else:
            g = run.gains(L)
        ids2 = qs.ids(src2)
        used, _, s2, _, d2, _, l2 = _drive(g, classify_cases(g).astype(np.int64), 0, ids2.size,
                                           tab, solo)
        # transmitter 1's code spans the whole block even if transmitter 2 is done
        sym2 = np.zeros(g.shape[0], dtype=np.int64)
        sym2[:used] = np.where(s2 >= 0, qs.single_vars(ids2)[np.maximum(s2, 0)], 0)
        slots = run.tr.add_slots(g, None, sym2)
        if take.size:
            run.tr.add_stream(1, slots, _pairs(qs, take), run.rng, "corner3/tx1")
            qs.push(tag(F, 1), take)
        qs.take(src2, ids2.size)
        qs.push(src2, ids2[d2 == 0])
        for kind in np.unique(d2[d2 != 0]):
            sel = d2 == kind
            qs.set_born(ids2[sel], int(slots[0]) + l2[sel])
            qs.push(tag(Kind(int(kind)), 2), ids2[sel])
        total += g.shape[0]
    run.note("phase3", total)


def _corner_phase45(run: SchemeRun, adaptive: bool):
    p, qs = run.p, run.qs
    q = 1.0 - p
    shrink = 0.0 if adaptive else run.delta

    # phase 4: own-receiver bits at rate p, XORed with opportunistic bits at rate pq
    own1 = qs.take_all(tag(OWN, 1))
    own2 = qs.take(tag(OWN, 2), own1.size)
    lens = plan_blocks([(own1.size, p - shrink)])
    beta = sum(math.floor((p * q - shrink) * L) for L in lens)
    op1 = qs.take(tag(OP, 1), beta)
    op2 = qs.take(tag(OP, 2), beta)
    used = coded_phase(run, [
        Layer(1, own1, p, (((G11, 1),),)),
        Layer(1, op1, p * q, (_TX1_AT_RX2,)),
        Layer(2, own2, p, (((G22, 1),),)),
        Layer(2, op2, p * q, (_TX2_AT_RX1,)),
    ], "corner4", adaptive)
    for tx, ids in ((1, own1), (1, op1), (2, own2), (2, op2)):
        qs.push(tag(F, tx), ids)
    run.note("phase4", used)

    # phase 5: transmitter 1 empties OP and C1 at rate pq; transmitter 2 layers two rate-p codes
    rest1 = np.concatenate([qs.take_all(tag(OP, 1)), qs.take_all(tag(C1, 1))])
    own2 = qs.take_all(tag(OWN, 2))
    op2 = qs.take_all(tag(OP, 2))
    used = coded_phase(run, [
        Layer(1, rest1, p * q, (_TX1_AT_RX1, _TX1_AT_RX2)),
        Layer(2, own2, p, (((G22, 1),),)),
        Layer(2, op2, p, (((G21, 1),),)),
    ], "corner5", adaptive)
    for tx, ids in ((1, rest1), (2, own2), (2, op2)):
        qs.push(tag(F, tx), ids)
    run.note("phase5", used)
    leftovers = {str(t): v.size for t, v in qs.queues.items() if t.kind is not Kind.Final and v.size}
    if leftovers:
        raise _Stop(Halt.TypeII, f"undelivered queues {leftovers}")
