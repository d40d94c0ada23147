"""Output-feedback and instantaneous-CSIT protocols.

Four drivers live here:

* :func:`run_dcsit_ofb_sum`, delayed CSIT plus feedback, equal rates.  The
  fresh-bit phase is shared with the delayed-CSIT scheme; feedback lets each
  transmitter learn the other's bits so side-information pools can be XORed
  across transmitters.
* :func:`run_dcsit_ofb_corner`, delayed CSIT plus feedback with transmitter 2
  acting as a relay for transmitter 1.
* :func:`run_icsit`, instantaneous CSIT, where transmitters pair the current
  slot with an earlier one to cancel interference.
* :func:`run_icsit_ofb`, instantaneous CSIT plus feedback at the corner
  ``(1 - q^2, pq)``.

The block schemes run ``b`` data blocks and one flush block.  A block lasts
at least its nominal length and is extended while any of its duties (fresh
bits, deferred queues from the previous block) is unfinished; every party
can tell when that happens from the channel state it already holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import case_probabilities, classify_cases
from .delayed import (EXTRA_EQUATIONS, G11, G21, Halt, SchemeResult, SchemeRun, Table, _finish, _multicast_common,
                      _phase1_cap, _Stop, phase1, split_c1_remainder)
from .queues import Kind, tag
from .receiver import Receiver, decode_receiver
from .views import ChannelView, Csit, FeedbackView

OFB_MAX_BLOCK = 24_000
RELAY_MAX_K = 12_000
EXTEND_STEP = 2048


def _check_p(p: float):
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")


# -- block bookkeeping ------------------------------------------------------

@dataclass
class BlockPlan:
    """Layout of a block-structured run.

    ``queues`` maps ``(block, holder, name)`` to the number of bits filed in
    that block; ``consumed`` lists ``(block, (source block, holder, name))``.
    """

    b: int
    n: int
    cap: int
    bounds: list = field(default_factory=list)
    queues: dict = field(default_factory=dict)
    consumed: list = field(default_factory=list)
    fresh: list = field(default_factory=list)

    def check(self) -> None:
        for j, (src_block, _, _) in self.consumed:
            if src_block != j - 1:
                raise AssertionError(f"block {j} consumed a queue from block {src_block}")
        if self.fresh and self.fresh[-1] != 0:
            raise AssertionError("the flush block carried fresh bits")
        ends = [e for _, e in self.bounds]
        starts = [s for s, _ in self.bounds]
        if starts and (starts[0] != 0 or starts[1:] != ends[:-1]):
            raise AssertionError("blocks do not tile the transcript")


def _feedback_learn(run: SchemeRun, holder: int, slots: np.ndarray, ids: np.ndarray) -> int:
    """Have ``holder`` recover the other transmitter's inputs at ``slots`` from feedback.

    Returns the number of mismatches against the true values of ``ids``.
    """
    if ids.size == 0:
        return 0
    tr = run.tr
    view = ChannelView(tr.gains, Csit.Delayed)
    view.advance(tr.T)
    x = tr.transmitted()
    fb = FeedbackView(holder, tr.outputs(), view)
    lo, hi = int(slots.min()), int(slots.max()) + 1
    known, vals = fb.other_inputs(x[holder - 1], lo, hi)
    rel = slots - lo
    bad = int((~known[rel]).sum()) + int((vals[rel] != tr.values[ids]).sum())
    run.checks["feedback_bits"] = run.checks.get("feedback_bits", 0) + int(ids.size)
    run.checks["feedback_mismatches"] = run.checks.get("feedback_mismatches", 0) + bad
    return bad


# -- delayed CSIT + feedback, equal rates -------------------------------------

def ofb_common_mass(p: float, m: float) -> float:
    """Expected common-interest bits per transmitter after the feedback upgrades."""
    q = 1.0 - p
    return p / 2.0 / (1.0 - q * q) * m


def _cross_xor(qs, kind: Kind):
    """XOR the two transmitters' ``kind`` pools pairwise, first half sent by transmitter 1."""
    n = min(qs.count(tag(kind, 1)), qs.count(tag(kind, 2)))
    a = qs.take(tag(kind, 1), n)
    b = qs.take(tag(kind, 2), n)
    h = (n + 1) // 2
    first = qs.merge(1, a[:h], b[:h])
    second = qs.merge(2, b[h:], a[h:])
    qs.push(tag(Kind.ToBoth, 1), first)
    qs.push(tag(Kind.ToBoth, 2), second)
    return (first, b[:h]), (second, a[h:])


def run_dcsit_ofb_sum(m: int, p: float, delta: float, rng: np.random.Generator, *,
                      max_block: int = OFB_MAX_BLOCK) -> SchemeResult:
    """Equal-rate scheme with delayed CSIT and output feedback."""
    _check_p(p)
    if m < 1:
        raise ValueError("m must be positive")
    run = SchemeRun(m, m, p, delta, rng)
    qs = run.qs
    try:
        qs, halt = phase1(m, m, p, _phase1_cap(p, m), Table.TableI, rng, run=run)
        if halt is not None:
            raise _Stop(halt, "phase 1")
        born = qs.born
        # each transmitter learns the other's bits from its own receiver's output
        audits = []
        for kind in (Kind.NeedOwn, Kind.NeedOther):
            audits += _cross_xor(qs, kind)
        split_c1_remainder(qs)
        for tx in (1, 2):
            for kind in (Kind.NeedOwn, Kind.NeedOther):
                qs.push(tag(Kind.ToBoth, tx), qs.take_all(tag(kind, tx)))
        for holder, (merged, learned) in zip((1, 2, 1, 2), audits):
            if learned.size:
                _feedback_learn(run, holder, born(learned), qs.single_vars(learned))
        if run.checks.get("feedback_mismatches", 0):
            raise _Stop(Halt.DecodeFail, "feedback reconstruction disagrees with the channel")
        bound = ofb_common_mass(p, m) + 2.5 * m ** (2.0 / 3.0)
        sizes = [qs.count(tag(Kind.ToBoth, 1)), qs.count(tag(Kind.ToBoth, 2))]
        run.checks["common_mass"] = sizes
        run.checks["common_bound"] = bound
        run.note("upgrade", 0)
        if max(sizes) > bound:
            raise _Stop(Halt.TypeII, f"common pools {sizes} exceed {bound:.0f}")
        _multicast_common(run, "multicast", max_block)
    except _Stop as stop:
        return _finish(run, stop.kind, stop.detail)
    qs.check_conservation()
    return _finish(run)


# -- delayed CSIT + feedback, relay corner ---------------------------------------

_RELAY_AT_RX1 = ((G21, 1), (G11, 0))


def relay_pool_expectation(p: float, m: float) -> float:
    q = 1.0 - p
    return p * q / (1.0 - q * q) * m


def run_dcsit_ofb_corner(m: int, b: int, p: float, delta: float, rng: np.random.Generator, *,
                         adaptive: bool = False) -> SchemeResult:
    """Transmitter 2 relays transmitter 1's bits that only reached receiver 2.

    Fixed mode codes the relay pool at ``pq - delta``; adaptive mode ends each
    relay code once receiver 1 has ``k + EXTRA_EQUATIONS`` clean slots.
    """
    _check_p(p)
    if b < 1:
        raise ValueError("need at least one data block")
    if m < 1:
        raise ValueError("m must be positive")
    q = 1.0 - p
    go = 1.0 - q * q
    rate = p * q if adaptive else p * q - delta
    if rate <= 0:
        raise ValueError("delta leaves no relay rate")
    nominal = math.ceil(m / go)
    cap = 2 * nominal + math.ceil(m ** (2.0 / 3.0))
    slack = p * q * m ** (2.0 / 3.0)
    run = SchemeRun(b * m, 0, p, delta, rng)
    plan = BlockPlan(b, nominal, cap)
    tr = run.tr
    relay = np.zeros(0, dtype=np.int64)
    try:
        for j in range(b + 1):
            fresh = run.msg[0][j * m:(j + 1) * m] if j < b else np.zeros(0, np.int64)
            plan.fresh.append(int(fresh.size))
            if relay.size:
                plan.consumed.append((j, (j - 1, 2, "relay")))
            g, bounds = _relay_block(run, fresh.size, relay.size, nominal, cap, rate, adaptive)
            ok = g[:, G11] | g[:, 1]
            before = np.concatenate([np.zeros(1, np.int64), np.cumsum(ok, dtype=np.int64)[:-1]])
            on1 = before < fresh.size
            sym1 = np.where(on1, fresh[np.minimum(before, max(fresh.size - 1, 0))] if fresh.size else 0, 0)
            start = tr.T
            slots = tr.add_slots(g, sym1, None)
            plan.bounds.append((start, tr.T))
            for (lo, hi), chunk in zip(bounds, np.array_split(relay, len(bounds))):
                if chunk.size:
                    tr.add_stream(2, slots[lo:hi], chunk, run.rng, f"relay/{j}")
            # bits that reached only receiver 2 come back to transmitter 2 as feedback
            hit = on1 & (g[:, G11] == 0) & (g[:, 1] == 1)
            relay = sym1[hit].astype(np.int64)
            plan.queues[(j, 2, "relay")] = int(relay.size)
            if relay.size:
                _feedback_learn(run, 2, slots[hit], relay)
            if relay.size > relay_pool_expectation(p, m) + slack:
                raise _Stop(Halt.TypeII, f"relay pool of block {j} holds {relay.size} bits")
        if run.checks.get("feedback_mismatches", 0):
            raise _Stop(Halt.DecodeFail, "relay learned a wrong bit")
        plan.check()
    except _Stop as stop:
        run.checks["plan"] = plan
        return _finish(run, stop.kind, stop.detail, receivers=(1,))
    run.checks["plan"] = plan
    return _finish(run, receivers=(1,))


def _relay_block(run: SchemeRun, n_fresh: int, k: int, nominal: int, cap: int, rate: float,
                 adaptive: bool):
    """Draw one block's gains; returns the gains and the relay sub-block bounds."""
    pieces = max(1, math.ceil(k / RELAY_MAX_K))
    ks = [len(c) for c in np.array_split(np.arange(k), pieces)] if k else []
    g = run.gains(nominal)
    while True:
        ok = g[:, G11] | g[:, 1]
        done = 0
        if n_fresh:
            hits = np.flatnonzero(ok)
            done = hits[n_fresh - 1] + 1 if hits.size >= n_fresh else -1
        bounds = []
        if ks and done >= 0:
            if adaptive:
                clean = np.cumsum((g[:, G21] == 1) & (g[:, G11] == 0))
                lo = 0
                for kk in ks:
                    base = clean[lo - 1] if lo else 0
                    idx = np.searchsorted(clean, base + kk + EXTRA_EQUATIONS)
                    if idx >= g.shape[0]:
                        done = -1
                        break
                    bounds.append((lo, idx + 1))
                    lo = idx + 1
            else:
                lo = 0
                for kk in ks:
                    bounds.append((lo, lo + math.ceil(kk / rate)))
                    lo = bounds[-1][1]
                if lo > g.shape[0]:
                    done = -1
            if done >= 0:
                done = max(done, bounds[-1][1])
        if done >= 0:
            end = max(nominal, done)
            if bounds:
                # the last relay code keeps sending parity until the block ends
                bounds[-1] = (bounds[-1][0], end)
            return g[:end], bounds or [(0, end)]
        if g.shape[0] >= cap:
            raise _Stop(Halt.TypeI, "block duties unfinished at the cap")
        g = np.concatenate([g, run.gains(min(EXTEND_STEP, cap - g.shape[0]))])


# -- block engine for the instantaneous-CSIT schemes -----------------------------------

@dataclass(frozen=True)
class Filing:
    """Fresh bits ``sender`` sent in ``cases`` go to queue ``name`` held by ``holder``.

    With ``needs_partner`` a bit is filed only if the other transmitter was
    actually on the air in that slot.
    """

    sender: int
    cases: tuple
    holder: int
    name: str
    needs_partner: bool


@dataclass
class BlockRules:
    """Per-case source tables for the two transmitters.

    ``src[tx]`` is an array of shape ``(2, 17)`` indexed by ``(late, case)``
    where ``late`` says the slot lies past the threshold.  Entry 0 is silent,
    1 a fresh bit, and ``2 + i`` the ``i``-th deferred queue of ``relays[tx]``.
    """

    src: dict
    relays: dict
    filings: tuple
    threshold: int | None = None


def _source_table(fresh=(), relay=None, late_fresh=None, late_relay=None):
    tab = np.zeros((2, 17), dtype=np.int8)
    for late in (0, 1):
        f = late_fresh if late and late_fresh is not None else fresh
        r = late_relay if late and late_relay is not None else (relay or {})
        for c in f:
            tab[late, c] = 1
        for c, code in r.items():
            tab[late, c] = code
    return tab


def _rules_icsit_low() -> BlockRules:
    src = {1: _source_table(range(1, 9), {15: 2, 14: 3}),
           2: _source_table((1, 2, 3, 4, 9, 10, 11, 12), {15: 2, 13: 3})}
    relays = {1: ("C1", "C2"), 2: ("C1", "C3")}
    filings = (Filing(1, (1,), 1, "C1", True), Filing(1, (2,), 1, "C2", True),
               Filing(2, (1,), 2, "C1", True), Filing(2, (3,), 2, "C3", True))
    return BlockRules(src, relays, filings)


def _rules_icsit_high(threshold: int) -> BlockRules:
    early2 = (1, 2, 3, 4, 9, 10, 11, 12)
    late2 = (2, 3, 4, 9, 10, 11)
    src = {1: _source_table(range(1, 9), {15: 2, 14: 3}, late_relay={15: 2, 14: 3, 12: 3}),
           2: _source_table(early2, {15: 2, 13: 3}, late_fresh=late2,
                            late_relay={15: 2, 13: 3, 12: 3})}
    relays = {1: ("C1", "C2"), 2: ("C1", "C3")}
    filings = (Filing(1, (1,), 1, "C1", True), Filing(1, (2,), 1, "C2", True),
               Filing(2, (1,), 2, "C1", True), Filing(2, (3,), 2, "C3", True))
    return BlockRules(src, relays, filings, threshold)


OFB_RELAY_CASES = {3: "C2", 10: "C11", 12: "C12", 13: "C14", 15: "C15"}


def _rules_icsit_ofb() -> BlockRules:
    names = ("C2", "C11", "C12", "C14", "C15")
    relay2 = {c: 2 + names.index(nm) for c, nm in OFB_RELAY_CASES.items()}
    src = {1: _source_table((1, 2, 3, 4, 5, 6, 7, 8, 11, 12, 14, 15)),
           2: _source_table((2, 4, 9, 11), relay2)}
    # case-2 bits matter only if they interfered; the rest never reached receiver 1
    filings = (Filing(1, (2,), 2, "C2", True), Filing(1, (11,), 2, "C11", False),
               Filing(1, (12,), 2, "C12", False), Filing(1, (14,), 2, "C14", False),
               Filing(1, (15,), 2, "C15", False))
    return BlockRules(src, {1: (), 2: names}, filings)


def _block_sources(rules: BlockRules, cases: np.ndarray):
    late = np.zeros(cases.size, dtype=np.int64)
    if rules.threshold is not None:
        late[rules.threshold:] = 1
    return {tx: rules.src[tx][late, cases] for tx in (1, 2)}


def _run_blocks(run: SchemeRun, rules: BlockRules, plan: BlockPlan, m: tuple, expect: dict,
                learn_by_feedback: bool) -> BlockPlan:
    tr = run.tr
    b, nominal, cap = plan.b, plan.n, plan.cap
    slack = max(m) ** (2.0 / 3.0)
    held = {}
    for j in range(b + 1):
        fresh = {tx: run.msg[tx - 1][j * m[tx - 1]:(j + 1) * m[tx - 1]] if j < b
                 else np.zeros(0, np.int64) for tx in (1, 2)}
        plan.fresh.append(int(fresh[1].size + fresh[2].size))
        queues = {tx: [fresh[tx]] + [held.get((tx, nm), np.zeros(0, np.int64))
                                     for nm in rules.relays[tx]] for tx in (1, 2)}
        for (tx, nm), ids in held.items():
            if ids.size:
                plan.consumed.append((j, (j - 1, tx, nm)))
        g, src = _draw_block(run, rules, queues, nominal, cap)
        sym, active, is_fresh = {}, {}, {}
        for tx in (1, 2):
            s = src[tx]
            out = np.zeros(s.size, dtype=np.int64)
            on = np.zeros(s.size, dtype=bool)
            for code, q in enumerate(queues[tx], start=1):
                idx = np.flatnonzero(s == code)[:q.size]
                out[idx] = q[:idx.size]
                on[idx] = True
            sym[tx], active[tx] = out, on
            is_fresh[tx] = on & (s == 1)
        start = tr.T
        slots = tr.add_slots(g, sym[1], sym[2])
        plan.bounds.append((start, tr.T))
        cases = classify_cases(g)
        held = {}
        for f in rules.filings:
            mask = is_fresh[f.sender] & np.isin(cases, f.cases)
            if f.needs_partner:
                mask &= active[3 - f.sender]
            ids = sym[f.sender][mask]
            held[(f.holder, f.name)] = ids
            plan.queues[(j, f.holder, f.name)] = int(ids.size)
            if learn_by_feedback and f.holder != f.sender and ids.size:
                _feedback_learn(run, f.holder, slots[mask], ids)
            if j < b and ids.size > expect[f.name] + slack:
                raise _Stop(Halt.TypeII, f"queue {f.name} of block {j} holds {ids.size} bits")
    plan.check()
    return plan


def _draw_block(run: SchemeRun, rules: BlockRules, queues: dict, nominal: int, cap: int):
    g = run.gains(nominal)
    while True:
        src = _block_sources(rules, classify_cases(g).astype(np.int64))
        done = 0
        for tx in (1, 2):
            for code, q in enumerate(queues[tx], start=1):
                if q.size == 0:
                    continue
                idx = np.flatnonzero(src[tx] == code)
                if idx.size < q.size:
                    done = -1
                    break
                done = max(done, idx[q.size - 1] + 1)
            if done < 0:
                break
        if done >= 0:
            end = max(nominal, done)
            return g[:end], {tx: s[:end] for tx, s in src.items()}
        if g.shape[0] >= cap:
            raise _Stop(Halt.TypeI, "block duties unfinished at the cap")
        g = np.concatenate([g, run.gains(min(EXTEND_STEP, cap - g.shape[0]))])


def _finish_blocks(run: SchemeRun, plan: BlockPlan, halt=None, detail: str = "",
                   blockwise: bool = False):
    run.checks["plan"] = plan
    res = _finish(run, halt, detail)
    if res.ok and blockwise:
        bad = verify_blockwise(run, plan)
        run.checks["blockwise_failures"] = bad
        if bad:
            res.halted = Halt.DecodeFail
            res.detail = f"blocks decoded late: {bad}"
    return res


def verify_blockwise(run: SchemeRun, plan: BlockPlan, receivers=(1, 2)) -> list:
    """Decode each prefix ending with block ``j + 1`` and check block ``j``'s messages."""
    bad = []
    m = [run.msg[0].size // plan.b, run.msg[1].size // plan.b]
    for j in range(plan.b):
        sub = run.tr.prefix(plan.bounds[j + 1][1])
        for rx in receivers:
            if m[rx - 1] == 0:
                continue
            ids = run.msg[rx - 1][j * m[rx - 1]:(j + 1) * m[rx - 1]]
            known, val = decode_receiver(sub, rx).recover(ids)
            if not known.all() or np.any(val != run.tr.values[ids]):
                bad.append((j, rx))
    return bad


# -- instantaneous CSIT -------------------------------------------------------

def icsit_tx2_send_probability(p: float) -> float:
    """Per-slot send probability of transmitter 2 in the high-p regime."""
    probs = case_probabilities(p)
    q = 1.0 - p
    return float(sum(probs[c] for c in (2, 3, 4, 9, 10, 11))
                 + q * q / (p * p) * (probs[1] + probs[12]))


def icsit_expectations(p: float, m: float) -> dict:
    probs = case_probabilities(p)
    q = 1.0 - p
    if p <= 0.5:
        return {"C1": probs[1] / p * m, "C2": probs[2] / p * m, "C3": probs[3] / p * m}
    return {"C1": p * q * q * m, "C2": p * p * q * m, "C3": p * p * q * m}


def run_icsit(m: int, b: int, p: float, rng: np.random.Generator, *,
              blockwise: bool = False) -> SchemeResult:
    """Instantaneous-CSIT pairing scheme over ``b + 1`` blocks.

    Targets ``(p, p)`` for ``p <= 0.5`` and ``(p, 2pq)`` above.
    """
    _check_p(p)
    if b < 1 or m < 1:
        raise ValueError("need b >= 1 and m >= 1")
    q = 1.0 - p
    nominal = math.ceil(m / p)
    if p <= 0.5:
        m2 = m
        rules = _rules_icsit_low()
        cap = math.ceil(m / p + 2.0 / p**4 * m ** (2.0 / 3.0))
    else:
        m2 = math.ceil(2.0 * q * m)
        rules = _rules_icsit_high(math.floor(q * q / (p * p) * nominal))
        cap = math.ceil(m / p + 2.0 / q**4 * m ** (2.0 / 3.0))
    run = SchemeRun(b * m, b * m2, p, 0.0, rng)
    plan = BlockPlan(b, nominal, cap)
    try:
        _run_blocks(run, rules, plan, (m, m2), icsit_expectations(p, m), False)
    except _Stop as stop:
        return _finish_blocks(run, plan, stop.kind, stop.detail)
    return _finish_blocks(run, plan, blockwise=blockwise)


def icsit_ofb_expectations(p: float, m: float) -> dict:
    probs = case_probabilities(p)
    q = 1.0 - p
    return {f"C{c}": probs[c] / (1.0 - q * q) * m for c in (2, 11, 12, 14, 15)}


def run_icsit_ofb(m: int, b: int, p: float, rng: np.random.Generator, *,
                  blockwise: bool = False) -> SchemeResult:
    """Corner ``(1 - q^2, pq)`` with instantaneous CSIT and output feedback."""
    _check_p(p)
    if b < 1 or m < 1:
        raise ValueError("need b >= 1 and m >= 1")
    q = 1.0 - p
    m2 = math.ceil(q / (1.0 + q) * m)
    nominal = math.ceil(m / (1.0 - q * q))
    cap = 2 * nominal + math.ceil(m ** (2.0 / 3.0))
    run = SchemeRun(b * m, b * m2, p, 0.0, rng)
    plan = BlockPlan(b, nominal, cap)
    try:
        _run_blocks(run, _rules_icsit_ofb(), plan, (m, m2), icsit_ofb_expectations(p, m), True)
        if run.checks.get("feedback_mismatches", 0):
            raise _Stop(Halt.DecodeFail, "relay learned a wrong bit")
    except _Stop as stop:
        return _finish_blocks(run, plan, stop.kind, stop.detail)
    res = _finish_blocks(run, plan, blockwise=blockwise)
    if res.ok:
        ok = backward_decode(run, plan)
        run.checks["backward_decoded"] = ok
        if not ok:
            res.halted = Halt.DecodeFail
            res.detail = "backward sweep left receiver 2 short"
    return res


def backward_decode(run: SchemeRun, plan: BlockPlan) -> bool:
    """Receiver 2 sweeps blocks from last to first, using each block to clean the one before."""
    rcv = Receiver(run.tr, 2)
    for start, end in reversed(plan.bounds):
        rcv.peel(np.arange(start, end))
    known, val = rcv.recover(run.msg[1])
    return bool(known.all() and np.array_equal(val, run.tr.values[run.msg[1]]))
