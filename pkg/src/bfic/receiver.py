"""Protocol transcripts and a generic successive-cancellation receiver.

A transcript records, per slot, the channel gains and what each transmitter
put on the air: either an uncoded XOR of at most two message variables, one
or more codeword symbols of random linear codes, or both.  Variable 0 is the
constant zero and doubles as the padding symbol.

The receiver sees only its outputs, the gains and the protocol layout.  It
tracks XOR relations between variables with a parity union-find, peels slots
whose coded part is known, and decodes a code block by Gaussian elimination
once enough of its positions are free of other unknown contributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .gf2 import LinearCode, compress_columns, mat_vec, pack_bits, row_dot, solve_packed

# column of the gain array feeding receiver ``rx`` from transmitter ``tx``;
# gains are stored as (g11, g12, g21, g22)
LINK_COL = {(1, 1): 0, (1, 2): 1, (2, 1): 2, (2, 2): 3}


@dataclass
class Stream:
    tx: int
    slots: np.ndarray        # increasing slot indices, one per codeword position
    code: LinearCode
    msg: np.ndarray          # (k, 2) variable ids; symbol value is their XOR
    label: str = ""


class Transcript:
    def __init__(self):
        self._values = [np.zeros(1, dtype=np.uint8)]
        self.nvars = 1
        self._gains = []
        self._sym = []
        self.T = 0
        self.streams: list[Stream] = []
        self._frozen = None

    # -- construction -------------------------------------------------
    def alloc(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.uint8).ravel()
        ids = np.arange(self.nvars, self.nvars + values.size, dtype=np.int64)
        self._values.append(values.copy())
        self.nvars += values.size
        self._frozen = None
        return ids

    def add_slots(self, gains, sym1=None, sym2=None) -> np.ndarray:
        """Append slots.  ``sym_i`` is ``(n, 2)`` or ``(n,)`` variable ids sent uncoded."""
        gains = np.asarray(gains, dtype=np.uint8).reshape(-1, 4)
        n = gains.shape[0]
        sym = np.zeros((n, 4), dtype=np.int64)
        for col, s in ((0, sym1), (2, sym2)):
            if s is None:
                continue
            s = np.asarray(s, dtype=np.int64)
            if s.ndim == 1:
                sym[:, col] = s
            else:
                sym[:, col:col + 2] = s
        self._gains.append(gains)
        self._sym.append(sym)
        start = self.T
        self.T += n
        self._frozen = None
        return np.arange(start, self.T, dtype=np.int64)

    def add_stream(self, tx: int, slots, msg, rng: np.random.Generator, label: str = "") -> Stream:
        slots = np.asarray(slots, dtype=np.int64)
        msg = np.asarray(msg, dtype=np.int64)
        if msg.ndim == 1:
            msg = np.stack([msg, np.zeros_like(msg)], axis=1)
        k = msg.shape[0]
        if k > slots.size:
            raise ValueError(f"stream {label!r}: {k} symbols do not fit in {slots.size} slots")
        s = Stream(tx, slots, LinearCode.random(k, slots.size, rng), msg, label)
        self.streams.append(s)
        self._frozen = None
        return s

    def prefix(self, T: int) -> "Transcript":
        """The transcript as it stood after its first ``T`` slots."""
        if not 0 <= T <= self.T:
            raise ValueError("prefix length out of range")
        values, gains, sym = self._freeze()
        out = Transcript()
        out._values = [values.copy()]
        out.nvars = self.nvars
        out._gains = [gains[:T].copy()]
        out._sym = [sym[:T].copy()]
        out.T = T
        for s in self.streams:
            if s.slots.size and s.slots[-1] < T:
                out.streams.append(s)
            elif s.slots.size and s.slots[0] < T:
                raise ValueError(f"stream {s.label!r} straddles slot {T}")
        return out

    # -- views --------------------------------------------------------
    def _freeze(self):
        if self._frozen is None:
            values = np.concatenate(self._values)
            gains = np.concatenate(self._gains) if self._gains else np.zeros((0, 4), np.uint8)
            sym = np.concatenate(self._sym) if self._sym else np.zeros((0, 4), np.int64)
            self._frozen = (values, gains, sym)
        return self._frozen

    @property
    def values(self):
        return self._freeze()[0]

    @property
    def gains(self):
        return self._freeze()[1]

    @property
    def sym(self):
        return self._freeze()[2]

    def transmitted(self):
        """Per-slot channel inputs ``(x1, x2)`` implied by the layout."""
        values, gains, sym = self._freeze()
        x = np.zeros((2, self.T), dtype=np.uint8)
        x[0] = values[sym[:, 0]] ^ values[sym[:, 1]]
        x[1] = values[sym[:, 2]] ^ values[sym[:, 3]]
        for s in self.streams:
            symvals = values[s.msg[:, 0]] ^ values[s.msg[:, 1]]
            x[s.tx - 1, s.slots] ^= s.code.encode(symvals)
        return x

    def outputs(self):
        _, gains, _ = self._freeze()
        x1, x2 = self.transmitted()
        y1 = (gains[:, 0] & x1) ^ (gains[:, 2] & x2)
        y2 = (gains[:, 3] & x2) ^ (gains[:, 1] & x1)
        return y1, y2


# -- parity union-find ------------------------------------------------

@numba.njit(cache=True)
def _find(parent, par, x):
    p = np.uint8(0)
    r = x
    while parent[r] != r:
        p ^= par[r]
        r = parent[r]
    # path compression
    acc = p
    while parent[x] != x:
        nxt = parent[x]
        step = par[x]
        parent[x] = r
        par[x] = acc
        acc ^= step
        x = nxt
    return r, p


@numba.njit(cache=True)
def _union(parent, par, size, x, y, d):
    """Impose value(x) ^ value(y) == d.  Returns 1 merged, 0 redundant, -1 conflict."""
    rx, px = _find(parent, par, x)
    ry, py = _find(parent, par, y)
    if rx == ry:
        return 0 if (px ^ py) == d else -1
    if size[rx] < size[ry]:
        rx, ry = ry, rx
    parent[ry] = rx
    par[ry] = px ^ py ^ d
    size[rx] += size[ry]
    return 1


@numba.njit(cache=True)
def _reduce(parent, par, vars_, n, out_roots):
    """Fold an XOR of variables into (odd roots, constant).  Returns (count, rhs)."""
    groot, gp = _find(parent, par, 0)
    cnt = 0
    rhs = np.uint8(0)
    for i in range(n):
        v = vars_[i]
        if v == 0:
            continue
        r, p = _find(parent, par, v)
        if r == groot:
            rhs ^= p ^ gp
            continue
        rhs ^= p
        hit = -1
        for j in range(cnt):
            if out_roots[j] == r:
                hit = j
                break
        if hit >= 0:
            out_roots[hit] = out_roots[cnt - 1]
            cnt -= 1
        else:
            out_roots[cnt] = r
            cnt += 1
    return cnt, rhs


@numba.njit(cache=True)
def _apply(parent, par, size, roots, cnt, rhs):
    """Use a reduced equation.  Returns (progress, conflict, still_pending)."""
    if cnt == 0:
        return 0, rhs != 0, False
    if cnt == 1:
        res = _union(parent, par, size, roots[0], 0, rhs)
    elif cnt == 2:
        res = _union(parent, par, size, roots[0], roots[1], rhs)
    else:
        return 0, False, True
    return (1 if res == 1 else 0), res == -1, False


@numba.njit(cache=True)
def _peel_slots(parent, par, size, open_slots, sym, l1, l2, y, kc, unk):
    """Apply every open slot whose coded part is known.  Returns (progress, conflicts, still_open)."""
    vars_ = np.zeros(4, dtype=np.int64)
    roots = np.zeros(4, dtype=np.int64)
    keep = np.zeros(open_slots.shape[0], dtype=np.bool_)
    progress = 0
    conflicts = 0
    for i in range(open_slots.shape[0]):
        t = open_slots[i]
        if unk[t] != 0:
            keep[i] = True
            continue
        vars_[0] = sym[t, 0] if l1[t] else 0
        vars_[1] = sym[t, 1] if l1[t] else 0
        vars_[2] = sym[t, 2] if l2[t] else 0
        vars_[3] = sym[t, 3] if l2[t] else 0
        cnt, c = _reduce(parent, par, vars_, 4, roots)
        prog, bad, pend = _apply(parent, par, size, roots, cnt, y[t] ^ kc[t] ^ c)
        progress += prog
        conflicts += 1 if bad else 0
        keep[i] = pend
    return progress, conflicts, open_slots[keep]


@numba.njit(cache=True)
def _symbol_state(parent, par, msg):
    """Per message symbol: known flag and value (value valid when known)."""
    k = msg.shape[0]
    known = np.zeros(k, dtype=np.bool_)
    val = np.zeros(k, dtype=np.uint8)
    roots = np.zeros(2, dtype=np.int64)
    for j in range(k):
        cnt, c = _reduce(parent, par, msg[j], 2, roots)
        if cnt == 0:
            known[j] = True
            val[j] = c
    return known, val


@numba.njit(cache=True)
def _usable_positions(parent, par, slots, link, other_link, sym, y, kc, unk, own_col):
    """Positions where this stream is the only unknown contribution.

    Returns (positions, rhs) with rhs = codeword bit at that position.
    """
    n = slots.shape[0]
    pos = np.empty(n, dtype=np.int64)
    rhs = np.empty(n, dtype=np.uint8)
    vars_ = np.zeros(4, dtype=np.int64)
    roots = np.zeros(4, dtype=np.int64)
    m = 0
    for i in range(n):
        t = slots[i]
        if not link[t] or unk[t] != 1:
            continue
        # uncoded parts of both transmitters on this slot must be known
        if own_col == 0:
            la, lb = link[t], other_link[t]
        else:
            la, lb = other_link[t], link[t]
        vars_[0] = sym[t, 0] if la else 0
        vars_[1] = sym[t, 1] if la else 0
        vars_[2] = sym[t, 2] if lb else 0
        vars_[3] = sym[t, 3] if lb else 0
        cnt, c = _reduce(parent, par, vars_, 4, roots)
        if cnt != 0:
            continue
        pos[m] = i
        rhs[m] = y[t] ^ kc[t] ^ c
        m += 1
    return pos[:m], rhs[:m]


@dataclass
class StreamReport:
    decoded: bool
    used_slots: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    rank_deficit: int = 0


class DecodeConflict(RuntimeError):
    pass


class Receiver:
    """Decoder state for one receiver over a finished transcript."""

    def __init__(self, tr: Transcript, rx: int, y: np.ndarray | None = None):
        if rx not in (1, 2):
            raise ValueError("receiver index must be 1 or 2")
        self.rx = rx
        self.tr = tr
        gains = tr.gains
        self.sym = tr.sym
        self.l1 = np.ascontiguousarray(gains[:, LINK_COL[(1, rx)]])
        self.l2 = np.ascontiguousarray(gains[:, LINK_COL[(2, rx)]])
        if y is None:
            y = tr.outputs()[rx - 1]
        self.y = np.ascontiguousarray(y, dtype=np.uint8)
        V = tr.nvars
        self.parent = np.arange(V, dtype=np.int64)
        self.par = np.zeros(V, dtype=np.uint8)
        self.size = np.ones(V, dtype=np.int64)
        T = tr.T
        self.kc = np.zeros(T, dtype=np.uint8)
        self.unk = np.zeros(T, dtype=np.int32)
        for s in tr.streams:
            link = self.l1 if s.tx == 1 else self.l2
            np.add.at(self.unk, s.slots, link[s.slots].astype(np.int32))
        self.reports = [StreamReport(False) for _ in tr.streams]
        self._tried = [None] * len(tr.streams)
        self.conflicts = 0

    def run(self, max_rounds: int = 10_000) -> "Receiver":
        open_slots = np.arange(self.tr.T, dtype=np.int64)
        for _ in range(max_rounds):
            prog, bad, open_slots = _peel_slots(self.parent, self.par, self.size, open_slots,
                                                self.sym, self.l1, self.l2, self.y, self.kc, self.unk)
            self.conflicts += bad
            progress = prog > 0
            for idx, s in enumerate(self.tr.streams):
                if not self.reports[idx].decoded and self._try_stream(idx, s):
                    progress = True
            if not progress:
                break
        if self.conflicts:
            raise DecodeConflict(f"receiver {self.rx}: {self.conflicts} inconsistent equations")
        return self

    def peel(self, slots) -> int:
        """Apply uncoded equations from the given slots only, until they stop helping."""
        open_slots = np.asarray(slots, dtype=np.int64)
        total = 0
        while open_slots.size:
            prog, bad, open_slots = _peel_slots(self.parent, self.par, self.size, open_slots,
                                                self.sym, self.l1, self.l2, self.y, self.kc, self.unk)
            self.conflicts += bad
            total += prog
            if not prog:
                break
        if self.conflicts:
            raise DecodeConflict(f"receiver {self.rx}: {self.conflicts} inconsistent equations")
        return total

    def _try_stream(self, idx: int, s: Stream) -> bool:
        link, other = (self.l1, self.l2) if s.tx == 1 else (self.l2, self.l1)
        own_col = 0 if s.tx == 1 else 2
        known, val = _symbol_state(self.parent, self.par, s.msg)
        k = s.code.k
        progress = False
        if not known.all():
            pos, rhs = _usable_positions(self.parent, self.par, s.slots, link, other, self.sym,
                                         self.y, self.kc, self.unk, own_col)
            # systematic positions hand over symbols directly
            sysm = pos < k
            for p_, v in zip(pos[sysm], rhs[sysm]):
                if not known[p_]:
                    a, b = s.msg[p_]
                    if _union(self.parent, self.par, self.size, a, b, v) == -1:
                        self.conflicts += 1
                    known[p_] = True
                    val[p_] = v
                    progress = True
            unknown = np.flatnonzero(~known)
            ppos = pos[~sysm]
            if unknown.size:
                attempt = (ppos.size, unknown.size)
                if ppos.size < unknown.size or attempt == self._tried[idx]:
                    self.reports[idx].rank_deficit = max(unknown.size - ppos.size, 0)
                    return progress
                self._tried[idx] = attempt
                rows = s.code.parity[ppos - k]
                kv = pack_bits(np.where(known, val, 0).astype(np.uint8)[None, :])[0]
                adj = rhs[~sysm] ^ mat_vec(rows, kv)
                sub = compress_columns(rows, unknown)
                rank, x = solve_packed(sub, adj, unknown.size)
                if x is None:
                    self.reports[idx].rank_deficit = unknown.size - rank
                    return progress
                for j, v in zip(unknown, x):
                    a, b = s.msg[j]
                    if _union(self.parent, self.par, self.size, a, b, v) == -1:
                        self.conflicts += 1
                val[unknown] = x
            self.reports[idx].used_slots = s.slots[pos]
        # whole codeword known: strip it from every slot it touches
        cw = s.code.encode(val)
        on = link[s.slots].astype(bool)
        self.kc[s.slots[on]] ^= cw[on]
        self.unk[s.slots[on]] -= 1
        self.reports[idx].decoded = True
        self.reports[idx].rank_deficit = 0
        return True

    # -- queries ------------------------------------------------------
    def recover(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """(known mask, decoded values) for the given variable ids."""
        ids = np.asarray(ids, dtype=np.int64)
        msg = np.stack([ids, np.zeros_like(ids)], axis=1)
        return _symbol_state(self.parent, self.par, msg)

    def failed_streams(self):
        return [i for i, r in enumerate(self.reports) if not r.decoded]


def decode_receiver(tr: Transcript, rx: int) -> Receiver:
    return Receiver(tr, rx).run()


def verify_delivery(tr: Transcript, rx: int, ids, receiver: Receiver | None = None):
    """Decode at ``rx`` and compare the listed variables with the truth.

    Returns ``(ok, n_unknown, n_wrong, receiver)``.
    """
    rcv = receiver if receiver is not None else decode_receiver(tr, rx)
    ids = np.asarray(ids, dtype=np.int64)
    known, val = rcv.recover(ids)
    truth = tr.values[ids]
    n_unknown = int((~known).sum())
    n_wrong = int((known & (val != truth)).sum())
    return n_unknown == 0 and n_wrong == 0, n_unknown, n_wrong, rcv
