"""Tracked bits and the named queues the delayed-CSIT schemes move them through."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Kind(enum.IntEnum):
    Initial = 1
    C1 = 2
    ToBoth = 3
    NeedOwn = 4        # wanted by the own receiver, already held by the other one
    NeedOther = 5      # held by the own receiver, wanted by the other one
    Intermediate = 6
    Opportunistic = 7
    Final = 8


class QueueTag(NamedTuple):
    kind: Kind
    tx: int

    def __str__(self):
        return f"{self.kind.name}({self.tx})"


def tag(kind: Kind, tx: int) -> QueueTag:
    if tx not in (1, 2):
        raise ValueError("transmitter index must be 1 or 2")
    return QueueTag(Kind(kind), tx)


@dataclass(frozen=True)
class TrackedBit:
    id: int
    owner: int
    value: int
    queue: QueueTag
    xor_parents: tuple | None
    padding: bool = False


class QueueSet:
    """FIFO queues of tracked bits, keyed by :class:`QueueTag`.

    Every tracked bit maps to at most two transcript variables; a merged bit
    carries the variables of its two parents.  Padding bits map to nothing
    (value 0) and never count as data.
    """

    def __init__(self, values: np.ndarray | None = None):
        self._cap = 0
        self._n = 0
        self._cols = {}
        for name, dt, fill in (("va", np.int64, 0), ("vb", np.int64, 0), ("owner", np.int8, 0),
                               ("born", np.int64, -1), ("pad", np.bool_, False),
                               ("p1", np.int64, -1), ("p2", np.int64, -1)):
            self._cols[name] = (np.empty(0, dtype=dt), fill)
        self.queues: dict[QueueTag, np.ndarray] = {}
        self.values = values
        self.initial_sizes = [0, 0]
        self.created = 0       # merged bits made
        self.consumed = 0      # parents absorbed by merges
        self.padded = 0

    # -- registry ----------------------------------------------------
    def _grow(self, extra: int):
        need = self._n + extra
        if need <= self._cap:
            return
        cap = max(need, 2 * self._cap, 1024)
        for name, (arr, fill) in self._cols.items():
            new = np.full(cap, fill, dtype=arr.dtype)
            new[: self._n] = arr[: self._n]
            self._cols[name] = (new, fill)
        self._cap = cap

    def _col(self, name):
        return self._cols[name][0]

    def _register(self, owner, va, vb=None, born=None, pad=False, p1=None, p2=None):
        va = np.asarray(va, dtype=np.int64).ravel()
        n = va.size
        self._grow(n)
        sl = slice(self._n, self._n + n)
        self._col("va")[sl] = va
        if vb is not None:
            self._col("vb")[sl] = vb
        self._col("owner")[sl] = owner
        if born is not None:
            self._col("born")[sl] = born
        self._col("pad")[sl] = pad
        if p1 is not None:
            self._col("p1")[sl] = p1
            self._col("p2")[sl] = p2
        ids = np.arange(self._n, self._n + n, dtype=np.int64)
        self._n += n
        return ids

    def add_initial(self, tx: int, var_ids) -> np.ndarray:
        ids = self._register(tx, var_ids)
        self.initial_sizes[tx - 1] += ids.size
        self.push(tag(Kind.Initial, tx), ids)
        return ids

    def make_padding(self, tx: int, n: int) -> np.ndarray:
        self.padded += n
        return self._register(tx, np.zeros(n, dtype=np.int64), pad=True)

    def merge(self, tx: int, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        """XOR pairs of single bits into new tracked bits owned by ``tx``."""
        first = np.asarray(first, dtype=np.int64)
        second = np.asarray(second, dtype=np.int64)
        if first.shape != second.shape:
            raise ValueError("merge needs equally many bits on both sides")
        if np.any(self._col("vb")[first] != 0) or np.any(self._col("vb")[second] != 0):
            raise ValueError("only single bits can be merged")
        ids = self._register(tx, self._col("va")[first], self._col("va")[second],
                             p1=first, p2=second)
        self.created += ids.size
        self.consumed += 2 * ids.size
        return ids

    # -- queue ops ---------------------------------------------------
    def ids(self, t: QueueTag) -> np.ndarray:
        return self.queues.get(t, np.zeros(0, dtype=np.int64))

    def count(self, t: QueueTag) -> int:
        return int(self.ids(t).size)

    def push(self, t: QueueTag, ids) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size:
            self.queues[t] = np.concatenate([self.ids(t), ids])

    def take(self, t: QueueTag, n: int) -> np.ndarray:
        cur = self.ids(t)
        n = min(int(n), cur.size)
        out, self.queues[t] = cur[:n], cur[n:]
        return out

    def take_all(self, t: QueueTag) -> np.ndarray:
        return self.take(t, self.count(t))

    def set_born(self, ids, born) -> None:
        self._col("born")[np.asarray(ids, dtype=np.int64)] = born

    def born(self, ids) -> np.ndarray:
        return self._col("born")[np.asarray(ids, dtype=np.int64)]

    def var_pairs(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        return np.stack([self._col("va")[ids], self._col("vb")[ids]], axis=1)

    def single_vars(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if np.any(self._col("vb")[ids] != 0):
            raise ValueError("expected single bits")
        return self._col("va")[ids]

    def is_padding(self, ids) -> np.ndarray:
        return self._col("pad")[np.asarray(ids, dtype=np.int64)]

    def counts(self) -> dict:
        return {str(t): int(v.size) for t, v in sorted(self.queues.items()) if v.size}

    def bits(self, t: QueueTag) -> list[TrackedBit]:
        out = []
        for i in self.ids(t):
            va, vb = int(self._col("va")[i]), int(self._col("vb")[i])
            val = 0
            if self.values is not None:
                val = int(self.values[va] ^ self.values[vb])
            p1 = int(self._col("p1")[i])
            parents = (p1, int(self._col("p2")[i])) if p1 >= 0 else None
            out.append(TrackedBit(int(i), int(self._col("owner")[i]), val, t, parents,
                                  bool(self._col("pad")[i])))
        return out

    # -- invariants ----------------------------------------------------
    def total(self) -> int:
        return int(sum(v.size for v in self.queues.values()))

    def check_conservation(self) -> None:
        """Each original bit sits in one queue or under exactly one live merged bit."""
        expected = sum(self.initial_sizes) + self.padded + self.created - self.consumed
        if self.total() != expected:
            raise AssertionError(f"queue mass {self.total()} != {expected}")
        live = np.concatenate(list(self.queues.values())) if self.queues else np.zeros(0, np.int64)
        if np.unique(live).size != live.size:
            raise AssertionError("a tracked bit sits in two queues")
        p1 = self._col("p1")[live]
        p2 = self._col("p2")[live]
        merged = p1 >= 0
        covered = np.concatenate([live[~merged], p1[merged], p2[merged]])
        originals = np.flatnonzero(~self._col("pad")[: self._n] & (self._col("p1")[: self._n] < 0))
        orig_cov = covered[np.isin(covered, originals)]
        if np.unique(orig_cov).size != orig_cov.size or orig_cov.size != originals.size:
            raise AssertionError("an original bit is lost or duplicated")
