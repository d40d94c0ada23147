"""Random linear codes over GF(2) and erasure decoding.

Rows are packed 64 bits per ``uint64`` word, little-endian within a word:
column ``j`` lives in word ``j // 64`` at bit ``j % 64``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class DecodeFailure(Exception):
    """Raised when the received columns do not determine the message."""

    def __init__(self, rank_deficit: int, stage: str = ""):
        self.rank_deficit = int(rank_deficit)
        self.stage = stage
        msg = f"rank deficit {self.rank_deficit}"
        super().__init__(f"{stage}: {msg}" if stage else msg)


def n_words(cols: int) -> int:
    return (cols + 63) // 64


def pack_bits(dense: np.ndarray) -> np.ndarray:
    """Pack a ``(rows, cols)`` 0/1 array into ``(rows, n_words(cols))`` uint64."""
    dense = np.atleast_2d(np.asarray(dense, dtype=np.uint8))
    rows, cols = dense.shape
    w = n_words(cols)
    padded = np.zeros((rows, w * 64), dtype=np.uint8)
    padded[:, :cols] = dense & 1
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False).reshape(rows, w)


def unpack_bits(words: np.ndarray, cols: int) -> np.ndarray:
    words = np.atleast_2d(np.ascontiguousarray(words, dtype=np.uint64))
    as_bytes = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :cols]


def random_words(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform packed matrix; bits beyond ``cols`` are cleared."""
    w = n_words(cols)
    out = rng.integers(0, np.iinfo(np.uint64).max, size=(rows, w), dtype=np.uint64,
                       endpoint=True)
    tail = cols % 64
    if w and tail:
        out[:, -1] &= np.uint64((1 << tail) - 1)
    return out


@numba.njit(cache=True)
def _parity64(v):
    v ^= v >> np.uint64(32)
    v ^= v >> np.uint64(16)
    v ^= v >> np.uint64(8)
    v ^= v >> np.uint64(4)
    v ^= v >> np.uint64(2)
    v ^= v >> np.uint64(1)
    return np.uint8(v & np.uint64(1))


@numba.njit(cache=True)
def row_dot(row, vec):
    acc = np.uint64(0)
    for w in range(row.shape[0]):
        acc ^= row[w] & vec[w]
    return _parity64(acc)


@numba.njit(cache=True)
def mat_vec(mat, vec):
    """Parity of ``mat[i] & vec`` for every row ``i``."""
    out = np.empty(mat.shape[0], dtype=np.uint8)
    for i in range(mat.shape[0]):
        out[i] = row_dot(mat[i], vec)
    return out


@numba.njit(cache=True)
def _eliminate(a, rhs, ncols):
    """In-place forward elimination then back substitution.

    Returns ``(rank, solution_words, consistent)``.  The solution is only
    meaningful when ``rank == ncols``.
    """
    r = a.shape[0]
    nw = a.shape[1]
    pivcol = np.empty(min(r, ncols), dtype=np.int64)
    row = 0
    for c in range(ncols):
        if row == r:
            break
        w = c >> 6
        bit = np.uint64(1) << np.uint64(c & 63)
        pr = -1
        for i in range(row, r):
            if a[i, w] & bit:
                pr = i
                break
        if pr < 0:
            continue
        if pr != row:
            for k in range(w, nw):
                tmp = a[pr, k]
                a[pr, k] = a[row, k]
                a[row, k] = tmp
            t = rhs[pr]
            rhs[pr] = rhs[row]
            rhs[row] = t
        for i in range(row + 1, r):
            if a[i, w] & bit:
                for k in range(w, nw):
                    a[i, k] ^= a[row, k]
                rhs[i] ^= rhs[row]
        pivcol[row] = c
        row += 1
    rank = row
    consistent = True
    for i in range(rank, r):
        if rhs[i]:
            consistent = False
            break
    x = np.zeros(nw, dtype=np.uint64)
    if rank == ncols:
        for i in range(rank - 1, -1, -1):
            v = rhs[i] ^ row_dot(a[i], x)
            if v:
                c = pivcol[i]
                x[c >> 6] |= np.uint64(1) << np.uint64(c & 63)
    return rank, x, consistent


def solve_packed(a: np.ndarray, rhs: np.ndarray, ncols: int):
    """Solve ``a x = rhs`` over GF(2) for a packed system.

    Works on copies.  Returns ``(rank, x_bits)``; ``x_bits`` is ``None``
    unless the system has full column rank.
    """
    a = np.array(a, dtype=np.uint64, copy=True, order="C")
    rhs = np.array(rhs, dtype=np.uint8, copy=True)
    if ncols == 0:
        return 0, np.zeros(0, dtype=np.uint8)
    if a.shape[0] == 0:
        return 0, None
    rank, x, consistent = _eliminate(a, rhs, ncols)
    if rank < ncols:
        return rank, None
    if not consistent:
        raise ValueError("inconsistent GF(2) system")
    return rank, unpack_bits(x[None, :], ncols)[0]


@numba.njit(cache=True)
def _rank(a, ncols):
    r = a.shape[0]
    nw = a.shape[1]
    row = 0
    for c in range(ncols):
        if row == r:
            break
        w = c >> 6
        bit = np.uint64(1) << np.uint64(c & 63)
        pr = -1
        for i in range(row, r):
            if a[i, w] & bit:
                pr = i
                break
        if pr < 0:
            continue
        if pr != row:
            for k in range(w, nw):
                tmp = a[pr, k]
                a[pr, k] = a[row, k]
                a[row, k] = tmp
        for i in range(row + 1, r):
            if a[i, w] & bit:
                for k in range(w, nw):
                    a[i, k] ^= a[row, k]
        row += 1
    return row


def compress_columns(rows: np.ndarray, cols_keep: np.ndarray) -> np.ndarray:
    """Gather the listed columns of each packed row into a new packed matrix."""
    rows = np.atleast_2d(rows)
    if rows.shape[0] == 0 or len(cols_keep) == 0:
        return np.zeros((rows.shape[0], n_words(len(cols_keep))), dtype=np.uint64)
    return pack_bits(unpack_bits(rows, rows.shape[1] * 64)[:, cols_keep])


class Gf2Matrix:
    """Dense binary matrix, row-major packed."""

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows: int, cols: int, words: np.ndarray | None = None):
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        self.rows = int(rows)
        self.cols = int(cols)
        if words is None:
            words = np.zeros((self.rows, n_words(self.cols)), dtype=np.uint64)
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.shape != (self.rows, n_words(self.cols)):
            raise ValueError("packed storage has the wrong shape")
        self.words = words

    @classmethod
    def from_dense(cls, dense) -> "Gf2Matrix":
        dense = np.atleast_2d(np.asarray(dense, dtype=np.uint8))
        if np.any(dense > 1):
            raise ValueError("entries must be bits")
        return cls(dense.shape[0], dense.shape[1], pack_bits(dense))

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @property
    def shape(self):
        return (self.rows, self.cols)

    def to_dense(self) -> np.ndarray:
        if self.rows == 0:
            return np.zeros((0, self.cols), dtype=np.uint8)
        return unpack_bits(self.words, self.cols)

    def get(self, i: int, j: int) -> int:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError((i, j))
        return int((int(self.words[i, j >> 6]) >> (j & 63)) & 1)

    def transpose(self) -> "Gf2Matrix":
        return Gf2Matrix.from_dense(self.to_dense().T) if self.rows else Gf2Matrix(self.cols, 0)

    def rank(self) -> int:
        if self.rows == 0 or self.cols == 0:
            return 0
        return int(_rank(self.words.copy(), self.cols))

    def __eq__(self, other):
        return (isinstance(other, Gf2Matrix) and self.shape == other.shape
                and np.array_equal(self.words, other.words))

    def __repr__(self):
        return f"Gf2Matrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class ErasurePattern:
    received_positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.received_positions, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.uint8)
        if pos.ndim != 1 or pos.shape != val.shape:
            raise ValueError("positions and values must be equal-length vectors")
        if pos.size and (np.any(np.diff(pos) <= 0) or pos[0] < 0):
            raise ValueError("positions must be strictly increasing and nonnegative")
        object.__setattr__(self, "received_positions", pos)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_mask(cls, codeword, mask) -> "ErasurePattern":
        codeword = np.asarray(codeword, dtype=np.uint8)
        idx = np.flatnonzero(np.asarray(mask, dtype=bool))
        return cls(idx, codeword[idx])


def random_generator(k: int, n: int, rng: np.random.Generator, *,
                     identity: bool = False, systematic: bool = False) -> Gf2Matrix:
    """``k x n`` generator with i.i.d. uniform bits.

    ``identity`` (requires ``k == n``) returns the identity; ``systematic``
    forces the first ``k`` columns to the identity.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be positive")
    if k > n:
        raise ValueError(f"message length {k} exceeds code length {n}")
    if identity:
        if k != n:
            raise ValueError("identity override needs k == n")
        return Gf2Matrix.identity(n)
    words = random_words(k, n, rng)
    if systematic:
        dense = unpack_bits(words, n)
        dense[:, :k] = np.eye(k, dtype=np.uint8)
        return Gf2Matrix.from_dense(dense)
    return Gf2Matrix(k, n, words)


def encode(g: Gf2Matrix, msg) -> np.ndarray:
    msg = np.asarray(msg, dtype=np.uint8)
    if msg.shape != (g.rows,):
        raise ValueError(f"message length {msg.shape} does not match k={g.rows}")
    acc = np.bitwise_xor.reduce(g.words[msg.astype(bool)], axis=0) if msg.any() \
        else np.zeros(g.words.shape[1], dtype=np.uint64)
    return unpack_bits(acc[None, :], g.cols)[0]


def decode_erasures(g: Gf2Matrix, pattern: ErasurePattern, stage: str = "") -> np.ndarray:
    pos = pattern.received_positions
    if pos.size and pos[-1] >= g.cols:
        raise ValueError("received position outside the codeword")
    if pos.size < g.rows:
        raise DecodeFailure(g.rows - int(pos.size), stage)
    sub = g.to_dense()[:, pos].T          # one equation per received position
    rank, x = solve_packed(pack_bits(sub), pattern.values, g.rows)
    if x is None:
        raise DecodeFailure(g.rows - rank, stage)
    return x


class LinearCode:
    """Systematic random linear code stored position-major.

    Codeword position ``t < k`` carries message symbol ``t``; position
    ``t >= k`` carries the parity of ``parity[t - k] & msg``.  This is the
    transpose layout of a ``[I | P]`` generator and is what the receivers
    need: one packed row per received slot.
    """

    __slots__ = ("k", "n", "parity")

    def __init__(self, k: int, n: int, parity: np.ndarray):
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        self.k = int(k)
        self.n = int(n)
        self.parity = parity

    @classmethod
    def random(cls, k: int, n: int, rng: np.random.Generator) -> "LinearCode":
        return cls(k, n, random_words(n - k, k, rng) if k else np.zeros((n - k, 0), np.uint64))

    def encode(self, msg: np.ndarray) -> np.ndarray:
        msg = np.asarray(msg, dtype=np.uint8)
        if msg.shape != (self.k,):
            raise ValueError("message length mismatch")
        out = np.empty(self.n, dtype=np.uint8)
        out[: self.k] = msg
        if self.n > self.k:
            out[self.k:] = mat_vec(self.parity, pack_bits(msg[None, :])[0]) if self.k else 0
        return out

    def generator(self) -> Gf2Matrix:
        dense = np.zeros((self.k, self.n), dtype=np.uint8)
        dense[:, : self.k] = np.eye(self.k, dtype=np.uint8)
        if self.k and self.n > self.k:
            dense[:, self.k:] = unpack_bits(self.parity, self.k).T
        return Gf2Matrix.from_dense(dense)
