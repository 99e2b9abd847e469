"""Keyed red/green interval labelling.

The unit interval is cut into ``b`` equal half-open bins ``[(j-1)/b, j/b)``, the
last one closed at 1. Every key-bin index ``j`` seeds a SplitMix64 stream that
drives a Fisher-Yates shuffle of the bins; the first ``floor(b/2)`` shuffled
bins are green. All hashing is 64-bit wrapping arithmetic so labels are
bit-identical on every platform.

Public functions use 1-based bin indices. The ``*_array`` helpers work on
0-based numpy arrays and are what the embedder and detector call.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# Bin edges sit this many bin widths below their nominal position, so values
# printed on a decimal grid (0.07 stored as 0.06999...) land in the intended bin.
EDGE_SNAP = 1e-8
RANGE_TOL = 1e-12


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class IntervalParams:
    b: int
    secret: int = 0

    def __post_init__(self) -> None:
        if self.b < 2:
            raise ValueError(f"need at least 2 bins, got {self.b}")
        if not 0 <= self.secret <= MASK64:
            raise ValueError("secret must fit in 64 bits")


@dataclass(frozen=True, eq=False)
class GreenSet:
    b: int
    labels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.labels, dtype=bool)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def greens(self) -> list[int]:
        return [int(j) + 1 for j in np.flatnonzero(self.labels)]

    def is_green(self, j: int) -> bool:
        return bool(self.labels[j - 1])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GreenSet) and self.b == other.b and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash((self.b, self.labels.tobytes()))


def bin_index_array(x, b: int) -> np.ndarray:
    """0-based bin of every ``x`` in ``[0, 1]``; raises OutOfRange outside it."""
    x = np.asarray(x, dtype=float)
    if x.size and (x.min() < -RANGE_TOL or x.max() > 1 + RANGE_TOL):
        bad = x[(x < -RANGE_TOL) | (x > 1 + RANGE_TOL)][0]
        raise OutOfRange(f"value {bad!r} outside [0, 1]")
    j = np.floor(x * b + EDGE_SNAP).astype(np.int64)
    return np.clip(j, 0, b - 1)


def bin_index(x: float, b: int) -> int:
    return int(bin_index_array(np.array([x]), b)[0]) + 1


def bin_center(j: int, b: int) -> float:
    return (j - 0.5) / b


def seeds_for_bins_array(secret: int, bins0) -> np.ndarray:
    """Seeds for 0-based key bins (the 1-based index is what gets hashed)."""
    base = np.uint64(mix64(secret ^ GOLDEN))
    j = np.asarray(bins0, dtype=np.uint64) + np.uint64(1)
    return mix64_array(base ^ j)


def seed_for_bin(params: IntervalParams, j: int) -> int:
    return mix64(mix64(params.secret ^ GOLDEN) ^ j)


def green_labels_array(seeds, b: int, chunk: int | None = None) -> np.ndarray:
    """Boolean ``(len(seeds), b)`` label matrix, one shuffled green set per seed.

    Step ``i`` (1-based) swaps position ``i-1`` with ``i-1 + r_i mod (b-i+1)``
    where ``r_i = mix64(seed + i*GOLDEN)``. Only the first ``floor(b/2)``
    positions are ever read, so the shuffle stops there.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    if chunk is None:
        chunk = max(256, 20_000_000 // b)
    half = b // 2
    out = np.zeros((len(seeds), b), dtype=bool)
    idx_dtype = np.int32 if b < 2**31 else np.int64
    for start in range(0, len(seeds), chunk):
        s = seeds[start:start + chunk]
        rows = np.arange(len(s))
        perm = np.tile(np.arange(b, dtype=idx_dtype), (len(s), 1))
        for i in range(half):
            r = mix64_array(s + np.uint64(((i + 1) * GOLDEN) & MASK64))
            k = i + (r % np.uint64(b - i)).astype(np.int64)
            a = perm[:, i].copy()
            perm[:, i] = perm[rows, k]
            perm[rows, k] = a
        block = out[start:start + chunk]
        block[rows[:, None], perm[:, :half]] = True
    return out


def green_set(seed: int, b: int) -> GreenSet:
    if b < 2:
        raise ValueError(f"need at least 2 bins, got {b}")
    return GreenSet(b, green_labels_array(np.array([seed], dtype=np.uint64), b)[0])


def green_set_for_bin(params: IntervalParams, j: int) -> GreenSet:
    return green_set(seed_for_bin(params, j), params.b)


class _TableCache:
    """Thread-safe LRU of full ``b x b`` label tables for small ``b``."""

    max_b = 2048

    def __init__(self, size: int = 16) -> None:
        self._size = size
        self._lock = threading.Lock()
        self._tables: OrderedDict[tuple[int, int], np.ndarray] = OrderedDict()

    def get(self, params: IntervalParams) -> np.ndarray:
        key = (params.secret, params.b)
        with self._lock:
            table = self._tables.get(key)
            if table is not None:
                self._tables.move_to_end(key)
                return table
        table = green_labels_array(seeds_for_bins_array(params.secret, np.arange(params.b)), params.b)
        table.setflags(write=False)
        with self._lock:
            self._tables[key] = table
            while len(self._tables) > self._size:
                self._tables.popitem(last=False)
        return table


_CACHE = _TableCache()
# Large-b label rows from the last few distinct key-bin sets (embed then detect hits it).
_ROWS: OrderedDict[tuple[int, int, bytes], np.ndarray] = OrderedDict()
_ROWS_LOCK = threading.Lock()


def labels_for_key_bins(params: IntervalParams, key_bins0) -> np.ndarray:
    """Green label rows for each 0-based key bin, recomputed only per distinct bin."""
    key_bins0 = np.asarray(key_bins0, dtype=np.int64)
    if params.b <= _CACHE.max_b:
        return _CACHE.get(params)[key_bins0]
    uniq, inv = np.unique(key_bins0, return_inverse=True)
    key = (params.secret, params.b, uniq.tobytes())
    with _ROWS_LOCK:
        table = _ROWS.get(key)
    if table is None:
        table = green_labels_array(seeds_for_bins_array(params.secret, uniq), params.b)
        with _ROWS_LOCK:
            _ROWS[key] = table
            while len(_ROWS) > 4:
                _ROWS.popitem(last=False)
    return table[inv]


def nearest_green_array(x, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest green bin (0-based) to every ``x`` and whether ``x`` is already green.

    ``labels`` holds one label row per element. The argmin over green centres
    is either the last green bin at or below ``x``'s bin or the first at or
    above it; ties go to the lower index.
    """
    x = np.asarray(x, dtype=float)
    r, b = labels.shape
    step = max(1, 4_000_000 // b)
    if r > step:
        parts = [nearest_green_array(x[i:i + step], labels[i:i + step]) for i in range(0, r, step)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    v = bin_index_array(x, b)
    rows = np.arange(r)
    idx = np.arange(b)
    below = np.maximum.accumulate(np.where(labels, idx, -1), axis=1)[rows, v]
    above = np.minimum.accumulate(np.where(labels, idx, b)[:, ::-1], axis=1)[:, ::-1][rows, v]
    d_below = np.abs(x - (below + 0.5) / b)
    d_above = np.abs(x - (above + 0.5) / b)
    pick_below = (below >= 0) & ((above >= b) | (d_below <= d_above))
    best = np.where(pick_below, below, above)
    return best, labels[rows, v]


def nearest_green(x: float, g: GreenSet) -> tuple[int, bool]:
    if not g.labels.any():
        raise ValueError("green set is empty")
    best, already = nearest_green_array(np.array([x]), g.labels[None, :])
    return int(best[0]) + 1, bool(already[0])
