"""Column pairing: uniform and feature-importance (key, value) matchings.

Column indices are 0-based throughout, except :func:`pair_probability` and
:func:`expected_preserved_pairs`, which speak in importance ranks ``1..2n``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .dataset import TabularDataset
from .errors import AllZeroImportance, DegenerateLabel, OddColumnCount, PlanMismatch

Scheme = Literal["uniform", "fi_adjacent", "fi_sampled"]
SCHEMES = ("uniform", "fi_adjacent", "fi_sampled")


@dataclass(frozen=True)
class PairingPlan:
    pairs: tuple[tuple[int, int], ...]
    scheme: str = "uniform"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        pairs = tuple((int(k), int(v)) for k, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        seen: set[int] = set()
        for k, v in pairs:
            if k == v:
                raise PlanMismatch(f"column {k} paired with itself")
            if k in seen or v in seen:
                raise PlanMismatch(f"pairs are not disjoint: {pairs}")
            seen.update((k, v))

    @property
    def n(self) -> int:
        return len(self.pairs)

    def columns(self) -> set[int]:
        return {c for p in self.pairs for c in p}

    def to_json(self, names: Sequence[str]) -> dict:
        return {
            "scheme": self.scheme,
            "rng_seed": self.rng_seed,
            "pairs": [[names[k], names[v]] for k, v in self.pairs],
        }

    @classmethod
    def from_json(cls, obj: dict, names: Sequence[str]) -> "PairingPlan":
        lookup = {n: i for i, n in enumerate(names)}
        try:
            pairs = tuple((lookup[k], lookup[v]) for k, v in obj["pairs"])
        except KeyError as e:
            raise PlanMismatch(f"plan references missing column {e.args[0]!r}") from None
        return cls(pairs, obj.get("scheme", "uniform"), int(obj.get("rng_seed", 0)))


@dataclass(frozen=True)
class ImportanceVector:
    scores: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.scores, dtype=float)
        if arr.ndim != 1 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("importance scores must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return len(self.scores)

    def ranking(self) -> np.ndarray:
        """Column indices by descending importance, ties by column index."""
        return np.argsort(-self.scores, kind="stable")


def load_importance_csv(path: str | Path, names: Sequence[str]) -> ImportanceVector:
    """Read ``name,score`` rows; columns not listed get score 0."""
    scores = dict.fromkeys(names, 0.0)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if len(row) < 2:
                continue
            try:
                score = float(row[1])
            except ValueError:
                continue  # header line
            if row[0] in scores:
                scores[row[0]] = score
    return ImportanceVector(np.array([scores[n] for n in names]))


def _check_even(cols: int) -> None:
    if cols < 2 or cols % 2:
        raise OddColumnCount(f"need an even number of columns (>= 2), got {cols}")


def pair_uniform(cols: int, rng_seed: int = 0) -> PairingPlan:
    _check_even(cols)
    perm = np.random.default_rng(rng_seed).permutation(cols)
    pairs = tuple((int(perm[i]), int(perm[i + 1])) for i in range(0, cols, 2))
    return PairingPlan(pairs, "uniform", rng_seed)


def pair_probability(i: int, j: int, total: int) -> float:
    """Probability that ranks ``i`` and ``j`` (1-based) form a pair, weight ``1/|i-j|``."""
    if i == j or not (1 <= i <= total and 1 <= j <= total):
        raise IndexError(f"invalid ranks ({i}, {j}) for {total} columns")
    norm = sum(1.0 / abs(i - l) for l in range(1, total + 1) if l != i)
    return (1.0 / abs(i - j)) / norm


def pair_by_importance(
    imp: ImportanceVector, mode: Scheme = "fi_adjacent", rng_seed: int = 0
) -> PairingPlan:
    """Pair columns with similar importance; the more important one is the key.

    ``fi_adjacent`` pairs ranks (1,2), (3,4), ... . ``fi_sampled`` walks the
    ranks in order and draws each unmatched rank's partner among the remaining
    ranks with weight ``1/|i-j|``.
    """
    _check_even(len(imp))
    if not np.any(imp.scores > 0):
        raise AllZeroImportance("all importance scores are zero")
    order = imp.ranking()
    if mode == "fi_adjacent":
        pairs = tuple((int(order[r]), int(order[r + 1])) for r in range(0, len(order), 2))
        return PairingPlan(pairs, mode, rng_seed)
    if mode != "fi_sampled":
        raise ValueError(f"unknown importance pairing mode {mode!r}")
    rng = np.random.default_rng(rng_seed)
    free = np.ones(len(order), dtype=bool)
    ranks = np.arange(len(order))
    pairs = []
    for i in range(len(order)):
        if not free[i]:
            continue
        free[i] = False
        cand = ranks[free]
        w = 1.0 / np.abs(cand - i)
        j = int(cand[rng.choice(len(cand), p=w / w.sum())])
        free[j] = False
        pairs.append((int(order[i]), int(order[j])))
    return PairingPlan(tuple(pairs), mode, rng_seed)


def make_plan(
    cols: int, scheme: Scheme, rng_seed: int = 0, imp: ImportanceVector | None = None
) -> PairingPlan:
    if scheme == "uniform":
        return pair_uniform(cols, rng_seed)
    if imp is None:
        raise ValueError(f"scheme {scheme!r} needs an importance vector")
    return pair_by_importance(imp, scheme, rng_seed)


def _harmonic(i: int) -> float:
    return float(np.sum(1.0 / np.arange(1, i + 1))) if i > 0 else 0.0


def expected_preserved_pairs(scheme: str, n: int, k: int) -> float:
    """Closed-form expected pairs surviving top-``k`` selection out of ``2n`` columns.

    Uniform: ``k(k-1) / (2(2n-1))``. Importance: the harmonic-sum expression
    ``k - sum_i (H_{2n-i} - H_{k-i}) / (H_{i-1} + H_{2n-i})`` with ``H_0 = 0``.
    """
    total = 2 * n
    if not 1 <= k <= total:
        raise ValueError(f"k={k} outside [1, {total}]")
    if k == 1:
        return 0.0
    if scheme == "uniform":
        return k * (k - 1) / (2 * (total - 1))
    if scheme in ("fi_sampled", "fi_adjacent", "fi"):
        return k - sum(
            (_harmonic(total - i) - _harmonic(k - i)) / (_harmonic(i - 1) + _harmonic(total - i))
            for i in range(1, k + 1)
        )
    raise ValueError(f"unknown scheme {scheme!r}")


def preserved_pairs(plan: PairingPlan, kept: Iterable[int]) -> int:
    kept = set(kept)
    return sum(1 for k, v in plan.pairs if k in kept and v in kept)


def surrogate_importance(ds: TabularDataset, label_col: int) -> ImportanceVector:
    """Absolute Pearson correlation of every column with the label column."""
    if ds.m < 3:
        raise ValueError("need at least 3 rows")
    y = ds.values(label_col)
    if np.ptp(y) == 0:
        raise DegenerateLabel("label column is constant")
    yc = y - y.mean()
    scores = np.zeros(ds.n_cols)
    for i in range(ds.n_cols):
        if i == label_col:
            continue
        x = ds.values(i)
        xc = x - x.mean()
        denom = np.sqrt((xc @ xc) * (yc @ yc))
        if denom > 0:
            scores[i] = min(1.0, abs(float(xc @ yc)) / denom)
    return ImportanceVector(scores)
