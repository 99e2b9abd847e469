"""Watermark detection by one-proportion z-tests on green counts."""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Literal, Mapping, Sequence

import numpy as np

from .dataset import AffineMap, TabularDataset
from .embedder import WatermarkManifest, WatermarkParams, unit_view
from .errors import BudgetExhausted, OutOfRange, RangeError
from .intervals import bin_index_array, labels_for_key_bins
from .pairing import ImportanceVector

Divisor = Literal["n2", "tests"]


@dataclass(frozen=True)
class RowSample:
    """Seeded subsample of rows, drawn without replacement."""

    count: int
    seed: int = 0

    def rows(self, m: int) -> np.ndarray | None:
        if self.count >= m:
            return None
        return np.sort(np.random.default_rng(self.seed).choice(m, self.count, replace=False))


@dataclass(frozen=True)
class PairTestResult:
    key_col: int
    value_col: int
    T: int
    m_used: int
    z: float
    p: float


@dataclass
class DetectionReport:
    verdict: str
    results: list[PairTestResult]
    tests_executed: int
    alpha: float
    per_test_alpha: float
    queries_spent: int
    names: Sequence[str] = field(default=(), repr=False)

    @property
    def watermarked(self) -> bool:
        return self.verdict == "watermarked"

    @property
    def p_value(self) -> float:
        """Bonferroni-adjusted p-value of the conjunction of all executed tests."""
        if not self.results:
            return 1.0
        scale = self.alpha / self.per_test_alpha
        return min(1.0, scale * max(r.p for r in self.results))

    def to_json(self) -> dict:
        def name(i: int):
            return self.names[i] if self.names else i

        return {
            "verdict": self.verdict,
            "alpha": self.alpha,
            "per_test_alpha": self.per_test_alpha,
            "tests_executed": self.tests_executed,
            "queries_spent": self.queries_spent,
            "results": [
                {"key": name(r.key_col), "value": name(r.value_col), "T": r.T, "m": r.m_used, "z": r.z, "p": r.p}
                for r in self.results
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


class QueryBudget:
    """Hard cap on candidate tests; safe to share between threads."""

    def __init__(self, limit: int, spent: int = 0) -> None:
        if limit < 0 or not 0 <= spent <= limit:
            raise ValueError("need 0 <= spent <= limit")
        self.limit = limit
        self.spent = spent
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.limit - self.spent

    def take(self, k: int = 1) -> int:
        """Reserve up to ``k`` queries and return how many were granted."""
        with self._lock:
            granted = min(k, self.limit - self.spent)
            self.spent += granted
            return granted

    def refund(self, k: int) -> None:
        with self._lock:
            self.spent -= k


def z_score(T: int, m: int) -> float:
    if m < 1 or not 0 <= T <= m:
        raise ValueError(f"need m >= 1 and 0 <= T <= m, got T={T}, m={m}")
    return 2.0 * math.sqrt(m) * (T / m - 0.5)


def p_value(z: float) -> float:
    """One-sided upper tail ``1 - Phi(z)`` via the complementary error function."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def z_threshold(per_test_alpha: float) -> float:
    return NormalDist().inv_cdf(1.0 - per_test_alpha)


def min_green_count(m: int, z_th: float) -> float:
    """Smallest green count (real-valued) with ``z_score >= z_th``."""
    if m < 1:
        raise ValueError("m must be positive")
    return z_th * math.sqrt(m / 4.0) + m / 2.0


def green_mask(
    ds: TabularDataset,
    key_col: int,
    value_col: int,
    params: WatermarkParams,
    rows: np.ndarray | None = None,
    column_maps: Mapping[str, AffineMap] | None = None,
) -> np.ndarray:
    """Per-row flag: does the value element fall in the green set of its key element?"""
    maps = column_maps or {}
    names = ds.names
    kv, vv = ds.values(key_col), ds.values(value_col)
    if rows is not None:
        kv, vv = kv[rows], vv[rows]
    try:
        ku = unit_view(kv, params.mode, maps.get(names[key_col]))
        vu = unit_view(vv, params.mode, maps.get(names[value_col]))
        labels = labels_for_key_bins(params.intervals, bin_index_array(ku, params.b))
        vb = bin_index_array(vu, params.b)
    except OutOfRange as e:
        raise RangeError(str(e)) from None
    return labels[np.arange(len(vb)), vb]


def count_green(
    ds: TabularDataset,
    key_col: int,
    value_col: int,
    params: WatermarkParams,
    row_sample: RowSample | None = None,
    column_maps: Mapping[str, AffineMap] | None = None,
) -> tuple[int, int]:
    rows = row_sample.rows(ds.m) if row_sample else None
    mask = green_mask(ds, key_col, value_col, params, rows, column_maps)
    return int(mask.sum()), int(mask.size)


def test_pair(
    ds: TabularDataset,
    key_col: int,
    value_col: int,
    params: WatermarkParams,
    row_sample: RowSample | None = None,
    column_maps: Mapping[str, AffineMap] | None = None,
) -> PairTestResult:
    T, m = count_green(ds, key_col, value_col, params, row_sample, column_maps)
    z = z_score(T, m)
    return PairTestResult(key_col, value_col, T, m, z, p_value(z))


test_pair.__test__ = False  # not a pytest test


def detect_with_manifest(
    ds: TabularDataset,
    manifest: WatermarkManifest,
    alpha: float = 0.05,
    divisor: Divisor = "n2",
    row_sample: RowSample | None = None,
) -> DetectionReport:
    """Owner-mode test: watermarked iff every manifest pair rejects at ``alpha / n^2``."""
    plan = manifest.resolve(ds)
    n = plan.n
    per_test = alpha / (n * n if divisor == "n2" else n)
    results = [
        test_pair(ds, k, v, manifest.params, row_sample, manifest.column_maps) for k, v in plan.pairs
    ]
    ok = all(r.p < per_test for r in results)
    return DetectionReport(
        "watermarked" if ok else "not_watermarked", results, n, alpha, per_test, n, ds.names
    )


def candidate_pairs(
    cols: Sequence[int], order: str = "index", importance: ImportanceVector | None = None
) -> list[tuple[int, int]]:
    """All ordered (key, value) pairs, keys ranked by importance when requested."""
    cols = list(cols)
    if order == "importance":
        if importance is None:
            raise ValueError("importance ordering needs an importance vector")
        cols.sort(key=lambda c: (-importance.scores[c], c))
    elif order != "index":
        raise ValueError(f"unknown order {order!r}")
    return [(k, v) for k in cols for v in cols if k != v]


def detect_blind(
    ds: TabularDataset,
    params: WatermarkParams,
    alpha: float = 0.05,
    z_stop: float | None = None,
    row_sample: RowSample | None = None,
    order: str = "index",
    importance: ImportanceVector | None = None,
    budget: QueryBudget | None = None,
    divisor: Divisor = "n2",
    columns: Sequence[int] | None = None,
    threads: int = 1,
) -> DetectionReport:
    """Search all ``N^2 - N`` ordered column pairs, stopping at the first ``z >= z_stop``.

    Without ``z_stop`` the threshold is the normal quantile of the per-test
    level. Candidates are evaluated in batches of ``threads``; the verdict and
    counts depend only on candidate order, never on scheduling. Raises
    :class:`BudgetExhausted` (with the partial report attached) if the budget
    runs out while candidates remain.
    """
    cols = list(range(ds.n_cols)) if columns is None else list(columns)
    N = len(cols)
    if N < 2:
        raise ValueError("blind detection needs at least 2 columns")
    n_pairs = N // 2
    per_test = alpha / (n_pairs * n_pairs if divisor == "n2" else N * N - N)
    threshold = z_threshold(per_test) if z_stop is None else z_stop
    cands = candidate_pairs(cols, order, importance)
    results: list[PairTestResult] = []
    found = False
    pos = 0

    def run(pair: tuple[int, int]) -> PairTestResult:
        return test_pair(ds, pair[0], pair[1], params, row_sample)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while pos < len(cands) and not found:
            want = min(max(threads, 1), len(cands) - pos)
            granted = budget.take(want) if budget is not None else want
            if granted == 0:
                report = DetectionReport(
                    "not_watermarked", results, len(results), alpha, per_test, len(results), ds.names
                )
                raise BudgetExhausted(
                    f"query budget of {budget.limit} spent after {len(results)} tests", report
                )
            batch = cands[pos:pos + granted]
            batch_results = list(pool.map(run, batch)) if pool else [run(c) for c in batch]
            for i, r in enumerate(batch_results):
                results.append(r)
                if r.z >= threshold:
                    found = True
                    if budget is not None:
                        budget.refund(len(batch) - i - 1)
                    break
            pos += granted
    finally:
        if pool:
            pool.shutdown()
    return DetectionReport(
        "watermarked" if found else "not_watermarked",
        results,
        len(results),
        alpha,
        per_test,
        len(results),
        ds.names,
    )
