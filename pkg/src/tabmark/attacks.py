"""Attacks on watermarked tables and the closed-form costs that go with them.

Also hosts a single-green-set baseline watermark (one global red/green split
of the fractional parts, pooled z-test). It is a simplified stand-in for
global-interval schemes and exists as a spoofing target.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np

from .dataset import TabularDataset, fractional_parts
from .detector import DetectionReport, PairTestResult, min_green_count, p_value, z_score
from .embedder import move_into_bins
from .errors import NonPositiveRho, ShapeMismatch
from .intervals import GOLDEN, bin_index_array, green_set, mix64, nearest_green_array
from .pairing import ImportanceVector

Kind = Literal["truncate", "noise", "drop_columns", "spoof"]

# Scaled values this close to an integer count as that integer when truncating.
_TRUNC_SNAP = 1e-9


@dataclass(frozen=True)
class AttackConfig:
    kind: Kind
    p: int = 2
    dist: Literal["gaussian", "uniform"] = "gaussian"
    sigma: float = 0.01
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("truncate", "noise", "drop_columns", "spoof"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "noise" and not self.sigma > 0:
            raise ValueError("noise attack needs sigma > 0")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.p < 0:
            raise ValueError("decimal places must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


def truncate(x, p: int):
    """Floor ``x`` onto the grid of ``p`` decimal places.

    Works on scalars and arrays. A scaled value within ``1e-9`` of an integer
    is taken to be that integer, so ``0.29`` (stored as ``0.28999...``) stays put.
    """
    scale = 10.0 ** p
    s = np.asarray(x, dtype=float) * scale
    r = np.round(s)
    s = np.where(np.abs(s - r) <= _TRUNC_SNAP * np.maximum(1.0, np.abs(s)), r, s)
    out = np.floor(s) / scale
    return float(out) if np.ndim(out) == 0 else out


def truncate_dataset(ds: TabularDataset, p: int, columns: Sequence[int] | None = None) -> TabularDataset:
    cols = range(ds.n_cols) if columns is None else columns
    return ds.replace_columns({c: ds.columns[c].with_values(truncate(ds.values(c), p)) for c in cols})


def truncation_escape_prob(b: int, p: int, j: int, c: float) -> float:
    """Closed-form chance that truncating a value of bin ``j`` leaves the bin, clipped to [0, 1].

    ``((b-1)^(10^p) + b^(10^p - 1) (c b - j + 1)) / b^(10^p)``, evaluated as
    ``((b-1)/b)^(10^p) + (c b - j + 1)/b`` to stay in floating range.
    """
    if not 1 <= j <= b:
        raise ValueError(f"bin {j} outside [1, {b}]")
    val = ((b - 1) / b) ** (10 ** p) + (c * b - j + 1) / b
    return min(1.0, max(0.0, val))


def truncation_escape_mc(b: int, p: int, j: int, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo escape rate for ``x`` uniform on bin ``j`` under truncation to ``p`` places."""
    rng = np.random.default_rng(seed)
    x = (j - 1 + rng.random(samples)) / b
    x = x[bin_index_array(x, b) == j - 1]
    return float(np.mean(bin_index_array(truncate(x, p), b) != j - 1))


def _rows_to_hit(m: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    count = math.ceil(fraction * m)
    if count >= m:
        return np.arange(m)
    return np.sort(rng.choice(m, count, replace=False))


def add_noise(
    ds: TabularDataset,
    dist: str = "gaussian",
    sigma: float = 0.01,
    fraction: float = 1.0,
    seed: int = 0,
    columns: Sequence[int] | None = None,
    clamp: bool = False,
) -> TabularDataset:
    """Perturb ``ceil(fraction * m)`` seeded rows of each column.

    ``gaussian`` adds N(0, sigma^2); ``uniform`` adds Unif[-sigma, sigma].
    With ``clamp`` (unit-mode data) results are clipped back into [0, 1].
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if dist not in ("gaussian", "uniform"):
        raise ValueError(f"unknown noise distribution {dist!r}")
    cols = range(ds.n_cols) if columns is None else columns
    updates = {}
    for c in cols:
        rng = np.random.default_rng([seed, c])
        rows = _rows_to_hit(ds.m, fraction, rng)
        if dist == "gaussian":
            eps = rng.normal(0.0, sigma, rows.size)
        else:
            eps = rng.uniform(-sigma, sigma, rows.size)
        vals = ds.values(c).copy()
        vals[rows] += eps
        if clamp:
            vals = np.clip(vals, 0.0, 1.0)
        updates[c] = ds.columns[c].with_values(vals)
    return ds.replace_columns(updates)


def noise_survival_rho(b: int, sigma: float) -> float:
    """``0.5 - 1/(4 b sigma)``: chance a green cell lands red under Unif[-sigma, sigma] noise."""
    if not 4 * b * sigma > 2:
        raise NonPositiveRho(f"4*b*sigma = {4 * b * sigma:g} must exceed 2")
    return 0.5 - 1.0 / (4.0 * b * sigma)


def expected_attacked_cells(m: int, z_th: float, rho: float) -> float:
    """Cells an attacker must hit, on average, to pull a column's z below ``z_th``."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    return (m - min_green_count(m, z_th)) / rho


def drop_columns(ds: TabularDataset, imp: ImportanceVector, keep_fraction: float) -> TabularDataset:
    """Keep the ``round(keep_fraction * cols)`` most important columns, in their original order."""
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    if len(imp) != ds.n_cols:
        raise ShapeMismatch(f"{len(imp)} importance scores for {ds.n_cols} columns")
    k = max(1, math.floor(keep_fraction * ds.n_cols + 0.5))
    return ds.select(imp.ranking()[:k].tolist())


def spoof_fractional(S: TabularDataset, W: TabularDataset, fraction: float, seed: int = 0) -> TabularDataset:
    """Fractional replacement: copy the closest fractional parts of ``W`` into ``S``.

    A seeded ``ceil(fraction * m * cols)`` subset of cells is processed. Each
    gets the fractional part of ``W`` nearest its own (ties to the smaller
    one); negative cells become ``floor(x) - closest`` and the rest
    ``floor(x) + closest``.
    """
    if (S.m, S.n_cols) != (W.m, W.n_cols):
        raise ShapeMismatch(f"S is {S.m}x{S.n_cols}, W is {W.m}x{W.n_cols}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    pool = np.unique(fractional_parts(W.matrix())[1])
    X = S.matrix()
    flat = X.ravel()  # copy-free view of the fresh matrix
    cells = _rows_to_hit(flat.size, fraction, np.random.default_rng(seed))
    x = flat[cells]
    ip, frac = fractional_parts(x)
    hi = np.clip(np.searchsorted(pool, frac), 0, pool.size - 1)
    lo = np.clip(hi - 1, 0, pool.size - 1)
    closest = np.where(np.abs(pool[lo] - frac) <= np.abs(pool[hi] - frac), pool[lo], pool[hi])
    flat[cells] = np.where(x < 0, ip - closest, ip + closest)
    return S.with_matrix(X)


@dataclass(frozen=True)
class BaselineParams:
    b: int = 100
    secret: int = 0

    def __post_init__(self) -> None:
        if self.b < 2:
            raise ValueError("need at least 2 bins")

    def green(self):
        return green_set(mix64(self.secret ^ GOLDEN), self.b)


def baseline_embed(ds: TabularDataset, params: BaselineParams, seed: int = 0) -> TabularDataset:
    """Snap the fractional part of every cell into one global green set."""
    labels = params.green().labels
    rng = np.random.default_rng(seed)
    X = ds.matrix()
    flat = X.ravel()
    frac = fractional_parts(flat)[1]
    target, already = nearest_green_array(frac, np.broadcast_to(labels, (flat.size, params.b)))
    red = np.flatnonzero(~already)
    if red.size:
        flat[red] = move_into_bins(flat[red], target[red], params.b, "fractional", None, rng)
    return ds.with_matrix(X)


def baseline_detect(ds: TabularDataset, params: BaselineParams, alpha: float = 0.05) -> DetectionReport:
    """One pooled z-test over every cell against the global green set."""
    labels = params.green().labels
    frac = fractional_parts(ds.matrix().ravel())[1]
    T = int(labels[bin_index_array(frac, params.b)].sum())
    m = frac.size
    z = z_score(T, m)
    p = p_value(z)
    result = PairTestResult(-1, -1, T, m, z, p)
    return DetectionReport(
        "watermarked" if p < alpha else "not_watermarked", [result], 1, alpha, alpha, 1, ()
    )
