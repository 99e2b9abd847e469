"""Fidelity metrics between a table and its watermarked copy, plus their bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import TabularDataset
from .embedder import max_distortion_bound
from .errors import ShapeMismatch


def _pair(X, X_w, columns: Sequence[int] | None) -> tuple[np.ndarray, np.ndarray]:
    a = X.matrix() if isinstance(X, TabularDataset) else np.atleast_2d(np.asarray(X, dtype=float))
    b = X_w.matrix() if isinstance(X_w, TabularDataset) else np.atleast_2d(np.asarray(X_w, dtype=float))
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if columns is not None:
        a, b = a[:, list(columns)], b[:, list(columns)]
    return a, b


def linf_distance(X, X_w, columns: Sequence[int] | None = None) -> float:
    """Largest absolute cell difference (all columns unless ``columns`` is given)."""
    a, b = _pair(X, X_w, columns)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def mse(X, X_w, columns: Sequence[int] | None = None) -> float:
    """Mean squared cell difference, typically restricted to the value columns."""
    a, b = _pair(X, X_w, columns)
    return float(np.mean((a - b) ** 2)) if a.size else 0.0


def wasserstein_rowwise(X, X_w, k: float = 1) -> float:
    """``(mean_j ||X[j] - X_w[j]||_2^k)^(1/k)``.

    This is the cost of the identity coupling between the two empirical row
    distributions, so it upper-bounds the true Wasserstein-k distance.
    """
    if k < 1:
        raise ValueError("order k must be >= 1")
    a, b = _pair(X, X_w, None)
    norms = np.linalg.norm(a - b, axis=1)
    return float(np.mean(norms ** k) ** (1.0 / k))


def wasserstein_bound(m: int, n: int, b: int, delta: float, k: float = 1) -> float:
    """``sqrt(2n) * log2(m n / delta) / b``; the same for every order ``k``."""
    return math.sqrt(2 * n) * max_distortion_bound(m, n, b, delta)


@dataclass(frozen=True)
class FidelityReport:
    linf: float
    mse: float
    wasserstein_k: float
    bound_linf: float
    bound_wasserstein: float

    @property
    def within_bounds(self) -> tuple[bool, bool]:
        return self.linf <= self.bound_linf, self.wasserstein_k <= self.bound_wasserstein


def fidelity_report(
    X,
    X_w,
    n: int,
    b: int,
    delta: float = 0.05,
    k: float = 1,
    mse_columns: Sequence[int] | None = None,
) -> FidelityReport:
    a, _ = _pair(X, X_w, None)
    m = a.shape[0]
    return FidelityReport(
        linf=linf_distance(X, X_w),
        mse=mse(X, X_w, mse_columns),
        wasserstein_k=wasserstein_rowwise(X, X_w, k),
        bound_linf=max_distortion_bound(m, n, b, delta),
        bound_wasserstein=wasserstein_bound(m, n, b, delta, k),
    )
