"""Synthetic experiment harness.

Each benchmark maps a parameter grid to per-trial metric rows. Trials are
seeded from ``(spec.seed, grid point index, trial)`` so every output file is
bit-identical across runs. Results land in ``<out>/<name>/<grid-point>.csv``
plus ``<out>/<name>/summary.json``.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .attacks import BaselineParams, add_noise, baseline_detect, baseline_embed, spoof_fractional
from .dataset import TabularDataset, normalize_unit
from .detector import count_green, detect_with_manifest, z_score
from .embedder import WatermarkParams, embed
from .metrics import linf_distance, mse
from .pairing import ImportanceVector, PairingPlan, expected_preserved_pairs, pair_by_importance, pair_uniform, preserved_pairs

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "fidelity_sweep": {"bin_size": [1e-1, 1e-2, 1e-3, 1e-4]},
    "z_vs_rows": {"m": [20, 40, 60, 80, 100]},
    "noise_sweep": {"sigma": [1e-3, 1e-2, 1e-1], "bin_size": [1e-1, 1e-2, 1e-3, 1e-4]},
    "pairing_preservation": {"keep_fraction": [0.2, 0.4, 0.6, 0.8]},
    "spoof_curve": {"fraction": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]},
}


@dataclass(frozen=True)
class BenchSpec:
    name: str
    grid: dict[str, list] = field(default_factory=dict)
    trials: int = 5
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in DEFAULT_GRIDS:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {sorted(DEFAULT_GRIDS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.grid:
            object.__setattr__(self, "grid", dict(DEFAULT_GRIDS[self.name]))

    def points(self) -> Iterator[dict]:
        keys = list(self.grid)
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            yield dict(zip(keys, combo))


# Column 0 seeds the green sets, column 1 carries the watermark.
_KEY_VALUE = PairingPlan(((0, 1),), "uniform", 0)


def _gaussian_pair(rng: np.random.Generator, m: int) -> TabularDataset:
    """``m x 2`` standard normal table, both columns min-max normalized."""
    ds = TabularDataset.from_array(rng.standard_normal((m, 2)), ["key", "value"])
    ds, _ = normalize_unit(ds, 0)
    ds, _ = normalize_unit(ds, 1)
    return ds


def _bins(bin_size: float) -> int:
    return int(round(1.0 / bin_size))


def _fidelity(point: dict, rng: np.random.Generator, opts: dict) -> dict:
    m = int(opts.get("m", 2000))
    ds = _gaussian_pair(rng, m)
    params = WatermarkParams(_bins(point["bin_size"]), int(rng.integers(2**63)), "unit", int(rng.integers(2**63)))
    ds_w, _ = embed(ds, _KEY_VALUE, params, created="")
    T, used = count_green(ds_w, 0, 1, params)
    return {"mse": mse(ds, ds_w, [1]), "linf": linf_distance(ds, ds_w), "z": z_score(T, used)}


def _z_vs_rows(point: dict, rng: np.random.Generator, opts: dict) -> dict:
    m, cols = int(point["m"]), int(opts.get("cols", 50))
    ds = TabularDataset.from_array(rng.random((m, cols)))
    params = WatermarkParams(int(opts.get("b", 100)), int(rng.integers(2**63)), "unit", int(rng.integers(2**63)))
    plan = pair_uniform(cols, int(rng.integers(2**63)))
    ds_w, _ = embed(ds, plan, params, created="")
    zs = [z_score(*count_green(ds_w, k, v, params)) for k, v in plan.pairs]
    return {"z_max": max(zs), "z_mean": float(np.mean(zs)), "sqrt_m": float(np.sqrt(m))}


def _noise(point: dict, rng: np.random.Generator, opts: dict) -> dict:
    m = int(opts.get("m", 2000))
    ds = _gaussian_pair(rng, m)
    params = WatermarkParams(_bins(point["bin_size"]), int(rng.integers(2**63)), "unit", int(rng.integers(2**63)))
    ds_w, _ = embed(ds, _KEY_VALUE, params, created="")
    attacked = add_noise(ds_w, "gaussian", point["sigma"], 1.0, int(rng.integers(2**63)), columns=[1], clamp=True)
    before = z_score(*count_green(ds_w, 0, 1, params))
    after = z_score(*count_green(attacked, 0, 1, params))
    return {"z_before": before, "z_after": after}


def _pairing(point: dict, rng: np.random.Generator, opts: dict) -> dict:
    cols = int(opts.get("cols", 50))
    imp = ImportanceVector(rng.exponential(size=cols))
    k = max(1, int(np.floor(point["keep_fraction"] * cols + 0.5)))
    kept = imp.ranking()[:k].tolist()
    uni = pair_uniform(cols, int(rng.integers(2**63)))
    fi = pair_by_importance(imp, "fi_sampled", int(rng.integers(2**63)))
    n = cols // 2
    return {
        "k": k,
        "uniform": preserved_pairs(uni, kept),
        "fi_sampled": preserved_pairs(fi, kept),
        "uniform_closed_form": expected_preserved_pairs("uniform", n, k),
    }


def _spoof(point: dict, rng: np.random.Generator, opts: dict) -> dict:
    m, cols, b = int(opts.get("m", 1000)), int(opts.get("cols", 4)), int(opts.get("b", 100))
    scale = float(opts.get("scale", 10.0))
    original = TabularDataset.from_array(rng.normal(0.0, scale, (m, cols)))
    synthetic = TabularDataset.from_array(rng.normal(0.0, scale, (m, cols)))
    spoof_seed = int(rng.integers(2**63))

    base = BaselineParams(b, int(rng.integers(2**63)))
    w_base = baseline_embed(original, base, int(rng.integers(2**63)))
    s_base = spoof_fractional(synthetic, w_base, point["fraction"], spoof_seed)

    params = WatermarkParams(b, int(rng.integers(2**63)), "fractional", int(rng.integers(2**63)))
    w_pair, manifest = embed(original, pair_uniform(cols, int(rng.integers(2**63))), params, created="")
    s_pair = spoof_fractional(synthetic, w_pair, point["fraction"], spoof_seed)
    return {
        "baseline_p": baseline_detect(s_base, base).p_value,
        "pairwise_p": detect_with_manifest(s_pair, manifest).p_value,
    }


_RUNNERS: dict[str, Callable[[dict, np.random.Generator, dict], dict]] = {
    "fidelity_sweep": _fidelity,
    "z_vs_rows": _z_vs_rows,
    "noise_sweep": _noise,
    "pairing_preservation": _pairing,
    "spoof_curve": _spoof,
}


def _point_label(point: dict) -> str:
    return "_".join(f"{k}={v}" for k, v in point.items())


def run_trials(spec: BenchSpec) -> list[tuple[dict, list[dict]]]:
    """Per grid point, the list of trial metric rows (no files written)."""
    runner = _RUNNERS[spec.name]
    out = []
    for gi, point in enumerate(spec.points()):
        rows = []
        for t in range(spec.trials):
            rng = np.random.default_rng([spec.seed, gi, t])
            rows.append({"trial": t, **runner(point, rng, spec.options)})
        out.append((point, rows))
    return out


def summarize(spec: BenchSpec, results: list[tuple[dict, list[dict]]]) -> dict:
    points = []
    for point, rows in results:
        metrics = [k for k in rows[0] if k != "trial"]
        arr = {k: np.array([r[k] for r in rows], dtype=float) for k in metrics}
        points.append({
            "point": point,
            "mean": {k: float(np.mean(v)) for k, v in arr.items()},
            "std": {k: float(np.std(v)) for k, v in arr.items()},
        })
    return {
        "config": {"name": spec.name, "grid": spec.grid, "trials": spec.trials, "seed": spec.seed, "options": spec.options},
        "points": points,
    }


def run_bench(spec: BenchSpec, out_dir: str | Path) -> dict:
    """Run ``spec`` and write one CSV per grid point plus ``summary.json``."""
    results = run_trials(spec)
    target = Path(out_dir) / spec.name
    target.mkdir(parents=True, exist_ok=True)
    for point, rows in results:
        with open(target / f"{_point_label(point)}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows({k: repr(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows)
    summary = summarize(spec, results)
    (target / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
