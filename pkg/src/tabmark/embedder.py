"""Pairwise red/green watermark embedding.

For every (key, value) pair and every row, the key element's bin picks a green
set and the value element is moved into the nearest green bin when it is not
already in one. Two coordinate systems are supported:

``unit``
    values live in ``[0, 1]`` (optionally through a recorded min-max map);
``fractional``
    only the fractional part ``x - floor(x)`` is binned and rewritten, the
    integer part is never touched.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Literal, Mapping

import numpy as np

from .dataset import AffineMap, TabularDataset, fractional_parts
from .errors import ConstantColumn, OutOfRange, PlanMismatch, RangeError
from .intervals import (
    RANGE_TOL,
    GreenSet,
    IntervalParams,
    bin_index_array,
    labels_for_key_bins,
    nearest_green,
    nearest_green_array,
)
from .pairing import PairingPlan

Mode = Literal["unit", "fractional"]
MANIFEST_VERSION = 1
# Sampled positions keep this fraction of a bin width away from both edges.
_EDGE_MARGIN = 1e-6


@dataclass(frozen=True)
class WatermarkParams:
    b: int = 100
    secret: int = 0
    mode: Mode = "fractional"
    replacement_seed: int | None = None

    def __post_init__(self) -> None:
        if self.b < 2:
            raise ValueError(f"need at least 2 bins, got {self.b}")
        if self.mode not in ("unit", "fractional"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def intervals(self) -> IntervalParams:
        return IntervalParams(self.b, self.secret)


def secret_id(secret: int) -> str:
    """Short public fingerprint of the secret, safe to store in a manifest."""
    return hashlib.sha256(secret.to_bytes(8, "big")).hexdigest()[:16]


@dataclass(frozen=True)
class WatermarkManifest:
    params: WatermarkParams
    plan: PairingPlan
    pair_names: tuple[tuple[str, str], ...]
    column_maps: Mapping[str, AffineMap] = field(default_factory=dict)
    created: str = ""

    def resolve(self, ds: TabularDataset) -> PairingPlan:
        """The plan re-indexed against ``ds`` by column name."""
        lookup = {n: i for i, n in enumerate(ds.names)}
        try:
            pairs = tuple((lookup[k], lookup[v]) for k, v in self.pair_names)
        except KeyError as e:
            raise PlanMismatch(f"dataset lacks watermarked column {e.args[0]!r}") from None
        return PairingPlan(pairs, self.plan.scheme, self.plan.rng_seed)

    def to_json(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "b": self.params.b,
            "secret_id": secret_id(self.params.secret),
            "mode": self.params.mode,
            "scheme": self.plan.scheme,
            "rng_seed": self.plan.rng_seed,
            "pairs": [list(p) for p in self.pair_names],
            "column_maps": {k: v.to_json() for k, v in sorted(self.column_maps.items())},
            "created": self.created,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, obj: dict, secret: int = 0) -> "WatermarkManifest":
        if obj.get("version") != MANIFEST_VERSION:
            raise PlanMismatch(f"unsupported manifest version {obj.get('version')!r}")
        if obj.get("secret_id") not in (None, secret_id(secret)):
            raise PlanMismatch("supplied secret does not match the manifest's secret_id")
        names = tuple((str(k), str(v)) for k, v in obj["pairs"])
        # Indices here are positions in pair order; resolve() maps them onto a dataset.
        flat = [n for p in names for n in p]
        plan = PairingPlan(
            tuple((flat.index(k), flat.index(v)) for k, v in names),
            obj.get("scheme", "uniform"),
            int(obj.get("rng_seed", 0)),
        )
        maps = {k: AffineMap(float(v["lo"]), float(v["hi"])) for k, v in obj.get("column_maps", {}).items()}
        params = WatermarkParams(int(obj["b"]), secret, obj.get("mode", "fractional"))
        return cls(params, plan, names, maps, obj.get("created", ""))

    @classmethod
    def loads(cls, text: str, secret: int = 0) -> "WatermarkManifest":
        return cls.from_json(json.loads(text), secret)


def unit_view(values, mode: Mode, amap: AffineMap | None = None) -> np.ndarray:
    """Coordinates in ``[0, 1]`` that get binned: fractional parts or (mapped) unit values."""
    values = np.asarray(values, dtype=float)
    if mode == "fractional":
        return fractional_parts(values)[1]
    u = amap.forward(values) if amap is not None else values
    if amap is None and u.size and (u.min() < -RANGE_TOL or u.max() > 1 + RANGE_TOL):
        raise RangeError("unit mode needs values in [0, 1]; normalize the column or use fractional mode")
    return np.clip(u, 0.0, 1.0)


def _from_unit(u, original, mode: Mode, amap: AffineMap | None) -> np.ndarray:
    if mode == "fractional":
        return np.floor(original) + u
    return amap.inverse(u) if amap is not None else u


def _quantize(x: np.ndarray, decimals: int | None = None) -> np.ndarray:
    """Round to what the CSV writer emits: 12 significant digits or fixed decimals."""
    if decimals is not None:
        return np.round(x, decimals)
    return np.array([float(format(v, ".12g")) for v in x.tolist()]) if x.size else x


def embed_element(x: float, g: GreenSet, rng: np.random.Generator) -> float:
    """Move ``x`` uniformly into its nearest green bin unless it is already green."""
    j, already = nearest_green(x, g)
    if already:
        return x
    return (j - 1 + _EDGE_MARGIN + rng.random() * (1 - 2 * _EDGE_MARGIN)) / g.b


def move_into_bins(
    values: np.ndarray,
    target: np.ndarray,
    b: int,
    mode: Mode,
    amap: AffineMap | None,
    rng: np.random.Generator,
    decimals: int | None = None,
) -> np.ndarray:
    """Resample each value uniformly inside its 0-based ``target`` bin.

    Results are rounded the way the CSV writer will print them (12 significant
    digits, or ``decimals`` places); a value that rounding pushes across an
    edge falls back to the bin centre.
    """
    u = _EDGE_MARGIN + rng.random(values.size) * (1 - 2 * _EDGE_MARGIN)
    moved = _quantize(_from_unit((target + u) / b, values, mode, amap), decimals)
    off = bin_index_array(unit_view(moved, mode, amap), b) != target
    if off.any():
        centre = (target[off] + 0.5) / b
        moved[off] = _quantize(_from_unit(centre, values[off], mode, amap), decimals)
        if np.any(bin_index_array(unit_view(moved[off], mode, amap), b) != target[off]):
            raise RangeError("column precision is too coarse to hold a value inside one bin")
    return moved


def _embed_pair(
    key_vals: np.ndarray,
    value_vals: np.ndarray,
    params: WatermarkParams,
    key_map: AffineMap | None,
    value_map: AffineMap | None,
    rng: np.random.Generator,
    decimals: int | None = None,
) -> np.ndarray:
    b = params.b
    kv = unit_view(key_vals, params.mode, key_map)
    vv = unit_view(value_vals, params.mode, value_map)
    labels = labels_for_key_bins(params.intervals, bin_index_array(kv, b))
    target, already = nearest_green_array(vv, labels)
    out = value_vals.copy()
    red = np.flatnonzero(~already)
    if red.size:
        out[red] = move_into_bins(value_vals[red], target[red], b, params.mode, value_map, rng, decimals)
    return out


def embed(
    ds: TabularDataset,
    plan: PairingPlan,
    params: WatermarkParams,
    *,
    normalize: bool = False,
    column_maps: Mapping[str, AffineMap] | None = None,
    threads: int = 1,
    created: str | None = None,
    decimals: int | None = None,
) -> tuple[TabularDataset, WatermarkManifest]:
    """Watermark every value column of ``plan``; key columns are left untouched.

    In unit mode, ``normalize=True`` min-max maps each paired column that is
    not already inside ``[0, 1]`` and records the map in the manifest, so the
    output keeps its original scale. ``column_maps`` reuses maps from an
    existing manifest instead. ``decimals`` rounds moved values to that many
    places, matching a CSV written with the same precision.
    """
    names = ds.names
    for k, v in plan.pairs:
        if not (0 <= k < ds.n_cols and 0 <= v < ds.n_cols):
            raise PlanMismatch(f"plan pair ({k}, {v}) outside {ds.n_cols} columns")
    maps: dict[str, AffineMap] = dict(column_maps or {})
    if params.mode == "unit" and normalize and column_maps is None:
        for col in sorted(plan.columns()):
            vals = ds.values(col)
            if vals.min() < 0 or vals.max() > 1:
                lo, hi = float(vals.min()), float(vals.max())
                if lo == hi:
                    raise ConstantColumn(f"column {names[col]!r} is constant; refusing to watermark it")
                maps[names[col]] = AffineMap(lo, hi)
    if params.replacement_seed is None:
        root = np.random.SeedSequence()
    else:
        root = np.random.SeedSequence(params.replacement_seed)
    children = root.spawn(plan.n)

    def work(i: int) -> np.ndarray:
        k, v = plan.pairs[i]
        rng = np.random.default_rng(children[i])
        try:
            return _embed_pair(
                ds.values(k), ds.values(v), params, maps.get(names[k]), maps.get(names[v]), rng, decimals
            )
        except OutOfRange as e:
            raise RangeError(f"pair ({names[k]}, {names[v]}): {e}") from None

    if threads > 1 and plan.n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            new_values = list(pool.map(work, range(plan.n)))
    else:
        new_values = [work(i) for i in range(plan.n)]
    updates = {v: ds.columns[v].with_values(vals) for (_, v), vals in zip(plan.pairs, new_values)}
    ds_w = ds.replace_columns(updates)
    if created is None:
        created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    manifest = WatermarkManifest(
        params,
        plan,
        tuple((names[k], names[v]) for k, v in plan.pairs),
        {n: m for n, m in maps.items() if n in {names[c] for c in plan.columns()}},
        created,
    )
    return ds_w, manifest


def embed_with_manifest(ds: TabularDataset, manifest: WatermarkManifest, threads: int = 1) -> TabularDataset:
    """Re-run embedding with a manifest's pairing and maps (a no-op on its own output)."""
    plan = manifest.resolve(ds)
    ds_w, _ = embed(ds, plan, manifest.params, column_maps=manifest.column_maps, threads=threads, created="")
    return ds_w


def max_distortion_bound(m: int, n: int, b: int, delta: float) -> float:
    """High-probability bound ``log2(m n / delta) / b`` on the largest cell change."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.log2(m * n / delta) / b

