"""Pairwise key/value red-green interval watermarking for numeric tables."""

__version__ = "0.1.0"

from .dataset import AffineMap, Column, TabularDataset, load_csv, normalize_unit, split_fractional, write_csv
from .detector import (
    DetectionReport,
    QueryBudget,
    RowSample,
    count_green,
    detect_blind,
    detect_with_manifest,
    min_green_count,
    p_value,
    z_score,
)
from .embedder import WatermarkManifest, WatermarkParams, embed, max_distortion_bound
from .intervals import GreenSet, IntervalParams, bin_center, bin_index, green_set, nearest_green, seed_for_bin
from .pairing import ImportanceVector, PairingPlan, pair_by_importance, pair_uniform

__all__ = [
    "AffineMap",
    "Column",
    "DetectionReport",
    "GreenSet",
    "ImportanceVector",
    "IntervalParams",
    "PairingPlan",
    "QueryBudget",
    "RowSample",
    "TabularDataset",
    "WatermarkManifest",
    "WatermarkParams",
    "bin_center",
    "bin_index",
    "count_green",
    "detect_blind",
    "detect_with_manifest",
    "embed",
    "green_set",
    "load_csv",
    "max_distortion_bound",
    "min_green_count",
    "nearest_green",
    "normalize_unit",
    "p_value",
    "pair_by_importance",
    "pair_uniform",
    "seed_for_bin",
    "split_fractional",
    "write_csv",
    "z_score",
]
