import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabmark.dataset import TabularDataset, fractional_parts, normalize_unit
from tabmark.detector import count_green
from tabmark.embedder import (
    WatermarkManifest,
    WatermarkParams,
    embed,
    embed_element,
    embed_with_manifest,
    max_distortion_bound,
)
from tabmark.errors import PlanMismatch, RangeError
from tabmark.intervals import bin_index, green_set, nearest_green
from tabmark.metrics import mse
from tabmark.pairing import PairingPlan, pair_uniform


def test_embed_element_keeps_green_value():
    g = green_set(11, 100)
    x = (g.greens[0] - 0.5) / 100
    assert embed_element(x, g, np.random.default_rng(0)) == x


@settings(max_examples=100)
@given(st.floats(0, 1), st.integers(0, 2**64 - 1))
def test_embed_element_lands_in_nearest_green(x, seed):
    g = green_set(seed, 50)
    j, already = nearest_green(x, g)
    xw = embed_element(x, g, np.random.default_rng(seed % 1000))
    assert g.is_green(bin_index(xw, 50))
    if not already:
        assert bin_index(xw, 50) == j


def test_embed_element_uniform_within_bin():
    g = green_set(3, 100)
    red = next(j for j in range(1, 101) if not g.is_green(j))
    x = (red - 0.5) / 100
    target, _ = nearest_green(x, g)
    rng = np.random.default_rng(9)
    draws = np.array([embed_element(x, g, rng) for _ in range(100_000)])
    centre = (target - 0.5) / 100
    assert abs(draws.mean() - centre) < 3 * (0.01 / np.sqrt(12 * 100_000))


def test_all_pairs_fully_green(rng):
    ds = TabularDataset.from_array(rng.random((300, 6)))
    params = WatermarkParams(100, secret=5, mode="unit", replacement_seed=1)
    plan = pair_uniform(6, 2)
    ds_w, _ = embed(ds, plan, params, created="")
    for k, v in plan.pairs:
        assert count_green(ds_w, k, v, params) == (300, 300)
        np.testing.assert_array_equal(ds_w.values(k), ds.values(k))


def test_fractional_mode_keeps_integer_parts(rng):
    ds = TabularDataset.from_array(rng.normal(0, 50, (400, 4)))
    params = WatermarkParams(100, secret=8, replacement_seed=0)
    plan = pair_uniform(4, 0)
    ds_w, _ = embed(ds, plan, params, created="")
    np.testing.assert_array_equal(fractional_parts(ds.matrix())[0], fractional_parts(ds_w.matrix())[0])
    for k, v in plan.pairs:
        T, m = count_green(ds_w, k, v, params)
        assert T == m


def test_gaussian_fidelity_small(rng):
    ds = TabularDataset.from_array(rng.standard_normal((2000, 2)))
    ds, _ = normalize_unit(ds, 0)
    ds, _ = normalize_unit(ds, 1)
    ds_w, _ = embed(ds, PairingPlan(((0, 1),), "uniform", 0), WatermarkParams(100, 1, "unit", 2), created="")
    assert mse(ds, ds_w, [1]) < 10 * (1 / 100) ** 2  # same order as one squared bin width


def test_unit_mode_needs_unit_values():
    ds = TabularDataset.from_array(np.array([[0.5, 3.0], [0.2, 0.1]]))
    with pytest.raises(RangeError):
        embed(ds, PairingPlan(((0, 1),), "uniform", 0), WatermarkParams(10, mode="unit"), created="")


def test_unit_mode_normalize_records_maps(rng):
    ds = TabularDataset.from_array(rng.normal(10, 3, (200, 2)), ["k", "v"])
    params = WatermarkParams(64, 4, "unit", 3)
    ds_w, man = embed(ds, PairingPlan(((0, 1),), "uniform", 0), params, normalize=True, created="")
    assert set(man.column_maps) == {"k", "v"}
    assert count_green(ds_w, 0, 1, params, column_maps=man.column_maps) == (200, 200)


def test_replacement_seed_determinism(rng):
    ds = TabularDataset.from_array(rng.random((200, 4)))
    params = WatermarkParams(100, 1, "unit", 77)
    a, _ = embed(ds, pair_uniform(4, 1), params, created="")
    b, _ = embed(ds, pair_uniform(4, 1), params, threads=4, created="")
    np.testing.assert_array_equal(a.matrix(), b.matrix())


def test_decimals_quantization(rng):
    ds = TabularDataset.from_array(np.round(rng.normal(0, 5, (500, 2)), 4))
    params = WatermarkParams(100, 2, replacement_seed=0)
    ds_w, _ = embed(ds, PairingPlan(((0, 1),), "uniform", 0), params, created="", decimals=4)
    vals = ds_w.values(1)
    np.testing.assert_array_equal(vals, np.round(vals, 4))
    assert count_green(ds_w, 0, 1, params) == (500, 500)


def test_embed_is_idempotent_with_manifest(rng):
    ds = TabularDataset.from_array(rng.random((100, 2)), ["a", "b"])
    ds_w, man = embed(ds, PairingPlan(((0, 1),), "uniform", 0), WatermarkParams(100, 3, "unit", 1), created="")
    np.testing.assert_array_equal(embed_with_manifest(ds_w, man).matrix(), ds_w.matrix())


def test_manifest_round_trip_hides_secret(rng):
    ds = TabularDataset.from_array(rng.random((50, 4)), list("wxyz"))
    secret = 0xDEADBEEF
    _, man = embed(ds, pair_uniform(4, 3), WatermarkParams(100, secret, "unit", 0), created="t")
    text = man.dumps()
    assert str(secret) not in text and hex(secret)[2:] not in text.lower()
    back = WatermarkManifest.loads(text, secret)
    assert back.pair_names == man.pair_names
    assert back.params.b == 100
    with pytest.raises(PlanMismatch):
        WatermarkManifest.loads(text, secret + 1)
    obj = json.loads(text)
    obj["version"] = 99
    with pytest.raises(PlanMismatch):
        WatermarkManifest.from_json(obj, secret)


def test_manifest_resolve_missing_column(rng):
    ds = TabularDataset.from_array(rng.random((10, 2)), ["a", "b"])
    _, man = embed(ds, PairingPlan(((0, 1),), "uniform", 0), WatermarkParams(10, 0, "unit", 0), created="")
    with pytest.raises(PlanMismatch):
        man.resolve(TabularDataset.from_array(rng.random((10, 2)), ["a", "c"]))


def test_max_distortion_bound():
    assert max_distortion_bound(2000, 1, 100, 0.05) == pytest.approx(0.15288, abs=1e-4)
    assert max_distortion_bound(2000, 1, 200, 0.05) == pytest.approx(max_distortion_bound(2000, 1, 100, 0.05) / 2)
    assert max_distortion_bound(4000, 1, 100, 0.05) > max_distortion_bound(2000, 1, 100, 0.05)
    assert max_distortion_bound(2000, 2, 100, 0.05) > max_distortion_bound(2000, 1, 100, 0.05)
    with pytest.raises(ValueError):
        max_distortion_bound(10, 1, 10, 1.5)
