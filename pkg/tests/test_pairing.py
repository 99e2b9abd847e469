from collections import Counter

import numpy as np
import pytest

from tabmark.dataset import TabularDataset
from tabmark.errors import AllZeroImportance, OddColumnCount, PlanMismatch
from tabmark.pairing import (
    ImportanceVector,
    PairingPlan,
    expected_preserved_pairs,
    pair_by_importance,
    pair_probability,
    pair_uniform,
    preserved_pairs,
    surrogate_importance,
)


def _matching(plan):
    return frozenset(frozenset(p) for p in plan.pairs)


def test_two_columns():
    assert _matching(pair_uniform(2, 5)) == {frozenset({0, 1})}


def test_uniform_matchings_equally_likely():
    counts = Counter(_matching(pair_uniform(4, s)) for s in range(10_000))
    assert len(counts) == 3
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 3) < 0.02


def test_uniform_deterministic():
    assert pair_uniform(10, 42) == pair_uniform(10, 42)


def test_odd_columns_rejected():
    with pytest.raises(OddColumnCount):
        pair_uniform(5)


def test_plan_rejects_overlap():
    with pytest.raises(PlanMismatch):
        PairingPlan(((0, 1), (1, 2)), "uniform", 0)


def test_plan_json_round_trip():
    plan = pair_uniform(6, 3)
    names = list("abcdef")
    assert PairingPlan.from_json(plan.to_json(names), names).pairs == plan.pairs


def test_pair_probability_values():
    assert pair_probability(1, 2, 4) == pytest.approx(6 / 11)
    assert sum(pair_probability(1, j, 4) for j in (2, 3, 4)) == pytest.approx(1.0)
    assert pair_probability(2, 1, 4) == pair_probability(2, 3, 4)


def test_fi_adjacent_ranks():
    imp = ImportanceVector(np.array([6.0, 5, 4, 3, 2, 1]))
    assert pair_by_importance(imp, "fi_adjacent").pairs == ((0, 1), (2, 3), (4, 5))


def test_fi_sampled_first_pair_frequency():
    imp = ImportanceVector(np.array([4.0, 3, 2, 1]))
    hits = sum(
        frozenset({0, 1}) in _matching(pair_by_importance(imp, "fi_sampled", s)) for s in range(10_000)
    )
    assert abs(hits / 10_000 - 6 / 11) < 0.02


def test_importance_sort_invariance():
    scores = np.array([0.9, 0.1, 0.5, 0.3, 0.7, 0.2])
    perm = np.array([3, 0, 5, 1, 4, 2])
    a = pair_by_importance(ImportanceVector(scores), "fi_sampled", 7)
    b = pair_by_importance(ImportanceVector(scores[perm]), "fi_sampled", 7)
    relabeled = tuple((int(perm[k]), int(perm[v])) for k, v in b.pairs)
    assert relabeled == a.pairs


def test_key_is_more_important():
    imp = ImportanceVector(np.random.default_rng(0).random(20))
    for k, v in pair_by_importance(imp, "fi_sampled", 1).pairs:
        assert imp.scores[k] >= imp.scores[v]


def test_all_zero_importance():
    with pytest.raises(AllZeroImportance):
        pair_by_importance(ImportanceVector(np.zeros(4)))


def test_expected_preserved_closed_forms():
    assert expected_preserved_pairs("uniform", 5, 4) == pytest.approx(2 / 3)
    assert expected_preserved_pairs("uniform", 5, 1) == 0
    assert expected_preserved_pairs("fi_sampled", 5, 1) == 0


def test_uniform_closed_form_matches_monte_carlo():
    n, k = 10, 8
    kept = list(range(k))
    sims = [preserved_pairs(pair_uniform(2 * n, s), kept) for s in range(4000)]
    se = np.std(sims) / np.sqrt(len(sims))
    assert abs(np.mean(sims) - expected_preserved_pairs("uniform", n, k)) < 3 * se


def test_surrogate_importance():
    rng = np.random.default_rng(1)
    y = rng.normal(size=10_000)
    X = np.column_stack([y, rng.normal(size=10_000), 3 * y + 1 + rng.normal(size=10_000), y])
    imp = surrogate_importance(TabularDataset.from_array(X), 0)
    assert imp.scores[0] == 0.0  # the label itself is not a feature
    assert imp.scores[3] == pytest.approx(1.0)
    assert imp.scores[1] < 0.05
    scaled = X.copy()
    scaled[:, 2] = -7 * scaled[:, 2] + 100
    imp2 = surrogate_importance(TabularDataset.from_array(scaled), 0)
    assert imp2.scores[2] == pytest.approx(imp.scores[2])
