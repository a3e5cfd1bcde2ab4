import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mosnet.data import RatingRecord
from mosnet.metrics import (ConstantInputError, binary_accuracy, evaluate_levels, mse,
                            pearson_lcc, rating_distribution, spearman_srcc, system_aggregate)

from helpers import pearson_by_formula, spearman_by_ranks, tied_pair

finite_vectors = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30)


class TestCorrelation:
    """Known values, invariances and oracle agreement."""

    def test_worked_example(self):
        x, y = [1, 2, 3, 4], [2, 1, 4, 3]
        assert pearson_lcc(x, y) == pytest.approx(0.6, abs=1e-12)
        assert spearman_srcc(x, y) == pytest.approx(0.6, abs=1e-12)

    def test_perfect_and_reversed(self):
        x = np.arange(10.0)
        assert pearson_lcc(x, 2 * x + 1) == 1.0
        assert pearson_lcc(x, -x) == -1.0

    def test_constant_input_raises(self):
        with pytest.raises(ConstantInputError):
            pearson_lcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(ConstantInputError):
            spearman_srcc([1, 2, 3], [4, 4, 4])

    @pytest.mark.parametrize("x,y", [([1], [1]), ([1, 2], [1]), ([1, np.nan], [1, 2])])
    def test_bad_input(self, x, y):
        with pytest.raises(ValueError):
            pearson_lcc(x, y)

    @given(finite_vectors, st.floats(0.1, 10), st.floats(-50, 50))
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance_and_bounds(self, values, a, b):
        x = np.asarray(values)
        y = np.random.default_rng(len(values)).standard_normal(x.size)
        if np.ptp(x) < 1e-3:
            return
        r = pearson_lcc(x, y)
        assert -1 <= r <= 1
        assert pearson_lcc(a * x + b, y) == pytest.approx(r, abs=1e-9)

    def test_spearman_monotone_invariance(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        assert spearman_srcc(np.exp(x), y ** 3) == pytest.approx(spearman_srcc(x, y), abs=1e-12)

    def test_oracles_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x, y = tied_pair(rng, 200)
            assert pearson_lcc(x, y) == pytest.approx(pearson_by_formula(list(x), list(y)), abs=1e-12)
            assert spearman_srcc(x, y) == pytest.approx(spearman_by_ranks(x, y), abs=1e-12)

    def test_symmetric(self):
        x, y = tied_pair(np.random.default_rng(2), 40)
        assert pearson_lcc(x, y) == pytest.approx(pearson_lcc(y, x), abs=1e-15)
        assert spearman_srcc(x, y) == pytest.approx(spearman_srcc(y, x), abs=1e-15)


class TestMse:
    def test_worked_example(self):
        assert mse([0, 0], [1, 3]) == 5.0

    def test_zero_for_identical(self):
        assert mse([1.5, 2.5], [1.5, 2.5]) == 0.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mse([1, 2], [1])

    @given(finite_vectors)
    @settings(max_examples=40, deadline=None)
    def test_matches_loop(self, values):
        y = list(reversed(values))
        expected = sum((a - b) ** 2 for a, b in zip(values, y)) / len(values)
        assert mse(values, y) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestSystemAggregate:
    def test_worked_example(self):
        rows = [("A", 1, 0), ("A", 3, 0), ("B", 2, 0), ("B", 4, 0)]
        assert [(s, p) for s, p, _ in system_aggregate(rows)] == [("A", 2.0), ("B", 3.0)]

    def test_groupby_oracle(self):
        rng = np.random.default_rng(3)
        systems = rng.choice(list("ABCDE"), 100)
        pred, truth = rng.random(100), rng.random(100)
        for sys_id, p, t in system_aggregate(zip(systems, pred, truth)):
            mask = systems == sys_id
            assert p == pytest.approx(pred[mask].mean(), abs=1e-15)
            assert t == pytest.approx(truth[mask].mean(), abs=1e-15)

    def test_evaluate_levels(self):
        utt, sys_ = evaluate_levels(["A", "A", "B", "B", "C"], [1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
        assert utt.n == 5 and sys_.n == 3
        assert utt.lcc == pytest.approx(1.0) and sys_.mse == 0.0


class TestBinaryAccuracy:
    def test_threshold(self):
        assert binary_accuracy([0.2, 0.5, 0.9, 0.4], [0, 1, 1, 1]) == 0.75

    def test_two_class_argmax(self):
        assert binary_accuracy([[0.9, 0.1], [0.3, 0.7]], [0, 0]) == 0.5

    def test_mismatch(self):
        with pytest.raises(ValueError):
            binary_accuracy([0.1], [0, 1])


class TestRatingDistribution:
    def records(self, scores_by_utt):
        return [RatingRecord(u, "S", f"L{k}", s) for u, ss in scores_by_utt.items()
                for k, s in enumerate(ss)]

    def test_mean_and_population_std(self):
        dist = rating_distribution(self.records({"u": [1, 5, 1, 5]}))
        assert dist.means[0] == 3.0 and dist.stds[0] == 2.0

    def test_counts_sum_to_utterances(self):
        rng = np.random.default_rng(4)
        recs = self.records({f"u{k}": list(rng.integers(1, 6, 4)) for k in range(37)})
        dist = rating_distribution(recs)
        assert dist.mean_counts.sum() == 37 and dist.std_counts.sum() == 37
        assert np.allclose(np.diff(dist.mean_edges), 0.25)
