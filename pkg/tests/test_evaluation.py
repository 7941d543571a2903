import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpslda.errors import DegenerateTruthError, OneClassOnlyError
from bpslda.evaluation import MetricReport, auc, predictive_r2, topic_sparsity


class TestPredictiveR2:
    def test_perfect_prediction(self):
        y = np.array([0.5, 1.5, -2.0])
        assert predictive_r2(y, y) == pytest.approx(1.0)

    def test_mean_predictor_scores_zero(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        pred = np.full(4, y.mean())
        assert predictive_r2(y, pred) == pytest.approx(0.0)

    def test_hand_value(self):
        assert predictive_r2([0, 1, 2], [0, 0, 0]) == pytest.approx(-1.5)

    def test_degenerate_truth(self):
        with pytest.raises(DegenerateTruthError):
            predictive_r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_common_shift_invariance(self, rng):
        y = rng.normal(size=30)
        pred = y + rng.normal(scale=0.3, size=30)
        a = predictive_r2(y, pred)
        b = predictive_r2(y + 17.0, pred + 17.0)
        assert a == pytest.approx(b, rel=1e-12)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == pytest.approx(1.0)

    def test_all_ties(self):
        assert auc([0.5, 0.5, 0.5], [1, 0, 0]) == pytest.approx(0.5)

    def test_hand_pair_count(self):
        assert auc([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(0.5)

    def test_one_class_only(self):
        with pytest.raises(OneClassOnlyError):
            auc([0.1, 0.2], [1, 1])

    def test_monotone_transform_invariance(self, rng):
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.4).astype(int)
        base = auc(scores, labels)
        assert auc(np.exp(scores), labels) == pytest.approx(base)
        assert auc(3.0 * scores + 11.0, labels) == pytest.approx(base)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_matches_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 30))
        scores = rng.integers(0, 5, size=n).astype(float)  # force ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            return
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        assert auc(scores, labels) == pytest.approx(wins / (len(pos) * len(neg)))


class TestTopicSparsity:
    def test_single_dominant_topic(self):
        assert topic_sparsity([[1.0, 0.0, 0.0]], 0.9) == pytest.approx(1 / 3)

    def test_uniform_needs_nine_of_ten(self):
        assert topic_sparsity([np.full(10, 0.1)], 0.9) == pytest.approx(0.9)

    def test_top_two_exactly_cover(self):
        assert topic_sparsity([[0.5, 0.4, 0.1]], 0.9) == pytest.approx(2 / 3)

    def test_mean_over_documents(self):
        thetas = [[1.0, 0.0], [0.5, 0.5]]
        assert topic_sparsity(thetas, 0.9) == pytest.approx((1 + 2) / 2 / 2)

    def test_antitone_in_mass(self, rng):
        thetas = rng.dirichlet(np.ones(6), size=20)
        masses = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99]
        values = [topic_sparsity(thetas, m) for m in masses]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_mass_bounds(self):
        with pytest.raises(ValueError):
            topic_sparsity([[1.0]], 1.0)


def test_metric_report_requires_samples():
    with pytest.raises(ValueError):
        MetricReport("pr2", 0.5, 0)
