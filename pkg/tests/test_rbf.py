import numpy as np
import pytest

import helpers
from impostornet import (ImpostorSet, KernelParams, classify, classify_batch,
                         kernel_weight, predict_label)


def make_set(points, labels, n_classes=None):
    labels = np.asarray(labels)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return ImpostorSet(np.asarray(points, dtype=float), labels, n_classes)


class TestKernelWeight:
    def test_zero_distance_is_one(self):
        params = KernelParams(0.37)
        y = np.array([1.5, -2.0, 3.0])
        assert kernel_weight(y, y.copy(), params) == 1.0

    def test_distance_two_sigma_squared(self):
        # ||y-c||^2 = 2 sigma^2 gives exactly exp(-1)
        sigma = 1.7
        y = np.zeros(2)
        c = np.array([sigma * np.sqrt(2.0), 0.0])
        w = kernel_weight(y, c, KernelParams(sigma))
        assert w == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_three_four_five_triangle(self):
        # frozen from a 40-digit evaluation of exp(-25/2)
        w = kernel_weight(np.zeros(2), np.array([3.0, 4.0]), KernelParams(1.0))
        assert w == pytest.approx(3.726653172078671e-06, rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            kernel_weight(np.zeros(2), np.zeros(3), KernelParams(1.0))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            kernel_weight(np.array([np.nan]), np.zeros(1), KernelParams(1.0))

    def test_bad_sigma_rejected(self):
        for sigma in (0.0, -1.0, np.inf, np.nan):
            with pytest.raises(ValueError):
                KernelParams(sigma)


class TestClassify:
    def test_single_impostor_is_certain(self):
        imp = make_set([[3.0, 1.0]], [0], n_classes=1)
        dist = classify(np.zeros(2), imp, KernelParams(2.0))
        assert dist.tolist() == [1.0]

    def test_equidistant_pair_splits_evenly(self):
        imp = make_set([[-1.0], [1.0]], [0, 1])
        dist = classify(np.zeros(1), imp, KernelParams(0.8))
        np.testing.assert_allclose(dist, [0.5, 0.5], atol=1e-15)

    def test_three_impostor_frozen_values(self):
        # frozen from the longdouble brute-force evaluation of the rule
        imp = make_set([[-1.0], [1.0], [2.0]], [0, 0, 1])
        dist = classify(np.zeros(1), imp, KernelParams(1.0))
        np.testing.assert_allclose(
            dist, [0.8996324353165483, 0.10036756468345168], rtol=1e-12)
        assert predict_label(dist) == 0

    def test_exclusion_removes_a_vote(self):
        imp = make_set([[0.0], [1.0], [2.0]], [0, 1, 1])
        dist = classify(np.zeros(1), imp, KernelParams(1.0), exclude=0)
        oracle = helpers.brute_force_distribution(
            [0.0], imp.points, imp.labels, 2, 1.0, exclude=0)
        np.testing.assert_allclose(dist, oracle, atol=1e-12)

    def test_exclude_out_of_range(self):
        imp = make_set([[0.0], [1.0]], [0, 1])
        with pytest.raises(ValueError):
            classify(np.zeros(1), imp, KernelParams(1.0), exclude=5)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            ImpostorSet(np.zeros((0, 2)), np.zeros(0, dtype=int), 1)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            make_set([[0.0]], [3], n_classes=2)


class TestPredictLabel:
    def test_argmax(self):
        assert predict_label(np.array([0.2, 0.7, 0.1])) == 1

    def test_tie_breaks_to_smallest_id(self):
        assert predict_label(np.array([0.5, 0.5])) == 0

    def test_invalid_distribution_rejected(self):
        with pytest.raises(ValueError):
            predict_label(np.array([0.9, 0.9]))
        with pytest.raises(ValueError):
            predict_label(np.array([np.nan, 1.0]))


class TestInvariants:
    def random_case(self, rng):
        m = rng.integers(2, 51)
        d = rng.integers(1, 9)
        n_classes = int(rng.integers(2, 6))
        points = rng.normal(0, 1, (m, d))
        labels = rng.integers(0, n_classes, m)
        y = rng.normal(0, 1, d)
        sigma = float(rng.uniform(0.2, 3.0))
        return y, make_set(points, labels, n_classes), KernelParams(sigma)

    def test_normalization(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            y, imp, params = self.random_case(rng)
            assert abs(classify(y, imp, params).sum() - 1.0) < 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            y, imp, params = self.random_case(rng)
            perm = rng.permutation(imp.count)
            shuffled = ImpostorSet(imp.points[perm], imp.labels[perm],
                                   imp.n_classes)
            np.testing.assert_allclose(classify(y, imp, params),
                                       classify(y, shuffled, params),
                                       atol=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            y, imp, params = self.random_case(rng)
            t = rng.normal(0, 5, imp.dim)
            moved = ImpostorSet(imp.points + t, imp.labels, imp.n_classes)
            np.testing.assert_allclose(classify(y, imp, params),
                                       classify(y + t, moved, params),
                                       atol=1e-9)

    def test_scale_bandwidth_equivalence(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            y, imp, params = self.random_case(rng)
            s = float(rng.uniform(0.1, 10.0))
            scaled = ImpostorSet(imp.points * s, imp.labels, imp.n_classes)
            np.testing.assert_allclose(
                classify(y, imp, params),
                classify(y * s, scaled, KernelParams(params.sigma * s)),
                atol=1e-9)

    def test_underflow_robustness(self):
        # distances of order 1 with a 1e-6 bandwidth: all raw weights
        # underflow, yet the result is the nearest point's class, exactly
        rng = np.random.default_rng(15)
        points = rng.normal(0, 1, (20, 4))
        labels = rng.integers(0, 3, 20)
        imp = make_set(points, labels, n_classes=3)
        for _ in range(10):
            y = rng.normal(0, 1, 4)
            dist = classify(y, imp, KernelParams(1e-6))
            assert np.isfinite(dist).all()
            nearest = int(((points - y) ** 2).sum(axis=1).argmin())
            expected = np.zeros(3)
            expected[labels[nearest]] = 1.0
            np.testing.assert_allclose(dist, expected, atol=1e-9)

    def test_oracle_equivalence_100_random_instances(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            y, imp, params = self.random_case(rng)
            got = classify(y, imp, params)
            want = helpers.brute_force_distribution(
                y, imp.points, imp.labels, imp.n_classes, params.sigma)
            np.testing.assert_allclose(got, want, atol=1e-6)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(17)
        y, imp, params = self.random_case(rng)
        queries = rng.normal(0, 1, (5, imp.dim))
        batch = classify_batch(queries, imp, params)
        for i in range(5):
            np.testing.assert_allclose(batch[i],
                                       classify(queries[i], imp, params),
                                       atol=1e-12)
