import math

import numpy as np
import pytest

from crossbag.attention import (
    AttentionTrace,
    RelationAttentionParams,
    alpha,
    attention_backward,
    bag_feature,
    beta,
    gamma,
    similarity,
    superbag_feature,
)
from crossbag.numeric import SeededRng, cosine, grad_check, softmax

SOFTMAX_09_01 = [1.0 / (1.0 + math.exp(-0.8)), 1.0 - 1.0 / (1.0 + math.exp(-0.8))]
SOFTMAX_08_02 = [1.0 / (1.0 + math.exp(-0.6)), 1.0 - 1.0 / (1.0 + math.exp(-0.6))]


def bayes_posterior(alpha_mat, k):
    """Explicit Bayes rule with a uniform sentence prior: the oracle that
    beta() must reproduce."""
    n_b = alpha_mat.shape[0]
    prior = np.full(n_b, 1.0 / n_b)
    joint = alpha_mat[:, k] * prior
    return joint / joint.sum()


def random_instance(seed, n_bags=2, n_sentences=3, n_relations=4, dim=6):
    rng = np.random.default_rng(seed)
    X_bags = [rng.normal(size=(n_sentences, dim)) for _ in range(n_bags)]
    R = rng.normal(size=(n_relations, dim))
    return X_bags, R


class TestSimilarity:
    def test_self_similarity_is_one(self):
        v = np.array([[0.3, -0.7, 2.0]])
        S = similarity(v, v, "cosine")
        assert S[0, 0] == pytest.approx(1.0)

    def test_scale_laws(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(2, 5))
        R = rng.normal(size=(3, 5))
        S_cos = similarity(X, R, "cosine")
        S_dot = similarity(X, R, "dot")
        X5 = X.copy()
        X5[0] *= 5.0
        np.testing.assert_allclose(similarity(X5, R, "cosine")[0], S_cos[0], atol=1e-12)
        np.testing.assert_allclose(similarity(X5, R, "dot")[0], 5.0 * S_dot[0], atol=1e-12)

    def test_matches_per_entry_cosine_oracle(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(2, 4))
        R = rng.normal(size=(2, 4))
        S = similarity(X, R, "cosine")
        for j in range(2):
            for k in range(2):
                assert S[j, k] == pytest.approx(cosine(X[j], R[k]), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            similarity(np.ones((2, 3)), np.ones((2, 4)), "cosine")

    def test_zero_row_convention(self):
        X = np.vstack([np.zeros(3), np.ones(3)])
        R = np.ones((2, 3))
        S = similarity(X, R, "cosine")
        np.testing.assert_array_equal(S[0], 0.0)


class TestAlpha:
    def test_frozen_softmax_value(self):
        a = alpha(np.array([[0.9, 0.1]]))
        np.testing.assert_allclose(a[0], SOFTMAX_09_01, atol=1e-12)
        np.testing.assert_allclose(a[0], [0.68997, 0.31003], atol=1e-4)

    def test_constant_row_is_uniform(self):
        a = alpha(np.full((3, 5), 0.7))
        np.testing.assert_allclose(a, 0.2, atol=1e-12)

    def test_single_relation_degenerates(self):
        a = alpha(np.array([[0.3], [2.0]]))
        np.testing.assert_allclose(a, 1.0)


class TestBeta:
    def test_frozen_normalization(self):
        mat = np.array([[0.68997, 0.31003], [0.42556, 0.57444]])
        w = beta(mat, 0)
        np.testing.assert_allclose(w, [0.61852, 0.38148], atol=1e-4)
        np.testing.assert_allclose(w, bayes_posterior(mat, 0), atol=1e-12)

    def test_single_sentence(self):
        np.testing.assert_allclose(beta(np.array([[0.4, 0.6]]), 1), [1.0])

    def test_identical_sentences_split_evenly(self):
        S = similarity(np.ones((2, 4)), np.random.default_rng(0).normal(size=(3, 4)), "cosine")
        w = beta(alpha(S), 2)
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)

    def test_bayes_oracle_equivalence_random(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n_b, n_r = rng.integers(1, 8), rng.integers(2, 10)
            a = alpha(rng.normal(size=(n_b, n_r)))
            k = int(rng.integers(0, n_r))
            np.testing.assert_allclose(beta(a, k), bayes_posterior(a, k), atol=1e-12)


class TestBagFeature:
    def test_one_hot_selects(self):
        X = np.arange(12, dtype=float).reshape(3, 4)
        np.testing.assert_array_equal(bag_feature(X, np.array([0., 0., 1.])), X[2])

    def test_identical_sentences(self):
        X = np.tile(np.array([1.0, -2.0]), (4, 1))
        np.testing.assert_allclose(bag_feature(X, np.full(4, 0.25)), [1.0, -2.0])

    def test_weighted_sum_oracle(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        w = np.array([0.61852, 0.38148])
        b = bag_feature(X, w)
        np.testing.assert_allclose(b, [0.61852 * 1 + 0.38148 * 0, 0.38148], atol=1e-12)


class TestGamma:
    def test_frozen_softmax(self):
        # scores 0.8 and 0.2 via orthogonal unit bag features against a
        # relation vector built to produce those cosines is fiddly; check
        # the softmax stage directly against its oracle instead.
        np.testing.assert_allclose(softmax(np.array([0.8, 0.2])), SOFTMAX_08_02, atol=1e-12)
        np.testing.assert_allclose(SOFTMAX_08_02, [0.64566, 0.35434], atol=1e-4)

    def test_single_bag(self):
        g = gamma(np.ones((1, 3)), np.ones(3), "cosine")
        np.testing.assert_allclose(g, [1.0])

    def test_identical_bags_split_evenly(self):
        B = np.tile(np.array([0.5, 1.0, -1.0]), (2, 1))
        g = gamma(B, np.array([1.0, 0.2, 0.1]), "cosine")
        np.testing.assert_allclose(g, [0.5, 0.5], atol=1e-12)


class TestSuperbagFeature:
    def test_single_sentence_single_bag_all_modes(self):
        x = np.array([0.3, -0.5, 0.9])
        R = np.random.default_rng(3).normal(size=(4, 3))
        for mode in ("ATT", "CRSA", "C2SA"):
            f, trace = superbag_feature([x[None, :]], R, 1, mode, "cosine")
            np.testing.assert_allclose(f, x, atol=1e-12)
            np.testing.assert_allclose(trace.gamma_, [1.0])

    def test_mismatched_bag_gets_below_uniform_gamma(self):
        # bag 0 matches the label relation, bag 1 matches a competitor
        R = np.array([[1.0, 0.0], [0.0, 1.0]])
        good = np.array([[1.0, 0.05], [0.9, 0.1]])
        noisy = np.array([[0.05, 1.0], [0.02, 0.8]])
        f, trace = superbag_feature([good, noisy], R, 0, "C2SA", "cosine")
        assert trace.gamma_[1] < 0.5 < trace.gamma_[0]

    def test_att_vs_crsa_weighting_differs(self):
        # one clean sentence for the label, one leaning to a competitor:
        # the cross-relation step shifts weight toward the clean sentence
        R = np.array([[1.0, 0.0], [0.0, 1.0]])
        X = np.array([[1.0, 0.0], [0.8, 0.9]])
        _, att = superbag_feature([X], R, 0, "ATT")
        _, crsa = superbag_feature([X], R, 0, "CRSA", "cosine")
        assert crsa.beta[0][0] > att.beta[0][0]
        assert att.beta[0][0] > 0.5  # both still prefer the clean sentence

    def test_att_and_crsa_reject_multi_bag_superbags(self):
        X_bags, R = random_instance(4)
        for mode in ("ATT", "CRSA"):
            with pytest.raises(ValueError):
                superbag_feature(X_bags, R, 0, mode)

    def test_empty_superbag_and_empty_bag_rejected(self):
        R = np.ones((2, 3))
        with pytest.raises(ValueError):
            superbag_feature([], R, 0, "C2SA")
        with pytest.raises(ValueError):
            superbag_feature([np.ones((0, 3))], R, 0, "C2SA")

    def test_c2sa_with_one_bag_equals_crsa(self):
        X_bags, R = random_instance(5, n_bags=1)
        f1, _ = superbag_feature(X_bags, R, 1, "C2SA", "cosine")
        f2, _ = superbag_feature(X_bags, R, 1, "CRSA", "cosine")
        np.testing.assert_allclose(f1, f2, atol=1e-12)

    def test_normalization_invariants(self):
        rng = np.random.default_rng(6)
        for seed in range(20):
            X_bags, R = random_instance(seed, n_bags=3, n_sentences=4)
            k = int(rng.integers(0, R.shape[0]))
            _, trace = superbag_feature(X_bags, R, k, "C2SA", "cosine")
            for a in trace.alpha:
                np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-10)
            for w in trace.beta:
                assert abs(w.sum() - 1.0) <= 1e-10
            assert abs(trace.gamma_.sum() - 1.0) <= 1e-10

    def test_convexity_of_superbag_feature(self):
        X_bags, R = random_instance(7, n_bags=3, n_sentences=2)
        f, trace = superbag_feature(X_bags, R, 2, "C2SA", "cosine")
        total = np.zeros_like(f)
        weight_sum = 0.0
        for g, w, X in zip(trace.gamma_, trace.beta, trace.X):
            for wj, xj in zip(w, X):
                coeff = g * wj
                assert coeff >= 0.0
                weight_sum += coeff
                total += coeff * xj
        assert weight_sum == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(total, f, atol=1e-10)


class TestScaleInvariance:
    def test_cosine_per_sentence_scaling_leaves_alpha_beta(self):
        for c in (0.1, 10.0):
            X_bags, R = random_instance(8, n_bags=2, n_sentences=3)
            _, base = superbag_feature(X_bags, R, 1, "C2SA", "cosine")
            scaled = [X.copy() for X in X_bags]
            scaled[0][1] *= c
            _, after = superbag_feature(scaled, R, 1, "C2SA", "cosine")
            for i in range(2):
                np.testing.assert_allclose(after.alpha[i], base.alpha[i], atol=1e-10)
                np.testing.assert_allclose(after.beta[i], base.beta[i], atol=1e-10)

    def test_cosine_whole_bag_scaling_leaves_gamma_too(self):
        for c in (0.1, 10.0):
            X_bags, R = random_instance(9, n_bags=3, n_sentences=3)
            _, base = superbag_feature(X_bags, R, 1, "C2SA", "cosine")
            scaled = [X.copy() for X in X_bags]
            scaled[1] *= c
            _, after = superbag_feature(scaled, R, 1, "C2SA", "cosine")
            np.testing.assert_allclose(after.gamma_, base.gamma_, atol=1e-10)

    def test_dot_scoring_is_scale_sensitive(self):
        X_bags, R = random_instance(10, n_bags=2, n_sentences=3)
        _, base = superbag_feature(X_bags, R, 1, "C2SA", "dot")
        scaled = [X.copy() for X in X_bags]
        scaled[0][1] *= 10.0
        _, after = superbag_feature(scaled, R, 1, "C2SA", "dot")
        deltas = [np.abs(after.beta[0] - base.beta[0]).max(),
                  np.abs(after.gamma_ - base.gamma_).max()]
        assert max(deltas) > 1e-3


class TestCrossRelationEffect:
    def test_raising_competitor_similarity_lowers_beta(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            S = rng.normal(size=(4, 5))
            k, j = 1, 2
            k_prime = 3
            a0 = alpha(S)
            b0 = beta(a0, k)
            S2 = S.copy()
            S2[j, k_prime] += 0.5
            a2 = alpha(S2)
            b2 = beta(a2, k)
            assert a2[j, k] < a0[j, k]
            assert b2[j] < b0[j]


def flatten_bags(X_bags):
    return {f"x{i}": X for i, X in enumerate(X_bags)}


class TestAttentionBackward:
    def test_zero_upstream(self):
        X_bags, R = random_instance(12)
        _, trace = superbag_feature(X_bags, R, 0, "C2SA", "cosine")
        dX, dR = attention_backward(trace, np.zeros(X_bags[0].shape[1]))
        assert not dR.any()
        assert not any(d.any() for d in dX)

    @pytest.mark.parametrize("scoring", ["cosine", "dot"])
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences_on_sentence_features(self, scoring, seed):
        X_bags, R = random_instance(100 + seed, n_bags=2, n_sentences=3)
        w = np.random.default_rng(200 + seed).normal(size=X_bags[0].shape[1])
        k = seed % R.shape[0]

        def loss_fn(pdict):
            bags = [pdict[f"x{i}"] for i in range(len(X_bags))]
            f, _ = superbag_feature(bags, R, k, "C2SA", scoring)
            return float(np.dot(w, f))

        f, trace = superbag_feature(X_bags, R, k, "C2SA", scoring)
        dX, _ = attention_backward(trace, w)
        report = grad_check(loss_fn, flatten_bags(X_bags),
                            {f"x{i}": d for i, d in enumerate(dX)},
                            eps=1e-5, tol=1e-4, rng=SeededRng(seed))
        assert report.passed, str(report)

    @pytest.mark.parametrize("scoring", ["cosine", "dot"])
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences_on_relation_vectors(self, scoring, seed):
        X_bags, R = random_instance(300 + seed, n_bags=3, n_sentences=2)
        w = np.random.default_rng(400 + seed).normal(size=X_bags[0].shape[1])
        k = seed % R.shape[0]

        def loss_fn(pdict):
            f, _ = superbag_feature(X_bags, pdict["R"], k, "C2SA", scoring)
            return float(np.dot(w, f))

        f, trace = superbag_feature(X_bags, R, k, "C2SA", scoring)
        _, dR = attention_backward(trace, w)
        report = grad_check(loss_fn, {"R": R}, {"R": dR},
                            eps=1e-5, tol=1e-4, rng=SeededRng(seed))
        assert report.passed, str(report)

    @pytest.mark.parametrize("mode", ["ATT", "CRSA"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences_single_bag_modes(self, mode, seed):
        X_bags, R = random_instance(500 + seed, n_bags=1, n_sentences=4)
        w = np.random.default_rng(600 + seed).normal(size=X_bags[0].shape[1])
        k = seed % R.shape[0]

        def loss_fn(pdict):
            f, _ = superbag_feature([pdict["x0"]], pdict["R"], k, mode, "cosine")
            return float(np.dot(w, f))

        f, trace = superbag_feature(X_bags, R, k, mode, "cosine")
        dX, dR = attention_backward(trace, w)
        report = grad_check(loss_fn, {"x0": X_bags[0], "R": R},
                            {"x0": dX[0], "R": dR},
                            eps=1e-5, tol=1e-4, rng=SeededRng(seed))
        assert report.passed, str(report)

    def test_att_only_touches_label_relation_vector(self):
        X_bags, R = random_instance(13, n_bags=1)
        _, trace = superbag_feature(X_bags, R, 2, "ATT")
        _, dR = attention_backward(trace, np.ones(R.shape[1]))
        assert dR[2].any()
        for k in (0, 1, 3):
            assert not dR[k].any()

    def test_crsa_touches_all_relation_vectors(self):
        X_bags, R = random_instance(14, n_bags=1)
        _, trace = superbag_feature(X_bags, R, 2, "CRSA", "cosine")
        _, dR = attention_backward(trace, np.ones(R.shape[1]))
        assert all(dR[k].any() for k in range(R.shape[0]))


class TestRelationAttentionParams:
    def test_no_zero_rows(self):
        params = RelationAttentionParams.initialize(5, 12, SeededRng(0))
        assert all(np.linalg.norm(r) > 0 for r in params.R)
        assert params.R.shape == (5, 12)


class TestArgumentValidation:
    def test_unknown_scoring_rejected(self):
        X_bags, R = random_instance(50)
        with pytest.raises(ValueError, match="scoring"):
            similarity(X_bags[0], R, "euclidean")
        with pytest.raises(ValueError, match="scoring"):
            superbag_feature(X_bags, R, 0, "C2SA", "euclidean")

    def test_unknown_mode_rejected(self):
        X_bags, R = random_instance(51)
        with pytest.raises(ValueError, match="mode"):
            superbag_feature(X_bags, R, 0, "MEGA", "cosine")
