import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moee.errors import ConfigError, DegenerateInputError, ShapeError
from moee.metrics import rankdata
from moee.simkit import (
    SimilaritySpec,
    cosine,
    moee_sum_similarity,
    pair_score,
    similarity_matrix,
)


class TestSimilaritySpec:
    def test_alpha_required_for_weighted_sum(self):
        with pytest.raises(ConfigError):
            SimilaritySpec("weighted_sum")

    def test_alpha_forbidden_elsewhere(self):
        with pytest.raises(ConfigError):
            SimilaritySpec("hs_only", alpha=1.0)


class TestCosine:
    def test_self(self):
        v = np.array([1.0, 2.0, -3.0])
        assert cosine(v, v) == 1.0

    def test_orthogonal(self):
        assert cosine([1, 0], [0, 1]) == 0.0

    def test_hand_arithmetic(self):
        assert abs(cosine([1, 0], [1, 1]) - np.sqrt(2) / 2) < 1e-8

    def test_zero_norm(self):
        with pytest.raises(DegenerateInputError):
            cosine([0, 0], [1, 0])

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            cosine([1, 0], [1, 0, 0])


class TestMoeeSumSimilarity:
    def test_alpha_zero_reduces_to_hs(self):
        rng = np.random.default_rng(0)
        hs = (rng.normal(size=4), rng.normal(size=4))
        rw = (rng.normal(size=6), rng.normal(size=6))
        assert moee_sum_similarity(hs, rw, 0.0) == cosine(*hs)

    def test_direct_formula(self):
        # cos_HS = 0.5, cos_RW = 0.3
        hs = (np.array([1.0, 0.0]), np.array([0.5, np.sqrt(0.75)]))
        rw = (np.array([1.0, 0.0]), np.array([0.3, np.sqrt(0.91)]))
        assert abs(moee_sum_similarity(hs, rw, 1.0) - 0.8) < 1e-12

    def test_matches_compositional_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            hs = (rng.normal(size=5), rng.normal(size=5))
            rw = (rng.normal(size=7), rng.normal(size=7))
            want = cosine(*hs) + 0.7 * cosine(*rw)
            assert abs(moee_sum_similarity(hs, rw, 0.7) - want) < 1e-12


class TestSimilarityMatrix:
    def test_single_embedding(self):
        m = similarity_matrix([np.array([1.0, 2.0])], SimilaritySpec("hs_only"))
        np.testing.assert_allclose(m, [[1.0]])

    def test_weighted_sum_diagonal(self):
        rng = np.random.default_rng(2)
        embs = [(rng.normal(size=3), rng.normal(size=4)) for _ in range(3)]
        m = similarity_matrix(embs, SimilaritySpec("weighted_sum", alpha=0.5))
        np.testing.assert_allclose(np.diag(m), 1.5, atol=1e-6)
        np.testing.assert_allclose(m, m.T)

    def test_duplicated_embeddings(self):
        v = np.array([1.0, 1.0])
        m = similarity_matrix([v, v.copy(), v.copy()], SimilaritySpec("concat_cosine"))
        np.testing.assert_allclose(m, 1.0, atol=1e-12)

    def test_matches_pairwise_loop_oracle(self):
        rng = np.random.default_rng(3)
        embs = [rng.normal(size=6) for _ in range(5)]
        m = similarity_matrix(embs, SimilaritySpec("hs_only"))
        for i in range(5):
            for j in range(5):
                assert m[i, j] == pytest.approx(cosine(embs[i], embs[j]), abs=1e-12)


class TestRankInvariances:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=0.01, max_value=100.0))
    def test_hs_scaling_preserves_ranking(self, c):
        rng = np.random.default_rng(4)
        pairs = [
            ((rng.normal(size=4), rng.normal(size=4)),
             (rng.normal(size=5), rng.normal(size=5)))
            for _ in range(8)
        ]
        base = [moee_sum_similarity(hs, rw, 0.7) for hs, rw in pairs]
        scaled = [
            moee_sum_similarity((hs[0] * c, hs[1] * c), rw, 0.7) for hs, rw in pairs
        ]
        assert np.array_equal(np.argsort(base, kind="stable"),
                              np.argsort(scaled, kind="stable"))

    def test_alpha_zero_matches_hs_only_ranking(self):
        rng = np.random.default_rng(5)
        hs_vecs = [rng.normal(size=4) for _ in range(6)]
        rw_vecs = [rng.normal(size=5) for _ in range(6)]
        sum_scores = []
        hs_scores = []
        for i in range(6):
            for j in range(i + 1, 6):
                sum_scores.append(
                    moee_sum_similarity(
                        (hs_vecs[i], hs_vecs[j]), (rw_vecs[i], rw_vecs[j]), 0.0
                    )
                )
                hs_scores.append(cosine(hs_vecs[i], hs_vecs[j]))
        np.testing.assert_array_equal(rankdata(sum_scores), rankdata(hs_scores))
