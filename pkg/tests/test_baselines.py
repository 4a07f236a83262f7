import numpy as np
import pytest

from subspace_shot.baselines import (
    PrototypeSet,
    fit_prototypes,
    predict_cosine,
    predict_euclidean,
)
from subspace_shot.decomposition import EpisodeMatrices


def _episode(embeddings, n_classes, k_shot=1):
    embeddings = np.asarray(embeddings, dtype=float)
    n_support = n_classes * k_shot
    return EpisodeMatrices(
        embeddings=embeddings,
        n_classes=n_classes,
        n_support=n_support,
        n_query=embeddings.shape[1] - n_support,
        support_labels=np.repeat(np.arange(n_classes), k_shot),
    )


class TestFitPrototypes:
    def test_one_shot_prototypes_are_the_supports(self):
        emb = np.random.default_rng(0).uniform(0, 1, (5, 3))
        ep = _episode(emb, 3)
        ps = fit_prototypes(ep)
        assert np.array_equal(ps.prototypes, emb)

    def test_class_mean(self):
        emb = np.array([[2.0, 0.0], [0.0, 2.0]])
        ep = _episode(emb, 1, k_shot=2)
        assert np.array_equal(fit_prototypes(ep).prototypes[:, 0], [1.0, 1.0])

    def test_column_count_matches_classes(self):
        emb = np.random.default_rng(1).uniform(0, 1, (4, 8))
        ep = _episode(emb, 4, k_shot=2)
        assert fit_prototypes(ep).prototypes.shape == (4, 4)


class TestEuclidean:
    def test_query_equal_to_prototype(self):
        protos = np.eye(5)[:, :4]
        ps = PrototypeSet(protos)
        assert predict_euclidean(ps, protos[:, [3]])[0] == 3

    def test_equidistant_tie_breaks_low(self):
        ps = PrototypeSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
        query = np.array([[0.5], [0.5]])
        assert predict_euclidean(ps, query)[0] == 0

    def test_matches_brute_force_table(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            ps = PrototypeSet(rng.uniform(0, 1, (6, 3)))
            queries = rng.uniform(0, 1, (6, 7))
            preds = predict_euclidean(ps, queries)
            for u in range(7):
                dists = [
                    float(((queries[:, u] - ps.prototypes[:, c]) ** 2).sum())
                    for c in range(3)
                ]
                assert preds[u] == int(np.argmin(dists))

    def test_dimension_mismatch_rejected(self):
        ps = PrototypeSet(np.ones((4, 2)))
        with pytest.raises(ValueError, match="dimension"):
            predict_euclidean(ps, np.ones((3, 1)))


class TestCosine:
    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        ps = PrototypeSet(rng.uniform(0.1, 1, (5, 3)))
        query = 5.0 * ps.prototypes[:, [1]]
        assert predict_cosine(ps, query)[0] == 1
        queries = rng.uniform(0.1, 1, (5, 9))
        scaled = queries * rng.uniform(0.5, 10, 9)
        assert np.array_equal(predict_cosine(ps, queries), predict_cosine(ps, scaled))

    def test_orthogonal_prototypes(self):
        ps = PrototypeSet(np.eye(4)[:, :3])
        query = np.array([[0.0], [0.0], [2.0], [0.0]])
        assert predict_cosine(ps, query)[0] == 2

    def test_matches_normalized_dot_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            ps = PrototypeSet(rng.uniform(0.1, 1, (5, 4)))
            queries = rng.uniform(0.1, 1, (5, 6))
            preds = predict_cosine(ps, queries)
            for u in range(6):
                sims = [
                    float(
                        (queries[:, u] @ ps.prototypes[:, c])
                        / (np.linalg.norm(queries[:, u]) * np.linalg.norm(ps.prototypes[:, c]))
                    )
                    for c in range(4)
                ]
                assert preds[u] == int(np.argmax(sims))

    def test_zero_norm_prototype_rejected(self):
        ps = PrototypeSet(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="zero norm"):
            predict_cosine(ps, np.ones((2, 1)))

    def test_zero_norm_query_gets_class_zero(self):
        ps = PrototypeSet(np.array([[0.0, 1.0], [1.0, 0.0]]))
        queries = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.array_equal(predict_cosine(ps, queries), [0, 1])


def test_predictions_are_permutation_equivariant_and_deterministic():
    rng = np.random.default_rng(5)
    ps = PrototypeSet(rng.uniform(0.1, 1, (6, 4)))
    queries = rng.uniform(0, 1, (6, 10))
    perm = rng.permutation(10)
    for predict in (predict_euclidean, predict_cosine):
        base = predict(ps, queries)
        assert np.array_equal(predict(ps, queries), base)
        assert np.array_equal(predict(ps, queries[:, perm]), base[perm])
