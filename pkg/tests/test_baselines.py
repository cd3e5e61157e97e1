import numpy as np
import pytest

from labelsr import baselines
from labelsr.baselines import NotTrainableError, fit_gnb, fit_lda, fit_mlp, fit_rf, fit_svm
from labelsr.baselines.mlp import init_params, loss_and_grads
from labelsr.baselines.svm import rbf_kernel


def two_gaussians(n=200, sep=6.0, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2, int), np.ones(n - n // 2, int)]
    x = rng.normal(size=(n, d))
    x[y == 1, 0] += sep
    return x, y


def xor_set(n=200, seed=0):
    rng = np.random.default_rng(seed)
    centres = np.array([[0, 0], [4, 4], [0, 4], [4, 0]], float)
    k = rng.integers(0, 4, n)
    return centres[k] + rng.normal(0, 0.4, (n, 2)), (k >= 2).astype(int)


def accuracy(clf, x, y):
    return np.mean((clf.predict_proba(x) >= 0.5) == y)


@pytest.mark.parametrize("kind", baselines.KINDS)
def test_toy_accuracy(kind):
    x, y = two_gaussians()
    clf = baselines.fit(kind, x, y, seed=1)
    assert accuracy(clf, x, y) >= 0.95
    assert clf.kind == kind and clf.d == 2


@pytest.mark.parametrize("kind", baselines.KINDS)
def test_probability_range_and_dimension_check(kind):
    x, y = two_gaussians(seed=2)
    clf = baselines.fit(kind, x, y, seed=0)
    series = baselines.predict_proba(clf, np.random.default_rng(0).normal(0, 5, (50, 2)))
    assert np.all((series.probs >= 0) & (series.probs <= 1))
    with pytest.raises(ValueError):
        clf.predict_proba(np.zeros((3, 3)))


@pytest.mark.parametrize("kind", ["LDA", "GNB", "SVM", "MLP"])
def test_single_class_refused(kind):
    with pytest.raises(NotTrainableError):
        baselines.fit(kind, np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10))


def test_unknown_kind():
    with pytest.raises(ValueError):
        baselines.fit("KNN", np.zeros((2, 1)), [0, 1])


class TestLda:
    def test_separated_clusters(self):
        x, y = two_gaussians(sep=10.0)
        assert accuracy(fit_lda(x, y), x, y) == 1.0

    def test_midpoint(self):
        x = np.array([[-1.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        clf = fit_lda(x, [0, 0, 1, 1])
        assert clf.predict_proba([[0.0, 0.5]])[0] == pytest.approx(0.5, abs=1e-12)

    def test_duplication_invariant(self):
        x, y = two_gaussians(seed=3)
        a = fit_lda(x, y).predict_proba(x)
        b = fit_lda(np.r_[x, x], np.r_[y, y]).predict_proba(x)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


class TestGnb:
    def test_symmetric(self):
        clf = fit_gnb(np.array([[-2.0], [0.0], [0.0], [2.0]]), [0, 0, 1, 1])
        assert clf.predict_proba([[0.0]])[0] == pytest.approx(0.5, abs=1e-12)

    def test_constant_feature_cancels(self):
        x, y = two_gaussians(seed=4, d=1)
        with_const = np.c_[x, np.full(len(x), 3.0)]
        a = fit_gnb(x, y).predict_proba(x)
        b = fit_gnb(with_const, y).predict_proba(with_const)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


class TestSvm:
    def test_separable_c10(self):
        x, y = two_gaussians(seed=5)
        clf = fit_svm(x, y, C=10.0)
        assert accuracy(clf, x, y) == 1.0
        assert clf.converged

    def test_positive_support_vector(self):
        x, y = two_gaussians(seed=6, sep=3.0)
        clf = fit_svm(x, y)
        pos = clf.support[clf.coef > 0]
        assert len(pos) and np.all(clf.predict_proba(pos[:1]) > 0.5)

    def test_objective_non_decreasing(self):
        x, y = two_gaussians(seed=7, sep=2.0)
        clf = fit_svm(x, y, track_objective=True)
        obj = np.array(clf.objective)
        assert len(obj) > 10
        assert np.all(np.diff(obj) >= -1e-9)

    def test_tiny_gamma_majority(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(100, 2))
        y = (rng.random(100) < 0.2).astype(int)
        x[y == 1] += 1.0
        clf = fit_svm(x, y, gamma=1e-8)
        q = rng.normal(0, 3, (50, 2))
        assert np.all(clf.predict_proba(q) < 0.5)

    def test_kkt_at_convergence(self):
        x, y = two_gaussians(seed=9, sep=2.0)
        ys = np.where(y == 1, 1.0, -1.0)
        clf = fit_svm(x, y, C=1.0)
        k = rbf_kernel(x, x, clf.gamma)
        alpha = np.zeros(len(y))
        idx = [int(np.flatnonzero((x == s).all(axis=1))[0]) for s in clf.support]
        alpha[idx] = np.abs(clf.coef)
        grad = k @ (alpha * ys) * ys - 1
        score = -ys * grad
        up = ((alpha < 1) & (ys > 0)) | ((alpha > 0) & (ys < 0))
        low = ((alpha < 1) & (ys < 0)) | ((alpha > 0) & (ys > 0))
        assert score[up].max() - score[low].min() < 1e-3 + 1e-9


class TestRf:
    def test_xor(self):
        x, y = xor_set()
        assert accuracy(fit_rf(x, y, n_trees=30, seed=0), x, y) >= 0.95

    def test_pure_class(self):
        x = np.random.default_rng(0).normal(size=(20, 3))
        clf = fit_rf(x, np.ones(20), n_trees=5)
        np.testing.assert_array_equal(clf.predict_proba(x), 1.0)

    def test_single_tree_pure_leaves(self):
        x, y = xor_set(seed=1)
        tree = fit_rf(x, y, n_trees=1).trees[0]
        leaf = tree.apply(x)
        pure = np.array([len(set(y[leaf == k])) == 1 for k in leaf])
        assert pure.mean() > 0.9
        assert np.all(np.isin(tree.predict_proba(x[pure]), [0.0, 1.0]))

    def test_mean_of_trees_oracle(self):
        x, y = two_gaussians(seed=10, sep=1.5)
        clf = fit_rf(x, y, n_trees=7, seed=3)
        q = np.random.default_rng(1).normal(size=(40, 2))
        per_tree = []
        for tree in clf.trees:
            row = []
            for point in q:
                node = 0
                while tree.feature[node] != -1:
                    f = tree.feature[node]
                    node = tree.left[node] if point[f] <= tree.threshold[node] else tree.right[node]
                row.append(tree.value[node])
            per_tree.append(row)
        np.testing.assert_allclose(clf.predict_proba(q), np.mean(per_tree, axis=0), rtol=0, atol=1e-15)

    def test_min_leaf(self):
        x, y = two_gaussians(seed=11, sep=0.5)
        tree = fit_rf(x, y, n_trees=1, seed=0).trees[0]
        rng = np.random.default_rng(np.random.SeedSequence(0).spawn(1)[0])
        rows = rng.integers(0, len(x), len(x))
        leaf_sizes = np.bincount(tree.apply(x[rows]), minlength=tree.n_nodes)[tree.feature == -1]
        assert leaf_sizes.min() >= 2

    def test_deterministic(self):
        x, y = two_gaussians(seed=12, sep=1.0)
        a = fit_rf(x, y, n_trees=10, seed=5).predict_proba(x)
        b = fit_rf(x, y, n_trees=10, seed=5).predict_proba(x)
        np.testing.assert_array_equal(a, b)


class TestMlp:
    def test_gradient_check(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 4))
        y = rng.integers(0, 2, 10)
        params = init_params(rng, 4, 8)
        params[1] += rng.normal(0, 0.1, 8)
        _, grads = loss_and_grads(params, x, y)
        eps = 1e-5
        for p, g in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + eps
                lp = loss_and_grads(params, x, y)[0]
                p[idx] = old - eps
                lm = loss_and_grads(params, x, y)[0]
                p[idx] = old
                num[idx] = (lp - lm) / (2 * eps)
            rel = np.linalg.norm(num - g) / max(np.linalg.norm(num) + np.linalg.norm(g), 1e-12)
            assert rel < 1e-4

    def test_probabilities_sum_to_one(self):
        x, y = two_gaussians(seed=13)
        clf = fit_mlp(x, y, epochs=5)
        pc = clf.predict_class_probs(np.random.default_rng(2).normal(0, 100, (30, 2)))
        np.testing.assert_allclose(pc.sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        x, y = two_gaussians(seed=14)
        a, b = fit_mlp(x, y, epochs=3, seed=9), fit_mlp(x, y, epochs=3, seed=9)
        for pa, pb in zip(a.params, b.params):
            np.testing.assert_array_equal(pa, pb)

    def test_divergence_reported(self):
        x, y = two_gaussians(seed=15)
        with pytest.raises(baselines.TrainingDiverged):
            fit_mlp(x * 1e150, y, epochs=2, lr=1e10)
