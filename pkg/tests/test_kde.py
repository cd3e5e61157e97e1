import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from labelsr.kde import ClassPrior, KdeModel, density, fit, fit_classifier, log_density, posterior


def naive_density(train, h, x):
    """Double loop over query and training points, product of 1-d Gaussians."""
    out = np.empty(len(x))
    for i, q in enumerate(x):
        total = 0.0
        for t in train:
            k = 1.0
            for j in range(len(h)):
                z = (q[j] - t[j]) / h[j]
                k *= np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * h[j])
            total += k
        out[i] = total / len(train)
    return out


class TestFit:
    def test_scott_bandwidth(self):
        x = np.random.default_rng(0).normal(size=(50, 3)) * [1.0, 2.0, 0.5]
        m = fit(x)
        np.testing.assert_allclose(m.bandwidths, x.std(axis=0) * 50 ** (-1 / 7))

    def test_scale(self):
        x = np.random.default_rng(1).normal(size=(20, 2))
        np.testing.assert_allclose(fit(x, 0.5).bandwidths, 0.5 * fit(x).bandwidths)

    def test_degenerate_fallbacks(self):
        assert fit(np.zeros((5, 2))).bandwidths.tolist() == [1.0, 1.0]
        assert fit(np.array([[3.0, 4.0]])).bandwidths.tolist() == [1.0, 1.0]

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            fit(np.array([[np.nan, 1.0]]))

    def test_dump(self):
        assert "n=4 d=2" in fit(np.eye(4)[:, :2]).dump()


class TestDensity:
    def test_single_sample_peak(self):
        m = KdeModel(np.zeros((1, 1)), np.ones(1))
        assert density(m, [0.0]) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        train = rng.normal(size=(40, 3))
        m = fit(train, 0.8)
        q = rng.normal(size=(25, 3)) * 2
        np.testing.assert_allclose(density(m, q), naive_density(train, m.bandwidths, q), rtol=1e-10, atol=0)

    def test_normalises_1d(self):
        m = fit(np.random.default_rng(4).normal(size=30)[:, None])
        val, _ = integrate.quad(lambda v: float(density(m, [v])), -20, 20, limit=200)
        assert val == pytest.approx(1.0, abs=1e-3)

    def test_normalises_2d(self):
        m = fit(np.random.default_rng(5).normal(size=(15, 2)))
        g = np.linspace(-10, 10, 801)
        xx, yy = np.meshgrid(g, g, indexing="ij")
        vals = density(m, np.c_[xx.ravel(), yy.ravel()]).reshape(xx.shape)
        total = integrate.trapezoid(integrate.trapezoid(vals, g, axis=1), g)
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_far_query_is_finite_in_log_space(self):
        m = fit(np.random.default_rng(6).normal(size=(10, 2)))
        lp = log_density(m, [1e3, 1e3])
        assert np.isfinite(lp) and lp < -1e4

    def test_chunking_consistent(self, monkeypatch):
        import labelsr.kde as kde
        rng = np.random.default_rng(7)
        m = fit(rng.normal(size=(30, 2)))
        q = rng.normal(size=(100, 2))
        full = log_density(m, q)
        monkeypatch.setattr(kde, "_CHUNK_ELEMENTS", 61)
        np.testing.assert_allclose(log_density(m, q), full, rtol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            log_density(fit(np.zeros((3, 2)) + np.arange(3)[:, None]), [1.0, 2.0, 3.0])


class TestPosterior:
    def test_equal_models(self):
        m = fit(np.random.default_rng(8).normal(size=(20, 2)))
        assert posterior(m, m, ClassPrior(), [0.3, -0.2]) == pytest.approx(0.5, abs=1e-15)

    def test_prior_shift(self):
        m = fit(np.random.default_rng(8).normal(size=(20, 2)))
        assert posterior(m, m, ClassPrior(0.9, 0.1), [0.3, -0.2]) == pytest.approx(0.1, abs=1e-12)

    def test_separated_classes(self):
        m0 = KdeModel(np.zeros((1, 1)), np.ones(1))
        m1 = KdeModel(np.full((1, 1), 10.0), np.ones(1))
        assert posterior(m0, m1, ClassPrior(), [10.0]) > 1 - 1e-12
        assert posterior(m0, m1, ClassPrior(), [0.0]) < 1e-12

    def test_underflow_returns_prior(self):
        m0 = KdeModel(np.zeros((1, 1)), np.full(1, 1e-3))
        m1 = KdeModel(np.ones((1, 1)), np.full(1, 1e-3))
        diag = {}
        p = posterior(m0, m1, ClassPrior(0.7, 0.3), np.array([[1e6], [0.0]]), diagnostics=diag)
        # log-space evaluation keeps even the far query decidable; only true -inf hits the fallback
        assert np.all(np.isfinite(p))
        assert diag["underflow"] == 0
        diag = {}
        p = posterior(m0, m1, ClassPrior(0.7, 0.3), np.array([[1e200], [0.0]]), diagnostics=diag)
        assert p[0] == 0.3 and p[1] < 1e-12
        assert diag["underflow"] == 1

    def test_zero_prior_fallback(self):
        m = KdeModel(np.zeros((1, 1)), np.ones(1))
        diag = {}
        p = posterior(m, m, ClassPrior(0.0, 1.0), [0.0], diagnostics=diag)
        assert p == 1.0 and diag["underflow"] == 0

    @given(st.integers(1, 4), st.integers(0, 10_000), st.floats(0.01, 0.99))
    @settings(max_examples=60, deadline=None)
    def test_complements_sum_to_one(self, d, seed, p1):
        rng = np.random.default_rng(seed)
        m0 = fit(rng.normal(size=(12, d)))
        m1 = fit(rng.normal(1.0, 1.0, size=(9, d)))
        q = rng.normal(size=(7, d)) * 3
        a = posterior(m0, m1, ClassPrior(1 - p1, p1), q)
        b = posterior(m1, m0, ClassPrior(p1, 1 - p1), q)
        np.testing.assert_allclose(a + b, 1.0, atol=1e-12, rtol=0)


class TestClassifier:
    def test_separates_blobs(self):
        rng = np.random.default_rng(9)
        clf = fit_classifier(rng.normal(0, 1, (200, 2)), rng.normal(4, 1, (50, 2)))
        assert clf.d == 2
        assert clf.predict_proba([[4.0, 4.0]])[0] > 0.99
        assert clf.predict_proba([[0.0, 0.0]])[0] < 0.01
        assert clf.prior == ClassPrior(0.5, 0.5)
