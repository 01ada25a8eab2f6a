import math

import numpy as np
import pytest

from evtboost import booster, losses, mixture
from evtboost.errors import DataError
from evtboost.synth import synth_dataset


def constant_model(kind, base, feature_names, **kw):
    return booster.BoostedModel(
        loss=losses.LossSpec(kind=kind, **kw),
        base_score=base,
        trees=[],
        params=booster.TrainParams(n_trees=0),
        feature_names=feature_names,
    )


def toy_mixture(p=(0.9, 0.08, 0.02), u=200.0, theta_bulk=1.2, theta_tail=4.0,
                xi=0.8, kappa=0.5, k_shape=1.0):
    names = ["x1"]
    classifier = constant_model("cross_entropy", np.log(np.asarray(p)), names,
                                n_classes=3)
    bulk = constant_model("trgamma", theta_bulk, names, k_shape=k_shape,
                          u_trunc=float(np.log1p(u)))
    tail = constant_model("gpd", theta_tail, names, xi=xi, kappa=kappa)
    return mixture.MixtureModel(classifier=classifier, bulk=bulk, tail=tail, u=u)


X1 = np.array([[0.0]])


class TestComponentProbs:
    def test_uniform(self):
        m = toy_mixture(p=(1 / 3, 1 / 3, 1 / 3))
        np.testing.assert_allclose(mixture.component_probs(m, X1)[0], [1 / 3] * 3,
                                   atol=1e-12)

    def test_hand_softmax(self):
        m = toy_mixture(p=(1 / 6, 1 / 3, 1 / 2))  # raw scores log(1,2,3)/6
        np.testing.assert_allclose(mixture.component_probs(m, X1)[0],
                                   [1 / 6, 1 / 3, 1 / 2], atol=1e-12)

    def test_sums_to_one(self, rng):
        m = toy_mixture(p=tuple(np.exp(rng.normal(size=3)) /
                                np.exp(rng.normal(size=3)).sum()))
        assert mixture.component_probs(m, X1).sum() == pytest.approx(1.0, abs=1e-12)


class TestCdf:
    def test_at_zero_is_p1(self):
        m = toy_mixture(p=(0.9, 0.08, 0.02))
        assert mixture.cdf(m, X1, 0.0)[0] == pytest.approx(0.9, abs=1e-12)

    def test_tends_to_one(self):
        m = toy_mixture()
        assert mixture.cdf(m, X1, 1e12)[0] == pytest.approx(1.0, abs=1e-9)

    def test_hand_composition_exponential_bulk(self):
        # k = 1 makes the bulk an exponential truncated at log(1+u):
        # F2(b) = (1 - exp(-z_b/mu)) / (1 - exp(-z_u/mu))
        p, u, theta = (0.9, 0.08, 0.02), 200.0, 1.2
        m = toy_mixture(p=p, u=u, theta_bulk=theta, k_shape=1.0)
        mu = math.exp(theta)
        f2 = math.expm1(-math.log1p(100.0) / mu) / math.expm1(-math.log1p(u) / mu)
        assert mixture.cdf(m, X1, 100.0)[0] == pytest.approx(p[0] + p[1] * f2, rel=1e-12)

    def test_fixed_arithmetic_composition(self):
        # p = (0.9, 0.08, 0.02) and F2(100) = 0.75 gives cdf(100) = 0.96
        p1, p2, f2 = 0.9, 0.08, 0.75
        assert p1 + p2 * f2 == pytest.approx(0.96)

    def test_below_u_capped_by_p1_plus_p2(self):
        m = toy_mixture()
        p = mixture.component_probs(m, X1)[0]
        for b in (1.0, 50.0, 199.0, 200.0):
            assert mixture.cdf(m, X1, b)[0] <= p[0] + p[1] + 1e-12

    def test_no_jump_at_threshold(self):
        m = toy_mixture()
        below = mixture.cdf(m, X1, m.u - 1e-6)[0]
        above = mixture.cdf(m, X1, m.u + 1e-6)[0]
        p = mixture.component_probs(m, X1)[0]
        # the gap is at most the local density mass of either side
        assert above - below >= -1e-12
        assert above - below < p[2] * 1e-3 + 1e-6

    def test_monotone_in_b(self):
        m = toy_mixture()
        bs = np.concatenate([np.linspace(0, 200, 41), np.geomspace(201, 5000, 20)])
        vals = np.array([mixture.cdf(m, X1, b)[0] for b in bs])
        assert np.all(np.diff(vals) >= -1e-12)
        assert np.all((vals >= 0) & (vals <= 1))

    def test_negative_threshold_rejected(self):
        with pytest.raises(DataError):
            mixture.cdf(toy_mixture(), X1, -1.0)


class TestThresholdProbs:
    def test_shape_and_monotone_rows(self):
        m = toy_mixture()
        X = np.array([[0.0], [1.0], [-1.0]])
        thresholds = np.concatenate([[0.0], np.geomspace(1, 3000, 27)])
        probs = mixture.threshold_probs(m, X, thresholds)
        assert probs.shape == (3, 28)
        assert np.all(np.diff(probs, axis=1) >= -1e-12)

    def test_first_column_is_p1_and_far_column_one(self):
        m = toy_mixture()
        probs = mixture.threshold_probs(m, X1, [0.0, 1e12])
        p = mixture.component_probs(m, X1)[0]
        assert probs[0, 0] == pytest.approx(p[0], abs=1e-12)
        assert probs[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_duplicated_threshold_duplicates_column(self):
        m = toy_mixture()
        probs = mixture.threshold_probs(m, X1, [50.0, 50.0])
        assert probs[0, 0] == probs[0, 1]

    def test_unsorted_rejected(self):
        with pytest.raises(DataError):
            mixture.threshold_probs(toy_mixture(), X1, [2.0, 1.0])


class TestSampleAgainstCdf:
    def test_empirical_cdf_matches(self):
        m = toy_mixture(p=(0.55, 0.3, 0.15), theta_bulk=1.5, theta_tail=4.5,
                        k_shape=1.3)
        draws = mixture.sample(m, X1, n_draws=200_000, seed=7)
        for b in (0.0, 5.0, 50.0, 150.0, 200.0, 400.0, 1500.0):
            emp = float((draws <= b).mean())
            assert emp == pytest.approx(mixture.cdf(m, X1, b)[0], abs=0.005)


class TestFitMixture:
    def test_fit_and_validate(self, rng):
        ds = synth_dataset("sizes", n_years=2, nx=5, ny=5, seed=3)
        obs = ~np.isnan(ds.ba)
        X, names = ds.feature_matrix()
        params = booster.TrainParams(n_trees=10, max_leaves=4, seed=0)
        m = mixture.fit_mixture(X[obs], ds.ba[obs], u=200.0, xi=0.8, kappa=0.5,
                                k_shape=1.2, classifier_params=params,
                                bulk_params=params, tail_params=params,
                                feature_names=names)
        assert m.xi == 0.8 and m.k_shape == 1.2
        probs = mixture.threshold_probs(m, X[obs][:5], [0.0, 100.0, 1000.0],
                                        names=names)
        assert np.all(np.diff(probs, axis=1) >= -1e-12)

    def test_manifest_round_trip(self, rng, tmp_path):
        ds = synth_dataset("sizes", n_years=1, nx=5, ny=5, seed=4)
        obs = ~np.isnan(ds.ba)
        X, names = ds.feature_matrix()
        params = booster.TrainParams(n_trees=4, max_leaves=4, seed=0)
        m = mixture.fit_mixture(X[obs], ds.ba[obs], u=200.0, xi=0.8, kappa=0.5,
                                k_shape=1.2, classifier_params=params,
                                bulk_params=params, tail_params=params,
                                feature_names=names)
        path = tmp_path / "mix.json"
        mixture.save(m, path)
        m2 = mixture.load(path)
        b = 150.0
        np.testing.assert_allclose(mixture.cdf(m2, X[obs][:10], b, names=names),
                                   mixture.cdf(m, X[obs][:10], b, names=names))
        assert mixture.is_mixture_document(path)
        booster.save(m.classifier, tmp_path / "single.json")
        assert not mixture.is_mixture_document(tmp_path / "single.json")
