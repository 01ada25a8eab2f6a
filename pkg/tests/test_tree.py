import numpy as np
import pytest

from evtboost import tree
from evtboost.errors import DataError, NumericalError


class TestLeafWeight:
    def test_zero_gradient(self):
        assert tree.leaf_weight(0.0, 5.0, 1.0) == 0.0

    def test_hand_values(self):
        assert tree.leaf_weight(2.0, 1.0, 1.0) == pytest.approx(-1.0)
        assert tree.leaf_weight(-3.0, 2.0, 0.0) == pytest.approx(1.5)

    def test_degenerate_denominator(self):
        with pytest.raises(NumericalError):
            tree.leaf_weight(1.0, 0.0, 0.0)


class TestSplitGain:
    def test_hand_value(self):
        assert tree.split_gain(-2.0, 1.0, 2.0, 1.0, 0.0, 0.0) == pytest.approx(4.0)

    def test_zero_gradients_cost_eta(self):
        assert tree.split_gain(0.0, 1.0, 0.0, 2.0, 0.5, 0.7) == pytest.approx(-0.7)

    def test_proportional_children_add_nothing(self):
        # gl/hl = gr/hr with lambda = 0 gives gain exactly -eta
        assert tree.split_gain(2.0, 4.0, 3.0, 6.0, 0.0, 0.3) == pytest.approx(-0.3)

    def test_equals_objective_drop(self, rng):
        # adding a split with gain G lowers the plugged-in objective by G + eta
        g = rng.normal(size=30)
        h = rng.uniform(0.5, 2.0, size=30)
        left = rng.uniform(size=30) < 0.5
        lam, eta = 0.7, 0.2

        def node_obj(gs, hs):
            return -0.5 * gs.sum() ** 2 / (hs.sum() + lam)

        before = node_obj(g, h) + eta
        after = node_obj(g[left], h[left]) + node_obj(g[~left], h[~left]) + 2 * eta
        gain = tree.split_gain(g[left].sum(), h[left].sum(),
                               g[~left].sum(), h[~left].sum(), lam, eta)
        assert before - after == pytest.approx(gain, rel=1e-12)


def _exhaustive_best_split(X, g, h, lam, eta):
    """Brute-force oracle over every (feature, observed value) threshold."""
    best = None
    for j in range(X.shape[1]):
        for v in np.unique(X[:, j]):
            left = X[:, j] <= v
            if left.all() or not left.any():
                continue
            gain = tree.split_gain(g[left].sum(), h[left].sum(),
                                   g[~left].sum(), h[~left].sum(), lam, eta)
            if best is None or gain > best[0]:
                best = (gain, j, v, left)
    return best


class TestGrow:
    def test_all_zero_gradients_single_leaf(self, rng):
        X = rng.normal(size=(25, 2))
        t = tree.grow(X, np.zeros(25), np.ones(25), max_leaves=4)
        assert len(t.nodes) == 1
        assert t.nodes[0].weight == 0.0

    def test_stump_recovers_step(self, rng):
        X = rng.normal(size=(20, 3))
        y = (X[:, 0] > 0).astype(float)
        # squared-loss gradients at the mean prediction
        g = y.mean() - y
        h = np.ones(20)
        t = tree.grow(X, g, h, max_leaves=2, lambda_reg=0.0)
        oracle = _exhaustive_best_split(X, g, h, 0.0, 0.0)
        root = t.nodes[0]
        assert root.feature == oracle[1] == 0
        left = X[:, root.feature] <= root.threshold
        assert np.array_equal(left, oracle[3])

    def test_chosen_gain_dominates_all_candidates(self, rng):
        for _ in range(5):
            X = rng.normal(size=(50, 3))
            g = rng.normal(size=50)
            h = rng.uniform(0.5, 2.0, size=50)
            t = tree.grow(X, g, h, max_leaves=2, lambda_reg=1.0, n_quantile_bins=64)
            oracle = _exhaustive_best_split(X, g, h, 1.0, 0.0)
            assert not t.nodes[0].is_leaf
            assert t.nodes[0].gain == pytest.approx(oracle[0], rel=1e-9)

    def test_leaf_cap(self, rng):
        X = rng.normal(size=(100, 3))
        g = rng.normal(size=100)
        h = np.ones(100)
        for L in (2, 4, 7):
            t = tree.grow(X, g, h, max_leaves=L, lambda_reg=1.0)
            assert t.n_leaves <= L

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            tree.grow(np.empty((0, 2)), np.empty(0), np.empty(0), max_leaves=2)

    def test_monotone_transformation_invariance(self, rng):
        # order statistics as thresholds make routing invariant under
        # strictly increasing maps of a feature
        X = rng.normal(size=(40, 2))
        g = rng.normal(size=40)
        h = np.ones(40)
        t1 = tree.grow(X, g, h, max_leaves=4, lambda_reg=1.0)

        Xt = X.copy()
        Xt[:, 0] = np.exp(X[:, 0])
        t2 = tree.grow(Xt, g, h, max_leaves=4, lambda_reg=1.0)

        queries = rng.normal(size=(200, 2))
        queries_t = queries.copy()
        queries_t[:, 0] = np.exp(queries[:, 0])
        np.testing.assert_array_equal(t1.predict(queries), t2.predict(queries_t))

    def test_missing_values_follow_learned_default(self, rng):
        X = rng.normal(size=(60, 1))
        y = (X[:, 0] > 0).astype(float)
        # gradients pulling positives up; missing rows carry the positive signal
        g = 0.5 - y
        h = np.ones(60)
        X_missing = X.copy()
        hot = y == 1
        X_missing[np.flatnonzero(hot)[:10], 0] = np.nan
        t = tree.grow(X_missing, g, h, max_leaves=2, lambda_reg=0.0)
        root = t.nodes[0]
        assert not root.is_leaf
        # the ten missing rows had y=1, so the default side must be the high side
        assert root.default_left is False
        pred_missing = t.predict(np.array([[np.nan]]))
        assert pred_missing[0] == t.nodes[root.right].weight


class TestPredict:
    def test_single_leaf(self):
        t = tree.Tree([tree.TreeNode(id=0, weight=0.7)])
        assert tree.predict_tree(t, [1.0, 2.0]) == 0.7

    def test_stump_routing(self):
        t = tree.Tree([
            tree.TreeNode(id=0, feature=0, threshold=0.0, default_left=True,
                          left=1, right=2, gain=1.0),
            tree.TreeNode(id=1, weight=-1.0),
            tree.TreeNode(id=2, weight=1.0),
        ])
        assert tree.predict_tree(t, [-5.0]) == -1.0
        assert tree.predict_tree(t, [5.0]) == 1.0

    def test_tie_routes_left(self):
        t = tree.Tree([
            tree.TreeNode(id=0, feature=0, threshold=0.0, default_left=True,
                          left=1, right=2, gain=1.0),
            tree.TreeNode(id=1, weight=-1.0),
            tree.TreeNode(id=2, weight=1.0),
        ])
        assert tree.predict_tree(t, [0.0]) == -1.0


class TestSerialization:
    def test_round_trip(self, rng):
        X = rng.normal(size=(50, 3))
        t = tree.grow(X, rng.normal(size=50), np.ones(50), max_leaves=5, lambda_reg=1.0)
        t2 = tree.Tree.from_doc(t.to_doc())
        np.testing.assert_array_equal(t.predict(X), t2.predict(X))

    def test_unknown_field_rejected(self):
        with pytest.raises(DataError):
            tree.TreeNode.from_doc({"id": 0, "weight": 1.0, "bogus": 2})
