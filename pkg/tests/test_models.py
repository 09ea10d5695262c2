import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlens.core import TimeEmbedding
from driftlens.errors import DimensionMismatch, SingleClass, TooFewSamples, WrongModelKind
from driftlens.models import (FitConfig, LinearL1, ProbTree, Tree, dumps, fit_lasso_moments,
                              fit_moment_forest, fit_moment_tree, fit_prob_classifier,
                              fit_time_model, linear_weights, loads, model_feature_importance,
                              predict_moments, predict_proba, rf_kernel, rf_kernel_matrix)

POLY1 = TimeEmbedding.polynomial(1)


def _sse(y):
    return float(((y - y.mean(axis=0)) ** 2).sum()) if len(y) else 0.0


def _best_single_split_sse(x, y, min_leaf):
    """Exhaustive search over all midpoints of one feature."""
    best = _sse(y)
    u = np.unique(x)
    for a, b in zip(u[:-1], u[1:]):
        thr = (a + b) / 2
        left = x <= thr
        if left.sum() < min_leaf or (~left).sum() < min_leaf:
            continue
        best = min(best, _sse(y[left]) + _sse(y[~left]))
    return best


def _train_mse(m, X, t):
    _, mom = m.predict_moments(X)
    return float(((mom - m.embedding(t)) ** 2).mean())


def test_constant_target_gives_single_leaf():
    X = np.random.default_rng(0).standard_normal((30, 2))
    m = fit_moment_tree(X, POLY1, FitConfig(min_leaf=2), t=np.full(30, 0.4))
    assert m.tree.n_leaves == 1
    np.testing.assert_allclose(m.tree.value[0], [0.4])


def test_separable_single_split():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    t = np.array([0.0, 0.0, 1.0, 1.0])
    m = fit_moment_tree(X, POLY1, FitConfig(min_leaf=1), t=t)
    assert m.tree.n_leaves == 2
    assert m.tree.threshold[0] == 0.5
    seg, mom = predict_moments(m, np.array([0.0]))
    assert seg == 0 and mom.tolist() == [0.0]
    seg, mom = predict_moments(m, np.array([1.0]))
    assert seg == 1 and mom.tolist() == [1.0]


def test_depth2_tree_beats_exhaustive_single_split():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, 20)
    t = (x > 0.3).astype(float)
    m = fit_moment_tree(x[:, None], POLY1, FitConfig(max_depth=2, min_leaf=2), t=t)
    oracle = _best_single_split_sse(x, t[:, None], 2) / len(x)
    assert _train_mse(m, x[:, None], t) <= oracle + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_first_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    x = np.round(rng.uniform(0, 1, 25), 3)
    t = np.clip(x + 0.3 * rng.standard_normal(25), 0, 1)
    m = fit_moment_tree(x[:, None], POLY1, FitConfig(max_depth=1, min_leaf=3), t=t)
    oracle = _best_single_split_sse(x, t[:, None], 3)
    assert _train_mse(m, x[:, None], t) * len(x) == pytest.approx(oracle, rel=1e-9, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_mse_non_increasing_in_depth(seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((80, 3))
    t = np.clip(0.5 + 0.2 * X[:, 0] + 0.1 * rng.standard_normal(80), 0, 1)
    emb = TimeEmbedding.polynomial(2)
    shallow = fit_moment_tree(X, emb, FitConfig(max_depth=depth, min_leaf=3), t=t)
    deep = fit_moment_tree(X, emb, FitConfig(max_depth=depth + 1, min_leaf=3), t=t)
    assert _train_mse(deep, X, t) <= _train_mse(shallow, X, t) + 1e-12


def test_leaf_partition_and_counts():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 3))
    t = rng.uniform(size=200)
    m = fit_moment_tree(X, POLY1, FitConfig(max_depth=4, min_leaf=5), t=t)
    leaves = m.tree.leaves(X)
    assert set(np.unique(leaves)) == set(range(m.tree.n_leaves))
    assert m.tree.n_node[m.tree.leaf_nodes()].sum() == 200


def test_leaf_ids_follow_depth_first_order():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((60, 2))
    t = np.where(X[:, 0] > 0, 0.9, np.where(X[:, 1] > 0, 0.5, 0.1))
    m = fit_moment_tree(X, POLY1, FitConfig(max_depth=2, min_leaf=2), t=t)
    assert m.tree.n_leaves == 3
    # walk the serialized arrays left-first and number leaves as they are met
    d = m.tree.to_dict()
    order = []

    def walk(i):
        if d["feature"][i] < 0:
            order.append(d["leaf_id"][i])
            return
        walk(d["left"][i])
        walk(d["right"][i])

    walk(0)
    assert order == [0, 1, 2]


def test_laplace_smoothing_on_single_leaf():
    tree = Tree(feature=np.array([-1]), threshold=np.array([0.0]), left=np.array([-1]),
                right=np.array([-1]), leaf_id=np.array([0]), value=np.array([[0.25]]),
                n_node=np.array([4.0]), impurity=np.array([0.0]), gain=np.array([0.0]),
                n_features=1)
    m = ProbTree(tree)
    np.testing.assert_allclose(predict_proba(m, np.array([3.0])), [4 / 6, 2 / 6])
    assert m.tree.root().class_counts.tolist() == [3, 1]


def test_single_leaf_segment_id_is_zero():
    X = np.random.default_rng(0).standard_normal((20, 2))
    m = fit_moment_tree(X, POLY1, FitConfig(max_depth=0, min_leaf=1), t=np.linspace(0, 1, 20))
    ids, _ = predict_moments(m, X)
    assert np.all(ids == 0)
    assert model_feature_importance(m).tolist() == [0.0, 0.0]


def test_separable_forest_probabilities():
    X = np.r_[np.zeros(20), np.ones(20)][:, None]
    y = np.r_[np.zeros(20), np.ones(20)]
    m = fit_prob_classifier(X, y, FitConfig(n_trees=20, min_leaf=2))
    p = predict_proba(m, X)
    assert np.all(p[np.arange(40), y.astype(int)] >= 0.9)


def test_probabilities_stay_strictly_inside():
    X = np.r_[np.zeros(20), np.ones(20)][:, None]
    y = np.r_[np.zeros(20), np.ones(20)]
    for kind in ("tree", "forest", "linear"):
        p = predict_proba(fit_prob_classifier(X, y, FitConfig(n_trees=5, min_leaf=2), kind), X)
        assert np.all(p > 0) and np.all(p < 1)
        np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_linear_separable_without_penalty():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    m = fit_prob_classifier(X, y, FitConfig(l1_strength=0.0), "linear")
    assert np.mean((predict_proba(m, X)[:, 1] > 0.5) == y) == 1.0


def test_noise_labels_give_near_half_probabilities():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((200, 3))
    y = rng.integers(0, 2, 200).astype(float)
    folds = np.arange(200) % 5
    out = np.empty(200)
    for f in range(5):
        tr = folds != f
        m = fit_prob_classifier(X[tr], y[tr], FitConfig(n_trees=30))
        out[~tr] = predict_proba(m, X[~tr])[:, 1]
    assert np.mean(np.abs(out - 0.5)) < 0.15


def test_forest_probability_is_mean_of_members():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 2))
    y = (X[:, 0] > 0).astype(float)
    m = fit_prob_classifier(X, y, FitConfig(n_trees=3, min_leaf=3))
    members = [ProbTree(tr).predict_proba(X)[:, 1] for tr in m.trees]
    assert np.array_equal(m.predict_proba(X)[:, 1], (members[0] + members[1] + members[2]) / 3)


def test_rf_kernel_examples():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((100, 2))
    t = np.clip(0.5 + 0.3 * X[:, 0], 0, 1)
    m = fit_moment_forest(X, POLY1, FitConfig(n_trees=10), t=t)
    assert rf_kernel(m, X[0], X[0]) == 1.0
    same = sum(int(tr.leaves(X[3:4])[0] == tr.leaves(X[8:9])[0]) for tr in m.trees)
    assert rf_kernel(m, X[3], X[8]) == same / 10
    K = rf_kernel_matrix(m, X[:10])
    assert K[3, 8] == same / 10 and np.all(np.diag(K) == 1.0)

    one = fit_moment_forest(X, POLY1, FitConfig(n_trees=1, bootstrap=False), t=t)
    lv = one.trees[0].leaves(X)
    i, j = 0, int(np.flatnonzero(lv != lv[0])[0])
    assert rf_kernel(one, X[i], X[j]) == 0.0


def test_rf_kernel_rejects_single_tree():
    X = np.random.default_rng(0).standard_normal((20, 1))
    m = fit_moment_tree(X, POLY1, FitConfig(min_leaf=2), t=np.linspace(0, 1, 20))
    with pytest.raises(WrongModelKind):
        rf_kernel(m, X[0], X[1])


def _manual_gains(X, Y, d):
    imp = np.zeros(X.shape[1])

    def walk(i, mask):
        f = d["feature"][i]
        if f < 0:
            return
        left = mask & (X[:, f] <= d["threshold"][i])
        right = mask & ~left
        imp[f] += _sse(Y[mask]) - _sse(Y[left]) - _sse(Y[right])
        walk(d["left"][i], left)
        walk(d["right"][i], right)

    walk(0, np.ones(len(X), dtype=bool))
    return imp / imp.sum()


def test_feature_importance_matches_hand_computed_gains():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((50, 3))
    t = np.clip(0.5 + 0.3 * X[:, 1] + 0.1 * X[:, 2], 0, 1)
    m = fit_moment_tree(X, POLY1, FitConfig(max_depth=2, min_leaf=5), t=t)
    np.testing.assert_allclose(model_feature_importance(m),
                               _manual_gains(X, POLY1(t), m.tree.to_dict()), rtol=1e-9)


def test_importance_all_on_the_only_split_feature():
    X = np.random.default_rng(0).standard_normal((40, 3))
    t = (X[:, 2] > 0).astype(float)
    m = fit_moment_tree(X, POLY1, FitConfig(max_depth=1, min_leaf=2), t=t)
    assert model_feature_importance(m).tolist() == [0.0, 0.0, 1.0]


def test_fit_errors():
    X = np.zeros((4, 1))
    with pytest.raises(TooFewSamples):
        fit_moment_tree(X, POLY1, FitConfig(min_leaf=5), t=np.linspace(0, 1, 4))
    with pytest.raises(SingleClass):
        fit_prob_classifier(np.zeros((20, 1)), np.ones(20))
    m = fit_prob_classifier(np.arange(20.0)[:, None], np.r_[np.zeros(10), np.ones(10)],
                            FitConfig(n_trees=2, min_leaf=2))
    with pytest.raises(DimensionMismatch):
        predict_proba(m, np.zeros(3))
    with pytest.raises(WrongModelKind):
        predict_moments(m, np.zeros(1))


def _forest_data():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((150, 4))
    t = np.clip(0.5 + 0.2 * X[:, 0] + 0.1 * rng.standard_normal(150), 0, 1)
    return X, t


def test_determinism_across_thread_counts():
    X, t = _forest_data()
    emb = TimeEmbedding.fourier(2)
    a = fit_moment_forest(X, emb, FitConfig(n_trees=12, n_jobs=1), t=t)
    b = fit_moment_forest(X, emb, FitConfig(n_trees=12, n_jobs=4), t=t)
    assert dumps(a) == dumps(b)


@pytest.mark.parametrize("kind", ["tree", "forest", "linear"])
def test_serialization_round_trip(kind):
    X, t = _forest_data()
    emb = TimeEmbedding.polynomial(2)
    m = fit_time_model(X, emb, FitConfig(n_trees=5), kind, t=t)
    back = loads(dumps(m))
    assert dumps(back) == dumps(m)
    np.testing.assert_array_equal(back.predict(X), m.predict(X))
    c = fit_time_model(X, TimeEmbedding.binary(0.5), FitConfig(n_trees=5), kind, t=t)
    np.testing.assert_array_equal(loads(dumps(c)).predict_proba(X), c.predict_proba(X))


def test_forest_segment_ids_resolve_to_leaf_tuples():
    X, t = _forest_data()
    m = fit_moment_forest(X, POLY1, FitConfig(n_trees=4), t=t)
    ids, _ = m.predict_moments(X[:5])
    L = m.leaf_matrix(X[:5])
    for sid, row in zip(ids, L):
        assert m.segment_registry[int(sid)] == tuple(int(v) for v in row)


def test_l1_path_reaches_zero():
    X, t = _forest_data()
    y = (t > 0.5).astype(float)
    m = fit_prob_classifier(X, y, FitConfig(l1_strength=1e3), "linear")
    assert np.all(m.weights == 0.0)
    lasso = fit_lasso_moments(X, POLY1(t), POLY1, FitConfig(l1_strength=1e3))
    assert np.all(lasso.weights == 0.0)
    assert linear_weights(lasso).tolist() == [0.0] * 4


def test_lasso_recovers_linear_signal():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((400, 3))
    y = 0.2 * X[:, 0] - 0.1 * X[:, 2] + 0.5
    m = fit_lasso_moments(X, y, POLY1, FitConfig(l1_strength=1e-6))
    assert isinstance(m, LinearL1)
    np.testing.assert_allclose(m.weights[:, 0], [0.2, 0.0, -0.1], atol=1e-3)
