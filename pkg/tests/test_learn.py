import json
import math

import numpy as np
import pytest

from walletscreen.learn import (
    DecisionTree,
    ForestConfig,
    ForestModel,
    LogisticConfig,
    LogisticModel,
    SvmConfig,
    decision_scores,
    gini,
    grow_tree,
    load_model,
    logistic_gradient,
    logistic_loss,
    model_config,
    model_from_dict,
    model_to_dict,
    predict_labels,
    rbf_kernel,
    rbf_matrix,
    save_model,
    sigmoid,
    train_logistic,
    train_model,
    train_random_forest,
    train_svm,
)

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([0, 0, 1, 1])


def two_gaussians(n=200, sep=4.0, p=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, p))
    X[y == 1, 0] += sep
    return X, y


def kkt_violations(model, X, y):
    """Per-point distance from the KKT conditions of the soft-margin dual."""
    ys = np.where(y > 0, 1.0, -1.0)
    m = ys * model.decision_scores(X)
    a = model.alpha
    C = model.config.c
    v = np.zeros(len(y))
    lo, hi = a <= 0, a >= C
    free = ~lo & ~hi
    v[lo] = np.maximum(0.0, 1.0 - m[lo])
    v[hi] = np.maximum(0.0, m[hi] - 1.0)
    v[free] = np.abs(m[free] - 1.0)
    return v


# -- kernels and helpers -------------------------------------------------------


def test_rbf_examples():
    x = np.array([0.3, -2.0])
    assert rbf_kernel(x, x, 3.0) == 1.0
    assert rbf_kernel([1, 2], [7, -4], 0.0) == 1.0
    assert rbf_kernel([0, 0], [1, 1], 0.5) == pytest.approx(math.exp(-1), abs=1e-12)
    with pytest.raises(ValueError):
        rbf_kernel([0], [0, 1], 1.0)


def test_rbf_matrix_matches_pointwise():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    K = rbf_matrix(A, B, 0.7)
    for i in range(5):
        for j in range(4):
            assert K[i, j] == pytest.approx(rbf_kernel(A[i], B[j], 0.7), abs=1e-12)


def test_sigmoid_is_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


def test_gini_examples():
    assert gini([7, 0]) == 0.0
    assert gini([5, 5]) == 0.5
    assert gini([0, 0]) == 0.0


def test_configs_validate():
    with pytest.raises(ValueError):
        LogisticConfig(learning_rate=0)
    with pytest.raises(ValueError):
        ForestConfig(features_per_split="half")
    with pytest.raises(ValueError):
        SvmConfig(gamma="auto")
    with pytest.raises(ValueError, match="unknown model kind"):
        model_config("boost")


# -- logistic regression -------------------------------------------------------


def test_initial_probabilities_are_half():
    m = LogisticModel(np.zeros(3), 0.0)
    assert decision_scores(m, np.ones((4, 3))).tolist() == [0.5] * 4


def test_saturated_bias_predicts_one():
    m = LogisticModel(np.zeros(2), 10.0)
    assert predict_labels(m, np.zeros((3, 2))).tolist() == [1, 1, 1]


def test_one_dimensional_symmetric_problem():
    X = np.array([[-1.0], [1.0]])
    m = train_logistic(X, np.array([0, 1]), LogisticConfig(l2=0.0, max_iters=5000))
    assert m.weights[0] > 0
    assert m.predict(X).tolist() == [0, 1]
    assert abs(m.bias) < 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 5))
    y = rng.integers(0, 2, size=20).astype(float)
    w, b, l2 = rng.normal(size=5) * 2, float(rng.normal()), float(rng.uniform(0, 2))
    gw, gb = logistic_gradient(w, b, X, y, l2)
    h = 1e-6
    num = np.array([
        (logistic_loss(w + h * e, b, X, y, l2) - logistic_loss(w - h * e, b, X, y, l2)) / (2 * h)
        for e in np.eye(5)
    ])
    num_b = (logistic_loss(w, b + h, X, y, l2) - logistic_loss(w, b - h, X, y, l2)) / (2 * h)
    full, approx = np.append(gw, gb), np.append(num, num_b)
    assert np.linalg.norm(full - approx) / max(np.linalg.norm(full), 1e-12) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_loss_never_increases(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(40, 4))
    y = (X[:, 0] + rng.normal(size=40) > 0).astype(int)
    m = train_logistic(X, y, LogisticConfig(learning_rate=5.0, max_iters=300))
    assert all(b <= a for a, b in zip(m.losses, m.losses[1:]))
    assert m.final_loss == m.losses[-1]


def test_logistic_converges_and_reports():
    X, y = two_gaussians(sep=2.0)
    m = train_logistic(X, y, LogisticConfig(learning_rate=1.0, max_iters=5000, tol=1e-8))
    assert m.converged
    gw, gb = logistic_gradient(m.weights, m.bias, X, y, 1.0)
    assert max(np.abs(gw).max(), abs(gb)) < 1e-8


def test_logistic_degenerate_labels():
    with pytest.raises(ValueError, match="degenerate labels"):
        train_logistic(np.zeros((3, 1)), np.ones(3))


# -- random forest -------------------------------------------------------------


def test_single_tree_solves_xor():
    tree = grow_tree(XOR_X, XOR_Y, np.random.default_rng(0))
    assert tree.depth == 2
    assert tree.vote(XOR_X).tolist() == XOR_Y.tolist()


def test_tree_respects_max_depth_and_min_leaf():
    X, y = two_gaussians(sep=1.0, p=3)
    tree = grow_tree(X, y, np.random.default_rng(0), max_depth=2, min_leaf=5)
    assert tree.depth <= 2
    leaves = tree.feature < 0
    assert tree.counts[leaves].sum(axis=1).min() >= 5


def test_unrestricted_tree_fits_distinct_points():
    X, y = two_gaussians(sep=0.5, p=3)
    tree = grow_tree(X, y, np.random.default_rng(1))
    assert np.array_equal(tree.vote(X), y)


def test_tied_leaf_votes_zero():
    tree = grow_tree(np.zeros((2, 1)), np.array([0, 1]), np.random.default_rng(0))
    assert tree.n_nodes == 1
    assert tree.vote(np.zeros((1, 1))).tolist() == [0]


def test_forest_vote_rules():
    leaf1 = DecisionTree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[0, 3]]))
    leaf0 = DecisionTree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[3, 0]]))
    x = np.zeros((1, 1))
    sixty = ForestModel([leaf1] * 3 + [leaf0] * 2, [0] * 5, 1)
    assert sixty.predict(x).tolist() == [1]
    half = ForestModel([leaf1, leaf0], [0, 0], 1)
    assert half.predict(x).tolist() == [0]
    agree = ForestModel([leaf1] * 4, [0] * 4, 1)
    assert decision_scores(agree, x).tolist() == [1.0]


def test_forest_two_gaussians():
    X, y = two_gaussians()
    m = train_random_forest(X, y, ForestConfig(n_trees=25, seed=3))
    assert np.mean(m.predict(X) == y) >= 0.95


def test_forest_deterministic_across_threads():
    X, y = two_gaussians(sep=1.5, p=4)
    cfg = ForestConfig(n_trees=12, seed=9)
    a = json.dumps(model_to_dict(train_random_forest(X, y, cfg)), sort_keys=True)
    b = json.dumps(model_to_dict(train_random_forest(X, y, cfg)), sort_keys=True)
    c = json.dumps(model_to_dict(train_random_forest(X, y, cfg, threads=8)), sort_keys=True)
    assert a == b == c
    d = json.dumps(model_to_dict(train_random_forest(X, y, ForestConfig(n_trees=12, seed=10))))
    assert d != a


def test_forest_rejects_single_class():
    with pytest.raises(ValueError, match="degenerate labels"):
        train_random_forest(np.zeros((4, 2)), np.zeros(4))


# -- SVM -----------------------------------------------------------------------


def test_two_point_symmetry():
    X = np.array([[-1.0, 0.0], [1.0, 0.0]])
    m = train_svm(X, np.array([0, 1]), SvmConfig(c=100.0, gamma=0.5, tol=1e-9))
    f = m.decision_scores(X)
    assert f[0] < 0 < f[1]
    assert abs(f[0]) == pytest.approx(abs(f[1]), abs=1e-9)


def test_svm_xor():
    m = train_svm(XOR_X, XOR_Y, SvmConfig(c=10.0, gamma=1.0))
    assert m.converged
    assert m.predict(XOR_X).tolist() == XOR_Y.tolist()


@pytest.mark.parametrize("seed", range(5))
def test_kkt_on_separable_data(seed):
    X, y = two_gaussians(n=60, sep=5.0, p=2, seed=seed)
    m = train_svm(X, y, SvmConfig(c=1.0, gamma=0.5))
    assert m.converged
    assert kkt_violations(m, X, y).max() < 1e-3


def test_free_support_vectors_sit_on_the_margin():
    X, y = two_gaussians(n=40, sep=3.0, seed=2)
    m = train_svm(X, y, SvmConfig(c=5.0, gamma=0.5, tol=1e-3))
    ys = np.where(y > 0, 1.0, -1.0)
    f = m.decision_scores(X)
    free = (m.alpha > 0) & (m.alpha < m.config.c)
    assert free.any()
    assert np.all(np.abs(f[free] - ys[free]) <= 1e-3)


def test_duplicated_points_same_decision_function():
    X, y = two_gaussians(n=30, sep=4.0, seed=5)
    cfg = SvmConfig(c=100.0, gamma=0.3, tol=1e-10, max_passes=2000)
    once = train_svm(X, y, cfg)
    twice = train_svm(np.vstack([X, X]), np.concatenate([y, y]), cfg)
    assert np.all(once.alpha < cfg.c)
    grid = np.random.default_rng(0).normal(scale=3, size=(50, 2))
    assert np.max(np.abs(once.decision_scores(grid) - twice.decision_scores(grid))) < 1e-6


def test_svm_reports_non_convergence():
    X, y = two_gaussians(n=80, sep=0.2, seed=1)
    m = train_svm(X, y, SvmConfig(c=10.0, gamma=1.0, tol=1e-6, max_passes=1))
    assert not m.converged
    assert m.iterations == 80


def test_scale_gamma_used_by_default():
    X, y = two_gaussians(n=20)
    m = train_svm(X, y)
    assert m.gamma == pytest.approx(1.0 / (2 * np.mean(np.var(X, axis=0))))


# -- dispatch and persistence --------------------------------------------------


def test_width_mismatch():
    m = LogisticModel(np.zeros(3), 0.0)
    with pytest.raises(ValueError, match="width mismatch"):
        predict_labels(m, np.zeros((2, 4)))


@pytest.mark.parametrize("kind", ["logistic", "forest", "svm"])
def test_save_load_round_trip(kind, tmp_path):
    X, y = two_gaussians(n=60, sep=2.0, p=3)
    cfg = model_config(kind, seed=4, **({"n_trees": 7} if kind == "forest" else {}))
    m = train_model(X, y, cfg)
    path = save_model(m, tmp_path / f"{kind}.json")
    back = load_model(path)
    assert np.array_equal(decision_scores(back, X), decision_scores(m, X))
    assert path.read_text() == save_model(back, tmp_path / "again.json").read_text()
    d = json.loads(path.read_text())
    assert d["kind"] == kind and d["seed"] == 4 and d["format_version"] == 1
    assert "seed" not in d["hyperparameters"]


def test_unknown_format_version():
    with pytest.raises(ValueError, match="format version"):
        model_from_dict({"format_version": 99, "kind": "svm"})
