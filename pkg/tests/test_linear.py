"""Sparse regularized logistic fitting shared by the rankers."""
import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import expit

from brandlink.linear import (
    DEFAULT_NEGATIVE_BIAS,
    fit_logistic_columns,
    fit_sparse_ova,
)


def with_bias(rows: np.ndarray) -> sp.csr_matrix:
    n = rows.shape[0]
    return sp.csr_matrix(np.hstack([rows, np.ones((n, 1))]))


def test_separable_problem_is_separated():
    # Feature 0 marks the positive class, feature 1 the negative one.
    x = with_bias(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]))
    y = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    w = fit_logistic_columns(x, y, reg=1e-3)
    margins = x @ w
    assert (margins[:2] > 0).all()
    assert (margins[2:] < 0).all()


def column_objective(x, y_col, w_col, reg):
    margins = np.asarray(x @ w_col).ravel()
    loss = np.logaddexp(0.0, -y_col * margins).mean()
    return loss + 0.5 * reg * float(w_col @ w_col)


def test_joint_fit_matches_independent_fits():
    # Same optimum either way; iterates may differ by optimizer slack, so
    # compare achieved per-column objective values, not raw weights.
    rng = np.random.default_rng(0)
    x = with_bias(rng.random((20, 4)))
    y = np.where(rng.random((20, 3)) < 0.5, 1.0, -1.0)
    joint = fit_logistic_columns(x, y, reg=1e-2, tol=1e-9, max_epochs=500)
    for j in range(3):
        alone = fit_logistic_columns(
            x, y[:, j : j + 1], reg=1e-2, tol=1e-9, max_epochs=500
        )
        f_joint = column_objective(x, y[:, j], joint[:, j], 1e-2)
        f_alone = column_objective(x, y[:, j], alone[:, 0], 1e-2)
        assert f_joint == pytest.approx(f_alone, abs=1e-7)
        assert np.allclose(joint[:, j], alone[:, 0], atol=5e-3)


def test_pos_weight_lifts_rare_positives():
    # 2 positives vs 38 negatives, separable: unweighted sits below the
    # decision point on positives because the prior dominates the bias.
    x_rows = np.zeros((40, 2))
    x_rows[:2, 0] = 1.0
    x_rows[2:, 1] = 1.0
    x = with_bias(x_rows)
    y = np.full((40, 1), -1.0)
    y[:2] = 1.0
    plain = fit_logistic_columns(x, y, reg=1e-1)
    weight = np.array([38.0 / 2.0])
    balanced = fit_logistic_columns(x, y, reg=1e-1, pos_weight=weight)
    margin_plain = float((x @ plain)[0, 0])
    margin_balanced = float((x @ balanced)[0, 0])
    assert margin_balanced > margin_plain
    assert expit(margin_balanced) > 0.5


def test_pos_weight_shape_validated():
    x = with_bias(np.ones((4, 1)))
    y = np.ones((4, 2))
    with pytest.raises(ValueError):
        fit_logistic_columns(x, y, reg=1e-2, pos_weight=np.ones(3))


def test_reg_must_be_positive():
    x = with_bias(np.ones((2, 1)))
    y = np.ones((2, 1))
    with pytest.raises(ValueError):
        fit_logistic_columns(x, y, reg=0.0)


def make_group(dim: int = 64):
    # Three columns; column 2 never appears as a positive.
    rows = []
    cols = []
    feats = {0: [3, 7], 1: [11, 13]}
    positive = np.array([0, 0, 1, 1, 0, 1], dtype=np.int64)
    for i, col in enumerate(positive):
        for f in feats[int(col)]:
            rows.append((i, f))
    data = np.ones(len(rows))
    r, c = zip(*rows)
    x = sp.csr_matrix((data, (list(r), list(c))), shape=(len(positive), dim))
    return x, positive


class TestFitSparseOva:
    def test_untrained_column_gets_default_bias(self):
        x, positive = make_group()
        rows, cols, vals, n_default = fit_sparse_ova(x, positive, 3, 64, reg=1e-2)
        assert n_default == 1
        default_mask = cols == 2
        assert default_mask.sum() == 1
        assert rows[default_mask][0] == 64  # bias row
        assert vals[default_mask][0] == DEFAULT_NEGATIVE_BIAS

    def test_trained_columns_rank_their_own_features(self):
        x, positive = make_group()
        rows, cols, vals, _ = fit_sparse_ova(x, positive, 3, 64, reg=1e-2)
        w = sp.coo_matrix((vals, (rows, cols)), shape=(65, 3)).tocsc()
        x_aug = sp.hstack([x, sp.csr_matrix(np.ones((x.shape[0], 1)))], format="csr")
        margins = (x_aug @ w).toarray()
        for i, col in enumerate(positive):
            assert np.argmax(margins[i]) == col

    def test_duplication_leaves_model_unchanged(self):
        x, positive = make_group()
        once = fit_sparse_ova(x, positive, 3, 64, reg=1e-2)
        doubled = fit_sparse_ova(
            sp.vstack([x, x], format="csr"),
            np.concatenate([positive, positive]),
            3,
            64,
            reg=1e-2,
        )
        w_once = sp.coo_matrix((once[2], (once[0], once[1])), shape=(65, 3)).toarray()
        w_twice = sp.coo_matrix(
            (doubled[2], (doubled[0], doubled[1])), shape=(65, 3)
        ).toarray()
        assert np.allclose(w_once, w_twice, atol=1e-3)

    def test_prune_drops_small_weights_keeps_bias(self):
        x, positive = make_group()
        rows, cols, vals, _ = fit_sparse_ova(x, positive, 3, 64, reg=1e-2, prune=1e9)
        trained = cols != 2
        assert set(rows[trained]) == {64}

    def test_empty_group_all_defaults(self):
        x = sp.csr_matrix((0, 16))
        rows, cols, vals, n_default = fit_sparse_ova(
            x, np.empty(0, dtype=np.int64), 2, 16, reg=1e-2
        )
        assert n_default == 2
        assert set(vals) == {DEFAULT_NEGATIVE_BIAS}

    def test_single_all_positive_column_scores_high(self):
        x = sp.csr_matrix(np.ones((4, 1)), shape=(4, 8))
        positive = np.zeros(4, dtype=np.int64)
        rows, cols, vals, n_default = fit_sparse_ova(x, positive, 1, 8, reg=1e-2)
        assert n_default == 0
        w = sp.coo_matrix((vals, (rows, cols)), shape=(9, 1)).toarray()
        margin = float(w[0, 0] + w[8, 0])
        assert expit(margin) > 0.9
