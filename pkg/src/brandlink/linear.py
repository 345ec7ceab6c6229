"""Sparse L2-regularized logistic training shared by the linear rankers.

Sibling columns of one tree node share the same training rows, so they are
fit jointly: the objective is the per-column mean logistic loss summed over
columns plus an L2 penalty, which is separable per column and therefore
reaches the same optimum as independent fits.  Positive rows of a column
are weighted by that column's negative-to-positive count ratio, so a label
with few examples is not drowned out by its siblings and label priors do
not leak into the scores.  Both the averaging and the count ratio are
invariant to uniform duplication of the training data.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import expit

LOGGER = logging.getLogger(__name__)

# Bias assigned to columns that saw no positive example: always-low score.
DEFAULT_NEGATIVE_BIAS = -10.0

GRAD_TOL = 1e-4
MAX_EPOCHS = 100


def fit_logistic_columns(
    x: sp.csr_matrix,
    y: np.ndarray,
    reg: float,
    *,
    pos_weight: np.ndarray | None = None,
    max_epochs: int = MAX_EPOCHS,
    tol: float = GRAD_TOL,
) -> np.ndarray:
    """Fit k binary logistic columns over shared rows.

    Args:
        x: Training rows, CSR of shape (n, d); the last feature column is
            expected to be the constant bias feature.
        y: Targets in {-1, +1}, shape (n, k).
        reg: L2 penalty weight; must be positive.
        pos_weight: Optional per-column loss weight for positive rows,
            shape (k,); negatives always weigh 1.
        max_epochs: Iteration cap for the optimizer.
        tol: Gradient-norm convergence tolerance.

    Returns:
        Dense weights of shape (d, k).
    """
    if reg <= 0.0:
        raise ValueError("reg must be positive")
    n, d = x.shape
    k = y.shape[1]
    if y.shape[0] != n:
        raise ValueError("row count mismatch between x and y")
    if pos_weight is None:
        row_weight = np.ones_like(y)
    else:
        if pos_weight.shape != (k,):
            raise ValueError("pos_weight must have one entry per column")
        row_weight = np.where(y > 0.0, pos_weight[None, :], 1.0)
    xt = x.T.tocsr()

    def objective(flat: np.ndarray) -> tuple[float, np.ndarray]:
        w = flat.reshape(d, k)
        margins = x @ w
        z = y * margins
        loss = float(
            (row_weight * np.logaddexp(0.0, -z)).sum()
        ) / n + 0.5 * reg * float(np.vdot(w, w))
        residual = (row_weight * -y * expit(-z)) / n
        grad = xt @ residual + reg * w
        return loss, grad.ravel()

    result = minimize(
        objective,
        np.zeros(d * k, dtype=np.float64),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_epochs, "gtol": tol, "maxfun": 50 * max_epochs},
    )
    return result.x.reshape(d, k)


def fit_sparse_ova(
    x: sp.csr_matrix,
    positive_col: np.ndarray,
    n_cols: int,
    dim: int,
    reg: float,
    *,
    balanced: bool = True,
    max_epochs: int = MAX_EPOCHS,
    tol: float = GRAD_TOL,
    prune: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Train one-vs-all columns over a shared row group, sparsely.

    Rows are restricted to the features they actually touch before the
    dense solve, then weights are scattered back into the full space with
    a constant bias feature stored at row index ``dim``.  When balanced,
    positive rows are class-weighted per column (negatives over positives,
    1 when a column has no negatives).  Columns without a single positive
    row are not trained; they get a zero weight vector with
    :data:`DEFAULT_NEGATIVE_BIAS` so they always score low.

    Args:
        x: Rows in the full feature space, CSR of shape (n, dim), no bias.
        positive_col: Per row, the local column index in [0, n_cols) whose
            classifier treats it as positive; every other column treats it
            as negative.
        n_cols: Number of columns to produce.
        dim: Full feature dimension; bias lands at index ``dim``.
        reg: L2 penalty weight.
        balanced: Apply the per-column positive class weight.  Leave off
            for calibrated scores whose absolute value gates a decision;
            keep on when only the relative ranking matters.
        max_epochs: Iteration cap for the optimizer.
        tol: Gradient-norm convergence tolerance.
        prune: Drop trained weights with magnitude below this (bias kept).

    Returns:
        COO triplets (rows, cols, values) in the (dim + 1)-row space and
        the count of untrained all-negative default columns.
    """
    n = x.shape[0]
    rows_out: list[np.ndarray] = []
    cols_out: list[np.ndarray] = []
    vals_out: list[np.ndarray] = []

    counts = np.bincount(positive_col, minlength=n_cols) if n else np.zeros(
        n_cols, dtype=np.int64
    )
    trained = np.flatnonzero(counts > 0)
    defaults = np.flatnonzero(counts == 0)
    for col in defaults:
        rows_out.append(np.array([dim], dtype=np.int64))
        cols_out.append(np.array([col], dtype=np.int64))
        vals_out.append(np.array([DEFAULT_NEGATIVE_BIAS], dtype=np.float64))

    if len(trained) > 0:
        active = np.unique(x.indices) if x.nnz else np.empty(0, dtype=x.indices.dtype)
        x_local = x[:, active] if len(active) < dim else x
        x_aug = sp.hstack(
            [x_local, sp.csr_matrix(np.ones((n, 1), dtype=np.float64))],
            format="csr",
        )
        y = np.full((n, len(trained)), -1.0, dtype=np.float64)
        local_of = {int(c): j for j, c in enumerate(trained)}
        for i, col in enumerate(positive_col):
            j = local_of.get(int(col))
            if j is not None:
                y[i, j] = 1.0
        if balanced:
            n_pos = counts[trained].astype(np.float64)
            n_neg = n - n_pos
            pos_weight = np.where(n_neg > 0.0, n_neg / n_pos, 1.0)
        else:
            pos_weight = None
        w = fit_logistic_columns(
            x_aug, y, reg, pos_weight=pos_weight, max_epochs=max_epochs, tol=tol
        )
        full_rows = np.append(
            active if len(active) < dim else np.arange(dim, dtype=np.int64), dim
        ).astype(np.int64)
        for j, col in enumerate(trained):
            column = w[:, j]
            keep = np.abs(column) >= prune if prune > 0.0 else column != 0.0
            keep[-1] = True  # bias survives pruning
            rows_out.append(full_rows[keep])
            cols_out.append(np.full(int(keep.sum()), col, dtype=np.int64))
            vals_out.append(column[keep])

    if rows_out:
        return (
            np.concatenate(rows_out),
            np.concatenate(cols_out),
            np.concatenate(vals_out),
            len(defaults),
        )
    empty_i = np.empty(0, dtype=np.int64)
    return empty_i, empty_i.copy(), np.empty(0, dtype=np.float64), len(defaults)
