"""Ridge and augmented-ridge comparators with deterministic cross-validation.

``ridge`` solves ``min ||y - b0 - X beta||^2 + lam ||beta||^2`` with the
intercept unpenalized; ``augmented_ridge`` replaces the intercept by K
unpenalized dummy columns of substitute labels. In both cases the unpenalized
part is eliminated analytically (centering / group-mean centering), so each
fold reduces to a pure ridge solve that is evaluated on the whole lambda grid
from one eigendecomposition: the primal Gram matrix ``X^T X`` when p <= n,
otherwise the dual ``X X^T``.

The lambda grid defaults to 50 log-spaced points spanning
``[1e-4, 1e4] * trace(X^T X) / (n p)`` so its scale tracks the data; CV ties
resolve to the smallest lambda. Fold membership derives from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import as_labels, as_matrix, as_vector, positive_int
from .exceptions import InvalidArgument
from .adjust import _group_mean_matrix

#: Default relative span and size of the lambda grid.
GRID_SPAN = (1e-4, 1e4)
GRID_SIZE = 50


@dataclass(frozen=True)
class RidgeFit:
    beta: np.ndarray
    intercept: float
    lambda_chosen: float
    cv_curve: tuple
    gamma: Optional[np.ndarray] = None


def default_lambda_grid(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    scale = float(np.einsum("ij,ij->", X, X)) / (n * p)
    if scale <= 0:
        scale = 1.0
    return np.geomspace(GRID_SPAN[0] * scale, GRID_SPAN[1] * scale, GRID_SIZE)


def _solve_ridge_path(X, y, lams):
    """Ridge solutions (no intercept) for every lambda from one factorization."""
    n, p = X.shape
    lams = np.asarray(lams, dtype=float)
    if p <= n:
        w, V = np.linalg.eigh(X.T @ X)
        t = V.T @ (X.T @ y)
        # beta(lam) = V diag(1/(w+lam)) V^T X^T y
        return V @ (t[:, None] / (w[:, None] + lams[None, :]))
    w, Q = np.linalg.eigh(X @ X.T)
    t = Q.T @ y
    # beta(lam) = X^T Q diag(1/(w+lam)) Q^T y
    return X.T @ (Q @ (t[:, None] / (w[:, None] + lams[None, :])))


def _cv_folds(n, folds, seed):
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0xCF,)))
    )
    order = rng.permutation(n)
    return np.array_split(order, folds)


def ridge(X, y, lambda_grid=None, folds: int = 5, seed: int = 0) -> RidgeFit:
    """Ridge regression with unpenalized intercept and seeded k-fold CV."""
    X = as_matrix(X)
    y = as_vector(y, "y", length=X.shape[0])
    folds = positive_int(folds, "folds")
    if folds < 2 or X.shape[0] < folds:
        raise InvalidArgument(f"need n >= folds >= 2, got n={X.shape[0]}, "
                              f"folds={folds}")
    lams = default_lambda_grid(X) if lambda_grid is None else np.sort(
        np.asarray(lambda_grid, dtype=float)
    )
    if lams.size == 0 or np.any(lams <= 0):
        raise InvalidArgument("lambda grid must be nonempty and positive")
    losses = np.zeros((folds, lams.size))
    for f, val_idx in enumerate(_cv_folds(X.shape[0], folds, seed)):
        train = np.setdiff1d(np.arange(X.shape[0]), val_idx)
        xm = X[train].mean(axis=0)
        ym = float(y[train].mean())
        B = _solve_ridge_path(X[train] - xm, y[train] - ym, lams)
        pred = (X[val_idx] - xm) @ B + ym
        losses[f] = np.mean((pred - y[val_idx][:, None]) ** 2, axis=0)
    mean_loss = losses.mean(axis=0)
    best = int(np.argmin(mean_loss))  # first minimum = smallest lambda
    lam = float(lams[best])
    xm = X.mean(axis=0)
    ym = float(y.mean())
    beta = _solve_ridge_path(X - xm, y - ym, np.array([lam]))[:, 0]
    intercept = ym - float(xm @ beta)
    curve = tuple((float(l), float(m)) for l, m in zip(lams, mean_loss))
    return RidgeFit(beta, intercept, lam, curve)


def augmented_ridge(
    X, y, z_sub, K: int, lambda_grid=None, folds: int = 5, seed: int = 0
) -> RidgeFit:
    """Ridge on covariates plus unpenalized dummy encodings of the labels.

    The dummies span the intercept, so no separate intercept is added; for a
    fixed beta the optimal dummy coefficients are the within-class means of
    the current residual, which reduces the problem to ridge on group-mean
    centered data. Empty classes simply drop out (their dummy column is zero)
    and get NaN coefficients.
    """
    X = as_matrix(X)
    y = as_vector(y, "y", length=X.shape[0])
    K = positive_int(K, "K")
    z = as_labels(z_sub, K, "z_sub", length=X.shape[0])
    folds = positive_int(folds, "folds")
    if folds < 2 or X.shape[0] < folds:
        raise InvalidArgument(f"need n >= folds >= 2, got n={X.shape[0]}, "
                              f"folds={folds}")
    lams = default_lambda_grid(X) if lambda_grid is None else np.sort(
        np.asarray(lambda_grid, dtype=float)
    )
    if lams.size == 0 or np.any(lams <= 0):
        raise InvalidArgument("lambda grid must be nonempty and positive")

    def center(Xs, ys, zs):
        gx, nonempty = _group_mean_matrix(Xs, zs, K)
        gy = np.bincount(zs, weights=ys, minlength=K + 1)[1:]
        counts = np.bincount(zs, minlength=K + 1)[1:]
        gym = np.zeros(K)
        gym[nonempty] = gy[nonempty] / counts[nonempty]
        gx0 = np.where(nonempty[:, None], gx, 0.0)
        return Xs - gx0[zs - 1], ys - gym[zs - 1], gx0, gym, nonempty

    losses = np.zeros((folds, lams.size))
    for f, val_idx in enumerate(_cv_folds(X.shape[0], folds, seed)):
        train = np.setdiff1d(np.arange(X.shape[0]), val_idx)
        Xc, yc, gx0, gym, nonempty = center(X[train], y[train], z[train])
        B = _solve_ridge_path(Xc, yc, lams)
        # validation points of a class unseen in training have zero centering,
        # i.e. they are scored against the fitted linear part alone
        zv = z[val_idx]
        pred = (X[val_idx] - gx0[zv - 1]) @ B + gym[zv - 1][:, None]
        losses[f] = np.mean((pred - y[val_idx][:, None]) ** 2, axis=0)
    mean_loss = losses.mean(axis=0)
    best = int(np.argmin(mean_loss))
    lam = float(lams[best])
    Xc, yc, gx0, gym, nonempty = center(X, y, z)
    beta = _solve_ridge_path(Xc, yc, np.array([lam]))[:, 0]
    resid = y - X @ beta
    gamma = np.full(K, np.nan)
    counts = np.bincount(z, minlength=K + 1)[1:]
    sums = np.bincount(z, weights=resid, minlength=K + 1)[1:]
    gamma[nonempty] = sums[nonempty] / counts[nonempty]
    curve = tuple((float(l), float(m)) for l, m in zip(lams, mean_loss))
    return RidgeFit(beta, 0.0, lam, curve, gamma=gamma)
