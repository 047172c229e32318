"""Scikit-learn style estimators wrapping the functional pipeline.

:class:`LatentClassRecovery` behaves like a clusterer: ``fit`` runs the
moment pipeline on unlabeled covariates, ``predict`` assigns nearest-mean
labels (1-based) and ``transform`` returns squared distances to the class
means, so the estimator drops into pipelines the same way KMeans does.
:class:`SubstituteAdjustedRegression` composes recovery with the per-
coordinate adjusted regression: after ``fit(X, y)`` the slope estimates are in
``coef_``. Both support ``get_params`` / ``set_params`` and clone.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from . import adjust, recover, spectral


class LatentClassRecovery(ClusterMixin, BaseEstimator):
    """Recover a discrete latent class from high-dimensional covariates.

    Parameters
    ----------
    n_classes : number of mixture components K.
    space : 'whitened' (default) or 'raw'; coordinate system of the
        nearest-mean assignment.
    restarts, iters, tol : tensor power method controls.
    tie_threshold : distances within this slack of the minimum count as tied
        and resolve to the smallest label.
    random_state : seed of the power-method restarts.

    Attributes (after fit)
    ----------------------
    means_ : (p, K) estimated class means in raw coordinates.
    whitened_means_ : (K, K) class means in whitened coordinates.
    weights_ : (K,) estimated class probabilities.
    whitening_ : the fitted :class:`substadj.spectral.WhiteningMap`.
    power_residual_ : Frobenius norm of the deflated tensor remainder.
    completion_ : diagnostics of the diagonal completion fixed point.
    labels_ : 1-based labels of the training data.
    """

    def __init__(
        self,
        n_classes=2,
        *,
        space=recover.SPACE_WHITENED,
        restarts=30,
        iters=100,
        tol=1e-8,
        tie_threshold=0.0,
        random_state=0,
    ):
        self.n_classes = n_classes
        self.space = space
        self.restarts = restarts
        self.iters = iters
        self.tol = tol
        self.tie_threshold = tie_threshold
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        opts = spectral.SpectralOptions(
            restarts=self.restarts,
            iters=self.iters,
            tol=self.tol,
            seed=self.random_state,
        )
        est, info = spectral.estimate_means(X, self.n_classes, opts)
        self.estimate_ = est
        self.completion_ = info
        self.means_ = est.raw_means
        self.whitened_means_ = est.whitened_means
        self.weights_ = est.weights
        self.whitening_ = est.whitening
        self.power_residual_ = est.power_residual
        self.labels_ = self.predict(X)
        return self

    def _check_fitted(self):
        if not hasattr(self, "estimate_"):
            raise NotFittedError("call fit before predict/transform")

    def predict(self, X):
        self._check_fitted()
        X = check_array(X, dtype=float)
        assignment = recover.assign_substitutes(
            X, self.estimate_, self.space, self.tie_threshold
        )
        return assignment.z_sub

    def transform(self, X):
        """Squared distances to each class mean in the assignment space."""
        self._check_fitted()
        X = check_array(X, dtype=float)
        return recover.assign_substitutes(
            X, self.estimate_, self.space, self.tie_threshold
        ).distances

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


class SubstituteAdjustedRegression(BaseEstimator):
    """Per-coordinate regression of y on x_i adjusted for the recovered class.

    ``fit(X, y)`` recovers substitute labels from X (or uses ``labels=`` when
    given) and computes, for every coordinate, the OLS slope of x_i in the
    dummy-encoded model ``y ~ x_i + class indicators``. Coordinates without
    within-class variation get NaN and are listed in ``degenerate_coords_``.
    """

    def __init__(
        self,
        n_classes=2,
        *,
        space=recover.SPACE_WHITENED,
        restarts=30,
        iters=100,
        tol=1e-8,
        tie_threshold=0.0,
        random_state=0,
    ):
        self.n_classes = n_classes
        self.space = space
        self.restarts = restarts
        self.iters = iters
        self.tol = tol
        self.tie_threshold = tie_threshold
        self.random_state = random_state

    def fit(self, X, y, labels=None):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if labels is None:
            self.recovery_ = LatentClassRecovery(
                self.n_classes,
                space=self.space,
                restarts=self.restarts,
                iters=self.iters,
                tol=self.tol,
                tie_threshold=self.tie_threshold,
                random_state=self.random_state,
            ).fit(X)
            labels = self.recovery_.labels_
        result = adjust.substitute_beta(X, y, labels, self.n_classes)
        self.labels_ = np.asarray(labels)
        self.coef_ = result.beta_sub
        self.class_means_y_ = result.group_means_y
        self.class_means_x_ = result.group_means_x
        self.skipped_classes_ = result.skipped_classes
        self.degenerate_coords_ = result.degenerate_coords
        return self
