"""Class-adjusted marginal regression and its error-transfer bounds.

For labels ``z`` (true or substitute) the coordinate-i estimator is the OLS
slope of x_i in the dummy-encoded model ``y ~ x_i + class indicators``:

    beta_i = sum_k (x_ik - mean_i(z_k)) (y_k - g(z_k))
             / sum_k (x_ik - mean_i(z_k))^2,

with ``mean_i(z)`` and ``g(z)`` the within-class means of x_i and y. All p
coordinates are computed in one pass by residualizing y and X against the
class-indicator projection (group-mean subtraction) and forming p independent
ratios.

The gap between the substitute-label and true-label estimators is controlled
by three observable quantities: the minimum class fraction ``alpha``, the
mislabeling rate ``delta`` and the residual-variation ratio ``rho``. The bound

    |beta_sub - beta_oracle| <= (2 sqrt(2) / rho^2) sqrt(delta / alpha)
                                 * ||y|| / ||x_i||

and the projection-difference inequality
``||P_Z - P_Zhat||_2 <= sqrt(2 delta / alpha)`` that drives it are both
evaluated as runtime-checkable reports.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import as_labels, as_matrix, as_vector, positive_int
from .exceptions import (
    DegenerateInputs,
    RankDeficient,
    ZeroNorm,
    ZeroResidualVariance,
)
from .recover import class_counts_alpha, mislabel_rate


@dataclass(frozen=True)
class EstimateResult:
    """Per-coordinate adjusted-regression estimates under one labeling.

    ``beta[i]`` is NaN exactly for the coordinates recorded in
    ``degenerate_coords`` (zero within-class residual variation); empty
    classes are listed in ``skipped_classes`` and their group means are NaN.
    """

    beta_sub: np.ndarray
    group_means_y: np.ndarray
    group_means_x: np.ndarray
    skipped_classes: tuple
    degenerate_coords: tuple
    beta_oracle: Optional[np.ndarray] = None

    def require_all_finite(self) -> "EstimateResult":
        if self.degenerate_coords:
            raise ZeroResidualVariance(
                "no within-class residual variation for coordinates "
                f"{self.degenerate_coords}"
            )
        return self


@dataclass(frozen=True)
class BoundReport:
    """Observable error-transfer quantities for one coordinate."""

    alpha: float
    delta: float
    rho: float
    bound_thm1: float
    observed_gap: float
    proj_norm: float
    proj_bound: float
    holds_thm1: bool
    holds_lemma: bool


def group_means(values, labels, K: int):
    """Within-class means; empty classes yield NaN and are flagged.

    Returns ``(means, empty_classes)`` with ``means`` of length K and
    ``empty_classes`` a tuple of 1-based labels with no members.
    """
    K = positive_int(K, "K")
    values = as_vector(values, "values")
    labels = as_labels(labels, K, "labels", length=values.shape[0])
    counts = np.bincount(labels, minlength=K + 1)[1:]
    sums = np.bincount(labels, weights=values, minlength=K + 1)[1:]
    means = np.full(K, np.nan)
    nonempty = counts > 0
    means[nonempty] = sums[nonempty] / counts[nonempty]
    empty = tuple(int(z) for z in np.nonzero(~nonempty)[0] + 1)
    return means, empty


def _group_mean_matrix(X, labels, K):
    """Column-wise within-class means: (K, p) matrix, NaN rows for empty z."""
    counts = np.bincount(labels, minlength=K + 1)[1:].astype(float)
    Z = np.zeros((labels.shape[0], K))
    Z[np.arange(labels.shape[0]), labels - 1] = 1.0
    sums = Z.T @ X
    means = np.full_like(sums, np.nan)
    nonempty = counts > 0
    means[nonempty] = sums[nonempty] / counts[nonempty, None]
    return means, nonempty


def adjusted_coefficients(X, y, labels, K: int) -> EstimateResult:
    """All-coordinate class-adjusted slopes for one labeling in one pass."""
    X = as_matrix(X)
    y = as_vector(y, "y", length=X.shape[0])
    K = positive_int(K, "K")
    labels = as_labels(labels, K, "labels", length=X.shape[0])
    gx, nonempty = _group_mean_matrix(X, labels, K)
    gy, empty = group_means(y, labels, K)
    # residualize against the class-indicator projection (empty classes have
    # no members, so their NaN means are never indexed)
    Xr = X - np.where(nonempty[:, None], gx, 0.0)[labels - 1]
    yr = y - np.where(nonempty, gy, 0.0)[labels - 1]
    denom = np.einsum("ki,ki->i", Xr, Xr)
    numer = Xr.T @ yr
    beta = np.full(X.shape[1], np.nan)
    ok = denom > 0.0
    beta[ok] = numer[ok] / denom[ok]
    degenerate = tuple(int(i) for i in np.nonzero(~ok)[0] + 1)
    return EstimateResult(
        beta_sub=beta,
        group_means_y=gy,
        group_means_x=gx.T,
        skipped_classes=empty,
        degenerate_coords=degenerate,
    )


def substitute_beta(X, y, z_sub, K: int) -> EstimateResult:
    """Adjusted slopes computed against substitute labels."""
    return adjusted_coefficients(X, y, z_sub, K)


def oracle_beta(X, y, z_true, K: int) -> np.ndarray:
    """Adjusted slopes computed against the true labels (benchmark)."""
    return adjusted_coefficients(X, y, z_true, K).beta_sub


def rho(x_i, z_true, z_sub, K: Optional[int] = None):
    """Residual-variation ratio of one coordinate under both labelings.

    ``rho = min(RSS_true, RSS_sub) / ||x_i||^2`` where each RSS removes the
    respective within-class means. Returns ``(rho, degenerate)``; degenerate
    means the coordinate has no residual variation within classes (rho = 0).
    """
    x_i = as_vector(x_i, "x_i")
    norm2 = float(x_i @ x_i)
    if norm2 == 0.0:
        raise ZeroNorm("x_i has zero norm")
    if K is None:
        K = int(max(np.max(z_true), np.max(z_sub)))
    value = None
    for labels in (z_true, z_sub):
        labels = as_labels(labels, K, "labels", length=x_i.shape[0])
        gm, _ = group_means(x_i, labels, K)
        resid = x_i - np.nan_to_num(gm)[labels - 1]
        rss = float(resid @ resid)
        value = rss if value is None else min(value, rss)
    r = value / norm2
    return r, (r == 0.0)


def projection_diff_norm(z_true, z_sub, K: int):
    """Spectral norm of the difference of the two class-indicator projections.

    Both labelings must have every class nonempty (full-rank dummies). The
    norm is computed from the K x K matrix of normalized co-label counts
    ``D^(-1/2) C Dhat^(-1/2)`` whose singular values are the cosines of the
    principal angles between the two indicator column spaces; for two
    equal-rank projections ``||P - Phat||_2 = sin(theta_max)``. No n x n
    matrix is formed. Returns ``(norm, bound, holds)`` with
    ``bound = sqrt(2 delta / alpha)``.
    """
    K = positive_int(K, "K")
    z_true = as_labels(z_true, K, "z_true")
    z_sub = as_labels(z_sub, K, "z_sub", length=z_true.shape[0])
    n = z_true.shape[0]
    n_true, n_sub, alpha = class_counts_alpha(z_true, z_sub, K)
    if alpha == 0.0:
        raise RankDeficient("empty class: indicator matrix loses rank")
    C = np.zeros((K, K))
    np.add.at(C, (z_true - 1, z_sub - 1), 1.0)
    A = C / np.sqrt(np.outer(n_true, n_sub))
    sigma = np.linalg.svd(A, compute_uv=False)
    sigma_min = float(np.clip(sigma.min(), 0.0, 1.0))
    norm = math.sqrt(max(0.0, 1.0 - sigma_min ** 2))
    delta = mislabel_rate(z_true, z_sub)
    bound = math.sqrt(2.0 * delta / alpha)
    return norm, bound, bool(norm <= bound)


def theorem1_bound(X, y, i: int, z_true, z_sub, K: Optional[int] = None) -> BoundReport:
    """Evaluate the error-transfer inequality for coordinate i (1-based).

    Raises :class:`DegenerateInputs` when ``alpha`` or ``rho`` vanishes; the
    bound is undefined there and callers should record the instance as
    skipped.
    """
    X = as_matrix(X)
    y = as_vector(y, "y", length=X.shape[0])
    if not 1 <= i <= X.shape[1]:
        raise DegenerateInputs(f"coordinate i={i} outside 1..{X.shape[1]}")
    if K is None:
        K = int(max(np.max(z_true), np.max(z_sub)))
    z_true = as_labels(z_true, K, "z_true", length=X.shape[0])
    z_sub = as_labels(z_sub, K, "z_sub", length=X.shape[0])
    _, _, alpha = class_counts_alpha(z_true, z_sub, K)
    if alpha == 0.0:
        raise DegenerateInputs("alpha = 0 (empty class)")
    x_i = X[:, i - 1]
    r, degenerate = rho(x_i, z_true, z_sub, K)
    if degenerate:
        raise DegenerateInputs("rho = 0 (no residual variation)")
    delta = mislabel_rate(z_true, z_sub)
    norm_y = float(np.linalg.norm(y))
    norm_x = float(np.linalg.norm(x_i))
    bound = (2.0 * math.sqrt(2.0) / r ** 2) * math.sqrt(delta / alpha) * (
        norm_y / norm_x
    )
    beta_sub = adjusted_coefficients(
        x_i[:, None], y, z_sub, K
    ).beta_sub[0]
    beta_orc = adjusted_coefficients(
        x_i[:, None], y, z_true, K
    ).beta_sub[0]
    gap = abs(float(beta_sub) - float(beta_orc))
    proj_norm, proj_bound, holds_lemma = projection_diff_norm(z_true, z_sub, K)
    return BoundReport(
        alpha=alpha,
        delta=delta,
        rho=r,
        bound_thm1=bound,
        observed_gap=gap,
        proj_norm=proj_norm,
        proj_bound=proj_bound,
        holds_thm1=bool(gap <= bound),
        holds_lemma=holds_lemma,
    )


def estimates_to_csv(rows) -> str:
    """CSV rows keyed by (replication, n, p, i) with method and estimate."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replication", "n", "p", "i", "method", "estimate"])
    for rep, n, p, i, method, value in rows:
        writer.writerow([rep, n, p, i, method, repr(float(value))])
    return buf.getvalue()
