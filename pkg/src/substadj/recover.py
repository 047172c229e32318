"""Substitute label assignment, label alignment and mislabeling accounting.

Substitutes are nearest-mean assignments, either in raw coordinates against
the estimated mean vectors or in whitened coordinates against the whitened
means (the default used by the sweep harness). Because spectral recovery
identifies components only up to permutation, estimated components are aligned
to a reference (the true means, in simulation) by minimum-cost bipartite
matching before any mislabeling quantity is computed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ._validation import as_labels, as_matrix, positive_int, readonly, readonly_int
from .exceptions import DimensionMismatch, InvalidArgument, LengthMismatch
from .spectral import ComponentEstimate

SPACE_RAW = "raw"
SPACE_WHITENED = "whitened"


@dataclass(frozen=True)
class Assignment:
    """Nearest-mean substitute labels with the distances that produced them."""

    z_sub: np.ndarray
    distances: np.ndarray
    space: str

    def __post_init__(self):
        object.__setattr__(self, "z_sub", readonly_int(self.z_sub))
        object.__setattr__(self, "distances", readonly(self.distances))

    @property
    def n(self) -> int:
        return self.z_sub.shape[0]

    @property
    def n_classes(self) -> int:
        return self.distances.shape[1]

    def min_distances(self) -> np.ndarray:
        return self.distances[np.arange(self.n), self.z_sub - 1]


def assign_substitutes(
    X, est: ComponentEstimate, space: str = SPACE_WHITENED,
    tie_threshold: float = 0.0,
) -> Assignment:
    """Assign each row of X to its nearest estimated class mean.

    ``space='raw'`` measures distances to the raw means in the original p
    coordinates; ``space='whitened'`` measures ||W^T x - whitened_mean||.
    Ties (distances within ``tie_threshold`` of the minimum) resolve to the
    smallest label so runs are reproducible.
    """
    X = as_matrix(X)
    if space == SPACE_RAW:
        means = est.raw_means
        if X.shape[1] != means.shape[0]:
            raise DimensionMismatch(
                f"X has p={X.shape[1]} columns, means have {means.shape[0]} rows"
            )
        pts = X
    elif space == SPACE_WHITENED:
        if est.whitening is None:
            raise InvalidArgument("whitened assignment requires a whitening map")
        pts = est.whitening.whiten(X)
        means = est.whitened_means
    else:
        raise InvalidArgument(f"unknown assignment space {space!r}")
    D = cdist(pts, means.T, "sqeuclidean")
    if tie_threshold > 0.0:
        z = np.argmax(D <= (D.min(axis=1, keepdims=True) + tie_threshold), axis=1)
    else:
        z = np.argmin(D, axis=1)  # first minimum = smallest label
    return Assignment(z + 1, D, space)


def align_labels(means_ref, means_est) -> np.ndarray:
    """Permutation matching estimated mean columns to reference columns.

    Returns the 1-based permutation ``perm`` minimizing
    ``sum_z || means_ref[:, z] - means_est[:, perm[z]] ||^2`` by optimal
    bipartite matching. ``ComponentEstimate.permuted(perm)`` then reorders the
    estimate so its column z matches reference column z.
    """
    means_ref = as_matrix(means_ref, "means_ref")
    means_est = as_matrix(means_est, "means_est")
    if means_ref.shape != means_est.shape:
        raise DimensionMismatch(
            f"shape mismatch {means_ref.shape} vs {means_est.shape}"
        )
    cost = cdist(means_ref.T, means_est.T, "sqeuclidean")
    _, cols = linear_sum_assignment(cost)
    return cols + 1


def relabel(labels, perm) -> np.ndarray:
    """Rewrite labels produced under the estimated order into reference order.

    If estimated column ``perm[z]`` corresponds to reference class z, a point
    labeled ``perm[z]`` becomes labeled z.
    """
    perm = np.asarray(perm, dtype=int)
    K = perm.shape[0]
    labels = as_labels(labels, K, "labels")
    inverse = np.empty(K, dtype=int)
    inverse[perm - 1] = np.arange(1, K + 1)
    return inverse[labels - 1]


def mislabel_rate(z_true, z_sub) -> float:
    """Fraction of samples whose substitute label differs from the truth."""
    z_true = np.asarray(z_true)
    z_sub = np.asarray(z_sub)
    if z_true.shape != z_sub.shape:
        raise LengthMismatch(
            f"label vectors differ in length: {z_true.shape} vs {z_sub.shape}"
        )
    if z_true.size == 0:
        raise InvalidArgument("empty label vectors")
    return float(np.mean(z_true != z_sub))


def class_counts_alpha(z_true, z_sub, K: int):
    """Per-class counts under both labelings and their minimum fraction.

    Returns ``(n_true, n_sub, alpha)`` where ``alpha`` is the smallest of the
    2K class counts divided by n. ``alpha == 0`` flags an empty class; it is
    reported, not raised.
    """
    K = positive_int(K, "K")
    z_true = as_labels(z_true, K, "z_true")
    z_sub = as_labels(z_sub, K, "z_sub", length=z_true.shape[0])
    n = z_true.shape[0]
    n_true = np.bincount(z_true, minlength=K + 1)[1:]
    n_sub = np.bincount(z_sub, minlength=K + 1)[1:]
    alpha = float(min(n_true.min(), n_sub.min()) / n)
    return n_true, n_sub, alpha


def assignment_to_csv(assignment: Assignment, z_true=None) -> str:
    """CSV export with columns k, z_true (when available), z_sub, min_distance."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["k"]
    if z_true is not None:
        z_true = as_labels(z_true, assignment.n_classes, "z_true",
                           length=assignment.n)
        header.append("z_true")
    header += ["z_sub", "min_distance"]
    writer.writerow(header)
    dmin = assignment.min_distances()
    for k in range(assignment.n):
        row = [k + 1]
        if z_true is not None:
            row.append(int(z_true[k]))
        row += [int(assignment.z_sub[k]), repr(float(dmin[k]))]
        writer.writerow(row)
    return buf.getvalue()
