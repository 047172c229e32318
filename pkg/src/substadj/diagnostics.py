"""Separation and recoverability diagnostics for mixture specifications.

Three groups of quantities:

* Geometry of the class means: pairwise squared distances, their minimum
  (``sep(p)``) and the relative estimation errors ``R[z, v]`` that the
  mislabeling bounds require to stay below a threshold (default 1/10; any
  value below 1/4 works, with constants derived accordingly).
* Mislabeling-rate bounds: a Chebyshev bound ``C(r) K sigma2_max / sep(p)``
  and, for sub-Gaussian conditional distributions with variance factor
  ``v_max``, the bound ``K exp(-sep(p) / (S(r) v_max))``; at the default
  threshold r = 1/10 the constants are C = 25 and S = 50. Probability bounds
  are capped at 1.
* Gaussian recoverability: the per-coordinate Bhattacharyya coefficient has
  the closed form ``sqrt(2 s_z s_v / (s_z^2 + s_v^2)) *
  exp(-(m_z - m_v)^2 / (4 (s_z^2 + s_v^2)))`` and the class-z and class-v
  product measures are mutually singular (so the latent class is recoverable
  from infinitely many coordinates) exactly when the mean series
  ``sum (m_z - m_v)^2 / (s_z^2 + s_v^2)`` or the variance series
  ``sum log((s_z^2 + s_v^2) / (2 s_z s_v))`` diverges. Divergence of an
  infinite series is undecidable from finitely many terms, so the verdict is
  heuristic evidence (threshold plus growth of the partial sums, with a
  fitted tail-decay test) and the raw curves always accompany it.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import as_matrix, positive_int
from .exceptions import (
    CoincidentMeans,
    InvalidArgument,
    NonGaussianFamily,
)
from .model import MixtureSpec

#: Relative-error threshold the bound constants are derived from.
DEFAULT_R_THRESHOLD = 0.1

#: Partial sums above this value with positive growth count as diverging.
DEFAULT_DIVERGENCE_THRESHOLD = 10.0

#: Tail increments at or below this level count as fully converged.
TAIL_INCREMENT_TOL = 1e-12

VERDICT_RECOVERABLE = "Recoverable"
VERDICT_NOT_RECOVERABLE = "NotRecoverable"
VERDICT_INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SeparationReport:
    sep_p: float
    pairwise_sq_dists: np.ndarray
    strong_sep_slope: float


@dataclass(frozen=True)
class RelativeErrorReport:
    R: np.ndarray
    max_offdiag: float
    within_tenth: bool


@dataclass(frozen=True)
class MislabelBounds:
    chebyshev: float
    subgaussian: Optional[float]
    pairwise: Optional[np.ndarray]


@dataclass(frozen=True)
class KakutaniReport:
    mean_series_partial: np.ndarray
    var_series_partial: np.ndarray
    bc_products: np.ndarray
    verdict: str
    mean_state: str
    var_state: str


def separation(means) -> SeparationReport:
    """Pairwise squared distances between class means and their minimum."""
    means = as_matrix(means, "means")
    p, K = means.shape
    if K < 2:
        raise InvalidArgument("separation needs at least two classes")
    # direct differences avoid catastrophic cancellation near zero
    sq = np.zeros((K, K))
    for z in range(K):
        diff = means - means[:, z][:, None]
        sq[z] = np.einsum("iv,iv->v", diff, diff)
    sq = (sq + sq.T) / 2.0
    np.fill_diagonal(sq, 0.0)
    off = sq[~np.eye(K, dtype=bool)]
    sep_p = float(off.min())
    return SeparationReport(sep_p, sq, sep_p / p)


def relative_errors(means_true, means_est) -> RelativeErrorReport:
    """R[z, v] = ||mu(z) - est(z)|| / ||mu(z) - mu(v)||, zero diagonal.

    Columns must already be aligned (see :func:`substadj.recover.align_labels`).
    """
    means_true = as_matrix(means_true, "means_true")
    means_est = as_matrix(means_est, "means_est")
    if means_true.shape != means_est.shape:
        raise InvalidArgument(
            f"shape mismatch {means_true.shape} vs {means_est.shape}"
        )
    K = means_true.shape[1]
    if K < 2:
        raise InvalidArgument("relative errors need at least two classes")
    err = np.linalg.norm(means_true - means_est, axis=0)
    R = np.zeros((K, K))
    for z in range(K):
        for v in range(K):
            if z == v:
                continue
            d = float(np.linalg.norm(means_true[:, z] - means_true[:, v]))
            if d == 0.0:
                raise CoincidentMeans(
                    f"true means of classes {z + 1} and {v + 1} coincide"
                )
            R[z, v] = err[z] / d
    max_off = float(R.max()) if K > 1 else 0.0
    return RelativeErrorReport(R, max_off, bool(max_off <= 0.1))


def bound_constants(r_threshold: float = DEFAULT_R_THRESHOLD):
    """Constants of the mislabeling bounds for a relative-error threshold r.

    The nearest-mean decision margin survives estimation error by the factor
    ``c(r) = (1 - 2r)(1 - 4r) / 2`` provided r < 1/4, giving the Chebyshev
    constant ``((1 + 2r) / c)^2`` and the sub-Gaussian denominator
    ``2 (1 + 2r)^2 / c^2``; at r = 1/10 these are exactly 25 and 50.
    """
    if not 0.0 < r_threshold < 0.25:
        raise InvalidArgument(
            f"relative-error threshold must be in (0, 1/4), got {r_threshold}"
        )
    c = (1.0 - 2.0 * r_threshold) * (1.0 - 4.0 * r_threshold) / 2.0
    b_hi = 1.0 + 2.0 * r_threshold
    cheb = (b_hi / c) ** 2
    subg = 2.0 * b_hi ** 2 / c ** 2
    return cheb, subg


def mislabel_bounds(
    K: int,
    sigma2_max: float,
    sep_p: float,
    v_max: Optional[float] = None,
    pairwise_sq_dists=None,
    r_threshold: float = DEFAULT_R_THRESHOLD,
) -> MislabelBounds:
    """Upper bounds on P(substitute label != true label), capped at 1.

    Valid whenever all relative errors are at most ``r_threshold``. The
    sub-Gaussian bound needs a variance factor ``v_max``; the per-pair
    Chebyshev matrix needs the pairwise squared distances (e.g. from
    :func:`separation`).
    """
    K = positive_int(K, "K")
    if not sep_p > 0:
        raise InvalidArgument(f"sep_p must be > 0, got {sep_p}")
    if not sigma2_max > 0:
        raise InvalidArgument(f"sigma2_max must be > 0, got {sigma2_max}")
    cheb_const, subg_denom = bound_constants(r_threshold)
    chebyshev = min(1.0, cheb_const * K * sigma2_max / sep_p)
    subgaussian = None
    if v_max is not None:
        if not v_max > 0:
            raise InvalidArgument(f"v_max must be > 0, got {v_max}")
        subgaussian = min(1.0, K * math.exp(-sep_p / (subg_denom * v_max)))
    pairwise = None
    if pairwise_sq_dists is not None:
        d2 = np.asarray(pairwise_sq_dists, dtype=float)
        with np.errstate(divide="ignore"):
            pairwise = np.minimum(1.0, cheb_const * sigma2_max / d2)
        np.fill_diagonal(pairwise, 0.0)
    return MislabelBounds(chebyshev, subgaussian, pairwise)


def bhattacharyya_gaussian(mu1, s1sq, mu2, s2sq) -> float:
    """Overlap of two univariate Gaussians, in (0, 1]; 1 iff identical."""
    if not (s1sq > 0 and s2sq > 0):
        raise InvalidArgument("variances must be positive")
    s_sum = s1sq + s2sq
    prefactor = math.sqrt(2.0 * math.sqrt(s1sq * s2sq) / s_sum)
    return prefactor * math.exp(-((mu1 - mu2) ** 2) / (4.0 * s_sum))


def _classify_series(increments, partial, threshold):
    """Heuristic state of a nonnegative series: diverging/converged/inconclusive."""
    p = increments.shape[0]
    mid = p // 2
    tail = increments[mid:]
    growth = partial[-1] - (partial[mid - 1] if mid > 0 else 0.0)
    if partial[-1] > threshold and growth > 0:
        return "diverging"
    if tail.size and float(tail.max()) <= TAIL_INCREMENT_TOL:
        return "converged"
    pos = tail > 0
    if np.count_nonzero(pos) >= 2:
        idx = np.arange(mid + 1, p + 1, dtype=float)[pos]
        slope = np.polyfit(np.log(idx), np.log(tail[pos]), 1)[0]
        if -slope > 1.0:  # increments decay faster than 1/i: summable tail
            return "converged"
    return "inconclusive"


def kakutani_partial_sums(
    spec: MixtureSpec,
    z: int,
    v: int,
    p: Optional[int] = None,
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
) -> KakutaniReport:
    """Partial sums of the two Gaussian singularity series for classes z, v.

    The per-coordinate identity
    ``-log BC_i = var_term_i / 2 + mean_term_i / 4`` ties the Bhattacharyya
    products to the two series; all three curves are returned. Verdict:
    ``Recoverable`` when either series shows threshold-crossing growth,
    ``NotRecoverable`` when both have converged tails, else
    ``Inconclusive``.
    """
    if spec.family != "gaussian":
        raise NonGaussianFamily(
            f"recoverability series are Gaussian-only, spec family is "
            f"{spec.family!r}"
        )
    if z == v:
        raise InvalidArgument("classes must differ")
    K = spec.n_classes
    if not (1 <= z <= K and 1 <= v <= K):
        raise InvalidArgument(f"classes must lie in 1..{K}")
    p = spec.p_max if p is None else positive_int(p, "p")
    if p > spec.p_max:
        raise InvalidArgument(f"p={p} exceeds spec p_max={spec.p_max}")
    mz = spec.means[:p, z - 1]
    mv = spec.means[:p, v - 1]
    sz = spec.variances[:p, z - 1]
    sv = spec.variances[:p, v - 1]
    s_sum = sz + sv
    mean_inc = (mz - mv) ** 2 / s_sum
    var_inc = np.log(s_sum / (2.0 * np.sqrt(sz * sv)))
    bc = np.sqrt(2.0 * np.sqrt(sz * sv) / s_sum) * np.exp(-((mz - mv) ** 2)
                                                          / (4.0 * s_sum))
    mean_partial = np.cumsum(mean_inc)
    var_partial = np.cumsum(var_inc)
    bc_prod = np.cumprod(bc)
    mean_state = _classify_series(mean_inc, mean_partial, divergence_threshold)
    var_state = _classify_series(var_inc, var_partial, divergence_threshold)
    if "diverging" in (mean_state, var_state):
        verdict = VERDICT_RECOVERABLE
    elif mean_state == var_state == "converged":
        verdict = VERDICT_NOT_RECOVERABLE
    else:
        verdict = VERDICT_INCONCLUSIVE
    return KakutaniReport(
        mean_partial, var_partial, bc_prod, verdict, mean_state, var_state
    )


def report_to_json(report) -> str:
    """Serialize any diagnostics report dataclass; arrays become lists."""
    doc = {}
    for f in dataclasses.fields(report):
        value = getattr(report, f.name)
        doc[f.name] = value.tolist() if isinstance(value, np.ndarray) else value
    return json.dumps(doc, indent=2)


def kakutani_curves_to_csv(report: KakutaniReport) -> str:
    """Partial-sum curves as CSV rows (i, mean_partial, var_partial, bc_product)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", "mean_partial", "var_partial", "bc_product"])
    for i in range(report.mean_series_partial.shape[0]):
        writer.writerow([
            i + 1,
            repr(float(report.mean_series_partial[i])),
            repr(float(report.var_series_partial[i])),
            repr(float(report.bc_products[i])),
        ])
    return buf.getvalue()
