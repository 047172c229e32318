"""Method-of-moments recovery of mixture means via tensor decomposition.

The population second moment of a K-class mixture with conditionally
independent coordinates splits as ``E[X X^T] = sum_z pi_z mu(z) mu(z)^T + D``
with ``D`` the diagonal of mixture-averaged conditional variances. Only the
off-diagonal of the low-rank part is observable without knowing ``D``, so the
diagonal is *completed* by a rank-K fixed point. A whitening matrix ``W`` (from
the top-K eigenpairs of the completed matrix) maps the data to K dimensions,
where the third-moment tensor restricted to distinct indices decomposes as

    T = sum_z pi_z (W^T mu(z))  (x)  (W^T mu(z))  (x)  (W^T mu(z)),

an orthogonally decomposable tensor with eigenpairs
``lambda_z = pi_z^{-1/2}``, ``v_z = sqrt(pi_z) W^T mu(z)``. The robust tensor
power method with deflation extracts the pairs; class weights are recovered as
``lambda_z^{-2}`` and raw-coordinate means as ``M2 W v_z lambda_z``.

Repeated-index entries of the empirical third moment mix in conditional
variances and third moments, so they are removed per sample by
inclusion-exclusion over index-coincidence patterns; see
:func:`whitened_third_moment`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import as_matrix, positive_int, readonly
from .exceptions import (
    DimensionMismatch,
    InvalidArgument,
    NonPositiveEigenvalue,
    RankDeficient,
)
from .model import MixtureSpec

#: Relative eigenvalue floor below which whitening is refused.
RANK_TOL = 1e-12


# --- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class CompletionInfo:
    """Diagnostics of the diagonal-completion fixed point."""

    n_iter: int
    max_change: float
    converged: bool


@dataclass(frozen=True)
class WhiteningMap:
    """Whitening of the completed second moment: W^T M2 W = I_K.

    ``second_moment`` keeps the completed p x p matrix so downstream steps can
    apply it without recomputing; ``eigenvalues`` are its top-K eigenvalues.
    """

    W: np.ndarray
    eigenvalues: np.ndarray
    completed_diagonal: np.ndarray
    second_moment: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "W", readonly(self.W))
        object.__setattr__(self, "eigenvalues", readonly(self.eigenvalues))
        object.__setattr__(
            self, "completed_diagonal", readonly(self.completed_diagonal)
        )

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    def whiten(self, X) -> np.ndarray:
        """Project rows of X to the K-dimensional whitened coordinates."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.W.shape[0]:
            raise DimensionMismatch(
                f"X has {X.shape[-1]} columns, whitening expects {self.W.shape[0]}"
            )
        return X @ self.W


@dataclass(frozen=True)
class WhitenedTensor:
    """Symmetric K x K x K moment tensor in whitened coordinates."""

    T: np.ndarray

    def __post_init__(self):
        T = readonly(self.T)
        if T.ndim != 3 or len(set(T.shape)) != 1:
            raise DimensionMismatch("tensor must be cubic (K, K, K)")
        object.__setattr__(self, "T", T)

    @property
    def order(self) -> int:
        return self.T.shape[0]


@dataclass(frozen=True)
class ComponentEstimate:
    """Estimated mixture components, columns indexed by class label - 1.

    ``alignment`` records the 1-based permutation last applied by
    :meth:`permuted` (labels are arbitrary until aligned to a reference).
    """

    raw_means: np.ndarray
    whitened_means: np.ndarray
    weights: np.ndarray
    power_residual: float
    whitening: Optional[WhiteningMap] = None
    alignment: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "raw_means", readonly(self.raw_means))
        object.__setattr__(self, "whitened_means", readonly(self.whitened_means))
        object.__setattr__(self, "weights", readonly(self.weights))

    @property
    def n_classes(self) -> int:
        return self.raw_means.shape[1]

    def permuted(self, perm) -> "ComponentEstimate":
        """Copy with columns reordered: new column z-1 = old column perm[z-1]-1.

        ``perm`` is a 1-based permutation of {1..K} as produced by
        :func:`substadj.recover.align_labels`.
        """
        idx = np.asarray(perm, dtype=int) - 1
        if sorted(idx.tolist()) != list(range(self.n_classes)):
            raise InvalidArgument("perm must be a permutation of 1..K")
        return ComponentEstimate(
            self.raw_means[:, idx],
            self.whitened_means[:, idx],
            self.weights[idx],
            self.power_residual,
            self.whitening,
            alignment=np.asarray(perm, dtype=int),
        )


@dataclass(frozen=True)
class PopulationMoments:
    """Exact moment structure of a MixtureSpec, used as an oracle.

    Provides the off-diagonal second moment, the full rank-K second moment,
    the coordinate correction vectors ``a_i = sum_z pi_z var_i(z) mu(z)`` that
    separate the raw third moment from its rank-K part, and entries of the
    rank-K third-moment tensor (which agree with ``E[X_i X_j X_k]`` exactly on
    distinct index triples).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def from_spec(cls, spec: MixtureSpec) -> "PopulationMoments":
        return cls(spec.weights, spec.means, spec.variances)

    @property
    def p(self) -> int:
        return self.means.shape[0]

    def second_moment_lowrank(self) -> np.ndarray:
        return (self.means * self.weights) @ self.means.T

    def second_moment_offdiag(self) -> np.ndarray:
        M = self.second_moment_lowrank()
        np.fill_diagonal(M, 0.0)
        return M

    def a_columns(self) -> np.ndarray:
        """(p, p) array whose column i is a_i = sum_z pi_z var_i(z) mu(z)."""
        return self.means @ (self.weights[:, None] * self.variances.T)

    def third_moment_entry(self, i1: int, i2: int, i3: int) -> float:
        """Entry of the rank-K tensor sum_z pi_z mu(z)^(x3), 0-based indices."""
        m = self.means
        return float(
            np.sum(self.weights * m[i1] * m[i2] * m[i3])
        )

    def third_moment_distinct(self, i1: int, i2: int, i3: int) -> float:
        """E[X_{i1} X_{i2} X_{i3}] for distinct indices (0-based)."""
        if len({i1, i2, i3}) != 3:
            raise InvalidArgument("indices must be distinct")
        return self.third_moment_entry(i1, i2, i3)

    def third_moment_lowrank(self) -> np.ndarray:
        """Full rank-K tensor; intended for small p oracles only."""
        return np.einsum(
            "z,iz,jz,kz->ijk", self.weights, self.means, self.means, self.means
        )

    def raw_third_moment(self) -> np.ndarray:
        """E[X (x) X (x) X]: the rank-K part plus the coordinate corrections."""
        T = self.third_moment_lowrank().copy()
        A = self.a_columns()
        # a_i (x) e_i (x) e_i and its two other placements
        for i in range(self.p):
            T[:, i, i] += A[:, i]
            T[i, :, i] += A[:, i]
            T[i, i, :] += A[:, i]
        return T

    def whitened_tensor(self, whitening: WhiteningMap) -> WhitenedTensor:
        """Contract the rank-K tensor with W on every mode (exact, any p)."""
        U = whitening.W.T @ self.means  # K x K, columns W^T mu(z)
        T = np.einsum("z,az,bz,cz->abc", self.weights, U, U, U)
        return WhitenedTensor(T)


# --- second moment completion and whitening ------------------------------------


def _top_k_eigh(M, K, warm=None, tol=1e-11, max_refine=60):
    """Top-K eigenpairs (descending) of a symmetric matrix.

    With a warm-start basis the pairs are refined by orthogonal iteration with
    Rayleigh-Ritz extraction, falling back to a dense solve if refinement does
    not reach ``tol``. Used inside the diagonal-completion fixed point where
    successive matrices differ only in the diagonal.
    """
    p = M.shape[0]
    if warm is not None:
        V = warm
        for _ in range(max_refine):
            Q, _ = np.linalg.qr(M @ V)
            B = Q.T @ (M @ Q)
            w, S = np.linalg.eigh(B)
            w = w[::-1]
            V = Q @ S[:, ::-1]
            resid = np.linalg.norm(M @ V - V * w, ord="fro")
            if resid <= tol * max(1.0, float(np.abs(w).max())):
                return w, V
    w_all, V_all = np.linalg.eigh(M)
    return w_all[-K:][::-1], V_all[:, -K:][:, ::-1]


def _complete_diagonal_impl(M_offdiag, K, tol, max_iter):
    M = M_offdiag.copy()
    np.fill_diagonal(M, 0.0)
    d = np.max(np.abs(M), axis=1)
    np.fill_diagonal(M, d)
    V = None
    max_change = np.inf
    info = None
    for it in range(1, max_iter + 1):
        w, V = _top_k_eigh(M, K, warm=V)
        d_new = np.einsum("ij,j,ij->i", V, w, V)
        max_change = float(np.max(np.abs(d_new - np.diagonal(M))))
        np.fill_diagonal(M, d_new)
        if max_change < tol:
            info = CompletionInfo(it, max_change, True)
            break
    if info is None:
        info = CompletionInfo(max_iter, max_change, False)
    # re-resolve the eigenpairs on the final matrix so W whitens it exactly
    w, V = _top_k_eigh(M, K, warm=V)
    return M, info, w, V


def complete_diagonal(M_offdiag, K, tol=1e-8, max_iter=100):
    """Fill the unknown diagonal of a rank-K matrix from its off-diagonal.

    Starting from the row-wise maximum-magnitude off-diagonal entry, alternate
    a top-K eigendecomposition with resetting the diagonal to that of the
    rank-K reconstruction, until the diagonal moves less than ``tol``. Exact
    in the population limit; non-convergence is reported through the returned
    :class:`CompletionInfo`, not raised.
    """
    M_offdiag = as_matrix(M_offdiag, "M_offdiag")
    K = positive_int(K, "K")
    p = M_offdiag.shape[0]
    if M_offdiag.shape[1] != p:
        raise DimensionMismatch("off-diagonal second moment must be square")
    M, info, _, _ = _complete_diagonal_impl(M_offdiag, K, tol, max_iter)
    return M, info


def offdiag_second_moment(X, K, tol=1e-8, max_iter=100):
    """Completed rank-K approximation of E[X X^T] from data.

    Off-diagonal entries are the empirical second moments ``mean_k x_i x_j``;
    the diagonal (which would mix in conditional variances) is replaced by the
    fixed-point completion of :func:`complete_diagonal`.
    """
    X = as_matrix(X)
    n, p = X.shape
    K = positive_int(K, "K")
    if n < 2:
        raise InvalidArgument(f"need n >= 2 samples, got {n}")
    if p < K + 1:
        raise InvalidArgument(f"need p >= K+1 coordinates, got p={p}, K={K}")
    M = (X.T @ X) / n
    np.fill_diagonal(M, 0.0)
    return complete_diagonal(M, K, tol=tol, max_iter=max_iter)


def _whitening_from_eigh(M2, K, w, V) -> WhiteningMap:
    if w[0] <= 0 or w[K - 1] <= RANK_TOL * w[0]:
        raise RankDeficient(
            f"K-th eigenvalue {w[K - 1]!r} is not positive relative to the "
            f"largest {w[0]!r}"
        )
    W = V / np.sqrt(w)
    return WhiteningMap(W, w, np.diagonal(M2).copy(), second_moment=M2)


def compute_whitening(M2, K) -> WhiteningMap:
    """W = U_K D_K^{-1/2} from the top-K eigenpairs of the completed moment."""
    M2 = as_matrix(M2, "M2")
    K = positive_int(K, "K")
    p = M2.shape[0]
    if M2.shape[1] != p:
        raise DimensionMismatch("M2 must be square")
    if K > p:
        raise RankDeficient(f"cannot whiten K={K} components in dimension p={p}")
    w, V = _top_k_eigh(M2, K)
    return _whitening_from_eigh(M2, K, w, V)


# --- whitened third moment ------------------------------------------------------


def whitened_third_moment(X, whitening: WhiteningMap) -> WhitenedTensor:
    """Distinct-index empirical third moment, contracted with W on each mode.

    For each sample x with u = W^T x the triple sum over distinct coordinate
    indices equals, by inclusion-exclusion over coincidence patterns,

        u (x) u (x) u  -  [P (x) u in its three pair placements]  +  2 Q,

    where ``P_ab = sum_i W_ia W_ib x_i^2`` and
    ``Q_abc = sum_i W_ia W_ib W_ic x_i^3``. Averaging over samples yields the
    sample analogue of the incomplete (repeated-index-free) tensor.
    """
    X = as_matrix(X)
    n, p = X.shape
    if p != whitening.W.shape[0]:
        raise DimensionMismatch(
            f"X has p={p} columns but whitening expects {whitening.W.shape[0]}"
        )
    W = whitening.W
    K = W.shape[1]
    U = X @ W
    X2 = X * X
    # S_all[a,b,c] = sum_k u_a u_b u_c
    UU = np.einsum("ka,kb->kab", U, U).reshape(n, K * K)
    S_all = (UU.T @ U).reshape(K, K, K)
    # PU[a,b,c] = sum_k P^k_ab u^k_c with P^k = W^T diag(x_k^2) W
    WW = np.einsum("ia,ib->iab", W, W).reshape(p, K * K)
    Pk = (X2 @ WW).reshape(n, K, K)
    PU = np.einsum("kab,kc->abc", Pk, U)
    # the three pair placements: P_ab u_c, P_ac u_b, P_bc u_a
    pair_sum = PU + np.einsum("acb->abc", PU) + np.einsum("bca->abc", PU)
    # Q[a,b,c] = sum_k sum_i W_ia W_ib W_ic x_ik^3
    s3 = np.einsum("ki,ki->i", X2, X)
    Q = (WW.T @ (W * s3[:, None])).reshape(K, K, K)
    T = (S_all - pair_sum + 2.0 * Q) / n
    # every permutation orbit shares the entry of its sorted index triple, so
    # the result is symmetric exactly, not merely up to rounding
    grid = np.indices((K, K, K))
    srt = np.sort(np.stack(grid, axis=-1), axis=-1)
    T = T[srt[..., 0], srt[..., 1], srt[..., 2]]
    return WhitenedTensor(T)


# --- tensor power method --------------------------------------------------------


def _apply_vv(T, v):
    return np.einsum("abc,b,c->a", T, v, v)


def tensor_power_decompose(
    tensor: WhitenedTensor,
    K: int,
    restarts: int = 30,
    iters: int = 100,
    tol: float = 1e-8,
    seed: int = 0,
) -> list[tuple[float, np.ndarray]]:
    """Robust tensor power method with deflation.

    For each of K rounds: run power iteration ``v <- T(I, v, v) / ||.||`` from
    ``restarts`` random unit starts, keep the start with the largest
    ``lambda = T(v, v, v)`` (ties broken toward the lowest restart index),
    refine the winner, orient so lambda > 0 and deflate
    ``T <- T - lambda v^(x3)``. Returns the K (lambda, v) pairs in extraction
    order; the Frobenius norm of the final deflated tensor is available via
    :func:`deflation_residual`.
    """
    K = positive_int(K, "K")
    restarts = positive_int(restarts, "restarts")
    T = tensor.T.copy()
    dim = T.shape[0]
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0x7e,)))
    )
    pairs = []
    for _ in range(K):
        starts = rng.standard_normal((restarts, dim))
        best_lam, best_v = -np.inf, None
        for r in range(restarts):
            v = starts[r]
            v = v / np.linalg.norm(v)
            v = _power_iterate(T, v, iters)
            lam = float(np.einsum("abc,a,b,c->", T, v, v, v))
            if lam < 0:
                lam, v = -lam, -v
            if lam > best_lam:
                best_lam, best_v = lam, v
        v = _power_iterate(T, best_v, iters)
        lam = float(np.einsum("abc,a,b,c->", T, v, v, v))
        if lam < 0:
            lam, v = -lam, -v
        if lam <= tol:
            raise NonPositiveEigenvalue(
                f"best eigenvalue {lam!r} <= tol {tol!r} after "
                f"{len(pairs)} deflations; effective rank < K"
            )
        pairs.append((lam, v))
        T -= lam * np.einsum("a,b,c->abc", v, v, v)
    return pairs


def _power_iterate(T, v, iters):
    for _ in range(iters):
        w = _apply_vv(T, v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v
        w /= norm
        if np.linalg.norm(w - v) < 1e-14:
            return w
        v = w
    return v


def deflation_residual(tensor: WhitenedTensor, pairs) -> float:
    """Frobenius norm of the tensor after removing all recovered rank-1 terms."""
    T = tensor.T.copy()
    for lam, v in pairs:
        T -= lam * np.einsum("a,b,c->abc", v, v, v)
    return float(np.linalg.norm(T.ravel()))


# --- component recovery -----------------------------------------------------------


def recover_components(pairs, whitening: WhiteningMap, power_residual=0.0):
    """Map whitened eigenpairs back to class weights and mean vectors.

    Weights are ``lambda_z^{-2}`` renormalized to sum one (they are also
    re-estimable as substitute class frequencies downstream; both are
    reported). Whitened means are ``lambda_z v_z`` and raw means apply the
    pseudo-inverse of W^T through the completed second moment:
    ``mu(z) = M2 W v_z lambda_z``.
    """
    if not pairs:
        raise InvalidArgument("need at least one eigenpair")
    lams = np.array([lam for lam, _ in pairs], dtype=float)
    if np.any(lams <= 0):
        raise NonPositiveEigenvalue("all eigenvalues must be positive")
    V = np.stack([v for _, v in pairs], axis=1)
    weights = lams ** -2.0
    weights = weights / weights.sum()
    whitened_means = V * lams
    if whitening.second_moment is not None:
        raw = whitening.second_moment @ whitening.W @ whitened_means
    else:
        raw = (whitening.W * whitening.eigenvalues) @ whitened_means
    return ComponentEstimate(
        raw, whitened_means, weights, float(power_residual), whitening
    )


@dataclass(frozen=True)
class SpectralOptions:
    """Knobs of the moment pipeline; defaults follow the power method's
    standard operating point."""

    restarts: int = 30
    iters: int = 100
    tol: float = 1e-8
    seed: int = 0
    completion_tol: float = 1e-8
    completion_max_iter: int = 100


def estimate_means(X, K, opts: SpectralOptions = SpectralOptions()):
    """One-call mean estimation: completion, whitening, tensor, recovery.

    Returns ``(ComponentEstimate, CompletionInfo)``. For K = 1 the mixture has
    a single component whose mean is simply the column average; the whitening
    is still produced so whitened-space assignment stays available.
    """
    X = as_matrix(X)
    n, p = X.shape
    K = positive_int(K, "K")
    if n < K:
        raise RankDeficient(f"cannot estimate K={K} components from n={n} samples")
    if n < 2:
        raise InvalidArgument(f"need n >= 2 samples, got {n}")
    if p < K + 1:
        raise InvalidArgument(f"need p >= K+1 coordinates, got p={p}, K={K}")
    M_emp = (X.T @ X) / n
    np.fill_diagonal(M_emp, 0.0)
    M2, info, w, V = _complete_diagonal_impl(
        M_emp, K, opts.completion_tol, opts.completion_max_iter
    )
    whitening = _whitening_from_eigh(M2, K, w, V)
    if K == 1:
        mean = X.mean(axis=0)[:, None]
        est = ComponentEstimate(
            mean, whitening.W.T @ mean, np.array([1.0]), 0.0, whitening
        )
        return est, info
    T = whitened_third_moment(X, whitening)
    pairs = tensor_power_decompose(
        T, K, restarts=opts.restarts, iters=opts.iters, tol=opts.tol,
        seed=opts.seed,
    )
    residual = deflation_residual(T, pairs)
    return recover_components(pairs, whitening, residual), info


# --- serialization ------------------------------------------------------------------


def component_to_json(est: ComponentEstimate) -> str:
    doc = {
        "K": est.n_classes,
        "p": est.raw_means.shape[0],
        "raw_means": est.raw_means.tolist(),
        "whitened_means": est.whitened_means.tolist(),
        "weights": est.weights.tolist(),
        "power_residual": est.power_residual,
    }
    if est.alignment is not None:
        doc["alignment"] = [int(v) for v in est.alignment]
    if est.whitening is not None:
        doc["whitening"] = {
            "W": est.whitening.W.tolist(),
            "eigenvalues": est.whitening.eigenvalues.tolist(),
            "completed_diagonal": est.whitening.completed_diagonal.tolist(),
        }
    return json.dumps(doc, indent=2)


def component_from_json(text: str) -> ComponentEstimate:
    doc = json.loads(text)
    whitening = None
    if doc.get("whitening") is not None:
        wd = doc["whitening"]
        whitening = WhiteningMap(
            np.asarray(wd["W"], dtype=float),
            np.asarray(wd["eigenvalues"], dtype=float),
            np.asarray(wd["completed_diagonal"], dtype=float),
        )
    alignment = doc.get("alignment")
    return ComponentEstimate(
        np.asarray(doc["raw_means"], dtype=float),
        np.asarray(doc["whitened_means"], dtype=float),
        np.asarray(doc["weights"], dtype=float),
        float(doc["power_residual"]),
        whitening,
        None if alignment is None else np.asarray(alignment, dtype=int),
    )
