import itertools

import numpy as np
import pytest

from substadj.exceptions import (
    InvalidArgument,
    NonPositiveEigenvalue,
    RankDeficient,
)
from substadj.model import MixtureSpec
from substadj.recover import align_labels
from substadj.simulate import SimSeed, draw_mixture_spec, simulate_covariates
from substadj.spectral import (
    ComponentEstimate,
    PopulationMoments,
    SpectralOptions,
    WhitenedTensor,
    WhiteningMap,
    complete_diagonal,
    component_from_json,
    component_to_json,
    compute_whitening,
    deflation_residual,
    estimate_means,
    offdiag_second_moment,
    recover_components,
    tensor_power_decompose,
    whitened_third_moment,
)


def random_spec(K, p, seed, mu_scale=1.0):
    return draw_mixture_spec(K, p, mu_scale, SimSeed(seed))


class TestDiagonalCompletion:
    def test_rank_one_all_ones_population(self):
        # single class with every mean 1: E[X]E[X]^T is the all-ones matrix
        M_off = np.ones((6, 6))
        np.fill_diagonal(M_off, 0.0)
        M, info = complete_diagonal(M_off, K=1)
        assert info.converged
        np.testing.assert_allclose(M, np.ones((6, 6)), atol=1e-7)

    def test_population_k2_eigenspace_matches_mean_span(self):
        spec = random_spec(2, 40, seed=42)
        pop = PopulationMoments.from_spec(spec)
        M, info = complete_diagonal(pop.second_moment_offdiag(), K=2)
        assert info.converged
        np.testing.assert_allclose(M, pop.second_moment_lowrank(), atol=1e-6)
        w, V = np.linalg.eigh(M)
        basis = V[:, -2:]
        # both mean vectors reproduce from the top-2 eigenspace
        for z in range(2):
            mu = spec.means[:, z]
            proj = basis @ (basis.T @ mu)
            np.testing.assert_allclose(proj, mu, atol=1e-6)

    def test_zero_column_completes_to_zero_diagonal(self):
        X = np.random.default_rng(0).normal(size=(200, 5))
        X[:, 2] = 0.0
        M, _ = offdiag_second_moment(X, K=2)
        assert abs(M[2, 2]) < 1e-12

    def test_preconditions(self):
        with pytest.raises(InvalidArgument):
            offdiag_second_moment(np.zeros((1, 5)), K=2)
        with pytest.raises(InvalidArgument):
            offdiag_second_moment(np.zeros((10, 2)), K=2)


class TestWhitening:
    def test_identity_second_moment_gives_orthogonal_w(self):
        wm = compute_whitening(np.eye(4), K=4)
        np.testing.assert_allclose(wm.W.T @ wm.W, np.eye(4), atol=1e-12)

    def test_rank_one_all_ones_contract(self):
        M = np.ones((4, 4))
        wm = compute_whitening(M, K=1)
        np.testing.assert_allclose(wm.W.T @ M @ wm.W, [[1.0]], atol=1e-10)

    def test_population_k2_whitening_contract(self):
        spec = random_spec(2, 30, seed=7)
        pop = PopulationMoments.from_spec(spec)
        M = pop.second_moment_lowrank()
        wm = compute_whitening(M, K=2)
        np.testing.assert_allclose(wm.W.T @ M @ wm.W, np.eye(2), atol=1e-8)

    def test_rank_deficient_rejected(self):
        M = np.outer(np.ones(5), np.ones(5))  # rank 1
        with pytest.raises(RankDeficient):
            compute_whitening(M, K=2)


def brute_force_whitened_tensor(X, W):
    """Triple loop over distinct coordinate indices; oracle for small p."""
    n, p = X.shape
    K = W.shape[1]
    M3 = np.zeros((p, p, p))
    for i1, i2, i3 in itertools.product(range(p), repeat=3):
        if len({i1, i2, i3}) == 3:
            M3[i1, i2, i3] = np.mean(X[:, i1] * X[:, i2] * X[:, i3])
    return np.einsum("ijk,ia,jb,kc->abc", M3, W, W, W)


class TestWhitenedThirdMoment:
    def test_single_sample_identity_whitening_by_enumeration(self):
        X = np.ones((1, 3))
        wm = WhiteningMap(np.eye(3), np.ones(3), np.ones(3))
        T = whitened_third_moment(X, wm).T
        for a, b, c in itertools.product(range(3), repeat=3):
            expected = 1.0 if len({a, b, c}) == 3 else 0.0
            assert T[a, b, c] == pytest.approx(expected, abs=1e-12)

    def test_zero_input_gives_zero_tensor(self):
        wm = WhiteningMap(np.eye(4), np.ones(4), np.ones(4))
        T = whitened_third_moment(np.zeros((5, 4)), wm).T
        assert np.all(T == 0.0)

    def test_exact_permutation_symmetry(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 6))
        M, _ = offdiag_second_moment(X, K=2)
        wm = compute_whitening(M, K=2)
        T = whitened_third_moment(X, wm).T
        for perm in itertools.permutations(range(3)):
            np.testing.assert_array_equal(T, np.transpose(T, perm))

    @pytest.mark.parametrize("p,K", [(4, 2), (6, 3), (8, 3)])
    def test_matches_brute_force_distinct_triple_sum(self, p, K):
        rng = np.random.default_rng(p * 10 + K)
        X = rng.normal(size=(40, p))
        W = rng.normal(size=(p, K))
        wm = WhiteningMap(W, np.ones(K), np.ones(p))
        T = whitened_third_moment(X, wm).T
        np.testing.assert_allclose(T, brute_force_whitened_tensor(X, W),
                                   atol=1e-10)


def odeco_tensor(lams, V):
    return np.einsum("z,az,bz,cz->abc", np.asarray(lams, float), V, V, V)


class TestTensorPowerMethod:
    def test_canonical_rank_one(self):
        T = np.zeros((3, 3, 3))
        T[0, 0, 0] = 1.0
        pairs = tensor_power_decompose(WhitenedTensor(T), K=1, seed=0)
        lam, v = pairs[0]
        assert lam == pytest.approx(1.0, abs=1e-10)
        assert lam * (v[0] ** 3) > 0
        np.testing.assert_allclose(np.abs(v), [1, 0, 0], atol=1e-10)

    def test_two_orthogonal_components(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        T = 2.0 * np.einsum("a,b,c->abc", a, a, a) + 3.0 * np.einsum(
            "a,b,c->abc", b, b, b
        )
        pairs = tensor_power_decompose(WhitenedTensor(T), K=2, seed=1)
        lams = sorted(lam for lam, _ in pairs)
        np.testing.assert_allclose(lams, [2.0, 3.0], atol=1e-8)
        assert deflation_residual(WhitenedTensor(T), pairs) < 1e-8

    def test_zero_tensor_rejected(self):
        with pytest.raises(NonPositiveEigenvalue):
            tensor_power_decompose(WhitenedTensor(np.zeros((2, 2, 2))), K=1)

    def test_random_odeco_recovery(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            K = int(rng.integers(2, 7))
            lams = np.sort(rng.uniform(0.5, 3.0, K))[::-1]
            Q, _ = np.linalg.qr(rng.normal(size=(K, K)))
            T = odeco_tensor(lams, Q)
            pairs = tensor_power_decompose(WhitenedTensor(T), K, seed=trial)
            got = np.sort([lam for lam, _ in pairs])[::-1]
            np.testing.assert_allclose(got, lams, atol=1e-6)
            for lam, v in pairs:
                z = int(np.argmin(np.abs(lams - lam)))
                align = abs(float(Q[:, z] @ v))
                assert align == pytest.approx(1.0, abs=1e-6)


class TestRecoverComponents:
    def test_equal_eigenvalues_give_uniform_weights(self):
        wm = WhiteningMap(np.eye(2), np.ones(2), np.ones(2))
        pairs = [(np.sqrt(2.0), np.array([1.0, 0.0])),
                 (np.sqrt(2.0), np.array([0.0, 1.0]))]
        est = recover_components(pairs, wm)
        np.testing.assert_allclose(est.weights, [0.5, 0.5])

    def test_population_pipeline_k1(self):
        spec = random_spec(1, 12, seed=9)
        pop = PopulationMoments.from_spec(spec)
        M = pop.second_moment_lowrank()
        wm = compute_whitening(M, K=1)
        T = pop.whitened_tensor(wm)
        pairs = tensor_power_decompose(T, K=1, seed=0)
        est = recover_components(pairs, wm)
        np.testing.assert_allclose(est.raw_means[:, 0], spec.means[:, 0],
                                   atol=1e-8)

    def test_population_pipeline_k3_matches_spec_means(self):
        spec = random_spec(3, 25, seed=10)
        pop = PopulationMoments.from_spec(spec)
        M_off = pop.second_moment_offdiag()
        M, info = complete_diagonal(M_off, K=3)
        assert info.converged
        wm = compute_whitening(M, K=3)
        T = pop.whitened_tensor(wm)
        pairs = tensor_power_decompose(T, K=3, seed=0)
        est = recover_components(pairs, wm)
        perm = align_labels(spec.means, est.raw_means)
        est = est.permuted(perm)
        np.testing.assert_allclose(est.raw_means, spec.means, atol=1e-6)
        np.testing.assert_allclose(est.weights, spec.weights, atol=1e-6)


class TestEstimateMeans:
    def test_k1_returns_column_averages(self):
        rng = np.random.default_rng(11)
        X = rng.normal(loc=2.0, size=(60, 5))
        est, _ = estimate_means(X, K=1)
        np.testing.assert_array_equal(est.raw_means[:, 0], X.mean(axis=0))
        np.testing.assert_array_equal(est.weights, [1.0])

    def test_fewer_samples_than_classes_rejected(self):
        with pytest.raises(RankDeficient):
            estimate_means(np.zeros((3, 10)), K=4)

    def test_whitening_contract_on_fitted_data(self):
        spec = random_spec(4, 60, seed=12)
        data = simulate_covariates(spec, 500, 60, SimSeed(13))
        est, info = estimate_means(data.X, 4, SpectralOptions(seed=2))
        assert info.converged
        wm = est.whitening
        gram = wm.W.T @ wm.second_moment @ wm.W
        assert np.linalg.norm(gram - np.eye(4)) <= 1e-8

    def test_coordinate_permutation_equivariance(self):
        spec = random_spec(3, 20, seed=14, mu_scale=1.5)
        data = simulate_covariates(spec, 600, 20, SimSeed(15))
        perm_cols = np.random.default_rng(16).permutation(20)
        est1, _ = estimate_means(data.X, 3, SpectralOptions(seed=4))
        est2, _ = estimate_means(data.X[:, perm_cols], 3, SpectralOptions(seed=4))
        # align components of the permuted fit against the permuted means
        label_perm = align_labels(est1.raw_means[perm_cols], est2.raw_means)
        est2 = est2.permuted(label_perm)
        np.testing.assert_allclose(est2.raw_means, est1.raw_means[perm_cols],
                                   atol=1e-5)

    def test_recovery_quality_on_standard_design(self):
        # n = p = 1000 at generous separation: all pairwise relative errors
        # stay below 1/10 in at least 9 of 10 seeded replications
        hits = 0
        for rep in range(10):
            spec = draw_mixture_spec(10, 1000, 1.5, SimSeed(100 + rep))
            data = simulate_covariates(spec, 1000, 1000, SimSeed(200 + rep))
            est, _ = estimate_means(data.X, 10, SpectralOptions(seed=rep))
            perm = align_labels(spec.means, est.raw_means)
            est = est.permuted(perm)
            err = np.linalg.norm(spec.means - est.raw_means, axis=0)
            ok = True
            for z in range(10):
                for v in range(10):
                    if z == v:
                        continue
                    d = np.linalg.norm(spec.means[:, z] - spec.means[:, v])
                    ok = ok and (err[z] / d <= 0.1)
            hits += ok
        assert hits >= 9


class TestPopulationMoments:
    def test_third_moment_agrees_on_distinct_indices(self):
        spec = random_spec(3, 6, seed=17)
        pop = PopulationMoments.from_spec(spec)
        raw = pop.raw_third_moment()
        low = pop.third_moment_lowrank()
        for i1, i2, i3 in itertools.product(range(6), repeat=3):
            if len({i1, i2, i3}) == 3:
                assert raw[i1, i2, i3] == pytest.approx(low[i1, i2, i3],
                                                        abs=1e-12)
                assert pop.third_moment_distinct(i1, i2, i3) == pytest.approx(
                    low[i1, i2, i3], abs=1e-12
                )

    def test_distinct_accessor_requires_distinct_indices(self):
        pop = PopulationMoments.from_spec(random_spec(2, 4, seed=18))
        with pytest.raises(InvalidArgument):
            pop.third_moment_distinct(1, 1, 2)

    def test_a_columns_formula(self):
        spec = random_spec(2, 5, seed=19)
        pop = PopulationMoments.from_spec(spec)
        A = pop.a_columns()
        for i in range(5):
            expected = sum(
                spec.weights[z] * spec.variances[i, z] * spec.means[:, z]
                for z in range(2)
            )
            np.testing.assert_allclose(A[:, i], expected, atol=1e-14)

    def test_empirical_moments_converge_to_population(self):
        # the completed second moment tracks the low-rank population matrix
        spec = random_spec(2, 10, seed=20)
        data = simulate_covariates(spec, 200000, 10, SimSeed(21))
        M, _ = offdiag_second_moment(data.X, K=2)
        pop = PopulationMoments.from_spec(spec)
        np.testing.assert_allclose(M, pop.second_moment_lowrank(), atol=0.05)


class TestComponentJson:
    def test_round_trip(self):
        spec = random_spec(2, 8, seed=22)
        data = simulate_covariates(spec, 300, 8, SimSeed(23))
        est, _ = estimate_means(data.X, 2, SpectralOptions(seed=5))
        back = component_from_json(component_to_json(est))
        np.testing.assert_allclose(back.raw_means, est.raw_means)
        np.testing.assert_allclose(back.whitened_means, est.whitened_means)
        np.testing.assert_allclose(back.weights, est.weights)
        assert back.power_residual == est.power_residual
        np.testing.assert_allclose(back.whitening.W, est.whitening.W)

    def test_permuted_reorders_columns(self):
        est = ComponentEstimate(
            np.array([[1.0, 2.0], [3.0, 4.0]]),
            np.array([[1.0, 0.0], [0.0, 1.0]]),
            np.array([0.25, 0.75]),
            0.0,
        )
        swapped = est.permuted([2, 1])
        np.testing.assert_array_equal(swapped.raw_means,
                                      [[2.0, 1.0], [4.0, 3.0]])
        np.testing.assert_array_equal(swapped.weights, [0.75, 0.25])


class TestAlignmentRecord:
    def test_permuted_records_the_permutation(self):
        est = ComponentEstimate(
            np.array([[1.0, 2.0]]), np.eye(2), np.array([0.5, 0.5]), 0.0
        )
        assert est.alignment is None
        swapped = est.permuted([2, 1])
        np.testing.assert_array_equal(swapped.alignment, [2, 1])
        back = component_from_json(component_to_json(swapped))
        np.testing.assert_array_equal(back.alignment, [2, 1])
