"""Acceptance suite: one test per release criterion, reported as one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS/FAIL lines; the suite is self-contained and seeds every randomized check.
"""

import csv
import io
import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from substadj.adjust import (
    oracle_beta,
    projection_diff_norm,
    substitute_beta,
    theorem1_bound,
)
from substadj.config import ExperimentConfig
from substadj.diagnostics import (
    bhattacharyya_gaussian,
    kakutani_partial_sums,
    mislabel_bounds,
    separation,
)
from substadj.exceptions import DegenerateInputs
from substadj.experiments import (
    monte_carlo_mislabeling,
    run_mislabeling,
    run_mse,
)
from substadj.model import MixtureSpec
from substadj.recover import align_labels
from substadj.simulate import SimSeed, draw_mixture_spec
from substadj.spectral import (
    PopulationMoments,
    WhitenedTensor,
    WhiteningMap,
    complete_diagonal,
    compute_whitening,
    recover_components,
    tensor_power_decompose,
    whitened_third_moment,
)


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {num:02d}] {status} - {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def _aggregates(csv_text):
    lines = [ln for ln in csv_text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    return [r for r in rows if r["replication"] == "mean"]


def test_c01_exact_agreement_when_substitutes_equal_truth():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 201))
        K = int(rng.integers(1, 6))
        p = int(rng.integers(1, 8))
        z = rng.integers(1, K + 1, n)
        X = rng.normal(size=(n, p)) + 0.5 * z[:, None]
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        sub = substitute_beta(X, y, z, K).beta_sub
        orc = oracle_beta(X, y, z, K)
        gap = np.nanmax(np.abs(sub - orc)) if np.any(np.isfinite(sub)) else 0.0
        worst = max(worst, float(gap))
    _report(1, "substitute estimator is exact at zero mislabeling", worst <= 1e-12,
            f"max gap {worst:.2e} over 100 instances")


def _corrupted_instances(count, seed):
    """Non-degenerate labeled regression instances with forced mislabeling."""
    rng = np.random.default_rng(seed)
    made = 0
    attempts = 0
    while made < count and attempts < 20 * count:
        attempts += 1
        K = int(rng.choice([2, 5, 10]))
        n = int(rng.integers(50, 1001))
        z = rng.integers(1, K + 1, n)
        frac = rng.uniform(0.005, 0.30)
        n_flip = max(1, int(math.ceil(frac * n)))
        flip_at = rng.choice(n, size=n_flip, replace=False)
        zh = z.copy()
        shift = rng.integers(1, K, size=n_flip)
        zh[flip_at] = ((z[flip_at] - 1 + shift) % K) + 1
        counts = np.bincount(z, minlength=K + 1)[1:]
        counts_h = np.bincount(zh, minlength=K + 1)[1:]
        if counts.min() == 0 or counts_h.min() == 0:
            continue
        means = rng.normal(scale=2.0, size=K)
        x = means[z - 1] + rng.normal(size=n)
        y = rng.normal(size=n) + 0.7 * x + means[z - 1]
        made += 1
        yield n, K, x, y, z, zh


def test_c02_error_transfer_inequality_on_randomized_instances():
    checked = 0
    failures = 0
    for n, K, x, y, z, zh in _corrupted_instances(1000, seed=202):
        try:
            report = theorem1_bound(x[:, None], y, 1, z, zh, K)
        except DegenerateInputs:
            continue
        checked += 1
        if not report.holds_thm1:
            failures += 1
    _report(2, "coefficient gap bound holds on randomized corruptions",
            checked >= 1000 and failures == 0,
            f"{checked} non-degenerate instances, {failures} violations")


def test_c03_projection_norm_inequality_and_small_n_oracle():
    checked = failures = 0
    for n, K, x, y, z, zh in _corrupted_instances(1000, seed=303):
        norm_val, bound, holds = projection_diff_norm(z, zh, K)
        checked += 1
        if not holds:
            failures += 1
    # explicit projection-matrix oracle on small instances
    rng = np.random.default_rng(304)
    oracle_checked = 0
    worst = 0.0
    while oracle_checked < 200:
        n = int(rng.integers(2, 13))
        K = int(rng.integers(1, 4))
        z = rng.integers(1, K + 1, n)
        zh = rng.integers(1, K + 1, n)
        if np.bincount(z, minlength=K + 1)[1:].min() == 0:
            continue
        if np.bincount(zh, minlength=K + 1)[1:].min() == 0:
            continue
        norm_val, bound, holds = projection_diff_norm(z, zh, K)
        P = np.zeros((n, n))
        Ph = np.zeros((n, n))
        for labels, target in ((z, P), (zh, Ph)):
            Z = np.zeros((n, K))
            Z[np.arange(n), labels - 1] = 1.0
            target += Z @ np.linalg.pinv(Z)
        direct = float(np.linalg.norm(P - Ph, ord=2))
        worst = max(worst, abs(direct - norm_val))
        if not (holds and direct <= bound + 1e-12):
            failures += 1
        oracle_checked += 1
    _report(3, "projection difference is bounded by sqrt(2 delta/alpha)",
            checked >= 1000 and failures == 0 and worst <= 1e-9,
            f"{checked} instances + {oracle_checked} explicit-projection "
            f"oracles, max oracle gap {worst:.2e}")


def test_c04_mislabeling_rate_bounds_with_oracle_means():
    K = 10
    spec = draw_mixture_spec(K, 1000, 1.0, SimSeed(404))
    p_values = [50, 100, 200, 1000]
    mc = monte_carlo_mislabeling(spec, p_values, 100000, SimSeed(405))
    details = []
    ok = True
    for p in p_values:
        rate, se = mc[p]
        sep = separation(spec.means[:p]).sep_p
        bounds = mislabel_bounds(K, 1.0, sep, v_max=1.0)
        ok_p = (rate <= bounds.chebyshev + 3 * se
                and rate <= bounds.subgaussian + 3 * se)
        ok = ok and ok_p
        details.append(f"p={p}: rate={rate:.4f} cheb={bounds.chebyshev:.3f} "
                       f"subg={bounds.subgaussian:.2e}")
    _report(4, "Monte Carlo mislabeling respects both bounds", ok,
            "; ".join(details))


def _fig2_config(**overrides):
    base = dict(K=10, p_max=1000, n_max=1000, replications=10, base_seed=20240,
                mc_draws=1000)
    base.update(overrides)
    return ExperimentConfig(**base)


def test_c05_reference_mislabeling_rates_at_p125_and_p175():
    cfg = _fig2_config(mu_scales=[1.0], p_grid=[125, 175], n_grid=[1000])
    agg = {int(r["p"]): float(r["delta"]) for r in
           _aggregates(run_mislabeling(cfg))}
    ok125 = abs(agg[125] - 0.07) <= 0.02
    ok175 = abs(agg[175] - 0.02) <= 0.02
    _report(5, "large-sample rates match the reference values 7% and 2%",
            ok125 and ok175,
            f"measured delta(125)={agg[125]:.4f} vs 0.07+/-0.02, "
            f"delta(175)={agg[175]:.4f} vs 0.02+/-0.02; the 7% reference at "
            f"p=125 is unattainable for any consistent recovery at this "
            f"design: even classification by the true means errs at ~4e-5")


@pytest.fixture(scope="module")
def fig2_trend_csv():
    cfg = _fig2_config(mu_scales=[0.75, 1.0, 1.5],
                       p_grid=[50, 100, 200, 1000], n_grid=[500, 1000])
    return run_mislabeling(cfg)


def test_c06_mislabeling_trends_across_p_and_separation(fig2_trend_csv):
    agg = {
        (float(r["mu_scale"]), int(r["p"]), int(r["n"])): float(r["delta"])
        for r in _aggregates(fig2_trend_csv)
    }
    mu_scales = [0.75, 1.0, 1.5]
    p_grid = [50, 100, 200, 1000]
    violations = []
    for mu in mu_scales:
        for n in (500, 1000):
            series = [agg[(mu, p, n)] for p in p_grid]
            if not all(a >= b - 1e-12 for a, b in zip(series, series[1:])):
                violations.append(f"p-trend mu={mu} n={n}: {series}")
    for p in p_grid:
        for n in (500, 1000):
            series = [agg[(mu, p, n)] for mu in mu_scales]
            if not all(a >= b - 1e-12 for a, b in zip(series, series[1:])):
                violations.append(f"mu-trend p={p} n={n}: {series}")
    tight = agg[(1.5, 1000, 1000)]
    if not tight < 0.01:
        violations.append(f"delta(1.5,1000,1000)={tight}")
    _report(6, "mislabeling falls with dimension and separation",
            not violations,
            f"delta(1.5,p=1000,n=1000)={tight:.4f}" if not violations
            else "; ".join(violations))


def test_c07_estimation_error_trends_against_baselines():
    cfg = ExperimentConfig(
        K=10, p_max=1000, n_max=1000, replications=10, base_seed=20240,
        gamma_scales=[0.0, 100.0, 200.0], mse_p_grid=[125, 175],
        n_grid=[50, 1000], mc_draws=1000,
    )
    agg = {
        (int(r["p"]), int(r["n"]), float(r["gamma_scale"]), r["method"]):
        float(r["mse"])
        for r in _aggregates(run_mse(cfg))
    }
    violations = []
    shrink = agg[(175, 50, 0.0, "sub_adjust")] / agg[(175, 1000, 0.0,
                                                      "sub_adjust")]
    if not shrink >= 5.0:
        violations.append(f"n-trend factor {shrink:.2f} < 5")
    for p in (125, 175):
        for gamma in (100.0, 200.0):
            r = agg[(p, 1000, gamma, "ridge")]
            s = agg[(p, 1000, gamma, "sub_adjust")]
            a = agg[(p, 1000, gamma, "aug_ridge")]
            if not (r > s and r > a):
                violations.append(
                    f"ridge not dominated at p={p} gamma={gamma}: "
                    f"ridge={r:.4f} sub={s:.4f} aug={a:.4f}"
                )
    oracle_mean = np.mean([v for k, v in agg.items() if k[3] == "oracle"])
    sub_mean = np.mean([v for k, v in agg.items() if k[3] == "sub_adjust"])
    if not oracle_mean <= sub_mean:
        violations.append(f"oracle {oracle_mean:.4f} > sub {sub_mean:.4f}")
    _report(7, "adjusted estimator improves with n and beats ridge under "
               "confounding", not violations,
            "; ".join(violations) if violations else
            f"n-shrink factor {shrink:.1f}, oracle mean {oracle_mean:.4f} <= "
            f"sub mean {sub_mean:.4f}")


def test_c08_spectral_pipeline_correctness():
    rng = np.random.default_rng(808)
    # 1: random orthogonally decomposable tensors
    worst_odeco = 0.0
    for trial in range(100):
        K = int(rng.integers(1, 9))
        lams = rng.uniform(0.5, 4.0, K)
        Q, _ = np.linalg.qr(rng.normal(size=(K, K)))
        T = np.einsum("z,az,bz,cz->abc", lams, Q, Q, Q)
        pairs = tensor_power_decompose(WhitenedTensor(T), K, seed=trial)
        for lam, v in pairs:
            z = int(np.argmin(np.abs(lams - lam)))
            worst_odeco = max(
                worst_odeco,
                abs(lam - lams[z]),
                float(np.linalg.norm(np.abs(Q[:, z] @ v) - 1.0)),
            )
    ok1 = worst_odeco <= 1e-6
    # 2: brute-force distinct-index triple sums
    worst_triple = 0.0
    for p in (4, 6, 8):
        X = rng.normal(size=(30, p))
        W = rng.normal(size=(p, 3))
        wm = WhiteningMap(W, np.ones(3), np.ones(p))
        T = whitened_third_moment(X, wm).T
        M3 = np.zeros((p, p, p))
        for i1, i2, i3 in itertools.product(range(p), repeat=3):
            if len({i1, i2, i3}) == 3:
                M3[i1, i2, i3] = np.mean(X[:, i1] * X[:, i2] * X[:, i3])
        oracle = np.einsum("ijk,ia,jb,kc->abc", M3, W, W, W)
        worst_triple = max(worst_triple, float(np.max(np.abs(T - oracle))))
    ok2 = worst_triple <= 1e-10
    # 3: exact population moments drive the full pipeline back to the means
    spec = draw_mixture_spec(4, 30, 1.2, SimSeed(809))
    pop = PopulationMoments.from_spec(spec)
    M, info = complete_diagonal(pop.second_moment_offdiag(), K=4)
    wm = compute_whitening(M, K=4)
    pairs = tensor_power_decompose(pop.whitened_tensor(wm), 4, seed=0)
    est = recover_components(pairs, wm)
    est = est.permuted(align_labels(spec.means, est.raw_means))
    worst_pop = float(np.max(np.abs(est.raw_means - spec.means)))
    ok3 = info.converged and worst_pop <= 1e-6
    _report(8, "tensor route recovers components exactly where it should",
            ok1 and ok2 and ok3,
            f"odeco err {worst_odeco:.2e}, triple-sum err {worst_triple:.2e}, "
            f"population err {worst_pop:.2e}")


def test_c09_gaussian_overlap_and_recoverability_series():
    rng = np.random.default_rng(909)
    # closed form vs quadrature
    worst_quad = 0.0
    for _ in range(100):
        mu1, mu2 = rng.normal(scale=2.0, size=2)
        s1, s2 = rng.uniform(0.1, 5.0, size=2)
        closed = bhattacharyya_gaussian(mu1, s1, mu2, s2)
        f = norm(mu1, math.sqrt(s1)).pdf
        g = norm(mu2, math.sqrt(s2)).pdf
        lo = min(mu1 - 14 * math.sqrt(s1), mu2 - 14 * math.sqrt(s2))
        hi = max(mu1 + 14 * math.sqrt(s1), mu2 + 14 * math.sqrt(s2))
        numeric = quad(lambda x: math.sqrt(f(x) * g(x)), lo, hi, limit=300)[0]
        worst_quad = max(worst_quad, abs(closed - numeric))
    ok1 = worst_quad <= 1e-8
    # per-coordinate identity between -log BC and the two series terms
    worst_identity = 0.0
    for _ in range(200):
        m1, m2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.2, 3.0, size=2)
        lhs = -math.log(bhattacharyya_gaussian(m1, v1, m2, v2))
        mean_term = (m1 - m2) ** 2 / (v1 + v2)
        var_term = math.log((v1 + v2) / (2.0 * math.sqrt(v1 * v2)))
        worst_identity = max(worst_identity,
                             abs(lhs - (0.5 * var_term + 0.25 * mean_term)))
    ok2 = worst_identity <= 1e-12
    # constructed verdict cases
    p = 1000
    const = MixtureSpec(
        2, np.array([0.5, 0.5]),
        np.column_stack([np.zeros(p), 0.5 * np.ones(p)]), np.ones((p, 2)),
    )
    basel = MixtureSpec(
        2, np.array([0.5, 0.5]),
        np.column_stack([np.zeros(p), 1.0 / np.arange(1, p + 1)]),
        np.ones((p, 2)),
    )
    v_const = kakutani_partial_sums(const, 1, 2, p).verdict
    v_basel = kakutani_partial_sums(basel, 1, 2, p).verdict
    ok3 = v_const == "Recoverable" and v_basel == "NotRecoverable"
    _report(9, "Gaussian overlap closed form and recoverability verdicts",
            ok1 and ok2 and ok3,
            f"quadrature err {worst_quad:.2e}, identity err "
            f"{worst_identity:.2e}, verdicts {v_const}/{v_basel}")


def test_c10_estimator_matches_dummy_encoded_normal_equations():
    rng = np.random.default_rng(1010)
    worst = 0.0
    checked = 0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        K = int(rng.integers(1, 4))
        p = int(rng.integers(1, 5))
        z = rng.integers(1, K + 1, n)
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        res = substitute_beta(X, y, z, K)
        Z = np.zeros((n, K))
        Z[np.arange(n), z - 1] = 1.0
        Z = Z[:, Z.sum(axis=0) > 0]
        for i in range(p):
            if i + 1 in res.degenerate_coords:
                continue
            design = np.column_stack([X[:, i], Z])
            coef, *_ = np.linalg.lstsq(design, y, rcond=None)
            worst = max(worst, abs(res.beta_sub[i] - coef[0]))
            checked += 1
    _report(10, "one-pass estimator equals explicit least squares",
            worst <= 1e-10, f"{checked} coordinates, max gap {worst:.2e}")
