"""Config-driven sweeps: mislabeling rates, estimator MSE, bound checks.

Every sweep derives one independent random stream per (purpose, replication,
cell) triple from the config's base seed, so cells can run on a worker pool in
any order and still produce byte-identical CSV output; rows are emitted by a
single collector in a fixed order. The environment variable SUBSTADJ_THREADS
caps the pool size. One failed replication records an error code in its row
and never aborts the sweep.

Output files are CSV with a leading comment line naming the tool version and
the config digest; floats are written with shortest round-trip formatting so
byte identity is meaningful across runs.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.spatial.distance import cdist

from . import adjust, baselines, diagnostics, recover, spectral
from .config import ExperimentConfig, TOOL_VERSION
from .exceptions import SubstadjError
from .model import OutcomeSpec
from .simulate import SimSeed, draw_mixture_spec, simulate_covariates

# purpose tags for stream derivation (stream id = purpose<<40 | rep<<16 | cell)
_MEANS = 1
_COVARIATES = 2
_SPLIT_COVARIATES = 3
_BETA = 4
_NOISE = 5
_POWER = 6
_CV = 7
_MC = 8
_KAKUTANI = 9


def _stream(cfg: ExperimentConfig, purpose: int, rep: int = 0, cell: int = 0):
    return SimSeed(cfg.base_seed, (purpose << 40) | (rep << 16) | cell)


def _seed_tuple(cfg: ExperimentConfig, purpose: int, rep: int = 0, cell: int = 0):
    """Entropy tuple for components that take a seed rather than a SimSeed."""
    return (cfg.base_seed, (purpose << 40) | (rep << 16) | cell)


def max_workers() -> int:
    env = os.environ.get("SUBSTADJ_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parallel_map(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(cfg: ExperimentConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# substadj={TOOL_VERSION} config={cfg.digest()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _spectral_opts(cfg: ExperimentConfig, seed) -> spectral.SpectralOptions:
    # seed may be an entropy tuple; SeedSequence folds it in either way
    return spectral.SpectralOptions(
        restarts=cfg.restarts, iters=cfg.iters, tol=cfg.tol, seed=seed
    )


def _lambda_grid(cfg: ExperimentConfig, X) -> np.ndarray:
    n, p = X.shape
    scale = float(np.einsum("ij,ij->", X, X)) / (n * p)
    if scale <= 0:
        scale = 1.0
    return np.geomspace(
        cfg.ridge_grid_low * scale, cfg.ridge_grid_high * scale,
        cfg.ridge_grid_size,
    )


def _recover_aligned(cfg, spec, X_fit, X_assign, z_true, power_seed):
    """Estimate means on X_fit, align to the true means, label X_assign.

    Returns (delta, z_sub, est_aligned).
    """
    p = X_fit.shape[1]
    est, _ = spectral.estimate_means(X_fit, cfg.K, _spectral_opts(cfg, power_seed))
    perm = recover.align_labels(spec.means[:p], est.raw_means)
    est = est.permuted(perm)
    assignment = recover.assign_substitutes(
        X_assign, est, cfg.assignment_space, cfg.tie_threshold
    )
    delta = recover.mislabel_rate(z_true, assignment.z_sub)
    return delta, assignment.z_sub, est


# --- mislabeling sweep ----------------------------------------------------------

FIG2_COLUMNS = ("mu_scale", "p", "n", "replication", "delta", "error")


def _mislabeling_task(args):
    cfg, mu_idx, rep = args
    mu_scale = cfg.mu_scales[mu_idx]
    spec = draw_mixture_spec(
        cfg.K, cfg.p_max, mu_scale, _stream(cfg, _MEANS, rep, mu_idx), cfg.family
    )
    data = simulate_covariates(
        spec, cfg.n_max, cfg.p_max, _stream(cfg, _COVARIATES, rep, mu_idx)
    )
    fit_data = data
    if cfg.split_mode:
        fit_data = simulate_covariates(
            spec, cfg.n_max, cfg.p_max,
            _stream(cfg, _SPLIT_COVARIATES, rep, mu_idx),
        )
    rows = []
    for p_idx, p in enumerate(cfg.p_grid):
        for n_idx, n in enumerate(cfg.n_grid):
            cell = mu_idx * 10000 + p_idx * 100 + n_idx
            try:
                delta, _, _ = _recover_aligned(
                    cfg,
                    spec,
                    fit_data.X[:n, :p],
                    data.X[:n, :p],
                    data.z_true[:n],
                    power_seed=_seed_tuple(cfg, _POWER, rep, cell),
                )
                rows.append((mu_scale, p, n, rep, delta, None))
            except SubstadjError as exc:
                rows.append((mu_scale, p, n, rep, None, type(exc).__name__))
    return rows


def run_mislabeling(cfg: ExperimentConfig) -> str:
    """Mislabeling-rate sweep over (mu_scale, p, n); returns fig2 CSV text.

    Per replication one draw at (n_max, p_max) is shared by every (p, n) cell
    through leading sub-blocks, mirroring the nested design of the study.
    Aggregate rows (replication = 'mean') average the successful replications.
    """
    cfg.validate()
    tasks = [
        (cfg, mu_idx, rep)
        for mu_idx in range(len(cfg.mu_scales))
        for rep in range(1, cfg.replications + 1)
    ]
    results = _parallel_map(_mislabeling_task, tasks)
    rows = [row for chunk in results for row in chunk]
    rows.sort(key=lambda r: (cfg.mu_scales.index(r[0]), r[1], r[2], r[3]))
    aggregates = []
    for mu_scale in cfg.mu_scales:
        for p in cfg.p_grid:
            for n in cfg.n_grid:
                vals = [
                    r[4] for r in rows
                    if r[0] == mu_scale and r[1] == p and r[2] == n
                    and r[4] is not None
                ]
                if vals:
                    aggregates.append(
                        (mu_scale, p, n, "mean", float(np.mean(vals)), None)
                    )
    return render_csv(cfg, FIG2_COLUMNS, rows + aggregates)


# --- estimation-error sweep -------------------------------------------------------

FIG34_COLUMNS = ("p", "n", "gamma_scale", "replication", "method", "mse", "error")
METHODS = ("sub_adjust", "oracle", "ridge", "aug_ridge")


def _mse_task(args):
    cfg, rep = args
    spec = draw_mixture_spec(
        cfg.K, cfg.p_max, cfg.mse_mu_scale,
        _stream(cfg, _MEANS, rep, 999), cfg.family,
    )
    data = simulate_covariates(
        spec, cfg.n_max, cfg.p_max, _stream(cfg, _COVARIATES, rep, 999)
    )
    fit_data = data
    if cfg.split_mode:
        fit_data = simulate_covariates(
            spec, cfg.n_max, cfg.p_max, _stream(cfg, _SPLIT_COVARIATES, rep, 999)
        )
    beta = _stream(cfg, _BETA, rep).generator().uniform(-1.0, 1.0, cfg.p_max)
    offsets = np.arange(1, cfg.K + 1, dtype=float)
    outcomes = {}
    for g_idx, gamma in enumerate(cfg.gamma_scales):
        outcome = OutcomeSpec(beta, gamma * offsets, cfg.noise_sd)
        noise_rng = _stream(cfg, _NOISE, rep, g_idx).generator()
        eps = cfg.noise_sd * noise_rng.standard_normal(cfg.n_max)
        outcomes[gamma] = data.X @ beta + outcome.class_offsets[data.z_true - 1] + eps
    rows = []
    for p_idx, p in enumerate(cfg.mse_p_grid):
        beta_p = beta[:p]
        for n_idx, n in enumerate(cfg.n_grid):
            cell = p_idx * 100 + n_idx
            X = data.X[:n, :p]
            z_true = data.z_true[:n]
            try:
                _, z_sub, _ = _recover_aligned(
                    cfg, spec, fit_data.X[:n, :p], X, z_true,
                    power_seed=_seed_tuple(cfg, _POWER, rep, 20000 + cell),
                )
            except SubstadjError as exc:
                for gamma in cfg.gamma_scales:
                    for method in METHODS:
                        rows.append((p, n, gamma, rep, method, None,
                                     type(exc).__name__))
                continue
            grid = _lambda_grid(cfg, X)
            cv_seed = _seed_tuple(cfg, _CV, rep, cell)
            for gamma in cfg.gamma_scales:
                y = outcomes[gamma][:n]
                for method in METHODS:
                    try:
                        coef = _fit_method(
                            method, cfg, X, y, z_true, z_sub, grid, cv_seed
                        )
                        mse = float(np.mean((coef - beta_p) ** 2))
                        err = None if np.isfinite(mse) else "NonFiniteMSE"
                        rows.append((p, n, gamma, rep, method,
                                     mse if err is None else None, err))
                    except SubstadjError as exc:
                        rows.append((p, n, gamma, rep, method, None,
                                     type(exc).__name__))
    return rows


def _fit_method(method, cfg, X, y, z_true, z_sub, grid, cv_seed):
    if method == "sub_adjust":
        return adjust.substitute_beta(X, y, z_sub, cfg.K).beta_sub
    if method == "oracle":
        return adjust.oracle_beta(X, y, z_true, cfg.K)
    if method == "ridge":
        return baselines.ridge(X, y, grid, cfg.folds, seed=cv_seed).beta
    if method == "aug_ridge":
        return baselines.augmented_ridge(
            X, y, z_sub, cfg.K, grid, cfg.folds, seed=cv_seed
        ).beta
    raise ValueError(f"unknown method {method!r}")


def run_mse(cfg: ExperimentConfig) -> str:
    """Coefficient MSE sweep over (p, n, gamma_scale, method); fig34 CSV."""
    cfg.validate()
    tasks = [(cfg, rep) for rep in range(1, cfg.replications + 1)]
    results = _parallel_map(_mse_task, tasks)
    rows = [row for chunk in results for row in chunk]
    rows.sort(
        key=lambda r: (r[0], r[1], r[2], r[3], METHODS.index(r[4]))
    )
    aggregates = []
    for p in cfg.mse_p_grid:
        for n in cfg.n_grid:
            for gamma in cfg.gamma_scales:
                for method in METHODS:
                    vals = [
                        r[5] for r in rows
                        if r[:3] == (p, n, gamma) and r[4] == method
                        and r[5] is not None
                    ]
                    if vals:
                        aggregates.append(
                            (p, n, gamma, "mean", method, float(np.mean(vals)),
                             None)
                        )
    return render_csv(cfg, FIG34_COLUMNS, rows + aggregates)


# --- bound checks --------------------------------------------------------------------

BOUNDS_COLUMNS = (
    "record", "mode", "p", "n", "replication", "i",
    "alpha", "delta", "rho", "observed_gap", "bound_thm1",
    "proj_norm", "proj_bound", "holds_thm1", "holds_lemma",
    "mc_rate", "mc_se", "bound_chebyshev", "bound_subgaussian",
    "holds_chebyshev", "holds_subgaussian", "advisory", "error",
)


def _bounds_task(args):
    cfg, rep = args
    mode = "split" if cfg.split_mode else "shared"
    advisory = not cfg.split_mode
    spec = draw_mixture_spec(
        cfg.K, cfg.p_max, cfg.mse_mu_scale,
        _stream(cfg, _MEANS, rep, 555), cfg.family,
    )
    data = simulate_covariates(
        spec, cfg.n_max, cfg.p_max, _stream(cfg, _COVARIATES, rep, 555)
    )
    fit_data = data
    if cfg.split_mode:
        fit_data = simulate_covariates(
            spec, cfg.n_max, cfg.p_max, _stream(cfg, _SPLIT_COVARIATES, rep, 555)
        )
    beta = _stream(cfg, _BETA, rep, 555).generator().uniform(-1.0, 1.0, cfg.p_max)
    gamma = cfg.gamma_scales[0] if cfg.gamma_scales else 0.0
    noise_rng = _stream(cfg, _NOISE, rep, 555).generator()
    y_full = (
        data.X @ beta
        + gamma * np.arange(1, cfg.K + 1, dtype=float)[data.z_true - 1]
        + cfg.noise_sd * noise_rng.standard_normal(cfg.n_max)
    )
    n = cfg.n_max
    rows = []
    for p_idx, p in enumerate(cfg.p_grid):
        X = data.X[:n, :p]
        z_true = data.z_true[:n]
        y = y_full[:n]
        try:
            _, z_sub, _ = _recover_aligned(
                cfg, spec, fit_data.X[:n, :p], X, z_true,
                power_seed=_seed_tuple(cfg, _POWER, rep, 30000 + p_idx),
            )
        except SubstadjError as exc:
            for i in cfg.bound_coords:
                rows.append(
                    ("instance", mode, p, n, rep, i) + (None,) * 9
                    + (None,) * 6 + (advisory, type(exc).__name__)
                )
            continue
        for i in cfg.bound_coords:
            try:
                rep_b = adjust.theorem1_bound(X, y, i, z_true, z_sub, cfg.K)
                rows.append((
                    "instance", mode, p, n, rep, i,
                    rep_b.alpha, rep_b.delta, rep_b.rho,
                    rep_b.observed_gap, rep_b.bound_thm1,
                    rep_b.proj_norm, rep_b.proj_bound,
                    rep_b.holds_thm1, rep_b.holds_lemma,
                    None, None, None, None, None, None,
                    advisory, None,
                ))
            except SubstadjError as exc:
                rows.append(
                    ("instance", mode, p, n, rep, i) + (None,) * 9
                    + (None,) * 6 + (advisory, type(exc).__name__)
                )
    return rows


def monte_carlo_mislabeling(spec, p_values, draws, seed: SimSeed,
                            batch: int = 5000):
    """MC estimate of P(nearest-true-mean label != truth) for each p.

    One stream of draws at max(p_values) columns is shared across the
    p-values through prefixes. Returns {p: (rate, se)}.
    """
    p_top = max(p_values)
    rng = seed.generator()
    wrong = {p: 0 for p in p_values}
    done = 0
    while done < draws:
        b = min(batch, draws - done)
        z = rng.choice(spec.n_classes, size=b, p=spec.weights) + 1
        noise = rng.standard_normal((b, p_top))
        X = spec.means[:p_top, z - 1].T + np.sqrt(
            spec.variances[:p_top, z - 1]
        ).T * noise
        for p in p_values:
            D = cdist(X[:, :p], spec.means[:p].T, "sqeuclidean")
            zhat = np.argmin(D, axis=1) + 1
            wrong[p] += int(np.sum(zhat != z))
        done += b
    out = {}
    for p in p_values:
        rate = wrong[p] / draws
        out[p] = (rate, float(np.sqrt(rate * (1.0 - rate) / draws)))
    return out


def run_bounds(cfg: ExperimentConfig) -> str:
    """Error-transfer inequality checks plus oracle-means MC mislabeling.

    Instance rows evaluate the deterministic inequalities on pipeline output;
    mislabeling_mc rows compare a Monte Carlo mislabeling rate under the true
    means (zero relative error) against the Chebyshev and sub-Gaussian bounds,
    allowing three MC standard errors.
    """
    cfg.validate()
    tasks = [(cfg, rep) for rep in range(1, cfg.replications + 1)]
    results = _parallel_map(_bounds_task, tasks)
    rows = [row for chunk in results for row in chunk]
    rows.sort(key=lambda r: (r[2], r[4], r[5]))
    spec = draw_mixture_spec(
        cfg.K, cfg.p_max, cfg.mse_mu_scale, _stream(cfg, _MEANS, 1, 555),
        cfg.family,
    )
    mc = monte_carlo_mislabeling(
        spec, list(cfg.p_grid), cfg.mc_draws, _stream(cfg, _MC, 0, 0)
    )
    v_max = 1.0 if cfg.family == "gaussian" else None
    for p in cfg.p_grid:
        sep = diagnostics.separation(spec.means[:p])
        bounds = diagnostics.mislabel_bounds(
            cfg.K, spec.sigma2_max, sep.sep_p, v_max=v_max,
            r_threshold=cfg.r_threshold,
        )
        rate, se = mc[p]
        holds_cheb = rate <= bounds.chebyshev + 3.0 * se
        holds_subg = (
            None if bounds.subgaussian is None
            else rate <= bounds.subgaussian + 3.0 * se
        )
        rows.append((
            "mislabeling_mc", "oracle_means", p, None, None, None,
            None, None, None, None, None, None, None, None, None,
            rate, se, bounds.chebyshev, bounds.subgaussian,
            holds_cheb, holds_subg, False, None,
        ))
    return render_csv(cfg, BOUNDS_COLUMNS, rows)


def bounds_violations(csv_text: str) -> int:
    """Count rows whose holds_* flags are false (for the CLI exit code)."""
    lines = [ln for ln in csv_text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    bad = 0
    for row in reader:
        for key in ("holds_thm1", "holds_lemma", "holds_chebyshev",
                    "holds_subgaussian"):
            if row.get(key) == "false":
                bad += 1
                break
    return bad


# --- recoverability curves --------------------------------------------------------------

KAKUTANI_COLUMNS = ("z", "v", "i", "mean_partial", "var_partial",
                    "bc_product", "verdict")


def run_kakutani(cfg: ExperimentConfig, pairs=None) -> str:
    """Singularity-series curves for class pairs of the drawn design spec."""
    cfg.validate()
    spec = draw_mixture_spec(
        cfg.K, cfg.p_max, cfg.mse_mu_scale, _stream(cfg, _KAKUTANI, 1, 0),
        cfg.family,
    )
    if pairs is None:
        pairs = [
            (z, v)
            for z in range(1, cfg.K + 1)
            for v in range(z + 1, cfg.K + 1)
        ]
    rows = []
    for z, v in pairs:
        report = diagnostics.kakutani_partial_sums(
            spec, z, v, cfg.p_max,
            divergence_threshold=cfg.divergence_threshold,
        )
        for i in range(cfg.p_max):
            rows.append((
                z, v, i + 1,
                float(report.mean_series_partial[i]),
                float(report.var_series_partial[i]),
                float(report.bc_products[i]),
                report.verdict,
            ))
    return render_csv(cfg, KAKUTANI_COLUMNS, rows)
