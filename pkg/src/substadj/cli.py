"""Command-line entry point.

Subcommands
-----------
simulate   draw a design (mixture + outcomes) and write dataset CSV/NPZ + model JSON
estimate   recover class means and substitutes for a dataset file
fig2       mislabeling-rate sweep over (mu_scale, p, n)      -> fig2.csv
fig34      estimator MSE sweep over (p, n, gamma, method)    -> fig34.csv
bounds     inequality checks + oracle-means MC mislabeling   -> bounds.csv
kakutani   recoverability partial-sum curves per class pair  -> kakutani.csv
all        fig2 + fig34 + bounds + kakutani into one directory

Configuration comes from ``--config path.json`` (fields of ExperimentConfig);
any field can be overridden with a flag of the same name, e.g. ``--replications
3`` or ``--n-grid 50,1000``. Outputs are deterministic for a fixed config: a
manifest JSON with the config echo, per-replication seeds, wall-clock time and
output digests is written next to each artifact.

Exit codes: 0 success, 2 when any bound-check row reports a violated
inequality, 1 on hard errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import adjust, experiments, recover, spectral
from .config import ExperimentConfig, RunManifest, TOOL_VERSION, file_digest
from .exceptions import SubstadjError
from .model import model_to_json
from .simulate import (
    SimSeed,
    dataset_from_csv,
    dataset_to_csv,
    draw_mixture_spec,
    draw_outcome_spec,
    load_dataset_npz,
    save_dataset_npz,
    simulate_covariates,
    simulate_outcomes,
)

_LIST_FIELDS = {"mu_scales", "gamma_scales", "p_grid", "mse_p_grid", "n_grid",
                "bound_coords"}
_INT_LIST_FIELDS = {"p_grid", "mse_p_grid", "n_grid", "bound_coords"}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with ExperimentConfig fields")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _LIST_FIELDS:
            parser.add_argument(flag, type=str, default=None,
                                help=f"comma-separated override of {f.name}")
        elif f.type in ("bool", bool):
            parser.add_argument(flag, type=str, choices=("true", "false"),
                                default=None, help=f"override {f.name}")
        else:
            parser.add_argument(flag, type=str, default=None,
                                help=f"override {f.name}")


def _build_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is None:
            continue
        if f.name in _LIST_FIELDS:
            parts = [s for s in raw.split(",") if s]
            cast = int if f.name in _INT_LIST_FIELDS else float
            overrides[f.name] = [cast(s) for s in parts]
        elif f.type in ("bool", bool):
            overrides[f.name] = raw == "true"
        elif isinstance(getattr(cfg, f.name), int):
            overrides[f.name] = int(raw)
        elif isinstance(getattr(cfg, f.name), float):
            overrides[f.name] = float(raw)
        else:
            overrides[f.name] = raw
    if getattr(args, "split", False):
        overrides["split_mode"] = True
    return cfg.replaced(**overrides)


def _write_with_manifest(path: Path, text: str, cfg: ExperimentConfig,
                         command: str, elapsed: float) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    manifest = RunManifest(
        command=command,
        config=dataclasses.asdict(cfg),
        tool_version=TOOL_VERSION,
        replication_seeds=[
            [cfg.base_seed, rep] for rep in range(1, cfg.replications + 1)
        ],
        wall_clock_seconds=elapsed,
        output_digests={path.name: file_digest(path)},
    )
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        manifest.to_json() + "\n"
    )


def _cmd_sweep(args, runner, default_name: str) -> int:
    cfg = _build_config(args)
    out = Path(args.out) if args.out else Path(default_name)
    t0 = time.time()
    text = runner(cfg)
    _write_with_manifest(out, text, cfg, args.command, time.time() - t0)
    print(f"wrote {out}")
    if args.command == "bounds" and experiments.bounds_violations(text) > 0:
        print("bound violations detected", file=sys.stderr)
        return 2
    return 0


def _cmd_simulate(args) -> int:
    cfg = _build_config(args)
    seed = SimSeed(cfg.base_seed, 0)
    spec = draw_mixture_spec(cfg.K, cfg.p_max, args.mu_scale, seed.stream(1),
                             cfg.family)
    outcome = draw_outcome_spec(spec, args.gamma_scale, seed.stream(2),
                                cfg.noise_sd)
    data = simulate_covariates(spec, args.n, cfg.p_max, seed.stream(3))
    data = simulate_outcomes(data, spec, outcome, seed.stream(4))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".csv").write_text(dataset_to_csv(data))
    save_dataset_npz(prefix.with_suffix(".npz"), data)
    prefix.with_suffix(".model.json").write_text(model_to_json(spec, outcome))
    print(f"wrote {prefix.with_suffix('.csv')}, .npz and .model.json")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _build_config(args)
    path = Path(args.data)
    if path.suffix == ".npz":
        data = load_dataset_npz(path)
    else:
        data = dataset_from_csv(path.read_text(), n_classes=cfg.K)
    opts = spectral.SpectralOptions(restarts=cfg.restarts, iters=cfg.iters,
                                    tol=cfg.tol, seed=cfg.base_seed)
    est, info = spectral.estimate_means(data.X, cfg.K, opts)
    assignment = recover.assign_substitutes(
        data.X, est, cfg.assignment_space, cfg.tie_threshold
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".components.json").write_text(spectral.component_to_json(est))
    out.with_suffix(".assignment.csv").write_text(
        recover.assignment_to_csv(assignment, data.z_true)
    )
    written = [str(out.with_suffix(".components.json")), ".assignment.csv"]
    if data.y is not None:
        result = adjust.substitute_beta(data.X, data.y, assignment.z_sub, cfg.K)
        rows = [
            (1, data.n, data.p, i + 1, "sub_adjust", result.beta_sub[i])
            for i in range(data.p)
            if i + 1 not in result.degenerate_coords
        ]
        if data.z_true is not None:
            oracle = adjust.oracle_beta(data.X, data.y, data.z_true, cfg.K)
            rows += [
                (1, data.n, data.p, i + 1, "oracle", oracle[i])
                for i in range(data.p)
                if np.isfinite(oracle[i])
            ]
        out.with_suffix(".coefficients.csv").write_text(
            adjust.estimates_to_csv(rows)
        )
        written.append(".coefficients.csv")
    print(
        f"recovered {cfg.K} components (completion converged={info.converged}); "
        f"wrote {', '.join(written)}"
    )
    return 0


def _cmd_all(args) -> int:
    cfg = _build_config(args)
    outdir = Path(args.out) if args.out else Path("substadj-results")
    outdir.mkdir(parents=True, exist_ok=True)
    status = 0
    for name, runner in (
        ("fig2.csv", experiments.run_mislabeling),
        ("fig34.csv", experiments.run_mse),
        ("bounds.csv", experiments.run_bounds),
        ("kakutani.csv", experiments.run_kakutani),
    ):
        t0 = time.time()
        text = runner(cfg)
        _write_with_manifest(outdir / name, text, cfg, f"all:{name}",
                             time.time() - t0)
        print(f"wrote {outdir / name}")
        if name == "bounds.csv" and experiments.bounds_violations(text) > 0:
            status = 2
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="substadj",
        description="substitute adjustment for finite mixture models",
    )
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic design")
    p_sim.add_argument("--n", type=int, default=1000)
    p_sim.add_argument("--mu-scale", type=float, default=1.0)
    p_sim.add_argument("--gamma-scale", type=float, default=0.0)
    p_sim.add_argument("--out", type=str, default="dataset")
    _add_config_flags(p_sim)

    p_est = sub.add_parser("estimate", help="recover components from a dataset")
    p_est.add_argument("--data", type=str, required=True,
                       help="dataset .csv or .npz")
    p_est.add_argument("--out", type=str, default="estimate")
    _add_config_flags(p_est)

    for name, help_text in (
        ("fig2", "mislabeling-rate sweep"),
        ("fig34", "estimator MSE sweep"),
        ("bounds", "bound checks"),
        ("kakutani", "recoverability curves"),
        ("all", "run every sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--split", action="store_true",
                       help="recover on an independent draw (sets split_mode)")
        _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "fig2":
            return _cmd_sweep(args, experiments.run_mislabeling, "fig2.csv")
        if args.command == "fig34":
            return _cmd_sweep(args, experiments.run_mse, "fig34.csv")
        if args.command == "bounds":
            return _cmd_sweep(args, experiments.run_bounds, "bounds.csv")
        if args.command == "kakutani":
            return _cmd_sweep(args, experiments.run_kakutani, "kakutani.csv")
        if args.command == "all":
            return _cmd_all(args)
        raise SystemExit(f"unknown command {args.command!r}")
    except SubstadjError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
