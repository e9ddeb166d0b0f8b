"""Command line interface: run / sample / converge / oracle.

    stochfv run      --config c.cfg [--set k=v ...] [--out dir] [--seed s] [--threads n]
    stochfv sample   ... --index m
    stochfv converge ... --resolutions 32,64,128 [--reference oracle|finest]
    stochfv oracle   ...

Exit codes: 0 success, 2 configuration error, 3 numerical blowup, 4 I/O
error.  STOCHFV_THREADS is the fallback for --threads.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import convergence as conv_mod
from . import models as models_mod
from . import monte_carlo, oracle, report
from .errors import ConfigurationError, NumericalBlowupError
from .fv_core import CflStats
from .grid import Field, StructuredMesh, write_csv, write_raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochfv",
        description="Monte Carlo finite-volume moments for hyperbolic "
                    "conservation laws with random spatiotemporal flux coefficients",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (applied last, repeatable)")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, help="override mc.seed")
        p.add_argument("--threads", help="override mc.threads (int or auto)")
        p.add_argument("--skip-failed", action="store_true",
                       help="skip samples that blow up instead of aborting")
        p.add_argument("--no-plots", action="store_true",
                       help="do not render figures next to the delimited output")

    p_run = sub.add_parser("run", help="Monte Carlo mean/variance of the terminal state")
    common(p_run)

    p_sample = sub.add_parser("sample", help="one pathwise solution and its coefficients")
    common(p_sample)
    p_sample.add_argument("--index", type=int, default=0, help="sample index to replay")

    p_conv = sub.add_parser("converge", help="convergence table across resolutions")
    common(p_conv)
    p_conv.add_argument("--resolutions", required=True,
                        help="comma-separated ascending cell counts, e.g. 32,64,128")
    p_conv.add_argument("--reference", choices=("oracle", "finest"),
                        help="error reference (default: oracle for the scalar model, else finest)")

    p_oracle = sub.add_parser("oracle", help="closed-form moments of the scalar model")
    common(p_oracle)
    return parser


def _load_config(args) -> config_mod.SimConfig:
    cfg = config_mod.parse_config(args.config, args.set)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    threads = args.threads or os.environ.get("STOCHFV_THREADS")
    if threads:
        cfg = replace(cfg, threads=threads)
    if args.skip_failed:
        cfg = replace(cfg, skip_failed=True)
    if args.no_plots:
        cfg = replace(cfg, plots=False)
    config_mod._validate(cfg)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_field(field: Field, outdir: Path, stem: str, formats) -> None:
    if "csv" in formats:
        write_csv(outdir / f"{stem}.csv", field)
    if "raw" in formats:
        write_raw(outdir / f"{stem}.raw", field)


def _write_summary(path: Path, cfg: config_mod.SimConfig, setup, result) -> None:
    stats = result.stats
    lines = [
        "# stochfv run summary",
        f"# samples = {stats.samples}",
        f"# seed = {stats.seed}",
        f"# threads = {stats.threads}",
        f"# wall_time_s = {stats.wall_time:.6f}",
        f"# per_sample_s = {stats.per_sample_time:.6e}",
        f"# sde_intervals = {setup.controller.n_intervals}",
        f"# sde_h = {setup.controller.h!r}",
        f"# fv_steps = {stats.cfl.n_steps}",
        f"# min_dt = {stats.cfl.min_dt:.6e}",
        f"# max_cfl_sum = {stats.cfl.max_cfl_sum:.15g}",
        f"# cfl_violations = {stats.cfl.violations}",
        f"# skipped_samples = {len(stats.skipped)}",
        "",
        "# resolved configuration (parseable; re-parsing reproduces this run)",
    ]
    lines += cfg.to_lines()
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    outdir = _outdir(args)
    setup = config_mod.build(cfg)
    if setup.controller is None:
        raise ConfigurationError("fv.t_end must be > 0 for run")
    result = monte_carlo.run_mc(
        setup.model, setup.scheme, setup.controller, setup.plan,
        threads=cfg.resolved_threads(), skip_failed=cfg.skip_failed, progress=True)
    _write_field(result.mean, outdir, "mean", cfg.formats)
    _write_field(result.variance, outdir, "variance", cfg.formats)
    _write_summary(outdir / "summary.txt", cfg, setup, result)
    if cfg.plots:
        labels = report.component_labels(cfg.model, setup.model.components)
        report.render_field(result.mean, outdir / "mean.png", "mean", labels)
        report.render_field(result.variance, outdir / "variance.png", "variance", labels)
    print(f"run complete: M = {result.stats.samples}, wall = {result.stats.wall_time:.2f} s, "
          f"outputs in {outdir}")
    if result.stats.skipped:
        print(f"skipped {len(result.stats.skipped)} failed samples: "
              f"{result.stats.skipped[:10]}", file=sys.stderr)
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    outdir = _outdir(args)
    setup = config_mod.build(cfg)
    stats = CflStats()
    u, coeffs = models_mod.simulate_sample_with_coeffs(
        setup.model, setup.scheme, setup.controller, cfg.seed, args.index, stats)
    state = Field(setup.mesh, u)
    # coefficients live on the periodic synthesis mesh regardless of the
    # physical boundary tags
    coeff = Field(StructuredMesh(setup.mesh.dims, setup.mesh.spacing, setup.mesh.origin), coeffs)
    _write_field(state, outdir, "sample_state", cfg.formats)
    _write_field(coeff, outdir, "sample_coeff", cfg.formats)
    if cfg.plots:
        labels = report.component_labels(cfg.model, setup.model.components)
        report.render_field(state, outdir / "sample_state.png", f"sample {args.index}", labels)
        coeff_labels = tuple(s.name for s in setup.model.coefficient_specs)
        report.render_field(coeff, outdir / "sample_coeff.png",
                            f"coefficients, sample {args.index}", coeff_labels)
    print(f"sample {args.index} (seed {cfg.seed}) written to {outdir}")
    return 0


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    outdir = _outdir(args)
    try:
        resolutions = [int(s) for s in args.resolutions.split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid --resolutions {args.resolutions!r}") from None
    reference = args.reference or ("oracle" if cfg.model == "scalar_ou" else "finest")
    table = conv_mod.run_study(cfg, resolutions, reference,
                               threads=cfg.resolved_threads(), progress=True)
    lines = conv_mod.table_csv_lines(table)
    (outdir / "convergence.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if cfg.plots:
        labels = report.component_labels(cfg.model, table.components)
        report.render_convergence(table, outdir / "convergence.png", labels)
    for line in lines:
        print(line)
    return 0


def _oracle_params(cfg: config_mod.SimConfig) -> oracle.OracleParams:
    if cfg.model != "scalar_ou":
        raise ConfigurationError("the oracle subcommand applies to the scalar model")
    c = cfg.ou["a"]

    def const(expr, what):
        if expr == "zero":
            return 0.0
        if expr.startswith("const:"):
            return float(expr[len("const:"):])
        raise ConfigurationError(f"oracle needs a constant {what}, got {expr!r}")

    return oracle.OracleParams(mu=const(c.mu, "mean"), theta=c.theta, sigma=c.sigma,
                               a0=const(c.z0, "initial value"), t=cfg.t_end)


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    outdir = _outdir(args)
    params = _oracle_params(cfg)
    mesh = config_mod.build_mesh(cfg)
    x = mesh.axis_centers(0)
    mean = oracle.exact_mean(params, x)
    var = oracle.exact_second_moment(params, x)
    with open(outdir / "oracle.csv", "w", encoding="utf-8") as fh:
        fh.write("x,mean,variance\n")
        for row in zip(x, mean, var):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if cfg.plots:
        report.render_oracle(x, mean, var, outdir / "oracle.png")
    print(f"oracle moments at t = {params.t} written to {outdir / 'oracle.csv'}")
    return 0


_COMMANDS = {"run": cmd_run, "sample": cmd_sample, "converge": cmd_converge,
             "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except NumericalBlowupError as err:
        detail = ""
        if err.sample is not None:
            detail = f" (replay with: sample --index {err.sample} --seed {err.seed})"
        print(f"numerical blowup: {err}{detail}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
