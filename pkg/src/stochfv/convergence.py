"""Convergence studies across mesh resolutions.

Errors are percent relative L2 norms of the mean and variance fields
against either the closed-form oracle (scalar model) or a finest-grid
reference run restricted to the coarse mesh by exact cell-block averaging.
Rates between successive rows are fitted as log(e1/e2)/log(dx1/dx2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import config as config_mod
from . import monte_carlo, oracle
from .errors import ConfigurationError
from .grid import Field, StructuredMesh


def restrict(fine: Field, coarse_mesh: StructuredMesh) -> Field:
    """Block-average a fine-grid field onto a coarser mesh (extents must
    divide exactly)."""
    m = fine.components
    If, Jf, Kf = fine.mesh.dims
    Ic, Jc, Kc = coarse_mesh.dims
    if If % Ic or Jf % Jc or Kf % Kc:
        raise ValueError(f"fine dims {fine.mesh.dims} are not multiples of coarse {coarse_mesh.dims}")
    ri, rj, rk = If // Ic, Jf // Jc, Kf // Kc
    data = fine.data.reshape(m, Kc, rk, Jc, rj, Ic, ri).mean(axis=(2, 4, 6))
    return Field(coarse_mesh, data)


@dataclass
class ConvergenceRow:
    resolution: int
    dx: float
    samples: int
    mean_err_pct: list[float]
    var_err_pct: list[float]
    mean_rate: list[float]
    var_rate: list[float]


@dataclass
class ConvergenceTable:
    reference: str
    components: int
    rows: list[ConvergenceRow]

    def fitted_rate(self, moment: str = "mean", component: int = 0) -> float:
        """Least-squares slope of log(error) vs log(dx) across all rows."""
        errs = [getattr(r, f"{moment}_err_pct")[component] for r in self.rows]
        dxs = [r.dx for r in self.rows]
        mask = [e > 0 for e in errs]
        x = np.log([d for d, m in zip(dxs, mask) if m])
        y = np.log([e for e, m in zip(errs, mask) if m])
        if x.size < 2:
            return math.nan
        return float(np.polyfit(x, y, 1)[0])


def _oracle_fields(cfg, mesh: StructuredMesh):
    c = cfg.ou["a"]
    params = oracle.OracleParams(
        mu=float(c.mu[len("const:"):]) if c.mu.startswith("const:") else 0.0,
        theta=c.theta, sigma=c.sigma,
        a0=float(c.z0[len("const:"):]) if c.z0.startswith("const:") else 0.0,
        t=cfg.t_end)
    x = mesh.axis_centers(0)
    mean = oracle.exact_mean(params, x)
    var = oracle.exact_second_moment(params, x)
    shape = (1,) + mesh.dims[::-1]
    return Field(mesh, mean.reshape(shape)), Field(mesh, var.reshape(shape))


def run_study(cfg, resolutions: list[int], reference: str = "oracle",
              threads: int = 1, progress: bool = False) -> ConvergenceTable:
    """Run the configured model at each resolution and tabulate errors.

    With ``reference = "finest"`` the last resolution is the reference run
    and errors are reported for the earlier rows; with ``"oracle"`` (scalar
    model only) every resolution is compared to the closed form.
    """
    if sorted(resolutions) != list(resolutions) or len(set(resolutions)) != len(resolutions):
        raise ValueError("resolutions must be ascending and distinct")
    if reference not in ("oracle", "finest"):
        raise ValueError(f"reference must be oracle or finest, got {reference!r}")
    if reference == "oracle" and cfg.model != "scalar_ou":
        raise ConfigurationError("the closed-form reference exists only for the scalar model")
    if len(resolutions) < 2:
        raise ValueError("need at least 2 ascending resolutions"
                         if reference == "oracle" else
                         "finest-reference needs at least 2 resolutions")

    runs = []
    for n in resolutions:
        run_cfg = dc_replace(cfg, mesh_nx=n, mesh_ny=n if cfg.model != "scalar_ou" else cfg.mesh_ny)
        setup = config_mod.build(run_cfg)
        result = monte_carlo.run_mc(setup.model, setup.scheme, setup.controller,
                                    setup.plan, threads=threads, progress=progress)
        runs.append((n, setup, result))

    if reference == "finest":
        error_runs = runs[:-1]
        _, ref_setup, ref_result = runs[-1]
    else:
        error_runs = runs

    m = runs[0][1].model.components
    rows = []
    for n, setup, result in error_runs:
        if reference == "oracle":
            ref_mean, ref_var = _oracle_fields(cfg, setup.mesh)
        else:
            ref_mean = restrict(ref_result.mean, setup.mesh)
            ref_var = restrict(ref_result.variance, setup.mesh)
        mean_err = [monte_carlo.error_report(result.mean, ref_mean, "l2", c).relative_percent
                    for c in range(m)]
        var_err = [monte_carlo.error_report(result.variance, ref_var, "l2", c).relative_percent
                   for c in range(m)]
        rows.append(ConvergenceRow(
            resolution=n, dx=setup.mesh.spacing[0], samples=result.stats.samples,
            mean_err_pct=mean_err, var_err_pct=var_err,
            mean_rate=[math.nan] * m, var_rate=[math.nan] * m))

    for prev, row in zip(rows, rows[1:]):
        scale = math.log(prev.dx / row.dx)
        for c in range(m):
            if prev.mean_err_pct[c] > 0 and row.mean_err_pct[c] > 0:
                row.mean_rate[c] = math.log(prev.mean_err_pct[c] / row.mean_err_pct[c]) / scale
            if prev.var_err_pct[c] > 0 and row.var_err_pct[c] > 0:
                row.var_rate[c] = math.log(prev.var_err_pct[c] / row.var_err_pct[c]) / scale
    return ConvergenceTable(reference=reference, components=m, rows=rows)


def table_csv_lines(table: ConvergenceTable) -> list[str]:
    m = table.components
    cols = ["resolution", "dx", "samples"]
    for c in range(m):
        cols += [f"mean_c{c}_rel_pct", f"mean_c{c}_rate"]
    for c in range(m):
        cols += [f"var_c{c}_rel_pct", f"var_c{c}_rate"]
    lines = [",".join(cols)]
    for r in table.rows:
        vals = [str(r.resolution), f"{r.dx:.17g}", str(r.samples)]
        for c in range(m):
            vals += [f"{r.mean_err_pct[c]:.17g}", f"{r.mean_rate[c]:.17g}"]
        for c in range(m):
            vals += [f"{r.var_err_pct[c]:.17g}", f"{r.var_rate[c]:.17g}"]
        lines.append(",".join(vals))
    return lines
