"""Flat key = value configuration, scenario presets and run assembly.

Configs are line-oriented UTF-8 text: ``key = value`` with ``#`` comments.
A ``scenario`` key expands a shipped preset file first; keys from the user
file override the preset and command-line overrides apply last.  The fully
resolved configuration validates before any compute and can be serialized
back to the same format (the echo in summary.txt round-trips to an
identical SimConfig).
"""

from __future__ import annotations

import difflib
import math
import os
from dataclasses import dataclass, field as dc_field, replace
from importlib import resources

import numpy as np

from . import models as models_mod
from . import ou_sde
from .errors import ConfigurationError
from .fv_core import CFL_BOUND, SchemeOrder, TimeController
from .grid import DirichletFunction, NEUMANN_COPY, PERIODIC, StructuredMesh, read_raw
from .monte_carlo import SamplePlan, SampleRule
from .random_field import SpectralDensity

MODELS = ("scalar_ou", "acoustics2d", "induction2d")
SCENARIOS = ("paper-4.1", "paper-4.2", "paper-4.3")

# coefficient names per model, in parameter-index order
COEFFICIENTS = {
    "scalar_ou": ("a",),
    "acoustics2d": ("u0", "v0"),
    "induction2d": ("u", "v"),
}

_MEAN_EXPRS = ("zero", "induction-mean")


@dataclass(frozen=True)
class OUCoefficientConfig:
    theta: float = 1.0
    sigma: float = 1.0
    mu: str = "const:0"
    z0: str = "const:0"


@dataclass(frozen=True)
class SimConfig:
    model: str = "scalar_ou"
    scenario: str = ""
    mesh_nx: int = 64
    mesh_ny: int = 64
    order: int = 1
    cfl: float = 0.45
    t_end: float = 1.0
    h_factor: float = 0.5
    h_explicit: float = 0.0  # 0 means "derive from h_factor and the eig bound"
    integrator: str = "auto"
    ou: dict = dc_field(default_factory=dict)  # name -> OUCoefficientConfig
    grf_kind: str = "rational"
    grf_q: float = 2.0
    grf_l: float = 4.0
    grf_corr_length: float = 1.0
    grf_table_path: str = ""
    samples: SampleRule = SampleRule("explicit", m=16)
    seed: int = 0
    threads: str = "1"
    skip_failed: bool = False
    rho0: float = 1.0
    K0: float = 1.0
    formats: tuple = ("csv", "raw")
    plots: bool = True

    def resolved_integrator(self) -> str:
        if self.integrator != "auto":
            return self.integrator
        return "milstein" if self.order == 1 else "weak2"

    def resolved_threads(self) -> int:
        if self.threads == "auto":
            return os.cpu_count() or 1
        return max(1, int(self.threads))

    def to_lines(self) -> list[str]:
        lines = [f"model = {self.model}"]
        lines.append(f"mesh.nx = {self.mesh_nx}")
        lines.append(f"mesh.ny = {self.mesh_ny}")
        lines.append(f"fv.order = {self.order}")
        lines.append(f"fv.cfl = {self.cfl!r}")
        lines.append(f"fv.t_end = {self.t_end!r}")
        lines.append(f"sde.h_factor = {self.h_factor!r}")
        if self.h_explicit:
            lines.append(f"sde.h = {self.h_explicit!r}")
        lines.append(f"ou.integrator = {self.integrator}")
        for name in COEFFICIENTS[self.model]:
            c = self.ou[name]
            lines.append(f"ou.{name}.theta = {c.theta!r}")
            lines.append(f"ou.{name}.sigma = {c.sigma!r}")
            lines.append(f"ou.{name}.mu = {c.mu}")
            lines.append(f"ou.{name}.z0 = {c.z0}")
        if self.model != "scalar_ou":
            lines.append(f"grf.kind = {self.grf_kind}")
            if self.grf_kind == "rational":
                lines.append(f"grf.q = {self.grf_q!r}")
                lines.append(f"grf.l = {self.grf_l!r}")
            elif self.grf_kind == "exponential":
                lines.append(f"grf.corr_length = {self.grf_corr_length!r}")
            else:
                lines.append(f"grf.table_path = {self.grf_table_path}")
        if self.model == "acoustics2d":
            lines.append(f"acoustics.rho0 = {self.rho0!r}")
            lines.append(f"acoustics.K0 = {self.K0!r}")
        rule = self.samples
        if rule.kind == "explicit":
            lines.append(f"mc.samples = {rule.m}")
        else:
            lines.append(f"mc.samples = rule:kappa={rule.kappa!r}")
        lines.append(f"mc.seed = {self.seed}")
        lines.append(f"mc.threads = {self.threads}")
        lines.append(f"mc.skip_failed = {str(self.skip_failed).lower()}")
        lines.append(f"output.formats = {','.join(self.formats)}")
        lines.append(f"report.plots = {str(self.plots).lower()}")
        return lines

    def to_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


_KNOWN_KEYS = (
    "model", "scenario", "mesh.nx", "mesh.ny", "fv.order", "fv.cfl", "fv.t_end",
    "sde.h_factor", "sde.h", "ou.integrator",
    "grf.kind", "grf.q", "grf.l", "grf.corr_length", "grf.table_path",
    "mc.samples", "mc.seed", "mc.threads", "mc.skip_failed",
    "acoustics.rho0", "acoustics.K0", "output.formats", "report.plots",
)


def _is_known(key: str) -> bool:
    if key in _KNOWN_KEYS:
        return True
    parts = key.split(".")
    return len(parts) == 3 and parts[0] == "ou" and parts[2] in ("theta", "sigma", "mu", "z0")


def _suggest(key: str) -> str:
    pool = list(_KNOWN_KEYS) + [f"ou.<name>.{f}" for f in ("theta", "sigma", "mu", "z0")]
    near = difflib.get_close_matches(key, pool, n=1)
    return f" (did you mean {near[0]!r}?)" if near else ""


def _parse_lines(text: str, origin: str) -> dict[str, tuple[str, str]]:
    """key -> (value, location) with later duplicates overriding earlier."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{origin}:{ln}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _is_known(key):
            raise ConfigurationError(f"{origin}:{ln}: unknown key {key!r}{_suggest(key)}")
        out[key] = (value, f"{origin}:{ln}")
    return out


def _load_preset(name: str) -> dict[str, tuple[str, str]]:
    if name not in SCENARIOS:
        raise ConfigurationError(
            f"unknown scenario {name!r}, expected one of {', '.join(SCENARIOS)}")
    text = resources.files("stochfv.presets").joinpath(f"{name}.cfg").read_text()
    return _parse_lines(text, f"preset {name}")


def _convert(key: str, value: str, loc: str, kind, extra=""):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{loc}: invalid value {value!r} for {key}{extra}") from None


def _parse_bool(value: str) -> bool:
    v = value.lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(value)


def _parse_samples(value: str) -> SampleRule:
    if value.startswith("rule:"):
        spec = value[len("rule:"):]
        if not spec.startswith("kappa="):
            raise ValueError(value)
        return SampleRule("paper", kappa=float(spec[len("kappa="):]))
    return SampleRule("explicit", m=int(value))


def parse_config(path: str | None, overrides: list[str] | None = None) -> SimConfig:
    """Parse a config file plus key=value overrides into a validated SimConfig."""
    entries: dict[str, tuple[str, str]] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            entries = _parse_lines(fh.read(), str(path))
    for n, item in enumerate(overrides or [], start=1):
        if "=" not in item:
            raise ConfigurationError(f"override {n}: expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if not _is_known(key):
            raise ConfigurationError(f"override {n}: unknown key {key!r}{_suggest(key)}")
        entries[key] = (value, f"override {n}")

    scenario = entries.pop("scenario", ("", ""))[0]
    if scenario:
        merged = _load_preset(scenario)
        merged.update(entries)
        entries = merged
    return _resolve(entries, scenario)


def _resolve(entries: dict[str, tuple[str, str]], scenario: str) -> SimConfig:
    cfg = SimConfig(scenario=scenario)
    model = entries.get("model", (cfg.model, ""))[0]
    if model not in MODELS:
        raise ConfigurationError(
            f"unknown model {model!r}, expected one of {', '.join(MODELS)}")

    ou_cfg = {name: OUCoefficientConfig() for name in COEFFICIENTS[model]}
    simple = {}
    for key, (value, loc) in entries.items():
        parts = key.split(".")
        if parts[0] == "ou" and len(parts) == 3:
            name, attr = parts[1], parts[2]
            if name not in ou_cfg:
                raise ConfigurationError(
                    f"{loc}: coefficient {name!r} does not belong to model {model!r} "
                    f"(expects {', '.join(COEFFICIENTS[model])})")
            if attr in ("theta", "sigma"):
                ou_cfg[name] = replace(ou_cfg[name], **{attr: _convert(key, value, loc, float)})
            else:
                _validate_expr(key, value, loc, attr)
                ou_cfg[name] = replace(ou_cfg[name], **{attr: value})
        else:
            simple[key] = (value, loc)

    def take(key, default, kind):
        if key not in simple:
            return default
        value, loc = simple.pop(key)
        return _convert(key, value, loc, kind)

    cfg = replace(
        cfg,
        model=model,
        ou=ou_cfg,
        mesh_nx=take("mesh.nx", cfg.mesh_nx, int),
        mesh_ny=take("mesh.ny", cfg.mesh_ny, int),
        order=take("fv.order", cfg.order, int),
        cfl=take("fv.cfl", cfg.cfl, float),
        t_end=take("fv.t_end", cfg.t_end, float),
        h_factor=take("sde.h_factor", cfg.h_factor, float),
        h_explicit=take("sde.h", cfg.h_explicit, float),
        integrator=take("ou.integrator", cfg.integrator, str),
        grf_kind=take("grf.kind", cfg.grf_kind, str),
        grf_q=take("grf.q", cfg.grf_q, float),
        grf_l=take("grf.l", cfg.grf_l, float),
        grf_corr_length=take("grf.corr_length", cfg.grf_corr_length, float),
        grf_table_path=take("grf.table_path", cfg.grf_table_path, str),
        samples=take("mc.samples", cfg.samples, _parse_samples),
        seed=take("mc.seed", cfg.seed, int),
        threads=take("mc.threads", cfg.threads, str),
        skip_failed=take("mc.skip_failed", cfg.skip_failed, _parse_bool),
        rho0=take("acoustics.rho0", cfg.rho0, float),
        K0=take("acoustics.K0", cfg.K0, float),
        formats=take("output.formats", cfg.formats,
                     lambda v: tuple(s.strip() for s in v.split(",") if s.strip())),
        plots=take("report.plots", cfg.plots, _parse_bool),
    )
    simple.pop("model", None)
    if scenario == "paper-4.3" and "mc.samples" not in entries:
        # plain reading of the published M = 100 / dx sample rule
        cfg = replace(cfg, samples=SampleRule("explicit", m=int(math.ceil(100 * cfg.mesh_nx))))
    _validate(cfg)
    return cfg


def _validate_expr(key, value, loc, attr):
    if value.startswith("const:"):
        _convert(key, value[len("const:"):], loc, float)
        return
    allowed = _MEAN_EXPRS if attr == "mu" else _MEAN_EXPRS + ("mean",)
    if value not in allowed:
        raise ConfigurationError(
            f"{loc}: invalid value {value!r} for {key}; expected const:<v> or one of {allowed}")


def _validate(cfg: SimConfig):
    if cfg.mesh_nx < 1 or cfg.mesh_ny < 1:
        raise ConfigurationError("mesh resolution must be >= 1 per axis")
    if cfg.order not in (1, 2):
        raise ConfigurationError(f"fv.order must be 1 or 2, got {cfg.order}")
    if not (0.0 < cfg.cfl <= CFL_BOUND):
        raise ConfigurationError(f"fv.cfl must be in (0, {CFL_BOUND}], got {cfg.cfl}")
    if cfg.t_end < 0:
        raise ConfigurationError("fv.t_end must be >= 0")
    if cfg.h_factor <= 0:
        raise ConfigurationError("sde.h_factor must be > 0")
    if cfg.h_explicit < 0:
        raise ConfigurationError("sde.h must be > 0 when given")
    if cfg.integrator not in ("auto",) + ou_sde.INTEGRATORS:
        raise ConfigurationError(f"unknown ou.integrator {cfg.integrator!r}")
    if cfg.model == "induction2d" and cfg.order != 1:
        raise ConfigurationError("the induction scheme is first order only; set fv.order = 1")
    for name, c in cfg.ou.items():
        if c.theta <= 0:
            raise ConfigurationError(f"ou.{name}.theta must be > 0")
        if c.sigma < 0:
            raise ConfigurationError(f"ou.{name}.sigma must be >= 0")
        if c.mu == "induction-mean" and cfg.model == "scalar_ou":
            raise ConfigurationError("induction-mean is a 2-D expression")
    if cfg.grf_kind not in ("rational", "exponential", "table"):
        raise ConfigurationError(f"unknown grf.kind {cfg.grf_kind!r}")
    if cfg.grf_kind == "table" and cfg.model != "scalar_ou" and not cfg.grf_table_path:
        raise ConfigurationError("grf.kind = table needs grf.table_path")
    if cfg.threads != "auto":
        try:
            int(cfg.threads)
        except ValueError:
            raise ConfigurationError(f"mc.threads must be auto or an integer, got {cfg.threads!r}") from None
    for fmt in cfg.formats:
        if fmt not in ("csv", "raw"):
            raise ConfigurationError(f"unknown output format {fmt!r}")
    if not (cfg.rho0 > 0 and cfg.K0 > 0):
        raise ConfigurationError("acoustics.rho0 and acoustics.K0 must be positive")


# ---------------------------------------------------------------------------
# assembling runnable objects
# ---------------------------------------------------------------------------

def acoustic_boundary_source(x, y, z, t):
    """Left-boundary piston of the acoustics scenario: a sinusoidal velocity
    pulse through a slit |y - 1/2| < 0.05."""
    mask = np.abs(y - 0.5) < 0.05
    out = np.zeros((3,) + np.shape(x))
    out[1] = np.sin(4.0 * math.pi * t) * mask
    return out


def build_mesh(cfg: SimConfig) -> StructuredMesh:
    if cfg.model == "scalar_ou":
        return StructuredMesh(
            dims=(cfg.mesh_nx, 1, 1), spacing=(1.0 / cfg.mesh_nx, 1.0, 1.0))
    if cfg.model == "acoustics2d":
        source = DirichletFunction(acoustic_boundary_source)
        return StructuredMesh(
            dims=(cfg.mesh_nx, cfg.mesh_ny, 1),
            spacing=(1.0 / cfg.mesh_nx, 1.0 / cfg.mesh_ny, 1.0),
            boundary=((source, NEUMANN_COPY), (NEUMANN_COPY, NEUMANN_COPY),
                      (PERIODIC, PERIODIC)),
        )
    return StructuredMesh(
        dims=(cfg.mesh_nx, cfg.mesh_ny, 1),
        spacing=(1.0 / cfg.mesh_nx, 1.0 / cfg.mesh_ny, 1.0),
        origin=(-0.5, -0.5, 0.0),
    )


def _mean_values(expr: str, mesh: StructuredMesh, component: int):
    if expr.startswith("const:"):
        return float(expr[len("const:"):])
    if expr == "zero":
        return 0.0
    if expr == "induction-mean":
        X, Y, _ = mesh.cell_centers()
        return np.ascontiguousarray(models_mod.induction_mean_velocity(X, Y)[component])
    raise ConfigurationError(f"unknown mean expression {expr!r}")


def _ou_params(cfg: SimConfig, name: str, mesh: StructuredMesh,
               component: int) -> ou_sde.OUFieldParams:
    c = cfg.ou[name]
    mu = _mean_values(c.mu, mesh, component)
    if c.z0 == "mean":
        z0 = mu.copy() if isinstance(mu, np.ndarray) else mu
    else:
        z0 = _mean_values(c.z0, mesh, component)
    if isinstance(mu, np.ndarray) or isinstance(z0, np.ndarray):
        shape = mesh.dims[::-1]  # (K, J, I) to match field-noise shapes
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), shape).copy()
        z0 = np.broadcast_to(np.asarray(z0, dtype=np.float64), shape).copy()
    return ou_sde.OUFieldParams(theta=c.theta, sigma=c.sigma, mu=mu, z0=z0)


def build_density(cfg: SimConfig) -> SpectralDensity:
    if cfg.grf_kind == "rational":
        return SpectralDensity("rational", q=cfg.grf_q, l=cfg.grf_l)
    if cfg.grf_kind == "exponential":
        return SpectralDensity("exponential", corr_length=cfg.grf_corr_length)
    data, dims = read_raw(cfg.grf_table_path)
    return SpectralDensity("table", table=data[0])


def build_model(cfg: SimConfig, mesh: StructuredMesh):
    integrator = cfg.resolved_integrator()
    if cfg.model == "scalar_ou":
        return models_mod.ScalarAdvection(mesh, _ou_params(cfg, "a", mesh, 0),
                                          integrator=integrator)
    density = build_density(cfg)
    if cfg.model == "acoustics2d":
        return models_mod.Acoustics2D(
            mesh, models_mod.AcousticsParams(cfg.rho0, cfg.K0),
            _ou_params(cfg, "u0", mesh, 0), _ou_params(cfg, "v0", mesh, 1),
            density, integrator=integrator)
    return models_mod.Induction2D(
        mesh, _ou_params(cfg, "u", mesh, 0), _ou_params(cfg, "v", mesh, 1),
        density, integrator=integrator)


@dataclass
class RunSetup:
    cfg: SimConfig
    mesh: StructuredMesh
    model: object
    scheme: SchemeOrder
    controller: TimeController | None
    plan: SamplePlan


def build(cfg: SimConfig) -> RunSetup:
    mesh = build_mesh(cfg)
    model = build_model(cfg, mesh)
    scheme = SchemeOrder.of(cfg.order)
    controller = None
    if cfg.t_end > 0:
        if cfg.h_explicit > 0:
            h_target = cfg.h_explicit
        else:
            bound = model.wave_speed_bound(cfg.t_end)
            if bound <= 0:
                h_target = cfg.t_end
            else:
                h_target = cfg.h_factor * min(mesh.spacing[a] for a in mesh.active_axes) / bound
        controller = TimeController.from_target(cfg.t_end, h_target, cfg.cfl)
    plan = SamplePlan(rule=cfg.samples, base_seed=cfg.seed, order=cfg.order)
    return RunSetup(cfg, mesh, model, scheme, controller, plan)
