"""The three stochastic conservation laws: scalar advection driven by a
space-independent OU coefficient, 2-D linear acoustics with a random
background velocity, and 2-D magnetic induction in symmetric form.

Each model supplies its flux/eigenstructure, a Riemann solver, the expected
wave-speed bound used to size the SDE interval, and a per-sample coefficient
driver.  Model objects are immutable after construction and shared read-only
across workers; all mutable per-sample state lives in the driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ou_sde, rng
from ._kernels import (
    acoustics_rhs_kernel,
    induction_rhs_kernel,
    scalar_sample_terminal,
)
from .errors import ConfigurationError, UnsupportedConfigurationError
from .fv_core import minmod_array, CflStats, SchemeOrder, TimeController, advance_interval
from .grid import Field, StructuredMesh, pad_array
from .random_field import GrfSampler, SpectralDensity, sample_grf_packed


# ---------------------------------------------------------------------------
# coefficient processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSpec:
    """One flux coefficient bound to its OU parameters.

    spatial=False is the space-independent case driven by scalar normals;
    spatial=True draws a fresh Gaussian random field per SDE step.
    """

    name: str
    params: ou_sde.OUFieldParams
    spatial: bool = True


class CoefficientDriver:
    """Per-sample owner of the coefficient paths of one realization."""

    def __init__(self, specs: Sequence[CoefficientSpec], mesh: StructuredMesh,
                 density: SpectralDensity | None, h: float, integrator: str,
                 seed: int, sample_index: int):
        self.specs = tuple(specs)
        self._states = []
        self._noise = []
        for p, spec in enumerate(self.specs):
            self._states.append(ou_sde.initial_state(spec.params, h, integrator))
            if spec.spatial:
                if density is None:
                    raise ConfigurationError(f"coefficient {spec.name!r} needs a spectral density")
                self._noise.append(GrfSampler(mesh, density, seed, sample_index, p))
            else:
                self._noise.append(rng.path_generator(seed, sample_index, p))
        # exactly two field coefficients with one density share a transform
        self._packed = (len(self.specs) == 2
                        and all(s.spatial for s in self.specs)
                        and density is not None)

    def current(self) -> tuple:
        """Frozen coefficient values Z^l for the current SDE interval."""
        return tuple(s.z for s in self._states)

    def advance(self):
        """One SDE step for every coefficient, each with fresh noise."""
        if self._packed:
            ga, gb = sample_grf_packed(self._noise[0], self._noise[1])
            self._states[0] = ou_sde.step(self._states[0], self.specs[0].params, ga)
            self._states[1] = ou_sde.step(self._states[1], self.specs[1].params, gb)
            return
        for p, spec in enumerate(self.specs):
            if spec.spatial:
                g = self._noise[p].sample_grf()
            else:
                g = float(self._noise[p].standard_normal())
            self._states[p] = ou_sde.step(self._states[p], spec.params, g)


# ---------------------------------------------------------------------------
# scalar advection: u_t + (a(t) u)_x = 0
# ---------------------------------------------------------------------------

def scalar_flux_upwind(u_l: float, u_r: float, a_face: float) -> float:
    """Upwind flux for the scalar transport: a*u_l when a >= 0 else a*u_r."""
    return a_face * u_l if a_face >= 0.0 else a_face * u_r


def indicator_cell_averages(mesh: StructuredMesh, lo: float, hi: float) -> np.ndarray:
    """Exact cell averages of the indicator of [lo, hi] on a 1-D mesh."""
    dx = mesh.spacing[0]
    x = mesh.axis_centers(0)
    left = x - 0.5 * dx
    right = x + 0.5 * dx
    overlap = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
    return overlap / dx


class ScalarAdvection:
    """OU-driven 1-D transport on a periodic mesh.

    The coefficient is spatially constant along every path, so the driver
    uses the space-independent scalar noise stream.
    """

    name = "scalar_ou"
    components = 1
    dim = 1
    conservative = True

    def __init__(self, mesh: StructuredMesh, ou: ou_sde.OUFieldParams,
                 u0: Callable | tuple[float, float] = (0.375, 0.625),
                 integrator: str = "milstein", source=None):
        if mesh.dims[1] != 1 or mesh.dims[2] != 1:
            raise ConfigurationError("scalar model is one-dimensional")
        if not mesh.is_periodic():
            raise UnsupportedConfigurationError("scalar scenario uses periodic boundaries")
        self.mesh = mesh
        self.ou = ou
        self.u0 = u0
        self.integrator = integrator
        self.source = source
        self.coefficient_specs = (CoefficientSpec("a", ou, spatial=False),)
        self.density = None

    def initial_state(self) -> np.ndarray:
        I = self.mesh.dims[0]
        if callable(self.u0):
            x = self.mesh.axis_centers(0)
            vals = np.asarray(self.u0(x), dtype=np.float64)
        else:
            vals = indicator_cell_averages(self.mesh, *self.u0)
        return vals.reshape(1, 1, 1, I).copy()

    def make_driver(self, h: float, seed: int, sample_index: int) -> CoefficientDriver:
        return CoefficientDriver(self.coefficient_specs, self.mesh, None, h,
                                 self.integrator, seed, sample_index)

    def wave_speed_bound(self, t_end: float = math.inf) -> float:
        """max over t of |E a(t)|; the expectation interpolates a0 -> mu."""
        return max(abs(float(np.max(np.abs(self.ou.z0)))),
                   abs(float(np.max(np.abs(self.ou.mu)))))

    def max_abs_eigs(self, coeffs) -> tuple[float, float, float]:
        return abs(float(coeffs[0])), 0.0, 0.0

    def interval_context(self, coeffs, order: int):
        return float(coeffs[0])

    def rhs(self, u: np.ndarray, ctx, t: float, order: int) -> np.ndarray:
        a = ctx
        data = u[0, 0, 0]
        g = 1 if order == 1 else 2
        up = np.concatenate([data[-g:], data, data[:g]])
        I = data.shape[0]
        if order == 1:
            ul = up[g - 1:g + I]
            ur = up[g:g + I + 1]
        else:
            d = np.diff(up)
            slope = minmod_array(d[:-1], d[1:])  # slope of padded cell c at index c-1
            ul = up[g - 1:g + I] + 0.5 * slope[g - 2:g + I - 1]
            ur = up[g:g + I + 1] - 0.5 * slope[g - 1:g + I]
        flux = a * ul if a >= 0.0 else a * ur
        out = -(np.diff(flux)) / self.mesh.spacing[0]
        if self.source is not None:
            X, Y, Z = self.mesh.cell_centers()
            out = out + np.asarray(self.source(X, Y, Z, t))[0, 0, 0]
        return out.reshape(u.shape)

    def run_sample(self, scheme: SchemeOrder, controller: TimeController,
                   seed: int, sample_index: int, stats: CflStats) -> np.ndarray:
        """Whole-sample fast path; numerically equivalent to the generic
        interval loop (pinned by tests)."""
        if self.source is not None:
            return simulate_intervals(self, scheme, controller, seed, sample_index, stats)
        gen = rng.path_generator(seed, sample_index, 0)
        L = controller.n_intervals
        h = controller.h
        a_path = np.empty(L)
        state = ou_sde.initial_state(self.ou, h, self.integrator)
        a_path[0] = state.z
        noise = gen.standard_normal(L - 1) if L > 1 else np.empty(0)
        for l in range(L - 1):
            state = ou_sde.step(state, self.ou, float(noise[l]))
            a_path[l + 1] = state.z
        u = self.initial_state()
        out, n_steps, min_dt, max_cfl = scalar_sample_terminal(
            u[0, 0, 0], a_path, h, self.mesh.spacing[0], controller.cfl_number, scheme.order)
        stats.n_steps += int(n_steps)
        stats.min_dt = min(stats.min_dt, float(min_dt))
        stats.max_cfl_sum = max(stats.max_cfl_sum, float(max_cfl))
        return out.reshape(u.shape)


# ---------------------------------------------------------------------------
# 2-D linear acoustics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcousticsParams:
    """Background density and bulk modulus; the sound speed is derived."""

    rho0: float = 1.0
    K0: float = 1.0

    def __post_init__(self):
        if not (self.rho0 > 0 and self.K0 > 0):
            raise ConfigurationError("rho0 and K0 must be positive")

    @property
    def c0(self) -> float:
        return math.sqrt(self.K0 / self.rho0)


def acoustics_matrix(w, background, params: AcousticsParams) -> np.ndarray:
    """Directional coefficient matrix A^w for state (p, u, v)."""
    wx, wy = w
    u0, v0 = background
    ub = u0 * wx + v0 * wy
    return np.array([
        [ub, wx * params.K0, wy * params.K0],
        [wx / params.rho0, ub, 0.0],
        [wy / params.rho0, 0.0, ub],
    ])


def acoustics_eigensystem(w, background, params: AcousticsParams):
    """Eigenvalues (ub -+ c0, ub) and the eigenvector matrix Q (columns are
    right eigenvectors, deterministic in the background velocity)."""
    wx, wy = w
    u0, v0 = background
    ub = u0 * wx + v0 * wy
    c0 = params.c0
    lams = np.array([ub - c0, ub, ub + c0])
    rc = params.rho0 * c0
    Q = np.array([
        [-rc, 0.0, rc],
        [wx, -wy, wx],
        [wy, wx, wy],
    ])
    return lams, Q


def acoustics_flux_hll(U_L, U_R, w, background, params: AcousticsParams) -> np.ndarray:
    """HLL flux resolving the outermost waves s_L = lambda_1, s_R = lambda_3,
    with the middle flux fixed by conservation."""
    wx, wy = w
    if not math.isclose(math.hypot(wx, wy), 1.0, rel_tol=1e-12):
        raise ValueError("face normal must be a unit vector")
    u0, v0 = background
    ub = u0 * wx + v0 * wy
    c0 = params.c0
    s_l = ub - c0
    s_r = ub + c0
    if s_l == s_r:
        raise ConfigurationError("degenerate wave fan: sound speed is zero")
    A = acoustics_matrix(w, background, params)
    U_L = np.asarray(U_L, dtype=np.float64)
    U_R = np.asarray(U_R, dtype=np.float64)
    F_L = A @ U_L
    F_R = A @ U_R
    if s_l >= 0.0:
        return F_L
    if s_r <= 0.0:
        return F_R
    return (s_r * F_L - s_l * F_R + s_l * s_r * (U_R - U_L)) / (s_r - s_l)


def _sup_abs(value) -> float:
    return float(np.max(np.abs(value)))


def acoustics_eig_bound(ou_u: ou_sde.OUFieldParams, ou_v: ou_sde.OUFieldParams,
                        params: AcousticsParams, t: float = 0.0) -> float:
    """Expected wave-speed bound 2 c0 + sup|E u0| + sup|E v0|, maximized over
    the mesh and over [0, t] (the expectation interpolates z0 -> mu, so the
    extrema sit at the endpoints)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    bu = max(_sup_abs(ou_u.mu), _sup_abs(ou_u.z0))
    bv = max(_sup_abs(ou_v.mu), _sup_abs(ou_v.z0))
    return 2.0 * params.c0 + bu + bv


def _face_average_x(c: np.ndarray) -> np.ndarray:
    """Periodic face averages along x: (J, I) cells -> (J, I+1) faces."""
    f = 0.5 * (np.roll(c, 1, axis=-1) + c)
    return np.concatenate([f, f[:, :1]], axis=1)


def _face_average_y(c: np.ndarray) -> np.ndarray:
    f = 0.5 * (np.roll(c, 1, axis=0) + c)
    return np.concatenate([f, f[:1, :]], axis=0)


class _AcousticsCtx:
    """Per-interval face data plus scratch arrays for the rhs kernel."""

    __slots__ = ("order", "x", "y", "scratch")

    def __init__(self, order, x, y, scratch):
        self.order = order
        self.x = x
        self.y = y
        self.scratch = scratch


def _acoustics_scratch(m, dims, ghost):
    I, J, _ = dims
    pj, pi = J + 2 * ghost, I + 2 * ghost
    return (
        np.empty((m, 1, pj, pi)),     # padded state
        np.empty((m, pj, pi)),        # x slopes
        np.empty((m, pj, pi)),        # y slopes
        np.empty((m, J, I + 1)),      # x fluxes
        np.empty((m, J + 1, I)),      # y fluxes
        np.empty((m, J, I)),          # rhs
    )


class Acoustics2D:
    """Sound-wave perturbations (p, u, v) around a quiescent background with
    a spatiotemporal random advection velocity (u0, v0).

    Pressure is a perturbation variable and may be negative; no positivity
    clamping is applied anywhere.  The coefficient fields are synthesized on
    the periodic mesh regardless of the physical boundary conditions, which
    act on the conserved state only.
    """

    name = "acoustics2d"
    components = 3
    dim = 2
    conservative = True

    def __init__(self, mesh: StructuredMesh, params: AcousticsParams,
                 ou_u: ou_sde.OUFieldParams, ou_v: ou_sde.OUFieldParams,
                 density: SpectralDensity, u_init: Callable | None = None,
                 integrator: str = "milstein", source=None):
        if mesh.dims[2] != 1 or mesh.dims[1] == 1:
            raise ConfigurationError("acoustics model is two-dimensional")
        self.mesh = mesh
        self.params = params
        self.ou_u = ou_u
        self.ou_v = ou_v
        self.density = density
        self.u_init = u_init
        self.integrator = integrator
        self.source = source
        self.coefficient_specs = (
            CoefficientSpec("u0", ou_u, spatial=True),
            CoefficientSpec("v0", ou_v, spatial=True),
        )
        self._coeff_mesh = StructuredMesh(mesh.dims, mesh.spacing, mesh.origin)
        # process-local kernel scratch; samples run sequentially per worker
        self._scratch = {}

    def initial_state(self) -> np.ndarray:
        if self.u_init is None:
            return Field.zeros(self.mesh, 3).data
        return Field.from_function(self.mesh, self.u_init, components=3).data

    def make_driver(self, h: float, seed: int, sample_index: int) -> CoefficientDriver:
        return CoefficientDriver(self.coefficient_specs, self._coeff_mesh, self.density,
                                 h, self.integrator, seed, sample_index)

    def wave_speed_bound(self, t_end: float = 0.0) -> float:
        return acoustics_eig_bound(self.ou_u, self.ou_v, self.params, max(t_end, 0.0))

    def max_abs_eigs(self, coeffs) -> tuple[float, float, float]:
        u0, v0 = coeffs
        c0 = self.params.c0
        return _sup_abs(u0) + c0, _sup_abs(v0) + c0, 0.0

    def interval_context(self, coeffs, order: int) -> _AcousticsCtx:
        c0 = self.params.c0
        u0 = np.broadcast_to(np.asarray(coeffs[0]), self.mesh.dims[::-1])[0]
        v0 = np.broadcast_to(np.asarray(coeffs[1]), self.mesh.dims[::-1])[0]
        x = self._face_ctx(_face_average_x(u0), c0)
        y = self._face_ctx(_face_average_y(v0), c0)
        g = 1 if order == 1 else 2
        if g not in self._scratch:
            self._scratch[g] = _acoustics_scratch(3, self.mesh.dims, g)
        return _AcousticsCtx(order, x, y, self._scratch[g])

    @staticmethod
    def _face_ctx(ub, c0):
        s_lm = np.minimum(ub - c0, 0.0)
        s_rp = np.maximum(ub + c0, 0.0)
        return (ub, s_lm, s_rp, s_lm * s_rp, 1.0 / (s_rp - s_lm))

    def rhs(self, u: np.ndarray, ctx: _AcousticsCtx, t: float, order: int) -> np.ndarray:
        g = 1 if order == 1 else 2
        padded, sx, sy, Fx, Gy, out = ctx.scratch
        up = pad_array(u, self.mesh, g, t, out=padded)[:, 0]
        ubx, slx, srx, ssx, idx = ctx.x
        vby, sly, sry, ssy, idy = ctx.y
        acoustics_rhs_kernel(up, g, order, ubx, slx, srx, ssx, idx,
                             vby, sly, sry, ssy, idy,
                             self.params.rho0, self.params.K0,
                             1.0 / self.mesh.spacing[0], 1.0 / self.mesh.spacing[1],
                             sx, sy, Fx, Gy, out)
        # returns a scratch view: callers consume it before the next rhs call
        out = out.reshape(u.shape)
        if self.source is not None:
            X, Y, Z = self.mesh.cell_centers()
            out = out + np.asarray(self.source(X, Y, Z, t))
        return out


# ---------------------------------------------------------------------------
# 2-D magnetic induction, symmetric form
# ---------------------------------------------------------------------------

def induction_mean_velocity(x, y):
    """Mean background velocity of the induction scenario."""
    mu_u = 1.0 + (np.cos(2 * np.pi * x) + 2.0 * np.sin(2 * np.pi * y)) / 4.0
    mu_v = 1.0 + (np.sin(2 * np.pi * x) + 2.0 * np.cos(2 * np.pi * y)) / 4.0
    return mu_u, mu_v


def induction_initial(mesh: StructuredMesh) -> Field:
    """Divergence-free initial magnetic field from the potential
    A = sin(2 pi x) sin(2 pi y) / (2 pi) + y - x.

    U = (dA/dy, -dA/dx): the curl form is the one with div U = 0 identically
    (the plain gradient pair has div = 2 d2A/dxdy != 0)."""
    X, Y, _ = mesh.cell_centers()
    u1 = np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y) + 1.0
    u2 = 1.0 - np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y)
    return Field(mesh, np.stack([u1, u2]))


def induction_eig_bound(ou_u: ou_sde.OUFieldParams, ou_v: ou_sde.OUFieldParams,
                        t: float = 0.0) -> float:
    """Expected wave-speed bound sup|E u| + sup|E v| for the induction system."""
    bu = max(_sup_abs(ou_u.mu), _sup_abs(ou_u.z0))
    bv = max(_sup_abs(ou_v.mu), _sup_abs(ou_v.z0))
    return bu + bv


class _InductionCtx:
    __slots__ = ("xfaces", "yfaces", "cells")

    def __init__(self, xfaces, yfaces, cells):
        self.xfaces = xfaces
        self.yfaces = yfaces
        self.cells = cells


class Induction2D:
    """Magnetic field transport dU/dt + div(V (x) U - U (x) V) = -V div(U).

    Discretized with componentwise upwind transport fluxes on face-averaged
    velocities plus a cell-centered non-conservative source using the
    centered discrete divergence; declared non-conservative, periodic only,
    first order.
    """

    name = "induction2d"
    components = 2
    dim = 2
    conservative = False

    def __init__(self, mesh: StructuredMesh, ou_u: ou_sde.OUFieldParams,
                 ou_v: ou_sde.OUFieldParams, density: SpectralDensity,
                 u_init: Callable | None = None, integrator: str = "milstein",
                 source=None):
        if mesh.dims[2] != 1 or mesh.dims[1] == 1:
            raise ConfigurationError("induction model is two-dimensional")
        if not mesh.is_periodic():
            raise UnsupportedConfigurationError("induction scenario uses periodic boundaries")
        self.mesh = mesh
        self.ou_u = ou_u
        self.ou_v = ou_v
        self.density = density
        self.u_init = u_init
        self.integrator = integrator
        self.source = source
        self.coefficient_specs = (
            CoefficientSpec("u", ou_u, spatial=True),
            CoefficientSpec("v", ou_v, spatial=True),
        )
        self._scratch = {}

    def initial_state(self) -> np.ndarray:
        if self.u_init is None:
            return induction_initial(self.mesh).data
        return Field.from_function(self.mesh, self.u_init, components=2).data

    def make_driver(self, h: float, seed: int, sample_index: int) -> CoefficientDriver:
        return CoefficientDriver(self.coefficient_specs, self.mesh, self.density,
                                 h, self.integrator, seed, sample_index)

    def wave_speed_bound(self, t_end: float = 0.0) -> float:
        return induction_eig_bound(self.ou_u, self.ou_v, max(t_end, 0.0))

    def max_abs_eigs(self, coeffs) -> tuple[float, float, float]:
        u, v = coeffs
        return _sup_abs(u), _sup_abs(v), 0.0

    def interval_context(self, coeffs, order: int) -> _InductionCtx:
        if order != 1:
            raise UnsupportedConfigurationError("induction scheme is first order only")
        shape = self.mesh.dims[::-1]
        u = np.broadcast_to(np.asarray(coeffs[0]), shape)[0]
        v = np.broadcast_to(np.asarray(coeffs[1]), shape)[0]
        ufx = _face_average_x(u)
        vfx = _face_average_x(v)
        selx = (ufx >= 0.0).astype(np.float64)
        vfy = _face_average_y(v)
        ufy = _face_average_y(u)
        sely = (vfy >= 0.0).astype(np.float64)
        return _InductionCtx((ufx, vfx, selx), (vfy, ufy, sely),
                             (np.ascontiguousarray(u), np.ascontiguousarray(v)))

    def rhs(self, u: np.ndarray, ctx: _InductionCtx, t: float, order: int) -> np.ndarray:
        I, J, _ = self.mesh.dims
        if 1 not in self._scratch:
            self._scratch[1] = (np.empty((2, 1, J + 2, I + 2)), np.empty((2, J, I)))
        padded, out = self._scratch[1]
        up = pad_array(u, self.mesh, 1, t, out=padded)[:, 0]
        ufx, vfx, selx = ctx.xfaces
        vfy, ufy, sely = ctx.yfaces
        ucell, vcell = ctx.cells
        induction_rhs_kernel(up, ufx, vfx, selx, vfy, ufy, sely, ucell, vcell,
                             1.0 / self.mesh.spacing[0], 1.0 / self.mesh.spacing[1], out)
        out = out.reshape(u.shape)
        if self.source is not None:
            X, Y, Z = self.mesh.cell_centers()
            out = out + np.asarray(self.source(X, Y, Z, t))
        return out


def induction_rhs(U: Field, V: Field, mesh: StructuredMesh) -> Field:
    """Semi-discrete induction operator L(U) for a frozen velocity field V."""
    dummy_ou = ou_sde.OUFieldParams(theta=1.0, sigma=0.0)
    model = Induction2D(mesh, dummy_ou, dummy_ou,
                        SpectralDensity("rational", q=2, l=4))
    ctx = model.interval_context((V.data[0], V.data[1]), order=1)
    return Field(mesh, model.rhs(U.data, ctx, 0.0, order=1))


# ---------------------------------------------------------------------------
# synthetic identity model: terminal value equals the coefficient field
# ---------------------------------------------------------------------------

class IdentityCoefficient:
    """Test model whose terminal state is the coefficient itself, used to
    isolate the Monte Carlo error from any PDE discretization."""

    name = "identity_ou"
    components = 1
    conservative = True

    def __init__(self, mesh: StructuredMesh, ou: ou_sde.OUFieldParams,
                 density: SpectralDensity | None = None, spatial: bool = False,
                 integrator: str = "exact"):
        self.mesh = mesh
        self.dim = len(mesh.active_axes) or 1
        self.ou = ou
        self.density = density
        self.integrator = integrator
        self.coefficient_specs = (CoefficientSpec("z", ou, spatial=spatial),)

    def wave_speed_bound(self, t_end: float = 0.0) -> float:
        return max(_sup_abs(self.ou.mu), _sup_abs(self.ou.z0))

    def run_sample(self, scheme: SchemeOrder, controller: TimeController,
                   seed: int, sample_index: int, stats: CflStats) -> np.ndarray:
        driver = CoefficientDriver(self.coefficient_specs, self.mesh, self.density,
                                   controller.h, self.integrator, seed, sample_index)
        for _ in range(controller.n_intervals):
            driver.advance()
        z = driver.current()[0]
        out = np.broadcast_to(np.asarray(z, dtype=np.float64), self.mesh.dims[::-1])
        return out.reshape((1,) + self.mesh.dims[::-1]).copy()


def simulate_intervals(model, scheme: SchemeOrder, controller: TimeController,
                       seed: int, sample_index: int, stats: CflStats) -> np.ndarray:
    """Generic three-step realization: draw coefficient paths, solve the
    frozen-coefficient problem interval by interval, return the terminal
    cell averages."""
    u = model.initial_state()
    driver = model.make_driver(controller.h, seed, sample_index)
    L = controller.n_intervals
    for l in range(L):
        coeffs = driver.current()
        u = advance_interval(u, coeffs, model, scheme, controller, l * controller.h, stats)
        if l < L - 1:
            driver.advance()
    return u


def simulate_sample(model, scheme: SchemeOrder, controller: TimeController,
                    seed: int, sample_index: int, stats: CflStats) -> np.ndarray:
    """One Monte Carlo realization, dispatched to the model's fast path when
    it provides one."""
    fast = getattr(model, "run_sample", None)
    if fast is not None:
        return fast(scheme, controller, seed, sample_index, stats)
    return simulate_intervals(model, scheme, controller, seed, sample_index, stats)


def simulate_sample_with_coeffs(model, scheme: SchemeOrder, controller: TimeController | None,
                                seed: int, sample_index: int, stats: CflStats):
    """Like the generic realization loop, but also returns the coefficient
    values frozen on the last interval (for pathwise inspection dumps)."""
    u = model.initial_state()
    shape = model.mesh.dims[::-1]
    if controller is None:  # t_end = 0: no evolution
        z0 = tuple(np.broadcast_to(np.asarray(s.params.z0, dtype=np.float64), shape)
                   for s in model.coefficient_specs)
        return u, np.stack([np.ascontiguousarray(z) for z in z0])
    driver = model.make_driver(controller.h, seed, sample_index)
    L = controller.n_intervals
    coeffs = driver.current()
    for l in range(L):
        coeffs = driver.current()
        u = advance_interval(u, coeffs, model, scheme, controller, l * controller.h, stats)
        if l < L - 1:
            driver.advance()
    stacked = np.stack([np.ascontiguousarray(np.broadcast_to(np.asarray(c, dtype=np.float64), shape))
                        for c in coeffs])
    return u, stacked
