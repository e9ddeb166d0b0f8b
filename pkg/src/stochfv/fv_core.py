"""Generic flux-differencing finite-volume machinery.

Time stepping is synchronized with the SDE grid: within each interval
[l*h, (l+1)*h] the coefficient field is frozen, CFL-sized steps are taken
and the last step is truncated to land exactly on the interval end, so the
FV times restricted to interval boundaries equal {l*h}.  Eigenvalue maxima
for the CFL bound are computed once per interval from the frozen field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._kernels import axpy_update, heun_update
from .errors import ConfigurationError, NumericalBlowupError
from .grid import StructuredMesh

_LAND_TOL = 1e-12  # relative slack when landing on an interval end

CFL_BOUND = 0.5


def minmod(a: float, b: float) -> float:
    """sign(a) * min(|a|, |b|) when a and b share a sign, else 0."""
    if a * b > 0.0:
        return a if abs(a) < abs(b) else b
    return 0.0


def minmod_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0.0, out, 0.0)


@dataclass(frozen=True)
class SchemeOrder:
    """Spatial/temporal scheme pairing.

    Order 1 pairs piecewise-constant reconstruction with forward Euler,
    order 2 pairs minmod-limited linear reconstruction with SSP-RK2.
    """

    order: int
    reconstruction: str
    time_integrator: str

    _VALID = {1: ("constant", "euler"), 2: ("minmod", "ssprk2")}

    def __post_init__(self):
        expected = self._VALID.get(self.order)
        if expected is None:
            raise ConfigurationError(f"order must be 1 or 2, got {self.order}")
        if (self.reconstruction, self.time_integrator) != expected:
            raise ConfigurationError(
                f"order {self.order} pairs with {expected}, got "
                f"({self.reconstruction!r}, {self.time_integrator!r})"
            )

    @classmethod
    def first_order(cls) -> "SchemeOrder":
        return cls(1, "constant", "euler")

    @classmethod
    def second_order(cls) -> "SchemeOrder":
        return cls(2, "minmod", "ssprk2")

    @classmethod
    def of(cls, order: int) -> "SchemeOrder":
        return cls.first_order() if order == 1 else cls.second_order()

    @property
    def ghost_width(self) -> int:
        return 1 if self.order == 1 else 2


@dataclass
class CflStats:
    """Per-run instrumentation of the CFL condition."""

    n_steps: int = 0
    min_dt: float = math.inf
    max_cfl_sum: float = 0.0
    violations: int = 0

    def record(self, dt: float, cfl_sum: float):
        self.n_steps += 1
        self.min_dt = min(self.min_dt, dt)
        self.max_cfl_sum = max(self.max_cfl_sum, cfl_sum)
        if cfl_sum > CFL_BOUND * (1.0 + 1e-12):
            self.violations += 1

    def merge(self, other: "CflStats"):
        self.n_steps += other.n_steps
        self.min_dt = min(self.min_dt, other.min_dt)
        self.max_cfl_sum = max(self.max_cfl_sum, other.max_cfl_sum)
        self.violations += other.violations


@dataclass
class TimeController:
    """Fixed SDE interval length h with CFL-constrained FV substeps.

    h is derived once per run from a target value: the interval count
    L = ceil(t_end / h_target) makes h = t_end / L divide the horizon
    exactly.
    """

    h: float
    t_end: float
    n_intervals: int
    cfl_number: float = 0.45
    current_interval: int = 0

    def __post_init__(self):
        if not (0.0 < self.cfl_number <= CFL_BOUND):
            raise ConfigurationError(
                f"cfl number must be in (0, {CFL_BOUND}], got {self.cfl_number}"
            )

    @classmethod
    def from_target(cls, t_end: float, h_target: float, cfl_number: float = 0.45) -> "TimeController":
        if not t_end > 0 or not h_target > 0:
            raise ConfigurationError("t_end and h must be positive")
        n = max(1, math.ceil(t_end / h_target - 1e-9))
        return cls(h=t_end / n, t_end=t_end, n_intervals=n, cfl_number=cfl_number)


def cfl_dt(max_abs_eig, mesh: StructuredMesh, cfl_number: float,
           remaining: float = math.inf) -> float:
    """Largest dt with dt * sum(lambda_bar / delta) <= cfl_number.

    With all eigenvalue bounds zero the coefficient field is frozen and the
    remaining interval length is returned.
    """
    lams = tuple(max_abs_eig)
    if any(l < 0 for l in lams):
        raise ValueError(f"eigenvalue bounds must be >= 0, got {lams}")
    denom = sum(l / d for l, d in zip(lams, mesh.spacing))
    if denom == 0.0:
        return remaining
    return min(cfl_number / denom, remaining)


def reconstruct_minmod(cell_averages: np.ndarray, dx: float = 1.0):
    """Left/right face values of a minmod-limited linear reconstruction.

    ``cell_averages`` is a 1-D slice with at least one ghost cell on each
    side; returns (left, right) face values for the interior cells.  The
    reconstruction is TVD: face-value total variation never exceeds the
    cell-average total variation.
    """
    u = np.asarray(cell_averages, dtype=np.float64)
    if u.ndim != 1 or u.size < 3:
        raise ValueError("need a 1-D slice with >= 1 ghost cell per side")
    slope = minmod_array(u[1:-1] - u[:-2], u[2:] - u[1:-1]) / dx
    mid = u[1:-1]
    return mid - 0.5 * slope * dx, mid + 0.5 * slope * dx


def _check_finite(u: np.ndarray, t: float):
    if not np.isfinite(np.sum(u)):
        bad = np.argwhere(~np.isfinite(u))
        cell = int(np.ravel_multi_index(tuple(bad[0]), u.shape)) if bad.size else -1
        raise NumericalBlowupError(
            f"non-finite state at t = {t:.6g} (first bad flat index {cell})",
            t=t, cell=cell,
        )


def ssp_rk2_step(u: np.ndarray, ctx, model, dt: float, t: float) -> np.ndarray:
    """Heun-form SSP-RK2: u* = u + dt L(u); u' = (u + u* + dt L(u*)) / 2."""
    u1 = u + dt * model.rhs(u, ctx, t, order=2)
    return 0.5 * (u + u1 + dt * model.rhs(u1, ctx, t + dt, order=2))


def advance_interval(u: np.ndarray, coeffs, model, scheme: SchemeOrder,
                     controller: TimeController, t0: float,
                     stats: CflStats | None = None) -> np.ndarray:
    """Advance the state over one SDE interval with the coefficients frozen.

    Applies the flux-differencing update repeatedly, clamping the final step
    to land exactly on t0 + h.  The returned array may be an internal work
    buffer (the input array is never mutated but must not be assumed to
    alias the result).  Raises NumericalBlowupError when the model produces
    non-finite values.
    """
    h = controller.h
    mesh = model.mesh
    lams = model.max_abs_eigs(coeffs)
    ctx = model.interval_context(coeffs, scheme.order)
    cfl_denom = sum(l / d for l, d in zip(lams, mesh.spacing))
    u = u.copy()  # the three work buffers cycle; never touch the caller's array
    buf1 = np.empty_like(u)
    buf2 = np.empty_like(u)
    remaining = h
    while remaining > _LAND_TOL * h:
        dt = cfl_dt(lams, mesh, controller.cfl_number, remaining)
        if remaining - dt < _LAND_TOL * h:
            dt = remaining
        t = t0 + (h - remaining)
        if scheme.order == 1:
            rhs = model.rhs(u, ctx, t, order=1)
            axpy_update(buf1.reshape(-1), u.reshape(-1), rhs.reshape(-1), dt)
            u, buf1 = buf1, u
        else:
            rhs = model.rhs(u, ctx, t, order=2)
            axpy_update(buf1.reshape(-1), u.reshape(-1), rhs.reshape(-1), dt)
            rhs = model.rhs(buf1, ctx, t + dt, order=2)
            heun_update(buf2.reshape(-1), u.reshape(-1), buf1.reshape(-1),
                        rhs.reshape(-1), dt)
            u, buf2 = buf2, u
        if stats is not None:
            stats.record(dt, dt * cfl_denom)
        _check_finite(u, t + dt)
        remaining -= dt
    return u
