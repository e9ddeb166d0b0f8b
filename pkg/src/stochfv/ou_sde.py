"""Ornstein-Uhlenbeck time stepping and closed-form moments.

The process dZ = theta*(mu - Z) dt + sigma dG is advanced on a fixed grid of
step h by one of four one-step schemes.  For additive noise every scheme is
an affine recursion Z' = a Z + (1-a) mu + c G with scheme-specific (a, c),
exposed by ``scheme_coefficients`` for closed-form weak-error analysis.

Noise fields are consumed, never cached: one fresh draw per step per
coefficient.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .grid import Field

INTEGRATORS = ("milstein", "implicit", "weak2", "exact")


@dataclass(frozen=True)
class OUFieldParams:
    """Parameters of one spatiotemporal coefficient.

    mu and z0 are scalars for the space-independent case or arrays sampled
    on the mesh; sigma = 0 is permitted for deterministic-limit tests.
    """

    theta: float
    sigma: float
    mu: float | np.ndarray = 0.0
    z0: float | np.ndarray = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        mu_arr = isinstance(self.mu, np.ndarray)
        z0_arr = isinstance(self.z0, np.ndarray)
        if mu_arr and z0_arr and self.mu.shape != self.z0.shape:
            raise ValueError("mu and z0 must be defined on the same mesh")


@dataclass(frozen=True)
class OUState:
    """Coefficient values at one SDE grid time t = step_index * h."""

    z: float | np.ndarray
    h: float
    step_index: int = 0
    integrator: str = "milstein"

    @property
    def t(self) -> float:
        return self.step_index * self.h


def initial_state(params: OUFieldParams, h: float, integrator: str = "milstein") -> OUState:
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}, expected one of {INTEGRATORS}")
    if not h > 0:
        raise ValueError(f"step h must be > 0, got {h}")
    if integrator in ("milstein", "weak2") and h * params.theta >= 2.0:
        warnings.warn(
            f"h*theta = {h * params.theta:.3g} >= 2: the explicit {integrator} scheme is "
            "unstable for this stiffness; use the implicit integrator",
            stacklevel=2,
        )
    z = params.z0.copy() if isinstance(params.z0, np.ndarray) else float(params.z0)
    return OUState(z=z, h=h, integrator=integrator)


def _noise_values(state: OUState, noise):
    if isinstance(noise, Field):
        g = noise.data[0]
        if isinstance(state.z, np.ndarray):
            try:
                np.broadcast_shapes(g.shape, state.z.shape)
            except ValueError:
                raise ValueError(
                    f"noise shape {g.shape} does not match state shape {state.z.shape}"
                ) from None
        return g
    return noise


def _advanced(state: OUState, z_new) -> OUState:
    return replace(state, z=z_new, step_index=state.step_index + 1)


def step_milstein(state: OUState, params: OUFieldParams, noise) -> OUState:
    """Z' = Z + h theta (mu - Z) + sigma sqrt(h) G (= Euler-Maruyama for
    additive noise)."""
    g = _noise_values(state, noise)
    h = state.h
    z = state.z + h * params.theta * (params.mu - state.z) + params.sigma * math.sqrt(h) * g
    return _advanced(state, z)


def step_implicit_milstein(state: OUState, params: OUFieldParams, noise) -> OUState:
    """Z' = (Z + h theta mu + sigma sqrt(h) G) / (1 + h theta); unconditionally
    mean-reverting."""
    g = _noise_values(state, noise)
    h = state.h
    z = (state.z + h * params.theta * params.mu + params.sigma * math.sqrt(h) * g) / (1.0 + h * params.theta)
    return _advanced(state, z)


def step_weak2(state: OUState, params: OUFieldParams, noise) -> OUState:
    """Weak-order-2 step for the additive-noise linear drift: trapezoidal
    (Heun) drift over an explicit predictor, sharing one noise increment.
    """
    g = _noise_values(state, noise)
    h = state.h
    th = params.theta
    sg = params.sigma * math.sqrt(h) * g
    z_pred = state.z + h * th * (params.mu - state.z) + sg
    z = state.z + 0.5 * h * (th * (params.mu - state.z) + th * (params.mu - z_pred)) + sg
    return _advanced(state, z)


def step_exact(state: OUState, params: OUFieldParams, noise) -> OUState:
    """Distributionally exact transition over one step of length h."""
    g = _noise_values(state, noise)
    h = state.h
    decay = math.exp(-params.theta * h)
    std = params.sigma * math.sqrt(-math.expm1(-2.0 * params.theta * h) / (2.0 * params.theta))
    z = params.mu + decay * (state.z - params.mu) + std * g
    return _advanced(state, z)


_STEPPERS = {
    "milstein": step_milstein,
    "implicit": step_implicit_milstein,
    "weak2": step_weak2,
    "exact": step_exact,
}


def step(state: OUState, params: OUFieldParams, noise) -> OUState:
    return _STEPPERS[state.integrator](state, params, noise)


def scheme_coefficients(integrator: str, theta: float, sigma: float, h: float) -> tuple[float, float]:
    """(a, c) of the affine one-step recursion Z' = a Z + (1-a) mu + c G."""
    th = theta * h
    if integrator == "milstein":
        return 1.0 - th, sigma * math.sqrt(h)
    if integrator == "implicit":
        return 1.0 / (1.0 + th), sigma * math.sqrt(h) / (1.0 + th)
    if integrator == "weak2":
        return 1.0 - th + 0.5 * th * th, sigma * math.sqrt(h) * (1.0 - 0.5 * th)
    if integrator == "exact":
        return math.exp(-th), sigma * math.sqrt(-math.expm1(-2.0 * th) / (2.0 * theta))
    raise ValueError(f"unknown integrator {integrator!r}")


def exact_moments(params: OUFieldParams, t: float):
    """Mean and variance of Z(t): E = mu + (z0 - mu) e^{-theta t},
    V = sigma^2/(2 theta) (1 - e^{-2 theta t})."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    decay = math.exp(-params.theta * t)
    mean = params.mu + (params.z0 - params.mu) * decay
    var = params.sigma**2 / (2.0 * params.theta) * -math.expm1(-2.0 * params.theta * t)
    return mean, var
