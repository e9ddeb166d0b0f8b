"""Closed-form moments of the OU-driven scalar transport, used as ground
truth in convergence tests.

The solution of u_t + (a(t) u)_x = 0 along one path is u0(x - A(t)) with
A(t) the time integral of the coefficient.  A(t) is Gaussian with mean

    hat_mu = mu t - (a0 - mu) (e^{-theta t} - 1) / theta

(the transport-speed form of the moment formula equals hat_mu / t) and
variance

    hat_sigma2 = sigma^2 / theta^3 (theta t + 2 e^{-theta t}
                 - e^{-2 theta t} / 2 - 3/2),

so the expectation of the solution is the convolution of u0 with the
N(hat_mu, hat_sigma2) density.  For the shipped indicator initial condition
the convolution reduces to a difference of error functions; the kernel is
periodized by image summation to match periodic runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

from . import rng


@dataclass(frozen=True)
class OracleParams:
    """Scalar OU parameters, initial profile and evaluation time.

    u0 is either an (lo, hi) indicator interval or an integrable callable;
    the domain is [0, domain_length) periodic.
    """

    mu: float
    theta: float
    sigma: float
    a0: float
    t: float
    u0: tuple[float, float] | Callable = (0.375, 0.625)
    domain_length: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    def at_time(self, t: float) -> "OracleParams":
        return replace(self, t=t)


def hat_mu(params: OracleParams) -> float:
    """Mean of the integrated coefficient A(t)."""
    th = params.theta
    return params.mu * params.t - (params.a0 - params.mu) * math.expm1(-th * params.t) / th


def hat_sigma2(params: OracleParams) -> float:
    """Variance of A(t); evaluated in an expm1 form that stays accurate as
    theta*t -> 0, where it approaches sigma^2 t^3 / 3."""
    x = params.theta * params.t
    u = math.expm1(-x)
    bracket = (x + u) - 0.5 * u * u
    return params.sigma**2 / params.theta**3 * bracket


def _n_images(sigma_hat: float, length: float) -> int:
    return max(5, int(math.ceil(10.0 * sigma_hat / length)) + 1)


def _smoothed_indicator(xi: np.ndarray, lo: float, hi: float, s2: float) -> np.ndarray:
    if s2 == 0.0:
        return ((xi >= lo) & (xi < hi)).astype(np.float64)
    s = math.sqrt(2.0 * s2)
    return 0.5 * (erf((xi - lo) / s) - erf((xi - hi) / s))


def exact_mean(params: OracleParams, x: np.ndarray) -> np.ndarray:
    """E[u(x, t)]: convolution of u0 with the N(hat_mu, hat_sigma2) kernel,
    periodized over the domain by image summation."""
    x = np.asarray(x, dtype=np.float64)
    mu_hat = hat_mu(params)
    s2 = hat_sigma2(params)
    L = params.domain_length
    xi = np.mod(x - mu_hat, L)
    if callable(params.u0):
        return _mean_quadrature(params, x, mu_hat, s2)
    lo, hi = params.u0
    n = _n_images(math.sqrt(s2), L)
    out = np.zeros_like(xi)
    for k in range(-n, n + 1):
        out += _smoothed_indicator(xi + k * L, lo, hi, s2)
    return out


def _mean_quadrature(params: OracleParams, x: np.ndarray, mu_hat: float,
                     s2: float) -> np.ndarray:
    L = params.domain_length
    u0 = params.u0
    if s2 == 0.0:
        return np.asarray(u0(np.mod(x - mu_hat, L)), dtype=np.float64)
    s = math.sqrt(s2)
    norm = 1.0 / (s * math.sqrt(2 * math.pi))

    def density(y):
        return norm * math.exp(-0.5 * ((y - mu_hat) / s) ** 2)

    out = np.empty(x.shape)
    for idx, xv in np.ndenumerate(x):
        val, _ = quad(lambda y: float(u0(np.mod(xv - y, L))) * density(y),
                      mu_hat - 12 * s, mu_hat + 12 * s, epsabs=1e-10, limit=200)
        out[idx] = val
    return out


def exact_second_moment(params: OracleParams, x: np.ndarray,
                        n_draws: int = 10**6, seed: int = 0) -> np.ndarray:
    """Variance of u(x, t).

    For a {0,1}-valued indicator u0 the solution is Bernoulli pathwise, so
    Var = E(u) (1 - E(u)) in closed form.  A general u0 falls back to Monte
    Carlo over the known Gaussian law of A(t).
    """
    x = np.asarray(x, dtype=np.float64)
    if not callable(params.u0):
        m = exact_mean(params, x)
        return m * (1.0 - m)
    mu_hat = hat_mu(params)
    s = math.sqrt(hat_sigma2(params))
    gen = rng.path_generator(seed, 0, 0)
    total = np.zeros(x.shape)
    total_sq = np.zeros(x.shape)
    chunk = 20000
    done = 0
    L = params.domain_length
    while done < n_draws:
        n = min(chunk, n_draws - done)
        shifts = mu_hat + s * gen.standard_normal(n)
        vals = np.asarray(params.u0(np.mod(x[..., None] - shifts, L)))
        total += vals.sum(axis=-1)
        total_sq += (vals**2).sum(axis=-1)
        done += n
    mean = total / n_draws
    return total_sq / n_draws - mean**2


# ---------------------------------------------------------------------------
# direct characteristic simulation (independent cross-check)
# ---------------------------------------------------------------------------

def _step_integral_law(theta: float, sigma: float, h: float):
    """Exact joint law of (a(t+h) - mu, int_t^{t+h} (a - mu) ds) given the
    start value: decay factors and a Cholesky factor of the 2x2 noise
    covariance."""
    e1 = math.exp(-theta * h)
    v11 = sigma**2 * -math.expm1(-2 * theta * h) / (2 * theta)
    one_me = -math.expm1(-theta * h)
    v12 = sigma**2 / theta * (one_me / theta + math.expm1(-2 * theta * h) / (2 * theta))
    v22 = sigma**2 / theta**2 * (h - 2 * one_me / theta - math.expm1(-2 * theta * h) / (2 * theta))
    s11 = math.sqrt(v11) if v11 > 0 else 0.0
    c = v12 / s11 if s11 > 0 else 0.0
    d = math.sqrt(max(v22 - c * c, 0.0))
    return e1, one_me / theta, s11, c, d


def simulate_characteristics(params: OracleParams, n_paths: int,
                             n_steps: int = 16, seed: int = 2024,
                             batch: int = 100_000) -> np.ndarray:
    """Draw A(t) = int_0^t a(s) ds over exact OU path segments.

    The integral over each segment is sampled jointly with the segment
    endpoint from their exact bivariate Gaussian law, so the returned shifts
    follow the true distribution of A(t) with no quadrature bias.
    """
    h = params.t / n_steps
    e1, beta, s11, c, d = _step_integral_law(params.theta, params.sigma, h)
    out = np.empty(n_paths)
    done = 0
    part = 0
    while done < n_paths:
        n = min(batch, n_paths - done)
        gen = rng.step_generator(seed, part, 0, 0)
        x = np.full(n, params.a0 - params.mu)
        acc = np.zeros(n)
        for _ in range(n_steps):
            g1 = gen.standard_normal(n)
            g2 = gen.standard_normal(n)
            acc += beta * x + c * g1 + d * g2
            x = e1 * x + s11 * g1
        out[done:done + n] = params.mu * params.t + acc
        done += n
        part += 1
    return out
