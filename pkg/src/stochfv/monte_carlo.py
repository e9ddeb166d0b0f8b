"""Parallel Monte Carlo sample orchestration and streaming moment estimation.

Samples are fully independent; a fixed pool of worker processes consumes
chunks of sample indices.  Chunk size and the final reduction order depend
only on the sample count, never on the worker count, and every random draw
comes from a counter-based stream keyed by (seed, sample, step, parameter),
so mean and variance fields are bitwise identical for any thread count.

Failed samples are fatal by default: uncertainty statistics must not
silently drop paths.  ``skip_failed`` exists as an exploration escape hatch
and reports the skip count.
"""

from __future__ import annotations

import math
import multiprocessing
import sys
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import models as models_mod
from ._kernels import warmup as _warmup_kernels
from .errors import NumericalBlowupError
from .fv_core import CflStats, SchemeOrder, TimeController
from .grid import Field, l1_norm, l2_norm

_CHUNK = 32  # samples per work unit; fixed so reductions never depend on threads


# ---------------------------------------------------------------------------
# streaming central moments
# ---------------------------------------------------------------------------

class MomentAccumulator:
    """One-pass per-cell running mean and central-moment state.

    Uses the numerically stable Welford/Pebay updating formulas; mergeable
    across workers with the pairwise (Chan-style) combination rules.  Third
    and fourth central moments are tracked only when requested.
    """

    def __init__(self, shape: tuple, higher_moments: bool = False):
        self.shape = tuple(shape)
        self.count = 0
        self.mean = np.zeros(self.shape)
        self.m2 = np.zeros(self.shape)
        self.higher = higher_moments
        if higher_moments:
            self.m3 = np.zeros(self.shape)
            self.m4 = np.zeros(self.shape)

    def push(self, x: np.ndarray):
        if x.shape != self.shape:
            raise ValueError(f"sample shape {x.shape} does not match accumulator {self.shape}")
        n1 = self.count
        n = n1 + 1
        delta = x - self.mean
        delta_n = delta / n
        if self.higher:
            term1 = delta * delta_n * n1
            delta_n2 = delta_n * delta_n
            self.m4 += term1 * delta_n2 * (n * n - 3 * n + 3) + 6.0 * delta_n2 * self.m2 \
                - 4.0 * delta_n * self.m3
            self.m3 += term1 * delta_n * (n - 2) - 3.0 * delta_n * self.m2
            self.m2 += term1
        else:
            self.m2 += delta * (delta_n * n1)
        self.mean += delta_n
        self.count = n

    def variance(self) -> np.ndarray:
        """Bessel-corrected sample variance per cell."""
        if self.count < 2:
            raise ValueError("variance needs at least 2 samples")
        return self.m2 / (self.count - 1)

    def central_moment(self, order: int) -> np.ndarray:
        if not self.higher:
            raise ValueError("accumulator was built without higher moments")
        if order == 3:
            return self.m3 / self.count
        if order == 4:
            return self.m4 / self.count
        raise ValueError("only orders 3 and 4 are tracked")

    def copy(self) -> "MomentAccumulator":
        out = MomentAccumulator(self.shape, self.higher)
        out.count = self.count
        out.mean = self.mean.copy()
        out.m2 = self.m2.copy()
        if self.higher:
            out.m3 = self.m3.copy()
            out.m4 = self.m4.copy()
        return out


def merge(acc_a: MomentAccumulator, acc_b: MomentAccumulator) -> MomentAccumulator:
    """Combine two accumulators as if the sample streams were concatenated."""
    if acc_a.shape != acc_b.shape or acc_a.higher != acc_b.higher:
        raise ValueError("accumulator shapes do not match")
    if acc_a.count == 0:
        return acc_b.copy()
    if acc_b.count == 0:
        return acc_a.copy()
    na, nb = acc_a.count, acc_b.count
    n = na + nb
    d = acc_b.mean - acc_a.mean
    out = MomentAccumulator(acc_a.shape, acc_a.higher)
    out.count = n
    out.mean = acc_a.mean + d * (nb / n)
    out.m2 = acc_a.m2 + acc_b.m2 + d * d * (na * nb / n)
    if acc_a.higher:
        out.m3 = (acc_a.m3 + acc_b.m3
                  + d**3 * (na * nb * (na - nb) / n**2)
                  + 3.0 * d * (na * acc_b.m2 - nb * acc_a.m2) / n)
        out.m4 = (acc_a.m4 + acc_b.m4
                  + d**4 * (na * nb * (na * na - na * nb + nb * nb) / n**3)
                  + 6.0 * d * d * (na * na * acc_b.m2 + nb * nb * acc_a.m2) / n**2
                  + 4.0 * d * (na * acc_b.m3 - nb * acc_a.m3) / n)
    return out


# ---------------------------------------------------------------------------
# sample-count policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleRule:
    """Explicit sample count or the grid-coupled rule M = ceil(kappa dx^-2o)."""

    kind: str  # "explicit" | "paper"
    m: int = 0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("explicit", "paper"):
            raise ValueError(f"unknown sample rule {self.kind!r}")


def plan_samples(rule: SampleRule, dx: float, order: int) -> int:
    """Resolve a sample rule at grid spacing dx for a scheme of order o."""
    if not dx > 0:
        raise ValueError("dx must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if rule.kind == "explicit":
        return int(rule.m)
    return int(math.ceil(rule.kappa * dx ** (-2 * order)))


@dataclass(frozen=True)
class SamplePlan:
    rule: SampleRule
    base_seed: int = 0
    order: int = 1

    def resolve(self, dx: float) -> int:
        m = plan_samples(self.rule, dx, self.order)
        if m < 2:
            raise ValueError(f"need at least 2 samples for the variance estimate, got {m}")
        return m


# ---------------------------------------------------------------------------
# error reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    absolute: float
    relative_percent: float
    undefined_relative: bool = False


def error_report(mean: Field, reference: Field, norm: str = "l2",
                 component: int = 0) -> ErrorReport:
    """Absolute and percent-relative error of one component in the chosen
    discrete norm.  A zero-norm reference flags the relative error as
    undefined; the absolute error is still reported."""
    if mean.mesh.dims != reference.mesh.dims:
        raise ValueError("fields live on different meshes")
    norm_fn = {"l1": l1_norm, "l2": l2_norm}[norm]
    diff = Field(mean.mesh, mean.data - reference.data)
    absolute = norm_fn(diff, component)
    ref_norm = norm_fn(reference, component)
    if ref_norm == 0.0:
        return ErrorReport(absolute, math.nan, undefined_relative=absolute > 0.0)
    return ErrorReport(absolute, 100.0 * absolute / ref_norm)


# ---------------------------------------------------------------------------
# the Monte Carlo loop
# ---------------------------------------------------------------------------

@dataclass
class McStats:
    samples: int
    seed: int
    threads: int
    wall_time: float = 0.0
    per_sample_time: float = 0.0
    cfl: CflStats = dc_field(default_factory=CflStats)
    skipped: list = dc_field(default_factory=list)


@dataclass
class McResult:
    mean: Field
    variance: Field
    stats: McStats


_CTX = None  # worker context (model, scheme, controller, seed, skip_failed); set pre-fork


def _set_worker_context(ctx):
    global _CTX
    _CTX = ctx


def _run_chunk(bounds: tuple[int, int]):
    model, scheme, controller, seed, skip_failed = _CTX
    lo, hi = bounds
    shape = (model.components,) + model.mesh.dims[::-1]
    acc = MomentAccumulator(shape)
    stats = CflStats()
    skipped = []
    for m in range(lo, hi):
        try:
            u = models_mod.simulate_sample(model, scheme, controller, seed, m, stats)
        except NumericalBlowupError as err:
            if not skip_failed:
                raise NumericalBlowupError(
                    f"sample {m} (seed {seed}) blew up: {err}",
                    t=err.t, cell=err.cell, sample=m, seed=seed,
                ) from None
            skipped.append(m)
            continue
        acc.push(u)
    return lo, acc.count, acc.mean, acc.m2, \
        (stats.n_steps, stats.min_dt, stats.max_cfl_sum, stats.violations), skipped


def _fold_chunks(shape, results):
    """Fold per-chunk accumulators in ascending chunk order."""
    total = MomentAccumulator(shape)
    cfl = CflStats()
    skipped = []
    for lo in sorted(results):
        count, mean, m2, cfl_tuple, skips = results[lo]
        part = MomentAccumulator(shape)
        part.count, part.mean, part.m2 = count, mean, m2
        total = merge(total, part)
        cfl.merge(CflStats(*cfl_tuple))
        skipped.extend(skips)
    return total, cfl, skipped


class _Progress:
    def __init__(self, total: int, enabled: bool):
        self.total = total
        self.enabled = enabled
        self.done = 0
        self._last_pct = 0

    def advance(self, n: int):
        self.done += n
        if not self.enabled:
            return
        pct = int(100 * self.done / self.total)
        while self._last_pct < pct:
            self._last_pct += 1
            print(f"progress: {self._last_pct:3d}% ({self.done}/{self.total})",
                  file=sys.stderr, flush=True)


def run_mc(model, scheme: SchemeOrder, controller: TimeController, plan: SamplePlan,
           threads: int = 1, skip_failed: bool = False, progress: bool = False) -> McResult:
    """Estimate mean and variance of the terminal state over M realizations.

    The result is independent of ``threads`` (bitwise): chunking, per-sample
    streams and the reduction order are functions of the plan alone.
    """
    bound = model.wave_speed_bound(controller.t_end)
    if not math.isfinite(bound):
        raise ValueError("model expected wave-speed bound is not finite")
    m_total = plan.resolve(min(model.mesh.spacing[a] for a in model.mesh.active_axes))
    seed = plan.base_seed
    chunks = [(lo, min(lo + _CHUNK, m_total)) for lo in range(0, m_total, _CHUNK)]
    shape = (model.components,) + model.mesh.dims[::-1]

    _warmup_kernels()
    _set_worker_context((model, scheme, controller, seed, skip_failed))
    prog = _Progress(m_total, progress)
    results = {}
    t0 = time.perf_counter()
    if threads <= 1 or len(chunks) == 1:
        for chunk in chunks:
            lo, count, mean, m2, cfl_tuple, skips = _run_chunk(chunk)
            results[lo] = (count, mean, m2, cfl_tuple, skips)
            prog.advance(chunk[1] - chunk[0])
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            pending = {pool.submit(_run_chunk, chunk): chunk for chunk in chunks}
            while pending:
                done, _ = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    chunk = pending.pop(fut)
                    lo, count, mean, m2, cfl_tuple, skips = fut.result()
                    results[lo] = (count, mean, m2, cfl_tuple, skips)
                    prog.advance(chunk[1] - chunk[0])
    wall = time.perf_counter() - t0

    total, cfl, skipped = _fold_chunks(shape, results)
    if total.count < 2:
        raise NumericalBlowupError(
            f"only {total.count} of {m_total} samples succeeded", seed=seed)
    stats = McStats(samples=total.count, seed=seed, threads=threads, wall_time=wall,
                    per_sample_time=wall / max(total.count, 1), cfl=cfl, skipped=skipped)
    mean_f = Field(model.mesh, total.mean.copy())
    var_f = Field(model.mesh, total.variance())
    return McResult(mean_f, var_f, stats)
