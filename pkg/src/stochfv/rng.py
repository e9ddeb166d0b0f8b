"""Deterministic counter-based random streams.

Every draw in a Monte Carlo run is produced by a Philox generator whose
key/counter encode (global seed, parameter index, step index, sample index),
so results never depend on worker count or execution order.

Two stream disciplines are used:

* field noise: one generator per (seed, sample, step, parameter), created on
  demand from ``step_generator`` -- each Gaussian random field draw has its
  own counter block;
* scalar paths: one generator per (seed, sample, parameter) from
  ``path_generator``, consumed sequentially with the step index given by the
  position in the stream (cheaper for the space-independent coefficient,
  identical determinism guarantees).
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

_MASK = (1 << 64) - 1


def step_generator(seed: int, sample: int, step: int, param: int) -> Generator:
    """Generator keyed by the full (seed, sample, step, parameter) tuple."""
    key = [int(seed) & _MASK, int(param) & _MASK]
    counter = [0, 0, int(step) & _MASK, int(sample) & _MASK]
    return Generator(Philox(key=key, counter=counter))


def path_generator(seed: int, sample: int, param: int) -> Generator:
    """Generator keyed by (seed, sample, parameter); steps are positions."""
    key = [int(seed) & _MASK, int(param) & _MASK]
    counter = [0, 1, 0, int(sample) & _MASK]
    return Generator(Philox(key=key, counter=counter))
