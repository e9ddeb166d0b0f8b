"""Exception types shared across the package.

Argument errors use the builtin ValueError; the classes below cover the
failure modes that map to distinct CLI exit codes.
"""

from __future__ import annotations


class ConfigurationError(Exception):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class UnsupportedConfigurationError(ConfigurationError):
    """Configuration is syntactically valid but outside the supported set
    (e.g. non-periodic mesh handed to the spectral field sampler)."""


class NumericalBlowupError(Exception):
    """A solver produced non-finite values (CLI exit code 3).

    Carries enough context to replay the failure: time, flat cell index,
    and, when raised from the Monte Carlo loop, sample index and seed.
    """

    def __init__(self, message: str, t: float | None = None,
                 cell: int | None = None, sample: int | None = None,
                 seed: int | None = None):
        super().__init__(message)
        self.t = t
        self.cell = cell
        self.sample = sample
        self.seed = seed

    def __reduce__(self):
        # keep the replay context when crossing process boundaries
        return (self.__class__, (str(self), self.t, self.cell, self.sample, self.seed))
