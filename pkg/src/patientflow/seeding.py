"""Deterministic random streams.

Every stochastic routine in the package draws from a numpy ``Generator``
backed by PCG64, keyed by ``(seed, *purpose)`` through ``SeedSequence``
spawn keys. The same key yields the same stream on every platform, and
distinct keys are statistically independent, so replications and
sub-models can be sampled in any order (or in parallel) without changing
results.
"""

from __future__ import annotations

from numpy.random import PCG64, Generator, SeedSequence


def stream(seed: int, *key: int) -> Generator:
    """Return the PCG64 generator for a (seed, purpose-key) pair."""
    return Generator(PCG64(SeedSequence(entropy=seed, spawn_key=key)))
