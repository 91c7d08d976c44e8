"""Deterministic random-stream derivation.

All randomness in the package flows through numpy ``Generator`` objects
derived here.  Two derivation schemes cover every need:

* ``substream(seed, *tags)`` — a generator keyed by an integer seed plus a
  tuple of integer tags (e.g. ``(base_seed, stage, replication)``).  Distinct
  tag tuples give independent streams; the same tuple always gives the same
  stream.  Experiment code uses this so that sweep cells share replication
  streams where their shapes allow (common random numbers).

* ``spawn_streams(seed, n, *tags)`` — ``n`` child generators via
  ``SeedSequence.spawn``, used for per-expert streams.  Children are
  independent of each other and of the parent, and child ``i`` does not
  depend on ``n``: a 3-expert panel draws the same first three streams as a
  10-expert panel with the same seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "spawn_streams", "child_sequence"]


def _sequence(seed: int, tags: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags))


def substream(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the stream keyed by ``(seed, *tags)``."""
    return np.random.default_rng(_sequence(seed, tags))


def child_sequence(seed: int, index: int, *tags: int) -> np.random.SeedSequence:
    """The ``index``-th spawn child of the stream keyed by ``(seed, *tags)``.

    Equals ``spawn_streams(seed, n, *tags)``'s ``index``-th element for any
    ``n > index``.
    """
    return _sequence(seed, tags).spawn(index + 1)[index]


def spawn_streams(seed: int, n: int, *tags: int) -> list[np.random.Generator]:
    """``n`` independent child generators of the ``(seed, *tags)`` stream."""
    return [np.random.default_rng(s) for s in _sequence(seed, tags).spawn(n)]
