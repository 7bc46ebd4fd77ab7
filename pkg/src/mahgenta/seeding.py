"""Named random substreams derived from a single user-facing seed.

Every stochastic stage (splitting, parameter init, Gibbs, AIS, ...) draws
from its own named stream so that changing one stage's draws cannot shift
another's. Streams are stable across platforms and sessions.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the stream `name` under the master `seed`."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))
