"""Named random streams derived from one integer seed."""

import zlib

import numpy as np


def make_rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """Independent generator for ``stream`` (e.g. ``"init"``, ``"splits"``, ``"sbm"``)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(stream.encode()), *extra])
