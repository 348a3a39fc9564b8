"""Named random sub-streams derived from one master seed."""

import zlib

import numpy as np


def substream(seed: int, component: str, index: int = 0) -> np.random.Generator:
    """Return a generator keyed by ``(seed, component, index)``.

    The component name is hashed with CRC32 so the mapping is stable across
    interpreter runs (unlike ``hash``).
    """
    key = zlib.crc32(component.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))
