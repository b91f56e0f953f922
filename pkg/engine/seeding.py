import zlib

import numpy as np


def rng_stream(root_seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Independent generator for the named sub-stream of ``root_seed``.
    The name is hashed with crc32 so streams are stable across processes.
    """
    entropy = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    entropy.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy))
