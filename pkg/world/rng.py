"""
Named deterministic random streams.

Every source of randomness in the lab is a numpy Generator derived from an
integer seed plus a stream name, so two components seeded alike never share
draws and a rerun with the same seed reproduces every stream bit for bit.
"""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream `name` under `seed`."""
    return np.random.default_rng([int(seed), stream_key(name)])


def derive_seed(rng: np.random.Generator) -> int:
    """Draw a child seed from an existing stream."""
    return int(rng.integers(0, 2**31 - 1))
