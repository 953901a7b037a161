"""Named seed derivation.

Every random stream in the package is derived from one user seed plus a
(component, index) name, so that streams are independent of execution order
and of the number of worker threads.
"""

import zlib

import numpy as np


def _component_key(component: str) -> int:
    return zlib.crc32(component.encode("utf-8"))


def derive_seed(seed: int, component: str, *index: int) -> int:
    """Return a 64-bit integer seed for the named stream."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _component_key(component), *map(int, index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_rng(seed: int, component: str, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _component_key(component), *map(int, index)])
    return np.random.default_rng(ss)
