"""Seed derivation.

Every stochastic stage draws from ``numpy.random.SeedSequence`` keyed by
``(master seed, stream label, index)``; replicate ``i`` therefore sees the
same stream no matter which worker evaluates it or in what order.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_key(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(master, *labels):
    """Return a 64-bit child seed for the named stage."""
    ss = np.random.SeedSequence([int(master) & _MASK64, *map(_label_key, labels)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(master, *labels):
    """Independent generator for ``(master, *labels)``."""
    ss = np.random.SeedSequence([int(master) & _MASK64, *map(_label_key, labels)])
    return np.random.Generator(np.random.PCG64(ss))
