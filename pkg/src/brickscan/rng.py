"""Deterministic random number derivation.

Every stochastic step in the pipeline draws from a counter-based Philox
generator keyed by a root seed plus a stream path, so results do not depend
on evaluation order or thread count.  Lattice noise and per-pixel sample
rotations use a splitmix-style integer hash instead of a generator, which
keeps them a pure function of their coordinates.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids for the top-level pipeline stages.  Derived generators for
# per-item work append further integers (brick id, sample index, stage index).
STREAM_TRAIN_WALL = 1
STREAM_EVAL_WALL = 2
STREAM_POSITIVES = 3
STREAM_NEGATIVES = 4
STREAM_TRAINING = 5
STREAM_AO = 6

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def spawn(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator keyed by (seed, *stream).

    The same arguments always produce the same generator state, independent
    of how many other generators were created before it.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x ^ (x >> np.uint64(31))


def hash_u64(seed: int, *coords) -> np.ndarray:
    """Hash integer coordinate arrays to uint64 values.

    Arguments broadcast like numpy ufuncs.  Negative coordinates are fine,
    they wrap into the uint64 domain before mixing.
    """
    with np.errstate(over="ignore"):
        h = _splitmix64(np.asarray(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)))
        for c in coords:
            c64 = np.asarray(c).astype(np.int64).view(np.uint64)
            h = _splitmix64((h ^ c64) & _MASK64)
        return h


def hash_unit(seed: int, *coords) -> np.ndarray:
    """Hash integer coordinates to float64 in [0, 1)."""
    return hash_u64(seed, *coords).astype(np.float64) * (2.0 ** -64)
