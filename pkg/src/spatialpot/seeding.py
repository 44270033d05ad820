"""Seed splitting.

Every random draw in the package comes from a single integer scenario seed.
Child streams are addressed by a tuple of non-negative integer keys passed as
the ``spawn_key`` of a :class:`numpy.random.SeedSequence`, so any stream can
be regenerated on its own without replaying the others:

    scenario trial t       -> (t, STREAM)
    sweep point n, trial t -> (n, t, STREAM)
    Monte Carlo probe block b -> (b,)

``STREAM`` is one of the constants below.  Inside the policy stream, user ``u``
owns row ``u`` of an ``(m, 3)`` uniform array, which acts as that user's own
stream (two candidate picks and one tie-break).
"""

import numpy as np

SERVERS = 0
USERS = 1
POLICY = 2
MOBILITY = 3

# probes per independently seeded Monte Carlo block
PROBE_BLOCK = 1 << 16


def derive(seed, *keys):
    """Return the SeedSequence for child stream ``keys`` of ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def rng(seed, *keys):
    return np.random.Generator(np.random.PCG64(derive(seed, *keys)))


def probe_blocks(count):
    """Yield ``(block_index, block_size)`` covering ``count`` probes."""
    b = 0
    while count > 0:
        size = min(PROBE_BLOCK, count)
        yield b, size
        count -= size
        b += 1
