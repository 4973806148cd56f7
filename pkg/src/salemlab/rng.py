"""SplitMix64 streams for reproducible atom sampling.

Generator spec (portable to any language with 64-bit unsigned arithmetic):

* state after ``i`` steps: ``seed + i * 0x9E3779B97F4A7C15 (mod 2^64)``
* output ``i`` (``i = 0, 1, ...``) is ``mix(seed + (i + 1) * GAMMA)`` where
  ``mix(z)``: ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31``
* trial ``t`` of master seed ``s`` uses the stream seeded with output ``t`` of
  the stream seeded with ``s``
* an integer in ``[0, n)`` is ``z mod n`` for the next output ``z`` below
  ``2^64 - (2^64 mod n)``; larger outputs are skipped

Test vectors live in ``tests/fixtures/splitmix64_vectors.json``.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * MIX1) & _MASK
    z = ((z ^ (z >> 27)) * MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the stream seeded with ``seed``."""
    steps = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + steps * np.uint64(GAMMA)
        return _mix_array(z)


def trial_seed(master: int, trial: int) -> int:
    return mix64((master & _MASK) + (trial + 1) * GAMMA)


def uniform_integers(seed: int, count: int, n: int) -> np.ndarray:
    """``count`` unbiased integers in ``[0, n)`` from the stream seeded with ``seed``."""
    if n < 1:
        raise ValueError("upper limit must be positive")
    limit = (1 << 64) - ((1 << 64) % n)
    out, pos = [], 0
    need = count
    while need > 0:
        block = stream(seed, need + 8, pos)
        pos += need + 8
        if limit < (1 << 64):
            block = block[block < np.uint64(limit)]
        take = block[:need]
        out.append(take % np.uint64(n))
        need -= len(take)
    res = np.concatenate(out) if out else np.zeros(0, dtype=np.uint64)
    return res.astype(np.int64)
