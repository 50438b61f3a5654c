"""Portable 64-bit PRNG used wherever results must be reproducible
across platforms and implementations.

The generator is xorshift64* (shifts 12/25/27, output multiplier
2685821657736338717 = 0x2545F4914F6CDD1D). Seeds are whitened through
one round of splitmix64 so that small consecutive seeds do not produce
correlated streams; a zero state is remapped to the multiplier constant
because xorshift has no zero cycle.
"""

from __future__ import annotations

from .errors import InputError

_MASK64 = (1 << 64) - 1

XORSHIFT_MULTIPLIER = 0x2545F4914F6CDD1D
XORSHIFT_SHIFTS = (12, 25, 27)

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MIX1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MIX2 = 0x94D049BB133111EB


def splitmix64(z: int) -> int:
    """One splitmix64 step: maps any 64-bit value to a well-mixed one."""
    z = (z + _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _SPLITMIX_MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MIX2) & _MASK64
    return z ^ (z >> 31)


def seed_state(seed: int) -> int:
    """Derive a nonzero xorshift64* state from an arbitrary integer seed."""
    state = splitmix64(seed & _MASK64)
    if state == 0:
        state = XORSHIFT_MULTIPLIER
    return state


def derive_seed(seed: int, key: str) -> int:
    """Mix a global seed with a string key into an independent sub-seed.

    Used to give every dataset entry its own deterministic stream so that
    parallel processing order cannot change results.
    """
    h = splitmix64(seed & _MASK64)
    for b in key.encode("utf-8"):
        h = splitmix64(h ^ b)
    return h


class Xorshift64Star:
    """Stateful xorshift64* stream with uniform float and shuffle helpers."""

    def __init__(self, seed: int):
        self._state = seed_state(seed)

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * XORSHIFT_MULTIPLIER) & _MASK64

    def next_float(self) -> float:
        """Uniform double in [0, 1) built from the top 53 output bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise InputError("randbelow requires n >= 1, got %d" % n)
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, iterating from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
