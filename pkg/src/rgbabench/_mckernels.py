"""Jitted Monte-Carlo summation kernel for discrete background samplers.

Drawing one fresh background value per pixel, channel, and sample in
numpy is far too slow for million-sample runs on a single core. For
samplers whose distribution is expressible as a uniform 1- or 2-bit code
per value (two-point and three-point distributions), the per-sample mean
is a table lookup: every 16 bits of PRNG output select one precomputed
partial sum covering 16 (1-bit) or 8 (2-bit) consecutive values.

The PRNG inside the kernel is the package-wide xorshift64* (shifts
12/25/27, multiplier 0x2545F4914F6CDD1D); one 64-bit draw feeds four
16-bit chunk lookups.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U64 = np.uint64
_XORSHIFT_MULTIPLIER = _U64(0x2545F4914F6CDD1D)


def build_chunk_tables(term_table: np.ndarray, bits: int) -> np.ndarray:
    """Fold a per-value code table into 16-bit-chunk lookup tables.

    ``term_table`` has shape (n_values, 2**bits): the contribution of
    value i when its code is k. The result has shape (n_chunks, 65536)
    where chunk j covers values [j*16//bits, (j+1)*16//bits) and entry c
    is the sum of the covered values' contributions under the codes
    packed little-endian into c. Chunks are zero-padded to a multiple of
    4 so the kernel can consume one 64-bit word per 4 chunks.
    """
    if bits not in (1, 2):
        raise ValueError("bits must be 1 or 2, got %r" % (bits,))
    n_codes = 1 << bits
    if term_table.ndim != 2 or term_table.shape[1] != n_codes:
        raise ValueError(
            "term table shape %s does not match %d codes"
            % (term_table.shape, n_codes)
        )
    per_chunk = 16 // bits
    n_values = term_table.shape[0]
    n_chunks = -(-n_values // per_chunk)
    n_chunks += (-n_chunks) % 4
    padded = np.zeros((n_chunks * per_chunk, n_codes), dtype=np.float64)
    padded[:n_values] = term_table
    table = padded
    width = bits
    while width < 16:
        lo = table[0::2]
        hi = table[1::2]
        # entry (hi_code << width) | lo_code; low codes vary fastest
        table = (hi[:, :, None] + lo[:, None, :]).reshape(lo.shape[0], -1)
        width *= 2
    return np.ascontiguousarray(table, dtype=np.float32)


@njit(cache=True)
def mc_sum_chunks(tables: np.ndarray, n_samples: int, state: np.uint64):
    """Accumulate per-sample sums and squared sums over chunk lookups.

    Returns (sum_of_means, sum_of_squared_means) where each per-sample
    value is the sum over all chunks of one table entry selected by 16
    fresh PRNG bits.
    """
    n_chunks = tables.shape[0]
    mask = _U64(0xFFFF)
    x = state
    total = 0.0
    total_sq = 0.0
    for _ in range(n_samples):
        acc = 0.0
        j = 0
        while j < n_chunks:
            x ^= x >> _U64(12)
            x ^= x << _U64(25)
            x ^= x >> _U64(27)
            bits = x * _XORSHIFT_MULTIPLIER
            acc += tables[j, bits & mask]
            acc += tables[j + 1, (bits >> _U64(16)) & mask]
            acc += tables[j + 2, (bits >> _U64(32)) & mask]
            acc += tables[j + 3, (bits >> _U64(48)) & mask]
            j += 4
        total += acc
        total_sq += acc * acc
    return total, total_sq
