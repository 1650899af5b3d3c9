"""Pure-numpy fallback for the bitset kernels in ``_bitops.pyx``."""

import numpy as np

BACKEND = "python"

_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def and_reduce(mat, out):
    """AND all rows of ``mat`` into ``out``.  Zero rows -> all-ones."""
    if mat.shape[0] == 0:
        out[:] = _ALL_ONES
    else:
        np.bitwise_and.reduce(mat, axis=0, out=out)


def popcount(a):
    return int(np.bitwise_count(a).sum())


def popcount_and(a, b):
    return int(np.bitwise_count(a & b).sum())


def popcount_andnot(a, b):
    return int(np.bitwise_count(a & ~b).sum())
