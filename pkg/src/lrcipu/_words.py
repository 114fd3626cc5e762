"""Word-level helpers shared by the scalar and the lockstep (numpy) paths.

Every function here accepts either a Python ``int`` or an ``np.ndarray`` of
``int64`` and returns the same kind.  Batched arrays are limited to widths
that fit in 62 bits.
"""

import numpy as np

MAX_ARRAY_WIDTH = 62


def is_array(x):
    return isinstance(x, np.ndarray)


def wrap(x, width):
    """Reduce ``x`` to a signed two's-complement word of ``width`` bits."""
    half = 1 << (width - 1)
    return ((x + half) & ((1 << width) - 1)) - half


def where(cond, a, b):
    if is_array(cond) or is_array(a) or is_array(b):
        return np.where(cond, a, b)
    return a if cond else b


def any_true(cond):
    return bool(np.any(cond)) if is_array(cond) else bool(cond)


def shr(x, m):
    """Arithmetic shift right by ``m`` (left when ``m`` is negative)."""
    return x >> m if m >= 0 else x << -m
