"""Scale lattices.

Every indexed dimension carries a discrete lattice of `scale_count` equal
units over its domain. Scale counts are kept 2-3-5-smooth so charts can be
re-binned into common resolutions without remainder, and every boundary
value is produced by one canonical expression (`lattice_value`) so that
edges computed independently by different modules compare bit-equal.
"""

from __future__ import annotations

import numpy as np

# Tolerance in lattice units for classifying a value as "on a boundary".
# Real data separated by less than 1e-7 of a scale unit is indistinguishable.
_LATTICE_EPS = 1e-7


def is_smooth(n: int) -> bool:
    """True if n is a positive integer whose only prime factors are 2, 3, 5."""
    if n < 1:
        return False
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def nearest_smooth(n: int) -> int:
    """Closest 2-3-5-smooth integer to n (ties resolve to the larger one)."""
    if n < 1:
        return 1
    for delta in range(0, n + 1):
        if is_smooth(n + delta):
            return n + delta
        if n - delta >= 1 and is_smooth(n - delta):
            return n - delta
    return 1


def lattice_value(lo: float, hi: float, count: int, k):
    """Boundary value(s) of lattice position k; the one canonical formula."""
    k = np.asarray(k, dtype=np.float64)
    out = lo + k * (hi - lo) / count
    return out if out.ndim else float(out)


def to_units(lo: float, hi: float, count: int, values):
    """Map values into lattice-unit coordinates (0 .. count over the domain)."""
    values = np.asarray(values, dtype=np.float64)
    return (values - lo) / (hi - lo) * count


def unit_floor(lo: float, hi: float, count: int, values) -> np.ndarray:
    """Largest lattice position at or below each value, clipped to [0, count]."""
    t = to_units(lo, hi, count, values)
    return np.clip(np.floor(t + _LATTICE_EPS), 0, count).astype(np.int64)


def unit_ceil(lo: float, hi: float, count: int, values) -> np.ndarray:
    """Smallest lattice position at or above each value, clipped to [0, count]."""
    t = to_units(lo, hi, count, values)
    return np.clip(np.ceil(t - _LATTICE_EPS), 0, count).astype(np.int64)


def unit_round(lo: float, hi: float, count: int, values) -> np.ndarray:
    """Nearest lattice position to each value, clipped to [0, count]."""
    t = to_units(lo, hi, count, values)
    return np.clip(np.rint(t), 0, count).astype(np.int64)


def snap_nearest(lo: float, hi: float, count: int, values):
    """Snap values to the nearest lattice boundary.

    Applying the result again is a fixpoint, so already-aligned edges pass
    through unchanged.
    """
    return lattice_value(lo, hi, count, unit_round(lo, hi, count, values))


def on_lattice(lo: float, hi: float, count: int, values) -> np.ndarray:
    """Boolean mask: which values already sit on a lattice boundary."""
    t = to_units(lo, hi, count, values)
    return np.abs(t - np.rint(t)) <= _LATTICE_EPS
