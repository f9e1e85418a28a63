"""Degree-m U- and V-statistics with array-valued kernels.

Exhaustive enumeration only (degree capped at 4); values are real scalars or
numpy arrays of a fixed shape.  Bootstrap versions recompute the statistic on
an index resample, using the distinct-index form for the U-statistic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 4


@dataclass(frozen=True)
class Kernel:
    degree: int
    fn: object  # callable of `degree` data items -> scalar or ndarray
    symmetric: bool = True
    name: str = ""

    def __post_init__(self):
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {MAX_DEGREE}]")

    def __call__(self, *args):
        return self.fn(*args)


def _as_items(data):
    return list(data)


def u_statistic(kernel, data):
    """Average of the kernel over all size-m index subsets (ordered once)."""
    items = _as_items(data)
    n, m = len(items), kernel.degree
    if n < m:
        raise ValueError(f"need n >= m, got n={n}, m={m}")
    if not kernel.symmetric:
        total = sum(
            np.asarray(kernel(*(items[i] for i in perm)), dtype=float)
            for comb in itertools.combinations(range(n), m)
            for perm in itertools.permutations(comb)
        )
        return total / (math.comb(n, m) * math.factorial(m))
    total = sum(
        np.asarray(kernel(*(items[i] for i in comb)), dtype=float)
        for comb in itertools.combinations(range(n), m)
    )
    return total / math.comb(n, m)


def v_statistic(kernel, data):
    """Full m-fold average including diagonal index tuples."""
    items = _as_items(data)
    n, m = len(items), kernel.degree
    if n < 1:
        raise ValueError("need at least one data item")
    total = sum(
        np.asarray(kernel(*(items[i] for i in tup)), dtype=float)
        for tup in itertools.product(range(n), repeat=m)
    )
    return total / n**m


def bootstrap_u_statistic(kernel, data, rng):
    """U-statistic of one with-replacement resample of the data."""
    items = _as_items(data)
    idx = rng.integers(0, len(items), size=len(items))
    return u_statistic(kernel, [items[i] for i in idx])


def bootstrap_v_statistic(kernel, data, rng):
    """V-statistic of one with-replacement resample of the data."""
    items = _as_items(data)
    idx = rng.integers(0, len(items), size=len(items))
    return v_statistic(kernel, [items[i] for i in idx])
