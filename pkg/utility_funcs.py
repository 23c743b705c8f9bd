from fractions import Fraction
from itertools import combinations
from numbers import Rational

import numpy as np

# Absolute tolerance for float probabilities
DEFAULT_TOLERANCE = 1e-9


def parse_number(value):
    """Turn a scenario number into an exact value where possible.

    Integers, Fractions and strings like "1/3" or "0.25" become Fractions. Python floats are
    read through their decimal repr so that 0.1 from a JSON document means 1/10.
    """
    if isinstance(value, bool):
        raise TypeError(f"expected a number, not {value!r}")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ValueError(f"expected a finite number, not {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected a number, not {value!r}")


def is_exact(value):
    return isinstance(value, Rational)


def all_exact(values):
    return all(is_exact(v) for v in values)


def approx_equal(a, b, tol=DEFAULT_TOLERANCE):
    """Exact equality for rationals, absolute tolerance otherwise."""
    if is_exact(a) and is_exact(b):
        return a == b
    return abs(float(a) - float(b)) <= tol


def approx_leq(a, b, tol=DEFAULT_TOLERANCE):
    if is_exact(a) and is_exact(b):
        return a <= b
    return float(a) <= float(b) + tol


def to_float(value):
    return float(value)


def to_json_number(value):
    """Fractions serialize as "p/q" strings (ints stay ints), everything else as a float."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return value.numerator
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    return float(value)


def popcount(mask):
    return bin(mask).count("1")


def mask_to_indices(mask):
    """
    Indices of the set bits of a bitset, lowest first
    :param mask: int bitset
    :return: list of int
    """
    indices = []
    i = 0
    while mask:
        if mask & 1:
            indices.append(i)
        mask >>= 1
        i += 1
    return indices


def indices_to_mask(indices):
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def subsets_of_size(n, k):
    """Bitsets of all size-k subsets of range(n) in lexicographic combination order."""
    for combo in combinations(range(n), k):
        yield indices_to_mask(combo)


def all_subsets(n):
    return range(1 << n)


def update_nested_dict(d0, d1):
    """
    Recursively updates a nested dictionary with a second nested dictionary.
    This function exists because the standard dict update overwrites nested dictionaries instead of
    recursively updating them.
    :param d0: The dict that receives the new values
    :param d1: The dict providing new values
    :return: Nothing, d0 is updated in place
    """
    for k, v in d1.items():
        if k in d0 and type(v) is dict:
            if type(d0[k]) is dict:
                update_nested_dict(d0[k], d1[k])
            else:
                raise TypeError(f"cannot merge a dict into the non-dict value at key {k!r}")
        else:
            d0[k] = d1[k]
