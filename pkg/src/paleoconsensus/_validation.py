"""Small input validation helpers shared by the public functions."""

import numpy as np

from .exceptions import InvalidInputError


def as_vector(x, name="array", min_len=0):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise InvalidInputError(f"{name} needs at least {min_len} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_increasing(x, name="array"):
    if x.size > 1 and not np.all(np.diff(x) > 0):
        raise InvalidInputError(f"{name} must be strictly increasing")
    return x


def check_probability(p, name="probability", closed_right=False):
    p = float(p)
    upper_ok = p <= 1.0 if closed_right else p < 1.0
    if not (p > 0.0 and upper_ok):
        interval = "(0, 1]" if closed_right else "(0, 1)"
        raise InvalidInputError(f"{name} must lie in {interval}, got {p}")
    return p


def check_positive(x, name="value", allow_zero=False):
    x = float(x)
    if not np.isfinite(x) or (x < 0 if allow_zero else x <= 0):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidInputError(f"{name} must be {bound}, got {x}")
    return x


def check_square_spd(S, name="matrix"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {S.shape}")
    return S
