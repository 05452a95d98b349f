"""Input validation helpers shared by the public API."""

from __future__ import annotations

import numbers

import numpy as np


class DomainError(ValueError):
    """A parameter lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A model or experiment configuration is inconsistent."""


def check_probability(p, name="p", allow_zero=False):
    """Return ``p`` as a float after checking it is a success probability."""
    if isinstance(p, bool) or not isinstance(p, numbers.Real):
        raise DomainError(f"{name} must be a real number, got {p!r}")
    p = float(p)
    lower_ok = p >= 0.0 if allow_zero else p > 0.0
    if not (lower_ok and p <= 1.0) or np.isnan(p):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise DomainError(f"{name} must lie in {interval}, got {p}")
    return p


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_positive(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not value > 0.0 or not np.isfinite(value):
        raise DomainError(f"{name} must be strictly positive and finite, got {value}")
    return value


def check_states(X, state_space):
    """Coerce ``X`` to a 1-D integer array of states inside ``state_space``.

    Accepts scalars, sequences, or column vectors of shape ``(n, 1)`` so that
    estimator ``predict`` calls behave like the rest of the ecosystem.
    """
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    arr = np.atleast_1d(arr)
    if arr.ndim != 1:
        raise ValueError(f"states must be 1-D or a single column, got shape {arr.shape}")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError("states must be integers")
    arr = arr.astype(np.int64)
    lo, hi = state_space.iota_min, state_space.iota_max
    if arr.size and (arr.min() < lo or arr.max() > hi):
        raise ValueError(f"states must lie in [{lo}, {hi}]")
    return arr
