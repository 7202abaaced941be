"""Input checks for phase-space arrays and time grids."""
from __future__ import annotations

import numpy as np


def check_phase_space(X, L: int | None = None, *, ensure_2d: bool = False) -> np.ndarray:
    """Return ``X`` as a float64 array of phase-space points.

    A single point has shape ``(2L,)``; a batch ``(S, 2L)``.  With
    ``ensure_2d`` a single point is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim not in (1, 2):
        raise ValueError(f"expected a point (2L,) or a batch (S, 2L), got shape {X.shape}")
    if X.shape[-1] % 2:
        raise ValueError(f"phase-space dimension must be even, got {X.shape[-1]}")
    if L is not None and X.shape[-1] != 2 * L:
        raise ValueError(f"expected 2L={2 * L} coordinates, got {X.shape[-1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("phase-space points contain non-finite entries")
    if ensure_2d and X.ndim == 1:
        X = X[None, :]
    return np.ascontiguousarray(X)


def check_time_grid(times, *, allow_negative: bool = False, strict: bool = True) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(t)):
        raise ValueError("time grid contains non-finite values")
    if not allow_negative and np.any(t < 0):
        raise ValueError("time grid must be nonnegative")
    d = np.diff(t)
    if strict and np.any(d <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def check_positive(name: str, value, *, strict: bool = True):
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        raise ValueError(f"{name} must be {'>' if strict else '>='} 0, got {value}")
    return value
