"""Counting trajectory families of a one-degree-of-freedom flow.

For a fixed start position ``q0`` the final position ``q_t(p0)`` is sampled
on a grid of initial momenta.  Roots of ``q_t(p0) = q_target`` are
bracketed by sign changes and refined by bisection; the curve is cut into
monotonic branches at its local extrema, and every branch holding a root
counts as one family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numba import njit
from numba.extending import is_jitted


@dataclass(frozen=True)
class OneDofHamiltonian:
    """H(q, p) given through its partial derivatives.

    Scalar ``numba.njit`` functions take the compiled path; any other
    callable must be vectorised over numpy arrays.
    """

    dH_dp: Callable[[np.ndarray], np.ndarray]
    dH_dq: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@njit(cache=True)
def _sqrt_dq(q):
    return q / np.sqrt(1.0 + q * q)


@njit(cache=True)
def _identity(p):
    return p


@njit(cache=True)
def _rk4_grid(dH_dp, dH_dq, q0, p0, step, m):
    out = np.empty(p0.size)
    for i in range(p0.size):
        q = q0
        p = p0[i]
        for _ in range(m):
            k1q, k1p = dH_dp(p), -dH_dq(q)
            k2q, k2p = dH_dp(p + 0.5 * step * k1p), -dH_dq(q + 0.5 * step * k1q)
            k3q, k3p = dH_dp(p + 0.5 * step * k2p), -dH_dq(q + 0.5 * step * k2q)
            k4q, k4p = dH_dp(p + step * k3p), -dH_dq(q + step * k3q)
            q += step / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p += step / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        out[i] = q
    return out


# H = p^2/2 + sqrt(1 + q^2): harmonic near q = 0, linear confinement far away
SQRT_WELL = OneDofHamiltonian(dH_dp=_identity, dH_dq=_sqrt_dq, name="sqrt_well")

HAMILTONIANS = {"sqrt_well": SQRT_WELL}


class FamilyResult(NamedTuple):
    roots: np.ndarray
    families: int
    p0: np.ndarray
    q_t: np.ndarray
    unresolved: np.ndarray
    branches: list


def final_positions(h: OneDofHamiltonian, q0: float, p0, t: float, dt: float = 1e-3) -> np.ndarray:
    """q_t for each initial momentum, by fixed-step RK4."""
    p = np.array(p0, dtype=float, copy=True)
    m = max(1, math.ceil(abs(t) / dt - 1e-9))
    step = t / m
    if is_jitted(h.dH_dp) and is_jitted(h.dH_dq):
        return _rk4_grid(h.dH_dp, h.dH_dq, float(q0), p, step, m)
    q = np.full_like(p, float(q0))
    for _ in range(m):
        k1q, k1p = h.dH_dp(p), -h.dH_dq(q)
        k2q, k2p = h.dH_dp(p + 0.5 * step * k1p), -h.dH_dq(q + 0.5 * step * k1q)
        k3q, k3p = h.dH_dp(p + 0.5 * step * k2p), -h.dH_dq(q + 0.5 * step * k2q)
        k4q, k4p = h.dH_dp(p + step * k3p), -h.dH_dq(q + step * k3q)
        q = q + step / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        p = p + step / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return q


def _branches(q: np.ndarray) -> list[tuple[int, int]]:
    """Maximal index ranges [a, b] on which q is monotonic."""
    d = np.sign(np.diff(q))
    out = []
    start = 0
    last = 0.0
    for i, s in enumerate(d):
        if s == 0:
            continue
        if last != 0 and s != last:
            out.append((start, i))
            start = i
        last = s
    out.append((start, q.size - 1))
    return out


def family_count(h: OneDofHamiltonian | str = SQRT_WELL, q0: float = 0.0, q_target: float = 0.0,
                 t: float = 1.0, p_min: float = -5.0, p_max: float = 5.0, steps: int = 1001,
                 dt: float = 1e-3, bisect_iter: int = 40) -> FamilyResult:
    """Roots of q_t(p0) = q_target and the number of monotonic branches holding them.

    Roots sitting on the first or last grid point cannot be bracketed and
    are reported in ``unresolved`` instead of ``roots``.
    """
    if isinstance(h, str):
        try:
            h = HAMILTONIANS[h]
        except KeyError:
            raise ValueError(f"unknown Hamiltonian {h!r}; known: {sorted(HAMILTONIANS)}") from None
    if steps < 100:
        raise ValueError("steps must be >= 100")
    if not p_max > p_min:
        raise ValueError("p_max must exceed p_min")
    p0 = np.linspace(p_min, p_max, steps)
    qt = final_positions(h, q0, p0, t, dt)
    f = qt - q_target
    branches = _branches(qt)

    # (left index, right index) brackets; exact grid zeros give a == b
    brackets = [(i, i) for i in np.flatnonzero(f == 0.0)]
    brackets += [(i, i + 1) for i in np.flatnonzero(f[:-1] * f[1:] < 0)]
    brackets.sort()
    unresolved = [p0[a] for a, b in brackets if a == b and a in (0, steps - 1)]
    brackets = [(a, b) for a, b in brackets if not (a == b and a in (0, steps - 1))]
    idx = np.array(brackets, dtype=np.int64).reshape(-1, 2)
    lo, hi = p0[idx[:, 0]], p0[idx[:, 1]]
    flo = f[idx[:, 0]]
    open_ = idx[:, 0] != idx[:, 1]
    # all brackets are bisected together, one grid integration per iteration
    for _ in range(bisect_iter if open_.any() else 0):
        m = 0.5 * (lo[open_] + hi[open_])
        fm = final_positions(h, q0, m, t, dt) - q_target
        same = (fm < 0) == (flo[open_] < 0)
        l2 = np.where(same, m, lo[open_])
        h2 = np.where(same, hi[open_], m)
        f2 = np.where(same, fm, flo[open_])
        exact = fm == 0.0
        l2[exact] = m[exact]
        h2[exact] = m[exact]
        lo[open_], hi[open_], flo[open_] = l2, h2, f2
    roots = 0.5 * (lo + hi)
    owners = set()
    for a, b in idx:
        for k, (s, e) in enumerate(branches):
            if s <= a and b <= e:
                owners.add(k)
                break
    return FamilyResult(roots, len(owners), p0, qt, np.array(unresolved), branches)
