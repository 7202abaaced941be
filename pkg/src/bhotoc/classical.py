"""Mean-field flow, tangent dynamics, constants of motion and Lyapunov exponents.

Phase-space points are arrays ``(q_1..q_L, p_1..p_L)`` in quadrature units
(hbar = 1).  The occupation attached to a point is the Weyl symbol of the
number operator, ``n_l = (q_l^2 + p_l^2 - 1) / 2``.

Weyl symbol of the on-site interaction
--------------------------------------
With x = (q^2 + p^2)/2 the oscillator symbol of n + 1/2, the Moyal square
gives (x^2)_W -> x^2 - 1/4, hence

    (n(n-1))_W = x^2 - 2x + 1/2 = n^2 - n - 1/4,   n = x - 1/2.

The interaction frequency dH/dn_l is therefore U (n_l - 1/2) for the Weyl
symbol and U (n_l + 1/2) for the bare functional U/2 x^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .model import BoseHubbardParams
from .observables import Observable
from .utils.validation import check_phase_space, check_positive

SYMPLECTIC_SHIFT = {True: -0.5, False: 0.5}


class FlowError(RuntimeError):
    """The trajectory left the finite reals."""

    def __init__(self, t_fail: float, msg: str | None = None):
        self.t_fail = t_fail
        super().__init__(msg or f"trajectory became non-finite at t={t_fail:.6g}")


@dataclass(frozen=True)
class FlowConfig:
    """Fixed-step RK4 settings; ``weyl_corrected`` selects the Weyl symbol
    of H over the bare Gross-Pitaevskii functional."""

    dt: float = 1e-3
    method: str = "rk4"
    weyl_corrected: bool = True

    def __post_init__(self):
        check_positive("dt", self.dt)
        if self.method != "rk4":
            raise ValueError(f"only fixed-step 'rk4' is implemented, got {self.method!r}")


def symplectic_matrix(L: int) -> np.ndarray:
    """J = [[0, I], [-I, 0]] so that dX/dt = J grad H."""
    I = np.eye(L)
    Z = np.zeros((L, L))
    return np.block([[Z, I], [-I, Z]])


def kernel_args(params: BoseHubbardParams, cfg: FlowConfig):
    return (np.array(params.E, dtype=float), float(params.U), float(params.J),
            float(params.delta), float(params.omega), SYMPLECTIC_SHIFT[cfg.weyl_corrected])


def occupations(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    L = X.shape[-1] // 2
    return 0.5 * (X[..., :L] ** 2 + X[..., L:] ** 2 - 1.0)


def phases(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    L = X.shape[-1] // 2
    return np.arctan2(X[..., L:], X[..., :L])


def hcl(params: BoseHubbardParams, t: float, X, weyl_corrected: bool = True):
    """Classical Hamiltonian H_cl(t, X); vectorised over leading axes."""
    X = np.asarray(X, dtype=float)
    L = params.L
    if X.shape[-1] != 2 * L:
        raise ValueError(f"expected 2L={2 * L} coordinates, got {X.shape[-1]}")
    q, p = X[..., :L], X[..., L:]
    E = params.onsite(t)
    if weyl_corrected:
        n = 0.5 * (q * q + p * p - 1.0)
        onsite = n @ E + 0.5 * params.U * np.sum(n * n - n - 0.25, axis=-1)
    else:
        x = 0.5 * (q * q + p * p)
        onsite = x @ E + 0.5 * params.U * np.sum(x * x, axis=-1)
    hop = -params.J * np.sum(q[..., :-1] * q[..., 1:] + p[..., :-1] * p[..., 1:], axis=-1)
    return onsite + hop


def hcl_gradient(params: BoseHubbardParams, t: float, X, weyl_corrected: bool = True) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    L = params.L
    q, p = X[..., :L], X[..., L:]
    n = 0.5 * (q * q + p * p - 1.0)
    w = params.onsite(t) + params.U * (n + SYMPLECTIC_SHIFT[weyl_corrected])
    gq = w * q
    gp = w * p
    J = params.J
    gq[..., :-1] -= J * q[..., 1:]
    gq[..., 1:] -= J * q[..., :-1]
    gp[..., :-1] -= J * p[..., 1:]
    gp[..., 1:] -= J * p[..., :-1]
    return np.concatenate([gq, gp], axis=-1)


def flow(params: BoseHubbardParams, X0, t: float, cfg: FlowConfig | None = None,
         with_tangent: bool = False):
    """Integrate Hamilton's equations from 0 to ``t`` (negative runs backwards).

    Returns ``X_t`` or ``(X_t, M)`` with M = dX_t/dX_0 obtained from the
    variational equations advanced by the same RK4 stages.
    """
    cfg = cfg or FlowConfig()
    x0 = check_phase_space(X0, params.L)
    if x0.ndim != 1:
        raise ValueError("flow() takes a single phase-space point")
    n = x0.size
    V0 = np.eye(n) if with_tangent else np.empty((n, 0))
    xs, vs, tfail = K.propagate_grid(x0, 0.0, np.array([float(t)]), cfg.dt,
                                     *kernel_args(params, cfg), V0)
    if np.isfinite(tfail):
        raise FlowError(tfail)
    if with_tangent:
        return xs[0], vs[0]
    return xs[0]


def flow_grid(params: BoseHubbardParams, X0, times, cfg: FlowConfig | None = None) -> np.ndarray:
    """States at each time of a sorted nonnegative grid, shape (nt, 2L)."""
    cfg = cfg or FlowConfig()
    x0 = check_phase_space(X0, params.L)
    xs, tfail = K.sample_times(x0, np.asarray(times, dtype=float), cfg.dt, *kernel_args(params, cfg))
    if np.isfinite(tfail):
        raise FlowError(tfail)
    return xs


class Constants(NamedTuple):
    E: float | None
    N: float


def conserved(params: BoseHubbardParams, X, weyl_corrected: bool = True) -> Constants:
    """Particle number and, when the system is autonomous, the energy.

    Vectorised over leading axes of ``X``.
    """
    X = np.asarray(X, dtype=float)
    N = occupations(X).sum(axis=-1)
    E = None if params.driven else hcl(params, 0.0, X, weyl_corrected)
    return Constants(E, N)


def grad_number(X) -> np.ndarray:
    """Gradient of N = sum_l (q_l^2 + p_l^2 - 1)/2, i.e. X itself."""
    return np.asarray(X, dtype=float).copy()


def grad_observable(obs: Observable | str, X) -> np.ndarray:
    """Analytic gradient of a single-site observable (vectorised)."""
    obs = Observable.parse(obs)
    X = np.asarray(X, dtype=float)
    L = X.shape[-1] // 2
    obs.check_sites(L)
    g = np.zeros_like(X)
    s = obs.slot
    if obs.kind == "number":
        g[..., s] = X[..., s]
        g[..., L + s] = X[..., L + s]
    elif obs.kind == "quadrature_q":
        g[..., s] = 1.0
    elif obs.kind == "quadrature_p":
        g[..., L + s] = 1.0
    else:
        g[..., L + s] = 2.0 * X[..., L + s]
    return g


def observable_value(obs: Observable | str, X) -> np.ndarray:
    obs = Observable.parse(obs)
    X = np.asarray(X, dtype=float)
    L = X.shape[-1] // 2
    q, p = X[..., obs.slot], X[..., L + obs.slot]
    if obs.kind == "number":
        return 0.5 * (q * q + p * p - 1.0)
    if obs.kind == "quadrature_q":
        return q
    if obs.kind == "quadrature_p":
        return p
    return p * p


def poisson_bracket(grad_f, grad_g) -> np.ndarray:
    """{f, g} = grad f . J . grad g for stacked gradients."""
    grad_f = np.asarray(grad_f, dtype=float)
    grad_g = np.asarray(grad_g, dtype=float)
    L = grad_f.shape[-1] // 2
    return (np.sum(grad_f[..., :L] * grad_g[..., L:], axis=-1)
            - np.sum(grad_f[..., L:] * grad_g[..., :L], axis=-1))


class LyapunovResult(NamedTuple):
    exponent: float
    times: np.ndarray
    running: np.ndarray


def lyapunov(params: BoseHubbardParams, X0, T: float, renorm: float = 1.0,
             cfg: FlowConfig | None = None, v0=None, seed: int = 0) -> LyapunovResult:
    """Largest Lyapunov exponent by the Benettin renormalisation scheme.

    The tangent vector starts at ``v0`` (random unit vector from ``seed``
    if omitted) and is renormalised every ``renorm``.  ``running`` is the
    cumulative log-growth rate after each renormalisation.
    """
    cfg = cfg or FlowConfig()
    check_positive("renorm", renorm)
    if not T > renorm:
        raise ValueError(f"horizon T={T} must exceed renorm={renorm}")
    x0 = check_phase_space(X0, params.L)
    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(x0.size)
    times, running = K.benettin(x0, np.asarray(v0, dtype=float), float(T), float(renorm), cfg.dt,
                                *kernel_args(params, cfg))
    if not np.all(np.isfinite(running)):
        bad = int(np.argmin(np.isfinite(running)))
        raise FlowError(times[bad - 1] if bad > 0 else 0.0)
    return LyapunovResult(float(running[-1]), times, running)


def running_converged(result: LyapunovResult, rel: float = 0.1, tail: float = 0.5) -> bool:
    """True if the running average stays within ``rel`` of its final value
    over the last ``tail`` fraction of the horizon."""
    if not 0 < tail <= 1:
        raise ValueError("tail must be in (0, 1]")
    half = result.running[int(result.running.size * (1 - tail)):]
    lam = result.exponent
    return bool(np.all(np.abs(half - lam) <= rel * abs(lam)))
