"""Poincaré sections of the trimer and stroboscopic maps of the driven dimer.

Trimer section: theta_2 = 0 (p_2 = 0 with q_2 > 0), recording
(theta_1 - theta_3 mod 2pi, n_1).  Each crossing is bracketed on the RK4
grid and finished with Hénon's trick: one RK4 step in which p_2 is the
independent variable, so the final point lies on the section exactly.

Dimer map: states at t_k = k 2pi/omega, recording
(theta_1 - theta_2 mod 2pi, n_1 - n_2).
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .classical import FlowConfig, FlowError, kernel_args, occupations, phases
from .model import BoseHubbardParams
from .utils.validation import check_phase_space

TWO_PI = 2.0 * math.pi


class SectionPoint(NamedTuple):
    x: float
    y: float
    crossing_time: float


class Section(NamedTuple):
    points: list
    empty: bool
    states: np.ndarray


def _wrap(a):
    return np.mod(a, TWO_PI)


def _henon_step(x, t, target_slot, args):
    """Carry x onto p_slot = 0 by one RK4 step in the variable p_slot.

    dX/dp = f(X)/f_p(X), dt/dp = 1/f_p(X), integrated from the current
    p_slot to 0.  Returns the new state and time.
    """
    n = x.size
    L = n // 2
    j = L + target_slot
    buf = np.empty(n)

    def g(y):
        # augmented state (X, t); derivative with respect to p_j
        K.rhs(y[n], y[:n], *args, buf)
        return np.concatenate([buf / buf[j], [1.0 / buf[j]]])

    y = np.concatenate([x, [t]])
    h = -x[j]
    k1 = g(y)
    k2 = g(y + 0.5 * h * k1)
    k3 = g(y + 0.5 * h * k2)
    k4 = g(y + h * k3)
    y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    y[j] = 0.0
    return y[:n], y[n]


def poincare(params: BoseHubbardParams, X0, T: float, cfg: FlowConfig | None = None,
             direction: int = -1, max_points: int = 100_000) -> Section:
    """Crossings of theta_2 = 0 over [0, T] for the autonomous trimer.

    ``direction=-1`` keeps crossings with d theta_2/dt < 0, ``+1`` the
    opposite.  A negative ``T`` integrates backwards; crossings then come
    in reverse time order.  ``Section.states`` holds the refined phase-space
    point of each crossing.
    """
    cfg = cfg or FlowConfig()
    if params.L != 3:
        raise ValueError("poincare sections are defined for the trimer (L=3)")
    if params.driven:
        raise ValueError("poincare sections need an autonomous system; use stroboscopic()")
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    x0 = check_phase_space(X0, params.L)
    args = kernel_args(params, cfg)
    # running backwards flips the sign of d theta/dt seen by the kernel
    kdir = direction if T >= 0 else -direction
    pre, tpre, tfail = K.section_brackets(x0, float(T), cfg.dt, *args, 1, kdir, max_points)
    if np.isfinite(tfail):
        raise FlowError(tfail)
    pts = []
    states = np.empty((len(pre), x0.size))
    for k, (x, t) in enumerate(zip(pre, tpre)):
        xs, ts = _henon_step(x, t, 1, args)
        states[k] = xs
        th = phases(xs)
        n1 = occupations(xs)[0]
        pts.append(SectionPoint(float(_wrap(th[0] - th[2])), float(n1), float(ts)))
    return Section(pts, len(pts) == 0, states)


def stroboscopic(params: BoseHubbardParams, X0, n_periods: int, cfg: FlowConfig | None = None,
                 omega: float | None = None) -> list:
    """Stroboscopic samples of the driven dimer after each of ``n_periods`` drive periods.

    The substep is shrunk so that it divides the period exactly.  ``omega``
    overrides the sampling frequency, which allows the undriven limit
    ``delta = 0`` to be sampled at the same instants.
    """
    cfg = cfg or FlowConfig()
    if params.L != 2:
        raise ValueError("stroboscopic maps are defined for the dimer (L=2)")
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    w = omega if omega is not None else params.omega
    if not w or w <= 0:
        raise ValueError("stroboscopic sampling needs omega > 0")
    x0 = check_phase_space(X0, params.L)
    period = TWO_PI / w
    times = period * np.arange(1, n_periods + 1)
    xs, tfail = K.sample_times(x0, times, cfg.dt, *kernel_args(params, cfg))
    if np.isfinite(tfail):
        raise FlowError(tfail)
    th = phases(xs)
    n = occupations(xs)
    return [SectionPoint(float(_wrap(a)), float(b), float(t))
            for a, b, t in zip(th[:, 0] - th[:, 1], n[:, 0] - n[:, 1], times)]
