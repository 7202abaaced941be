"""Quasiclassical OTOC estimators.

* :func:`classical_otoc` -- Wigner-averaged squared Poisson bracket
  {A(X_t), B(X_0)}^2, the short-time limit of the OTOC.
* :func:`fit_growth_rate` -- exponential rate of an OTOC curve.
* :func:`cinf` -- long-time value built from the ergodic average of A over
  the constants of motion.
* :func:`weyl_square` -- Weyl symbol of the square of a quadratic operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .classical import FlowConfig, hcl_gradient, kernel_args, poisson_bracket, grad_observable, conserved
from .model import BoseHubbardParams
from .observables import Observable
from .parallel import map_blocks
from .profile import ErgodicProfile
from .sampling import (SamplerSpec, fsum_mean_stderr, rescale_occupations, sample,
                       spread_factors)
from .utils.validation import check_time_grid

# fresh C-infinity samples live far from the profile launch indices
CINF_SAMPLE_OFFSET = 1 << 40


class EstimatorError(RuntimeError):
    """Too many excluded samples for a trustworthy estimate."""


@dataclass
class OTOCSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = check_time_grid(self.times)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.values.shape != self.times.shape or self.stderr.shape != self.times.shape:
            raise ValueError("times, values and stderr must have the same length")
        if np.any(self.values < 0):
            raise ValueError("OTOC values must be nonnegative")

    def __len__(self):
        return self.times.size

    def to_csv(self, path):
        write_csv(path, ("t", "C", "stderr"), zip(self.times, self.values, self.stderr))


def fmt(x) -> str:
    """17 significant digits, the CSV number format."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _bracket_block(params, spec, a, b, times, cfg, start, size):
    X0 = sample(spec, size, start).points
    return K.otoc_brackets(X0, times, cfg.dt, *kernel_args(params, cfg),
                           a.code, a.slot, b.code, b.slot)


def classical_otoc(params: BoseHubbardParams, spec: SamplerSpec, A, B, times, count: int,
                   cfg: FlowConfig | None = None, workers: int = 1, offset: int = 0,
                   max_excluded: float = 1e-3) -> OTOCSeries:
    """Monte Carlo estimate of C_cl(t) = < (grad A(X_t) . M(t) J grad B(X_0))^2 >_W.

    Each sample integrates one trajectory with a single tangent vector
    through the whole grid.  Samples whose trajectory blows up are dropped;
    more than ``max_excluded`` of them raises :class:`EstimatorError`.
    """
    cfg = cfg or FlowConfig()
    A, B = Observable.parse(A), Observable.parse(B)
    for obs in (A, B):
        obs.check_sites(params.L)
    if spec.L != params.L:
        raise ValueError(f"sampler has {spec.L} sites, system has {params.L}")
    if count < 2:
        raise ValueError("count must be >= 2")
    times = check_time_grid(times)
    job = partial(_bracket_block, params, spec, A, B, times, cfg)
    br = map_blocks(job, count, offset=offset, workers=workers)
    ok = np.all(np.isfinite(br), axis=1)
    excluded = int(np.count_nonzero(~ok))
    if excluded > max_excluded * count:
        raise EstimatorError(f"{excluded} of {count} trajectories blew up")
    mean, err = fsum_mean_stderr(br[ok] ** 2)
    meta = {"estimator": "classical", "params": params, "sampler": spec.to_dict(),
            "count": count, "excluded": excluded, "A": str(A), "B": str(B),
            "dt": cfg.dt, "weyl_corrected": cfg.weyl_corrected}
    return OTOCSeries(times=times, values=mean, stderr=err, meta=meta)


class GrowthFit(NamedTuple):
    rate: float
    intercept: float
    window: tuple[float, float]
    points: int


def fit_growth_rate(times, values, saturation: float, floor_factor: float = 10.0,
                    ceiling_fraction: float = 0.1) -> GrowthFit:
    """Least-squares slope of log C over the exponential window.

    The window opens once C exceeds ``floor_factor`` times its first
    positive grid value and closes at the first point where C reaches
    ``ceiling_fraction * saturation``.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(values, dtype=float)
    pos = np.flatnonzero(c > 0)
    if pos.size == 0:
        raise ValueError("no positive OTOC values to fit")
    floor = c[pos[0]]
    above = np.flatnonzero(c >= floor_factor * floor)
    if above.size == 0:
        raise ValueError("the OTOC never rises above the floor")
    lo = above[0]
    top = np.flatnonzero((c >= ceiling_fraction * saturation) & (np.arange(c.size) >= lo))
    hi = top[0] if top.size else c.size - 1
    if hi - lo < 2:
        raise ValueError(f"exponential window [{t[lo]}, {t[hi]}] holds fewer than 3 points")
    sl = slice(lo, hi + 1)
    rate, intercept = np.polyfit(t[sl], np.log(c[sl]), 1)
    return GrowthFit(float(rate), float(intercept), (float(t[lo]), float(t[hi])), hi - lo + 1)


# -- long-time limit ---------------------------------------------------------

@dataclass(frozen=True)
class ProfileConfig:
    """How the ergodic profile is built.

    ``spread`` rescales the occupations of each launch point by a factor
    drawn uniformly in [1 - spread, 1 + spread] so that the profile covers
    a neighbourhood of the sampled particle numbers; ``None`` means 0.1 for
    Fock rings (whose particle number is sharp) and 0 for coherent states.
    """

    n_traj: int = 512
    horizon: float = 2000.0
    burn_in: float = 100.0
    bins: tuple[int, ...] | None = None
    min_count: int = 8
    gradient: str = "local_linear"
    bandwidth: float = 0.5
    spread: float | None = None
    max_excluded: float = 0.05

    def __post_init__(self):
        if self.horizon <= self.burn_in:
            raise ValueError("horizon must exceed burn_in")
        if self.n_traj < 2:
            raise ValueError("n_traj must be >= 2")

    def resolved_bins(self, params: BoseHubbardParams) -> tuple[int, ...]:
        if self.bins is not None:
            return tuple(self.bins)
        return (64,) if params.driven else (32, 16)

    def resolved_spread(self, spec: SamplerSpec) -> float:
        if self.spread is not None:
            return self.spread
        return 0.1 if spec.kind == "fock_ring" else 0.0


def constants_of_motion(params: BoseHubbardParams, X, weyl_corrected: bool = True) -> np.ndarray:
    """Columns (E, N) for autonomous systems, (N,) when driven."""
    E, N = conserved(params, X, weyl_corrected)
    if E is None:
        return np.asarray(N)[..., None]
    return np.stack([E, N], axis=-1)


def constant_brackets(params: BoseHubbardParams, X, B: Observable, weyl_corrected: bool = True):
    """{c_k, B}(X) for each constant of motion, shape (S, K)."""
    gB = grad_observable(B, X)
    pbN = poisson_bracket(X, gB)
    if params.driven:
        return pbN[..., None]
    pbE = poisson_bracket(hcl_gradient(params, 0.0, X, weyl_corrected), gB)
    return np.stack([pbE, pbN], axis=-1)


def _profile_block(params, spec, a, pcfg, cfg, width, start, size):
    batch = sample(spec, size, start)
    X = batch.points
    if width > 0:
        X = rescale_occupations(X, spread_factors(spec.seed, batch.indices, width))
    avg = K.time_averages(X, cfg.dt, pcfg.horizon, pcfg.burn_in, *kernel_args(params, cfg),
                          a.code, a.slot)
    return np.column_stack([constants_of_motion(params, X, cfg.weyl_corrected), avg])


class CinfResult(NamedTuple):
    value: float
    stderr: float
    profile: ErgodicProfile
    excluded_fraction: float


def build_profile(params: BoseHubbardParams, spec: SamplerSpec, A, pcfg: ProfileConfig | None = None,
                  cfg: FlowConfig | None = None, workers: int = 1) -> ErgodicProfile:
    """Launch ``pcfg.n_traj`` trajectories, time-average ``A`` over
    [burn_in, horizon] and fit the profile over the constants of motion."""
    pcfg = pcfg or ProfileConfig()
    cfg = cfg or FlowConfig()
    A = Observable.parse(A)
    A.check_sites(params.L)
    job = partial(_profile_block, params, spec, A, pcfg, cfg, pcfg.resolved_spread(spec))
    data = map_blocks(job, pcfg.n_traj, offset=0, workers=workers)
    ok = np.all(np.isfinite(data), axis=1)
    if np.count_nonzero(~ok) > pcfg.max_excluded * pcfg.n_traj:
        raise EstimatorError(f"{np.count_nonzero(~ok)} of {pcfg.n_traj} profile trajectories blew up")
    data = data[ok]
    prof = ErgodicProfile(bins=pcfg.resolved_bins(params), min_count=pcfg.min_count,
                          gradient=pcfg.gradient, bandwidth=pcfg.bandwidth)
    return prof.fit(data[:, :-1], data[:, -1])


def _cinf_block(params, spec, B, profile, weyl, start, size):
    X = sample(spec, size, start).points
    C = constants_of_motion(params, X, weyl)
    g = profile.predict_gradient(C)
    pb = constant_brackets(params, X, B, weyl)
    return np.sum(g * pb, axis=1) ** 2


def cinf(params: BoseHubbardParams, spec: SamplerSpec, A, B, pcfg: ProfileConfig | None = None,
         count: int = 10_000, cfg: FlowConfig | None = None, workers: int = 1,
         profile: ErgodicProfile | None = None) -> CinfResult:
    """Quasiclassical long-time OTOC

        C_inf = < ( sum_k d abar/d c_k (c(X)) {c_k, B}(X) )^2 >_W

    with ``abar`` the ergodic average of A on the shell of constants c.
    Samples landing in invalid profile cells are excluded; more than
    ``pcfg.max_excluded`` of them raises :class:`EstimatorError`.
    """
    pcfg = pcfg or ProfileConfig()
    cfg = cfg or FlowConfig()
    A, B = Observable.parse(A), Observable.parse(B)
    B.check_sites(params.L)
    if profile is None:
        profile = build_profile(params, spec, A, pcfg, cfg, workers)
    job = partial(_cinf_block, params, spec, B, profile, cfg.weyl_corrected)
    vals = map_blocks(job, count, offset=CINF_SAMPLE_OFFSET, workers=workers)
    ok = np.isfinite(vals)
    frac = 1.0 - np.count_nonzero(ok) / count
    if frac > pcfg.max_excluded:
        raise EstimatorError(
            f"{frac:.1%} of the samples fall outside valid profile cells; "
            "widen the profile sampling (more trajectories, larger spread or fewer bins)")
    mean, err = fsum_mean_stderr(vals[ok])
    return CinfResult(float(mean), float(err), profile, float(frac))


# -- Weyl symbol of a squared quadratic operator -------------------------------

@dataclass(frozen=True)
class QuadraticSymbol:
    """A(X) = 1/2 X.H.X + g.X + c on a 2L-dimensional phase space."""

    hessian: np.ndarray
    linear: np.ndarray
    const: float = 0.0

    @classmethod
    def from_observable(cls, obs, L: int) -> "QuadraticSymbol":
        obs = Observable.parse(obs)
        obs.check_sites(L)
        H = np.zeros((2 * L, 2 * L))
        g = np.zeros(2 * L)
        s = obs.slot
        c = 0.0
        if obs.kind == "number":
            H[s, s] = H[L + s, L + s] = 1.0
            c = -0.5
        elif obs.kind == "quadrature_q":
            g[s] = 1.0
        elif obs.kind == "quadrature_p":
            g[L + s] = 1.0
        elif obs.kind == "p_squared":
            H[L + s, L + s] = 2.0
        return cls(H, g, c)

    @classmethod
    def parse(cls, text, L: int) -> "QuadraticSymbol":
        """A single observable or a sum such as ``"n1+n2"``."""
        if isinstance(text, QuadraticSymbol):
            return text
        if isinstance(text, Observable):
            return cls.from_observable(text, L)
        terms = [t for t in str(text).replace(" ", "").split("+") if t]
        if not terms:
            raise ValueError("empty observable")
        out = cls.from_observable(terms[0], L)
        for t in terms[1:]:
            out = out + cls.from_observable(t, L)
        return out

    def __add__(self, other: "QuadraticSymbol") -> "QuadraticSymbol":
        return QuadraticSymbol(self.hessian + other.hessian, self.linear + other.linear,
                               self.const + other.const)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", X, self.hessian, X) + X @ self.linear + self.const


def weyl_square(A, X, hbar: float = 1.0):
    """(A^2)_W(X) = A(X)^2 - hbar^2/8 sum_kl s_k s_l d2_kl A d2_{k'l'} A.

    Here k' is the conjugate slot of k (q_i <-> p_i) and s_k = +1 on q
    slots, -1 on p slots.  Exact for symbols at most quadratic, which is all
    :class:`QuadraticSymbol` can express; ``number_squared``-type symbols are
    rejected.
    """
    X = np.asarray(X, dtype=float)
    L = X.shape[-1] // 2
    if isinstance(A, Observable) or isinstance(A, str):
        try:
            A = QuadraticSymbol.parse(A, L)
        except ValueError as exc:
            raise ValueError(f"unsupported observable for weyl_square: {exc}") from None
    if not isinstance(A, QuadraticSymbol):
        raise TypeError("weyl_square needs an observable name or a QuadraticSymbol")
    H = A.hessian
    sigma = np.concatenate([np.ones(L), -np.ones(L)])
    conj = np.concatenate([np.arange(L, 2 * L), np.arange(L)])
    Hbar = H[np.ix_(conj, conj)]
    corr = np.sum(np.outer(sigma, sigma) * H * Hbar)
    return A(X) ** 2 - hbar**2 / 8.0 * corr
