"""Wigner-distribution samplers with counter-based seeding.

The randomness of sample ``k`` is drawn from a Philox generator keyed by
the sampler seed with the global index ``k`` in the counter, so a sample does
not depend on batching, offsets or worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .parallel import map_blocks
from .utils.validation import check_phase_space

# W_CS widths in quadrature units: q = (b + b^dagger)/sqrt(2) at hbar = 1
# puts the centre at sqrt(2) alpha with variance 1/2 per coordinate.
EPS_Q = math.sqrt(2.0)
EPS_P = math.sqrt(2.0)

STREAM_POINTS = 0
STREAM_PROFILE = 1


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    """``kind`` is ``"coherent"`` (uses ``alpha``) or ``"fock_ring"`` (uses ``n``)."""

    kind: str
    alpha: tuple[complex, ...] | None = None
    n: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.kind == "coherent":
            if self.alpha is None:
                raise ValueError("coherent sampler needs alpha")
            a = tuple(complex(x) for x in self.alpha)
            if not all(math.isfinite(x.real) and math.isfinite(x.imag) for x in a):
                raise ValueError("alpha must be finite")
            object.__setattr__(self, "alpha", a)
        elif self.kind == "fock_ring":
            if self.n is None:
                raise ValueError("fock_ring sampler needs occupations n")
            n = tuple(float(x) for x in self.n)
            if any(x < 0 for x in n):
                raise ValueError("occupations must be >= 0")
            object.__setattr__(self, "n", n)
        else:
            raise ValueError(f"unknown sampler kind {self.kind!r}")

    @classmethod
    def coherent(cls, occupations: Sequence[float], phases: Sequence[float] | None = None,
                 seed: int = 0) -> "SamplerSpec":
        """Coherent state centred on ``occupations``: alpha_l = sqrt(n_l) e^{i theta_l}."""
        occ = np.asarray(occupations, dtype=float)
        th = np.zeros_like(occ) if phases is None else np.asarray(phases, dtype=float)
        alpha = np.sqrt(occ) * np.exp(1j * th)
        return cls("coherent", alpha=tuple(alpha), seed=seed)

    @classmethod
    def fock_ring(cls, occupations: Sequence[float], seed: int = 0) -> "SamplerSpec":
        return cls("fock_ring", n=tuple(occupations), seed=seed)

    @property
    def L(self) -> int:
        return len(self.alpha if self.kind == "coherent" else self.n)

    @property
    def mean_occupations(self) -> np.ndarray:
        if self.kind == "coherent":
            return np.abs(np.asarray(self.alpha)) ** 2
        return np.asarray(self.n)

    def with_seed(self, seed: int) -> "SamplerSpec":
        return SamplerSpec(self.kind, self.alpha, self.n, seed)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": int(self.seed)}
        if self.kind == "coherent":
            d["alpha"] = [[z.real, z.imag] for z in self.alpha]
        else:
            d["n"] = list(self.n)
        return d


@dataclass(frozen=True, eq=False)
class SampleBatch:
    points: np.ndarray
    spec: SamplerSpec
    indices: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def sample_rng(seed: int, index: int, stream: int = STREAM_POINTS) -> np.random.Generator:
    """Generator owning the randomness of one global sample index."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(index), int(stream), 0]))


def _draw(spec: SamplerSpec, index: int) -> np.ndarray:
    g = sample_rng(spec.seed, index)
    L = spec.L
    if spec.kind == "coherent":
        a = np.asarray(spec.alpha)
        z = g.standard_normal(2 * L) * math.sqrt(0.5)
        q = EPS_Q * a.real + z[:L]
        p = EPS_P * a.imag + z[L:]
    else:
        r = np.sqrt(2.0 * np.asarray(spec.n) + 1.0)
        phi = g.uniform(0.0, 2.0 * math.pi, L)
        q = r * np.cos(phi)
        p = r * np.sin(phi)
    return np.concatenate([q, p])


def sample(spec: SamplerSpec, count: int, offset: int = 0) -> SampleBatch:
    """Draw ``count`` points with global indices ``offset .. offset+count-1``.

    Coherent: independent Gaussians per coordinate with mean
    (sqrt(2) Re alpha, sqrt(2) Im alpha) and variance 1/2.  Fock ring:
    radius sqrt(2 n_l + 1) and a uniform angle per site.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    idx = np.arange(offset, offset + count, dtype=np.int64)
    pts = np.empty((count, 2 * spec.L))
    for k, i in enumerate(idx):
        pts[k] = _draw(spec, int(i))
    return SampleBatch(points=pts, spec=spec, indices=idx)


def rescale_occupations(X, factors) -> np.ndarray:
    """Scale the Weyl occupations of every site of each point by a factor,
    keeping the phases: n_l -> s n_l."""
    X = check_phase_space(X, ensure_2d=True).copy()
    L = X.shape[1] // 2
    s = np.asarray(factors, dtype=float)[:, None]
    r2 = X[:, :L] ** 2 + X[:, L:] ** 2
    new_r2 = np.maximum(s * (r2 - 1.0) + 1.0, 0.0)
    f = np.sqrt(np.divide(new_r2, r2, out=np.ones_like(r2), where=r2 > 0))
    X[:, :L] *= f
    X[:, L:] *= f
    return X


def spread_factors(seed: int, indices, width: float) -> np.ndarray:
    """Uniform factors in [1 - width, 1 + width], one per global index."""
    return np.array([sample_rng(seed, int(i), STREAM_PROFILE).uniform(1.0 - width, 1.0 + width)
                     for i in indices])


def fsum_mean_stderr(values: np.ndarray, axis: int = 0):
    """Mean and standard error with correctly rounded sums.

    ``math.fsum`` makes the reduction independent of the order in which
    blocks were produced.  Deviations are scaled by a power of two before
    squaring so that values near the float range do not overflow.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    flat = v.reshape(n, -1)
    mean = np.array([math.fsum(col) / n for col in flat.T])
    if n > 1:
        err = np.array([_scaled_stderr(col - m, n) for col, m in zip(flat.T, mean)])
    else:
        err = np.full_like(mean, np.nan)
    shape = v.shape[1:]
    return mean.reshape(shape), err.reshape(shape)


def _scaled_stderr(dev: np.ndarray, n: int) -> float:
    top = np.max(np.abs(dev)) if dev.size else 0.0
    if not np.isfinite(top):
        return math.nan
    if top == 0:
        return 0.0
    e = math.frexp(top)[1]
    d = np.ldexp(dev, -e)
    return math.ldexp(math.sqrt(math.fsum(d * d) / (n - 1) / n), e)


def _eval_block(fn, spec, start, size):
    return np.asarray(fn(sample(spec, size, start).points), dtype=float)


def estimate(fn: Callable[[np.ndarray], np.ndarray], spec: SamplerSpec, count: int,
             offset: int = 0, workers: int = 1, max_nonfinite: float = 1e-3):
    """Monte Carlo mean and standard error of ``fn`` under the sampler.

    ``fn`` maps a batch of points (S, 2L) to S values.  Non-finite values are
    dropped; more than ``max_nonfinite`` of them raises SamplingError.
    Returns ``(mean, stderr)``.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    from functools import partial

    vals = map_blocks(partial(_eval_block, fn, spec), count, offset=offset, workers=workers)
    ok = np.isfinite(vals)
    bad = int(np.count_nonzero(~ok))
    if bad > max_nonfinite * count:
        raise SamplingError(f"{bad} of {count} values are non-finite")
    mean, err = fsum_mean_stderr(vals[ok])
    return float(mean), float(err)
