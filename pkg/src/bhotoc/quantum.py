"""Exact Fock-space propagation and the quantum OTOC."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .model import BoseHubbardParams, FockBasis, SparseOperator, hamiltonian_parts


class PropagationError(RuntimeError):
    """Norm drift or cutoff leakage beyond the configured tolerance."""


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray = field(repr=False)
    basis: FockBasis

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (self.basis.dim,):
            raise ValueError(f"amplitudes have shape {a.shape}, basis dim is {self.basis.dim}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)

    def expect(self, op: SparseOperator) -> complex:
        return complex(np.vdot(self.amplitudes, op.dot(self.amplitudes)))


@dataclass(frozen=True)
class PropagatorConfig:
    """Substep ``dt`` (1/J), Krylov subspace size and run-time tolerances.

    ``krylov_tol`` bounds the Lanczos error estimate per substep; a substep
    whose estimate is too large is split into equal pieces.

    ``method="sector"`` replaces the Krylov substeps by dense exponentials
    inside each particle-number sector (H conserves N).  Undriven systems
    are then propagated exactly through one diagonalisation per sector.
    Driven systems keep the midpoint-frozen substeps on the same dt
    lattice; segment propagators are cached by (start mod drive period,
    length), so grids commensurate with the period are cheap.  Sectors
    larger than ``sector_dim_cap`` are rejected.
    """

    dt: float = 1e-3
    krylov_dim: int = 12
    norm_tol: float = 1e-8
    leakage_tol: float = 1e-10
    krylov_tol: float = 1e-13
    method: str = "krylov"
    sector_dim_cap: int = 6000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be >= 2")
        if self.method not in ("krylov", "sector"):
            raise ValueError(f"method must be 'krylov' or 'sector', got {self.method!r}")


def fock_state(basis: FockBasis, occupations: Sequence[int]) -> StateVector:
    a = np.zeros(basis.dim, dtype=complex)
    a[basis.index(occupations)] = 1.0
    return StateVector(a, basis)


def coherent_state(basis: FockBasis, alpha: Sequence[complex]) -> StateVector:
    """Coherent state with amplitudes ``alpha``.

    Number-projected onto the sector on a fixed-N basis, truncated product
    state on a truncated basis; normalised in both cases.
    """
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape != (basis.L,):
        raise ValueError(f"need {basis.L} amplitudes, got {alpha.shape}")
    n = basis.states
    mod = np.abs(alpha)
    with np.errstate(divide="ignore"):
        logmod = np.where(mod > 0, np.log(np.where(mod > 0, mod, 1.0)), -np.inf)
    # log |prod alpha^n / sqrt(n!)| with 0^0 = 1
    terms = np.where(n > 0, n * logmod[None, :], 0.0) - 0.5 * gammaln(n + 1.0)
    logamp = terms.sum(axis=1)
    phase = (n * np.angle(alpha)[None, :]).sum(axis=1)
    finite = np.isfinite(logamp)
    if not finite.any():
        raise ValueError("coherent state has no weight on this basis")
    logamp = np.where(finite, logamp - logamp[finite].max(), -np.inf)
    a = np.exp(logamp) * np.exp(1j * phase)
    a /= np.linalg.norm(a)
    return StateVector(a, basis)


def coherent_from_occupations(basis: FockBasis, occupations, phases=None) -> StateVector:
    """Coherent state centred on occupations, alpha_l = sqrt(n_l) exp(i theta_l)."""
    occ = np.asarray(occupations, dtype=float)
    th = np.zeros_like(occ) if phases is None else np.asarray(phases, dtype=float)
    return coherent_state(basis, np.sqrt(occ) * np.exp(1j * th))


def _lattice(t0: float, t1: float, dt: float) -> np.ndarray:
    """Breakpoints on the global grid k*dt, shortened at both ends."""
    if t1 == t0:
        return np.array([t0])
    if t1 > t0:
        k0 = math.floor(t0 / dt + 1e-9) + 1
        k1 = math.ceil(t1 / dt - 1e-12) - 1
        inner = np.arange(k0, k1 + 1) * dt
        inner = inner[(inner > t0) & (inner < t1 - 1e-12 * dt)]
    else:
        k0 = math.ceil(t0 / dt - 1e-9) - 1
        k1 = math.floor(t1 / dt + 1e-12) + 1
        inner = np.arange(k0, k1 - 1, -1) * dt
        inner = inner[(inner < t0) & (inner > t1 + 1e-12 * dt)]
    return np.concatenate([[t0], inner, [t1]])


class _Checks:
    """Norm-drift and cutoff-leakage checks shared by the propagators."""

    def __init__(self, basis: FockBasis, cfg: PropagatorConfig):
        self.basis = basis
        self.cfg = cfg
        if basis.mode == "truncated":
            self.edge = np.any(basis.states == basis.n_max, axis=1)
        else:
            self.edge = None

    def check(self, v: np.ndarray, n0: float) -> np.ndarray:
        drift = abs(np.linalg.norm(v) - n0)
        if drift > self.cfg.norm_tol * max(1.0, n0):
            raise PropagationError(f"norm drift {drift:.3e} exceeds norm_tol={self.cfg.norm_tol}")
        if self.edge is not None and n0 > 0:
            leak = float(np.sum(np.abs(v[self.edge]) ** 2)) / n0**2
            if leak > self.cfg.leakage_tol:
                raise PropagationError(
                    f"population {leak:.3e} on the cutoff shell n_max={self.basis.n_max} "
                    f"exceeds leakage_tol={self.cfg.leakage_tol}; raise n_max")
        return v


class _Propagator(_Checks):
    """Piecewise-constant (midpoint) propagation on a fixed dt lattice."""

    def __init__(self, params: BoseHubbardParams, basis: FockBasis, cfg: PropagatorConfig):
        self.params = params
        self.basis = basis
        self.cfg = cfg
        H0, self.drive, self.dropped = hamiltonian_parts(params, basis)
        H0.sort_indices()
        data = H0.data
        if not np.any(data.imag):
            data = np.ascontiguousarray(data.real)
        self._csr = (H0.indptr.astype(np.int64), H0.indices.astype(np.int64), data)
        self._drive = np.ascontiguousarray(self.drive, dtype=float)
        super().__init__(basis, cfg)

    def run(self, v: np.ndarray, t0: float, t1: float) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=complex)
        n0 = np.linalg.norm(v)
        p = self.params
        v = K.krylov_run(*self._csr, self._drive, float(p.delta), float(p.omega), v,
                         _lattice(t0, t1, self.cfg.dt), self.cfg.krylov_dim, self.cfg.krylov_tol)
        return self.check(v, n0)


class _SectorPropagator(_Checks):
    """Dense propagation inside the particle-number sectors of ``basis``."""

    def __init__(self, params: BoseHubbardParams, basis: FockBasis, cfg: PropagatorConfig):
        super().__init__(basis, cfg)
        self.params = params
        H0, drive, self.dropped = hamiltonian_parts(params, basis)
        N = basis.states.sum(axis=1)
        self.sectors = [np.flatnonzero(N == k) for k in np.unique(N)]
        big = max(idx.size for idx in self.sectors)
        if big > cfg.sector_dim_cap:
            raise ValueError(f"largest number sector has dim {big} > sector_dim_cap="
                             f"{cfg.sector_dim_cap}; use method='krylov'")
        H0 = H0.tocsr()
        real = not np.any(H0.data.imag)
        self.blocks = []
        for idx in self.sectors:
            h = H0[idx][:, idx].toarray()
            self.blocks.append(h.real if real else h)
        self.drives = [drive[idx] for idx in self.sectors]
        if params.driven:
            self.period = 2.0 * math.pi / params.omega
            self._cache: dict = {}
        else:
            self.eig = [np.linalg.eigh(h) for h in self.blocks]
        self.t = 0.0
        self.W = None

    def _step_blocks(self, tm: float, tau: float):
        p = self.params
        amp = p.delta * math.cos(p.omega * tm)
        out = []
        for h, d in zip(self.blocks, self.drives):
            lam, Q = np.linalg.eigh(h + np.diag(amp * d))
            out.append((Q * np.exp(-1j * tau * lam)) @ Q.conj().T)
        return out

    def segment(self, t0: float, t1: float):
        """Per-sector propagators U(t1, t0) of the driven system."""
        key = (round((t0 % self.period) / self.cfg.dt, 6), round((t1 - t0) / self.cfg.dt, 6))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        pts = _lattice(t0, t1, self.cfg.dt)
        mats = [np.eye(idx.size, dtype=complex) for idx in self.sectors]
        for ta, tb in zip(pts[:-1], pts[1:]):
            steps = self._step_blocks(0.5 * (ta + tb), tb - ta)
            mats = [s @ m for s, m in zip(steps, mats)]
        self._cache[key] = mats
        return mats

    def advance(self, t: float) -> None:
        """Move the stored propagator U(t, 0) forward to ``t``."""
        if t < self.t:
            raise ValueError("sector propagation only advances forward in time")
        if self.params.driven:
            if self.W is None:
                self.W = [np.eye(idx.size, dtype=complex) for idx in self.sectors]
            if t > self.t:
                self.W = [s @ w for s, w in zip(self.segment(self.t, t), self.W)]
        self.t = t

    def apply(self, v: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """U(t, 0) v, or U(t, 0)^dagger v, for the current time t."""
        v = np.asarray(v, dtype=complex)
        out = np.empty_like(v)
        for k, idx in enumerate(self.sectors):
            x = v[idx]
            if self.params.driven:
                W = self.W[k]
                out[idx] = W.conj().T @ x if adjoint else W @ x
            else:
                lam, Q = self.eig[k]
                ph = np.exp((1j if adjoint else -1j) * self.t * lam)
                out[idx] = Q @ (ph * (Q.conj().T @ x))
        return self.check(out, np.linalg.norm(v))

    def run(self, v: np.ndarray, t0: float, t1: float) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        out = np.empty_like(v)
        if self.params.driven:
            if t1 >= t0:
                mats = self.segment(t0, t1)
            else:
                mats = [m.conj().T for m in self.segment(t1, t0)]
            for idx, m in zip(self.sectors, mats):
                out[idx] = m @ v[idx]
        else:
            for idx, (lam, Q) in zip(self.sectors, self.eig):
                out[idx] = Q @ (np.exp(-1j * (t1 - t0) * lam) * (Q.conj().T @ v[idx]))
        return self.check(out, np.linalg.norm(v))


def _make_propagator(params, basis, cfg):
    cls = _SectorPropagator if cfg.method == "sector" else _Propagator
    return cls(params, basis, cfg)


def evolve(state: StateVector, params: BoseHubbardParams, t0: float, t1: float,
           cfg: PropagatorConfig | None = None) -> StateVector:
    """Propagate ``state`` from ``t0`` to ``t1`` (``t1 < t0`` runs backwards).

    Substeps sit on the lattice ``k * cfg.dt``; within each the Hamiltonian
    is frozen at the substep midpoint and exponentiated by Lanczos.
    """
    cfg = cfg or PropagatorConfig()
    prop = _make_propagator(params, state.basis, cfg)
    return StateVector(prop.run(state.amplitudes.copy(), t0, t1), state.basis)


def _check_hermitian(op: SparseOperator, name: str, tol: float = 1e-12):
    err = op.hermiticity_error()
    if err > tol:
        raise ValueError(f"operator {name} is not hermitian (max |A - A^dagger| = {err:.2e})")


def quantum_otoc(params: BoseHubbardParams, psi0: StateVector, A: SparseOperator,
                 B: SparseOperator, times: Sequence[float],
                 cfg: PropagatorConfig | None = None):
    """C(t) = || A(t) B psi0 - B A(t) psi0 ||^2 on a time grid.

    The forward legs U(t) B psi0 and U(t) psi0 are advanced from one grid
    point to the next; the backward legs run from t to 0 at each point.
    """
    from .otoc import OTOCSeries

    cfg = cfg or PropagatorConfig()
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    for op, name in ((A, "A"), (B, "B")):
        if op.dim != psi0.basis.dim:
            raise ValueError(f"{name} has dim {op.dim}, state basis has {psi0.basis.dim}")
        _check_hermitian(op, name)
    prop = _make_propagator(params, psi0.basis, cfg)
    psi = psi0.amplitudes.copy()
    Bpsi = B.dot(psi)
    u, a = Bpsi, psi
    t_prev = 0.0
    values = np.empty(times.size)
    for i, t in enumerate(times):
        if isinstance(prop, _SectorPropagator):
            # the stored U(t, 0) serves all four legs
            prop.advance(t)
            u, a = prop.apply(Bpsi), prop.apply(psi)
            w = prop.apply(A.dot(u), adjoint=True)
            c = prop.apply(A.dot(a), adjoint=True)
        else:
            u = prop.run(u, t_prev, t)
            a = prop.run(a, t_prev, t)
            w = prop.run(A.dot(u), t, 0.0)
            c = prop.run(A.dot(a), t, 0.0)
        t_prev = t
        d = B.dot(c)
        values[i] = float(np.vdot(w - d, w - d).real)
    meta = {
        "estimator": "quantum",
        "params": params,
        "basis": {"L": psi0.basis.L, "mode": psi0.basis.mode, "N": psi0.basis.N,
                  "n_max": psi0.basis.n_max, "dim": psi0.basis.dim},
        "dt": cfg.dt,
        "krylov_dim": cfg.krylov_dim,
        "method": cfg.method,
    }
    return OTOCSeries(times=times, values=values, stderr=np.zeros_like(values), meta=meta)
