"""Bose-Hubbard systems, Fock bases and sparse operators.

Sites are labelled 1..L in every public function (``site=1`` is the first
site); arrays are 0-based internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_DIM_CAP = 5_000_000


class BasisError(ValueError):
    """Raised for invalid or oversized basis requests."""


@dataclass(frozen=True)
class BoseHubbardParams:
    """Parameters of an open-boundary Bose-Hubbard chain.

    Energies are in units of the hopping ``J`` (time in units of 1/J).
    ``E`` holds static on-site energies; ``delta`` and ``omega`` switch on the
    dimer drive ``E_1(t) = -E_2(t) = delta cos(omega t)`` which is added on
    top of ``E``.
    """

    L: int
    U: float = 0.0
    J: float = 1.0
    E: tuple[float, ...] | None = None
    delta: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.J < 0:
            raise ValueError(f"J must be >= 0, got {self.J}")
        E = (0.0,) * self.L if self.E is None else tuple(float(e) for e in self.E)
        if len(E) != self.L:
            raise ValueError(f"E has {len(E)} entries for L={self.L}")
        object.__setattr__(self, "E", E)
        if self.delta != 0.0:
            if self.L != 2:
                raise ValueError("the periodic drive is only defined for the dimer (L=2)")
            if not self.omega > 0:
                raise ValueError("omega must be > 0 when delta != 0")

    @property
    def driven(self) -> bool:
        return self.delta != 0.0

    @property
    def period(self) -> float:
        if not self.driven:
            raise ValueError("undriven system has no drive period")
        return 2.0 * math.pi / self.omega

    def onsite(self, t: float) -> np.ndarray:
        """On-site energies E_l(t)."""
        E = np.array(self.E, dtype=float)
        if self.driven:
            d = self.delta * math.cos(self.omega * t)
            E[0] += d
            E[1] -= d
        return E


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Lexicographically ordered occupation basis.

    ``mode`` is ``"fixed"`` (all states with total particle number ``N``)
    or ``"truncated"`` (product space with ``0 <= n_l <= n_max``).
    """

    L: int
    mode: str
    N: int | None
    n_max: int | None
    states: np.ndarray = field(repr=False)
    _keys: np.ndarray = field(repr=False)
    _base: int = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def encode(self, occ: np.ndarray) -> np.ndarray:
        """Integer keys of occupation rows (order-preserving)."""
        occ = np.asarray(occ, dtype=np.int64)
        weights = self._base ** np.arange(self.L - 1, -1, -1, dtype=np.int64)
        return occ @ weights

    def lookup(self, occ: np.ndarray) -> np.ndarray:
        """Row indices of occupation rows; -1 where the state is absent."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        valid = np.all(occ >= 0, axis=1)
        if self.mode == "truncated":
            valid &= np.all(occ <= self.n_max, axis=1)
        else:
            valid &= occ.sum(axis=1) == self.N
        keys = self.encode(np.clip(occ, 0, self._base - 1))
        idx = np.searchsorted(self._keys, keys)
        idx = np.clip(idx, 0, self.dim - 1)
        found = valid & (self._keys[idx] == keys)
        return np.where(found, idx, -1)

    def index(self, occ: Sequence[int]) -> int:
        i = int(self.lookup(np.asarray(occ))[0])
        if i < 0:
            raise KeyError(f"{tuple(occ)} is not in the basis")
        return i

    def occupation(self, site: int) -> np.ndarray:
        return self.states[:, _slot(site, self.L)]


def _slot(site: int, L: int) -> int:
    if not 1 <= site <= L:
        raise ValueError(f"site must be in 1..{L}, got {site}")
    return site - 1


def _compositions(N: int, L: int) -> np.ndarray:
    # all L-tuples of nonnegative ints summing to N, lexicographic ascending
    if L == 1:
        return np.array([[N]], dtype=np.int64)
    rows = []
    for first in range(N + 1):
        rest = _compositions(N - first, L - 1)
        rows.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
    return np.vstack(rows)


def build_basis(L: int, N: int | None = None, n_max: int | None = None,
                dim_cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    """Enumerate a fixed-N sector (give ``N``) or a truncated product space
    (give ``n_max``).

    >>> build_basis(2, N=1).states.tolist()
    [[0, 1], [1, 0]]
    """
    if (N is None) == (n_max is None):
        raise BasisError("give exactly one of N (fixed-N sector) or n_max (truncated)")
    if L < 1:
        raise BasisError(f"L must be >= 1, got {L}")
    if N is not None:
        if N < 0:
            raise BasisError(f"N must be >= 0, got {N}")
        dim = math.comb(N + L - 1, L - 1)
        if dim > dim_cap:
            raise BasisError(f"fixed-N dimension {dim} exceeds cap {dim_cap}")
        states = _compositions(N, L)
        mode, base = "fixed", N + 1
    else:
        if n_max < 0:
            raise BasisError(f"n_max must be >= 0, got {n_max}")
        dim = (n_max + 1) ** L
        if dim > dim_cap:
            raise BasisError(f"truncated dimension {dim} exceeds cap {dim_cap}")
        states = np.array(list(product(range(n_max + 1), repeat=L)), dtype=np.int64).reshape(dim, L)
        mode, base = "truncated", n_max + 1
    weights = base ** np.arange(L - 1, -1, -1, dtype=np.int64)
    keys = states @ weights
    states.setflags(write=False)
    keys.setflags(write=False)
    return FockBasis(L=L, mode=mode, N=N, n_max=n_max, states=states, _keys=keys, _base=base)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Sparse matrix on a Fock basis (CSR, sorted indices, no duplicates).

    ``dropped`` counts matrix elements discarded because they would leave a
    truncated basis.
    """

    matrix: sp.csr_matrix
    hermitian: bool = False
    dropped: int = 0

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v):
        return self.matrix @ v

    def dot(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_error(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def entries(self):
        """(row, col, value) triplets in row-major order."""
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


def _hopping(basis: FockBasis, J: float) -> tuple[sp.csr_matrix, int]:
    rows, cols, vals = [], [], []
    dropped = 0
    S = basis.states
    for l in range(basis.L - 1):
        # b_l^dagger b_{l+1}: move one boson from l+1 to l
        src = np.nonzero(S[:, l + 1] > 0)[0]
        tgt_occ = S[src].copy()
        amp = np.sqrt((tgt_occ[:, l] + 1.0) * tgt_occ[:, l + 1])
        tgt_occ[:, l] += 1
        tgt_occ[:, l + 1] -= 1
        tgt = basis.lookup(tgt_occ)
        ok = tgt >= 0
        dropped += int(np.count_nonzero(~ok))
        rows.append(tgt[ok])
        cols.append(src[ok])
        vals.append(-J * amp[ok])
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        # hermitian partner b_{l+1}^dagger b_l
        r, c, v = np.concatenate([r, c]), np.concatenate([c, r]), np.concatenate([v, v])
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    H = sp.csr_matrix((v.astype(complex), (r, c)), shape=(basis.dim, basis.dim))
    # each dropped hop also lacks its partner
    return H, 2 * dropped


def hamiltonian_parts(params: BoseHubbardParams, basis: FockBasis):
    """Split H(t) = H_static + delta cos(omega t) D.

    Returns ``(H_static, drive_diag, dropped)`` where ``drive_diag`` is the
    diagonal of ``D = n_1 - n_2`` (zeros when undriven).
    """
    if basis.L != params.L:
        raise ValueError(f"basis has L={basis.L} but params have L={params.L}")
    n = basis.states.astype(float)
    E = np.array(params.E, dtype=float)
    diag = n @ E + 0.5 * params.U * np.sum(n * (n - 1.0), axis=1)
    hop, dropped = _hopping(basis, params.J)
    H0 = sp.diags(diag.astype(complex), format="csr") + hop
    if params.driven:
        drive = n[:, 0] - n[:, 1]
    else:
        drive = np.zeros(basis.dim)
    return H0.tocsr(), drive, dropped


def build_hamiltonian(params: BoseHubbardParams, basis: FockBasis, t: float = 0.0) -> SparseOperator:
    """Bose-Hubbard Hamiltonian at time ``t`` on ``basis``."""
    H0, drive, dropped = hamiltonian_parts(params, basis)
    H = H0
    if params.driven:
        H = H0 + sp.diags(params.delta * math.cos(params.omega * t) * drive, format="csr")
    return SparseOperator(H, hermitian=True, dropped=dropped)


def annihilation(basis: FockBasis, site: int) -> SparseOperator:
    """b_site on a truncated basis (sqrt(n) on n-1 <- n)."""
    _require_truncated(basis, "annihilation")
    s = _slot(site, basis.L)
    src = np.nonzero(basis.states[:, s] > 0)[0]
    occ = basis.states[src].copy()
    amp = np.sqrt(occ[:, s].astype(float))
    occ[:, s] -= 1
    tgt = basis.lookup(occ)
    m = sp.csr_matrix((amp.astype(complex), (tgt, src)), shape=(basis.dim, basis.dim))
    return SparseOperator(m)


def _require_truncated(basis: FockBasis, kind: str):
    if basis.mode != "truncated":
        raise BasisError(
            f"{kind} does not conserve the particle number; it needs a truncated "
            f"basis (build_basis(L, n_max=...)), got a fixed-N basis")


OBSERVABLE_KINDS = ("number", "quadrature_q", "quadrature_p", "number_squared",
                    "quadrature_p_squared")


def build_observable(basis: FockBasis, kind: str, site: int) -> SparseOperator:
    """Hermitian single-site observable.

    ``kind`` is one of ``number``, ``quadrature_q``, ``quadrature_p``,
    ``number_squared`` or ``quadrature_p_squared``.  Quadratures follow
    q = (b + b^dagger)/sqrt(2), p = (b - b^dagger)/(sqrt(2) i) and need a
    truncated basis.
    """
    s = _slot(site, basis.L)
    if kind == "number":
        return SparseOperator(sp.diags(basis.states[:, s].astype(complex), format="csr"), hermitian=True)
    if kind == "number_squared":
        n = basis.states[:, s].astype(complex)
        return SparseOperator(sp.diags(n * n, format="csr"), hermitian=True)
    if kind not in OBSERVABLE_KINDS:
        raise ValueError(f"unknown observable kind {kind!r}; expected one of {OBSERVABLE_KINDS}")
    _require_truncated(basis, kind)
    b = annihilation(basis, site).matrix
    bd = b.conj().T.tocsr()
    if kind == "quadrature_q":
        m = (b + bd) / math.sqrt(2.0)
    else:
        m = (b - bd) / (math.sqrt(2.0) * 1j)
        if kind == "quadrature_p_squared":
            m = m @ m
    return SparseOperator(m, hermitian=True)


def total_number(basis: FockBasis) -> SparseOperator:
    return SparseOperator(sp.diags(basis.states.sum(axis=1).astype(complex), format="csr"), hermitian=True)
