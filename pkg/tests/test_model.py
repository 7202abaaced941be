import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhotoc.model import (BasisError, BoseHubbardParams, build_basis, build_hamiltonian,
                          build_observable, total_number)


def test_dimer_single_particle_basis():
    b = build_basis(2, N=1)
    assert b.dim == 2
    assert [tuple(s) for s in b.states] == [(0, 1), (1, 0)]


@pytest.mark.parametrize("L,N,dim", [(3, 2, 6), (3, 300, 45451), (2, 30, 31), (4, 3, 20)])
def test_fixed_dimension_is_binomial(L, N, dim):
    assert build_basis(L, N=N).dim == dim == math.comb(N + L - 1, L - 1)


@given(L=st.integers(1, 4), n_max=st.integers(0, 5))
def test_truncated_dimension(L, n_max):
    assert build_basis(L, n_max=n_max).dim == (n_max + 1) ** L


@settings(max_examples=40)
@given(L=st.integers(1, 4), N=st.integers(0, 12))
def test_index_round_trip_and_order(L, N):
    b = build_basis(L, N=N)
    keys = [tuple(s) for s in b.states]
    assert keys == sorted(keys)
    assert all(b.index(s) == k for k, s in enumerate(b.states))
    assert np.all(b.states.sum(axis=1) == N)


def test_dimension_cap():
    with pytest.raises(BasisError, match="cap"):
        build_basis(3, N=300, dim_cap=1000)
    with pytest.raises(BasisError):
        build_basis(2, N=3, n_max=3)


def test_params_validation():
    with pytest.raises(ValueError, match="dimer"):
        BoseHubbardParams(L=3, delta=1.0, omega=1.0)
    with pytest.raises(ValueError, match="omega"):
        BoseHubbardParams(L=2, delta=1.0)
    with pytest.raises(ValueError):
        BoseHubbardParams(L=2, J=-1.0)


def test_single_particle_hopping():
    H = build_hamiltonian(BoseHubbardParams(L=2, U=5.0, J=0.7), build_basis(2, N=1))
    np.testing.assert_array_equal(H.toarray(), [[0, -0.7], [-0.7, 0]])


def test_single_site_interaction():
    H = build_hamiltonian(BoseHubbardParams(L=1, U=0.3, E=(1.25,)), build_basis(1, N=2))
    np.testing.assert_allclose(H.toarray(), [[2 * 1.25 + 0.3]])


def test_drive_diagonal_at_t0():
    basis = build_basis(2, N=5)
    driven = build_hamiltonian(BoseHubbardParams(L=2, U=1.0, delta=20.0, omega=10.0), basis, t=0.0)
    static = build_hamiltonian(BoseHubbardParams(L=2, U=1.0), basis)
    diff = (driven.matrix - static.matrix).toarray()
    n1, n2 = basis.occupation(1), basis.occupation(2)
    np.testing.assert_allclose(diff, np.diag(20.0 * n1 - 20.0 * n2), atol=1e-12)


def test_hamiltonian_matrix_elements_against_loop():
    # brute-force oracle: build H entry by entry from the occupation tuples
    p = BoseHubbardParams(L=3, U=0.4, J=1.1, E=(0.2, -0.5, 0.3))
    b = build_basis(3, N=4)
    ref = np.zeros((b.dim, b.dim))
    for k, s in enumerate(b.states):
        ref[k, k] = sum(p.E[l] * s[l] + 0.5 * p.U * s[l] * (s[l] - 1) for l in range(3))
        for l in range(2):
            for a, c in ((l, l + 1), (l + 1, l)):
                if s[c] > 0:
                    t = s.copy()
                    t[a] += 1
                    t[c] -= 1
                    ref[b.index(t), k] += -p.J * math.sqrt((s[a] + 1) * s[c])
    np.testing.assert_allclose(build_hamiltonian(p, b).toarray(), ref, atol=1e-13)


@pytest.mark.parametrize("params,basis", [
    (BoseHubbardParams(L=3, U=0.06), build_basis(3, N=12)),
    (BoseHubbardParams(L=2, U=3.0, delta=20.0, omega=10.0), build_basis(2, N=30)),
    (BoseHubbardParams(L=2, U=3.0, delta=20.0, omega=10.0), build_basis(2, n_max=6)),
])
@pytest.mark.parametrize("t", [0.0, 0.37, 1.9])
def test_hermitian_and_number_conserving(params, basis, t):
    H = build_hamiltonian(params, basis, t)
    assert H.hermitian and H.hermiticity_error() <= 1e-14
    N = total_number(basis).matrix
    comm = H.matrix @ N - N @ H.matrix
    assert comm.count_nonzero() == 0 or np.abs(comm.data).max() == 0.0


def test_truncated_hopping_flags_dropped_amplitudes():
    H = build_hamiltonian(BoseHubbardParams(L=2, U=1.0), build_basis(2, n_max=2))
    assert H.dropped > 0
    assert H.hermiticity_error() == 0.0
    H = build_hamiltonian(BoseHubbardParams(L=2, U=1.0), build_basis(2, N=2))
    assert H.dropped == 0


def test_mismatched_basis():
    with pytest.raises(ValueError, match="L="):
        build_hamiltonian(BoseHubbardParams(L=3), build_basis(2, N=2))


def test_number_operator():
    n1 = build_observable(build_basis(2, N=1), "number", 1)
    np.testing.assert_array_equal(n1.toarray(), np.diag([0, 1]))


def test_quadrature_q_two_level():
    q = build_observable(build_basis(1, n_max=1), "quadrature_q", 1)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(q.toarray(), [[0, s], [s, 0]], atol=1e-15)


def test_quadrature_requires_truncated_basis():
    with pytest.raises(BasisError, match="truncated"):
        build_observable(build_basis(2, N=3), "quadrature_p", 1)


@pytest.mark.parametrize("site", [1, 2])
def test_canonical_commutator_on_interior(site):
    b = build_basis(2, n_max=7)
    q = build_observable(b, "quadrature_q", site).matrix
    p = build_observable(b, "quadrature_p", site).matrix
    comm = (q @ p - p @ q).toarray()
    interior = np.all(b.states < b.n_max, axis=1)
    block = comm[np.ix_(interior, interior)]
    np.testing.assert_allclose(block, 1j * np.eye(interior.sum()), atol=1e-12)


@pytest.mark.parametrize("kind", ["number", "quadrature_q", "quadrature_p", "number_squared",
                                  "quadrature_p_squared"])
def test_observables_hermitian(kind):
    op = build_observable(build_basis(2, n_max=5), kind, 2)
    assert op.hermiticity_error() <= 1e-14
    rows, cols, _ = zip(*op.entries())
    assert max(rows) < op.dim and max(cols) < op.dim


def test_p_squared_is_square_of_p_below_cutoff():
    b = build_basis(1, n_max=10)
    p = build_observable(b, "quadrature_p", 1).toarray()
    p2 = build_observable(b, "quadrature_p_squared", 1).toarray()
    np.testing.assert_allclose(p2[:9, :9], (p @ p)[:9, :9], atol=1e-12)
