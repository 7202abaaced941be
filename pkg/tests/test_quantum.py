import math

import numpy as np
import pytest

from bhotoc.model import BoseHubbardParams, build_basis, build_observable, total_number
from bhotoc.quantum import (PropagationError, PropagatorConfig, StateVector, coherent_state,
                            evolve, fock_state, quantum_otoc)


def test_rabi_flop():
    basis = build_basis(2, N=1)
    out = evolve(fock_state(basis, (1, 0)), BoseHubbardParams(L=2, U=0.0), 0.0, math.pi / 2)
    assert out.fidelity(fock_state(basis, (0, 1))) >= 1 - 1e-8


def test_zero_duration_is_identity():
    basis = build_basis(3, N=4)
    psi = coherent_state(basis, [1.0, 0.5j, -0.7])
    out = evolve(psi, BoseHubbardParams(L=3, U=0.3), 1.234, 1.234)
    np.testing.assert_array_equal(out.amplitudes, psi.amplitudes)


@pytest.mark.parametrize("params", [BoseHubbardParams(L=3, U=0.5),
                                    BoseHubbardParams(L=2, U=1.0, delta=4.0, omega=3.0)])
def test_forward_backward_round_trip(params):
    basis = build_basis(params.L, N=8)
    psi = coherent_state(basis, np.sqrt(np.linspace(1, 3, params.L)) * np.exp(0.4j))
    there = evolve(psi, params, 0.3, 2.1)
    back = evolve(there, params, 2.1, 0.3)
    assert back.fidelity(psi) >= 1 - 1e-7
    assert there.fidelity(psi) < 0.999


def test_matches_dense_expm_static():
    from scipy.linalg import expm
    from bhotoc.model import build_hamiltonian

    params = BoseHubbardParams(L=3, U=0.7, J=1.0, E=(0.1, 0.0, -0.2))
    basis = build_basis(3, N=5)
    psi = coherent_state(basis, [1.0, 1.2, 0.4])
    H = build_hamiltonian(params, basis).toarray()
    ref = expm(-1j * H * 1.7) @ psi.amplitudes
    out = evolve(psi, params, 0.0, 1.7)
    assert abs(np.vdot(ref, out.amplitudes)) ** 2 >= 1 - 1e-10


def test_drive_converges_under_dt_halving():
    params = BoseHubbardParams(L=2, U=1.0, delta=5.0, omega=4.0)
    basis = build_basis(2, N=6)
    psi = fock_state(basis, (4, 2))
    a = evolve(psi, params, 0.0, 1.0, PropagatorConfig(dt=4e-3)).amplitudes
    b = evolve(psi, params, 0.0, 1.0, PropagatorConfig(dt=2e-3)).amplitudes
    c = evolve(psi, params, 0.0, 1.0, PropagatorConfig(dt=1e-3)).amplitudes
    e1, e2 = np.linalg.norm(a - b), np.linalg.norm(b - c)
    # midpoint freezing is second order in dt
    assert 3.0 < e1 / e2 < 5.0


def test_number_conserved_in_truncated_mode():
    params = BoseHubbardParams(L=2, U=0.5)
    basis = build_basis(2, n_max=20)
    psi = fock_state(basis, (3, 2))
    out = evolve(psi, params, 0.0, 5.0)
    N = total_number(basis)
    assert abs(out.expect(N).real - 5.0) < 1e-8


def test_leakage_error_names_cutoff():
    params = BoseHubbardParams(L=2, U=0.0)
    basis = build_basis(2, n_max=4)
    psi = fock_state(basis, (4, 0))
    with pytest.raises(PropagationError, match="n_max"):
        evolve(psi, params, 0.0, 1.0)


def test_state_vector_is_read_only():
    psi = fock_state(build_basis(2, N=1), (1, 0))
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 0


def test_number_projected_coherent_state_weights():
    # projected coherent state: |c_n|^2 proportional to prod |alpha_l|^(2 n_l) / n_l!
    basis = build_basis(2, N=6)
    alpha = np.array([1.3, 0.8j])
    psi = coherent_state(basis, alpha)
    w = np.array([np.prod(np.abs(alpha) ** (2 * s) / [math.factorial(k) for k in s]) for s in basis.states])
    np.testing.assert_allclose(np.abs(psi.amplitudes) ** 2, w / w.sum(), rtol=1e-12)


def test_otoc_commuting_at_t0():
    basis = build_basis(2, N=10)
    psi = coherent_state(basis, [1.5, 2.0])
    n1 = build_observable(basis, "number", 1)
    s = quantum_otoc(BoseHubbardParams(L=2, U=1.0), psi, n1, n1, [0.0])
    assert abs(s.values[0]) < 1e-12
    assert np.all(s.stderr == 0)


def test_otoc_t0_matches_commutator_oracle():
    basis = build_basis(2, n_max=25)
    psi = coherent_state(basis, [1.1 + 0.4j, -0.6j])
    A = build_observable(basis, "quadrature_p_squared", 1)
    B = build_observable(basis, "quadrature_q", 1)
    s = quantum_otoc(BoseHubbardParams(L=2, U=0.3), psi, A, B, [0.0])
    v = (A.matrix @ B.matrix - B.matrix @ A.matrix) @ psi.amplitudes
    ref = np.vdot(v, v).real
    assert abs(s.values[0] - ref) / ref < 1e-10


def test_linear_oscillator_otoc():
    omega = 1.3
    basis = build_basis(1, n_max=40)
    psi = coherent_state(basis, [1.0])
    q = build_observable(basis, "quadrature_q", 1)
    p = build_observable(basis, "quadrature_p", 1)
    t = np.linspace(0.1, 2 * math.pi / omega, 20)
    s = quantum_otoc(BoseHubbardParams(L=1, U=0.0, E=(omega,)), psi, q, p, t)
    np.testing.assert_allclose(s.values, np.cos(omega * t) ** 2, atol=1e-8)


def test_otoc_grid_incrementality():
    params = BoseHubbardParams(L=2, U=1.0, delta=3.0, omega=2.0)
    basis = build_basis(2, N=8)
    psi = coherent_state(basis, [2.0, 2.0])
    A = build_observable(basis, "number", 1)
    B = build_observable(basis, "number", 2)
    one = quantum_otoc(params, psi, A, B, [1.3]).values[-1]
    two = quantum_otoc(params, psi, A, B, [0.65, 1.3]).values[-1]
    assert abs(one - two) < 1e-9


def test_otoc_rejects_non_hermitian():
    from bhotoc.model import annihilation

    basis = build_basis(1, n_max=5)
    psi = fock_state(basis, (1,))
    b = annihilation(basis, 1)
    q = build_observable(basis, "quadrature_q", 1)
    with pytest.raises(ValueError, match="hermitian"):
        quantum_otoc(BoseHubbardParams(L=1), psi, b, q, [0.1])


def test_norm_drift_over_long_run():
    params = BoseHubbardParams(L=3, U=0.2)
    basis = build_basis(3, N=6)
    psi = coherent_state(basis, [1.0, 1.0, 1.0])
    out = evolve(psi, params, 0.0, 100.0)
    assert abs(out.norm - 1.0) < 1e-8


SECTOR = PropagatorConfig(method="sector")


@pytest.mark.parametrize("params", [BoseHubbardParams(L=3, U=0.5),
                                    BoseHubbardParams(L=2, U=1.0, delta=4.0, omega=3.0)])
def test_sector_evolve_matches_krylov(params):
    basis = build_basis(params.L, n_max=14)
    psi = coherent_state(basis, np.full(params.L, 0.5))
    a = evolve(psi, params, 0.2, 1.9).amplitudes
    b = evolve(psi, params, 0.2, 1.9, SECTOR).amplitudes
    assert np.linalg.norm(a - b) < 1e-9


def test_sector_otoc_matches_krylov_driven():
    params = BoseHubbardParams(L=2, U=1.0, delta=3.0, omega=2.0)
    basis = build_basis(2, n_max=24)
    psi = coherent_state(basis, [0.6, 0.5])
    A = build_observable(basis, "quadrature_p_squared", 1)
    B = build_observable(basis, "quadrature_p", 2)
    period = 2 * math.pi / params.omega
    t = period / 4 * np.arange(1, 7)
    cfg = PropagatorConfig(dt=period / 400)
    a = quantum_otoc(params, psi, A, B, t, cfg).values
    b = quantum_otoc(params, psi, A, B, t, PropagatorConfig(dt=period / 400, method="sector")).values
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-10)


def test_sector_otoc_matches_krylov_static():
    params = BoseHubbardParams(L=3, U=0.4)
    basis = build_basis(3, N=10)
    psi = fock_state(basis, (5, 3, 2))
    A = build_observable(basis, "number", 1)
    B = build_observable(basis, "number", 2)
    t = np.linspace(0.3, 3.0, 5)
    a = quantum_otoc(params, psi, A, B, t).values
    b = quantum_otoc(params, psi, A, B, t, SECTOR).values
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-10)


def test_sector_method_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(method="dense")
    with pytest.raises(ValueError, match="sector_dim_cap"):
        evolve(fock_state(build_basis(3, N=10), (5, 3, 2)), BoseHubbardParams(L=3), 0.0, 1.0,
               PropagatorConfig(method="sector", sector_dim_cap=10))
