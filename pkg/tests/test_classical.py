import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhotoc.classical import (FlowConfig, FlowError, conserved, flow, flow_grid, grad_observable,
                              hcl, hcl_gradient, lyapunov, observable_value, poisson_bracket,
                              running_converged, symplectic_matrix)
from bhotoc.model import BoseHubbardParams, build_basis, build_hamiltonian
from bhotoc.sampling import SamplerSpec, sample

TRIMER = BoseHubbardParams(L=3, U=0.06)
DIMER = BoseHubbardParams(L=2, U=3.0, delta=20.0, omega=10.0)
finite = st.floats(-5, 5, allow_nan=False)


def chaotic_trimer_point():
    return sample(SamplerSpec.fock_ring((52, 34, 14), seed=1), 1).points[0]


def test_hcl_linear_oscillator():
    w = 1.7
    p = BoseHubbardParams(L=1, U=0.0, E=(w,))
    X = np.array([[0.3, -1.2], [2.0, 0.5]])
    np.testing.assert_allclose(hcl(p, 0.0, X), w * (X[:, 0] ** 2 + X[:, 1] ** 2 - 1) / 2)


def test_hcl_origin_offset():
    # n_l = -1/2 at the origin: U/2 (n^2 - n - 1/4) = U/4 per site
    p = BoseHubbardParams(L=3, U=0.8, J=0.0)
    assert hcl(p, 0.0, np.zeros(6)) == pytest.approx(3 * 0.8 / 4)
    assert hcl(p, 0.0, np.zeros(6), weyl_corrected=False) == 0.0


def test_hcl_matches_weyl_symbol_of_interaction():
    # <alpha| n(n-1) |alpha> = |alpha|^4; the Weyl symbol averaged over the
    # coherent-state Wigner function must reproduce it
    U, alpha2 = 2.0, 3.0
    p = BoseHubbardParams(L=1, U=U, J=0.0)
    X = sample(SamplerSpec.coherent((alpha2,), seed=2), 200_000).points
    mean = hcl(p, 0.0, X).mean()
    assert mean == pytest.approx(U / 2 * alpha2**2, rel=0.01)


@settings(max_examples=30)
@given(X=st.lists(finite, min_size=6, max_size=6), phi=st.floats(0, 2 * math.pi))
def test_hcl_global_phase_invariance(X, phi):
    p = BoseHubbardParams(L=3, U=0.3, J=1.0, E=(0.4, 0.4, 0.4))
    X = np.array(X)
    q, pp = X[:3], X[3:]
    c, s = math.cos(phi), math.sin(phi)
    Y = np.concatenate([q * c + pp * s, -q * s + pp * c])
    assert hcl(p, 0.0, Y) == pytest.approx(hcl(p, 0.0, X), rel=1e-12, abs=1e-12)


@settings(max_examples=30)
@given(X=st.lists(finite, min_size=4, max_size=4), t=st.floats(0, 3), weyl=st.booleans())
def test_hcl_gradient_matches_finite_difference(X, t, weyl):
    X = np.array(X)
    h = 1e-6
    I = np.eye(4) * h
    fd = np.array([(hcl(DIMER, t, X + e, weyl) - hcl(DIMER, t, X - e, weyl)) / (2 * h) for e in I])
    np.testing.assert_allclose(hcl_gradient(DIMER, t, X, weyl), fd, rtol=1e-6, atol=1e-6)


def test_classical_energy_on_fock_ring():
    # for J=0 the symbol on the ring sits U/8 per site below <n|H|n>: the ring
    # carries no number fluctuations, the Weyl symbol of n^2 assumes variance 1/4
    p = BoseHubbardParams(L=2, U=0.7, J=0.0, E=(0.3, -0.2))
    occ = (5, 3)
    X = sample(SamplerSpec.fock_ring(occ, seed=0), 10).points
    b = build_basis(2, N=8)
    H = build_hamiltonian(p, b).toarray()
    k = b.index(occ)
    np.testing.assert_allclose(hcl(p, 0.0, X), H[k, k].real - 2 * p.U / 8, atol=1e-12)


def test_linear_flow_is_rotation():
    w, t = 1.3, 0.9
    p = BoseHubbardParams(L=1, U=0.0, E=(w,))
    X, M = flow(p, [1.0, 0.5], t, FlowConfig(), with_tangent=True)
    c, s = math.cos(w * t), math.sin(w * t)
    R = np.array([[c, s], [-s, c]])
    np.testing.assert_allclose(M, R, atol=1e-12)
    np.testing.assert_allclose(X, R @ [1.0, 0.5], atol=1e-12)


def test_tangent_identity_at_t0():
    _, M = flow(TRIMER, chaotic_trimer_point(), 0.0, with_tangent=True)
    np.testing.assert_array_equal(M, np.eye(6))


@pytest.mark.parametrize("obs", ["n1", "q2", "p3"])
def test_tangent_matches_central_difference(obs):
    from bhotoc.validation import tangent_fd_error

    assert tangent_fd_error(TRIMER, chaotic_trimer_point(), obs, t=5.0) < 1e-4


def test_backward_flow_inverts_forward():
    x0 = chaotic_trimer_point()
    x1 = flow(TRIMER, x0, 3.0)
    np.testing.assert_allclose(flow(TRIMER, x1, -3.0), x0, atol=1e-9)


def test_dt_halving_fourth_order():
    x0 = chaotic_trimer_point()
    ref = flow(TRIMER, x0, 5.0, FlowConfig(dt=0.0025))
    e1 = np.abs(flow(TRIMER, x0, 5.0, FlowConfig(dt=0.04)) - ref).max()
    e2 = np.abs(flow(TRIMER, x0, 5.0, FlowConfig(dt=0.02)) - ref).max()
    assert 16 * 0.7 < e1 / e2 < 16 * 1.3


@pytest.mark.parametrize("params,spec,dt", [
    (TRIMER, SamplerSpec.fock_ring((52, 34, 14), seed=1), 1e-3),
    (DIMER, SamplerSpec.coherent((16, 14), seed=1), 5e-5),
])
def test_number_conservation(params, spec, dt):
    x0 = sample(spec, 1).points[0]
    x1 = flow(params, x0, 100.0, FlowConfig(dt=dt))
    assert abs(conserved(params, x1).N - conserved(params, x0).N) < 1e-9


def test_energy_conservation_undriven():
    x0 = chaotic_trimer_point()
    E0 = conserved(TRIMER, x0).E
    E1 = conserved(TRIMER, flow(TRIMER, x0, 100.0)).E
    assert abs(E1 - E0) / max(1.0, abs(E0)) < 1e-7


def test_symplectic_at_short_times():
    x0 = chaotic_trimer_point()
    _, M = flow(TRIMER, x0, 5.0, with_tangent=True)
    J = symplectic_matrix(3)
    assert np.abs(M.T @ J @ M - J).max() < 1e-6


@pytest.mark.parametrize("params,spec", [
    (TRIMER, SamplerSpec.fock_ring((52, 34, 14), seed=1)),
    (DIMER, SamplerSpec.coherent((16, 14), seed=1)),
])
def test_symplectic_relative_to_growth(params, spec):
    # |M| grows like exp(lambda t); at t=100 only the error relative to |M|^2
    # is representable in double precision
    _, M = flow(params, sample(spec, 1).points[0], 100.0, with_tangent=True)
    J = symplectic_matrix(params.L)
    assert np.abs(M.T @ J @ M - J).max() / np.abs(M).max() ** 2 < 1e-6


def test_conserved_vacuum_offset():
    c = conserved(TRIMER, np.zeros(6))
    assert c.N == -1.5
    assert conserved(DIMER, np.zeros(4)).E is None


def test_fock_ring_number_exact():
    X = sample(SamplerSpec.fock_ring((52, 34, 14), seed=9), 500).points
    np.testing.assert_allclose(conserved(TRIMER, X).N, 100.0, atol=1e-12)


def test_gradient_examples():
    X = np.zeros(6)
    X[0], X[3] = 1.0, 2.0
    g = grad_observable("n1", X)
    assert g[0] == 1.0 and g[3] == 2.0 and np.count_nonzero(g) == 2
    X[3] = 3.0
    g = grad_observable("p1^2", X)
    assert g[3] == 6.0 and np.count_nonzero(g) == 1


@settings(max_examples=25)
@given(X=st.lists(finite, min_size=6, max_size=6),
       obs=st.sampled_from(["n1", "n3", "q2", "p1", "p2^2"]))
def test_gradient_matches_central_difference(X, obs):
    X = np.array(X)
    h = 1e-4
    fd = np.array([(observable_value(obs, X + e) - observable_value(obs, X - e)) / (2 * h)
                   for e in np.eye(6) * h])
    np.testing.assert_allclose(grad_observable(obs, X), fd, atol=1e-8)


def test_poisson_bracket_identity_at_t0():
    _, M = flow(TRIMER, chaotic_trimer_point(), 0.0, with_tangent=True)
    J = symplectic_matrix(3)
    X = np.zeros(6)
    P = np.array([[grad_observable(f"q{i}", X) @ M @ J @ grad_observable(f"p{j}", X)
                   for j in (1, 2, 3)] for i in (1, 2, 3)])
    np.testing.assert_array_equal(P, np.eye(3))
    assert poisson_bracket(grad_observable("q1", X), grad_observable("p1", X)) == 1.0


def test_flow_grid_matches_flow():
    x0 = chaotic_trimer_point()
    xs = flow_grid(TRIMER, x0, [0.5, 1.0])
    np.testing.assert_allclose(xs[1], flow(TRIMER, x0, 1.0), atol=1e-12)


def test_blow_up_reports_time():
    p = BoseHubbardParams(L=1, U=1e3)
    with pytest.raises(FlowError) as exc:
        flow(p, [1e3, 1e3], 10.0, FlowConfig(dt=0.5))
    assert 0 < exc.value.t_fail <= 10.0


def test_lyapunov_integrable_dimer():
    p = BoseHubbardParams(L=2, U=0.0, E=(0.5, -0.5))
    res = lyapunov(p, [1.0, 0.5, -0.3, 2.0], 500.0, 1.0)
    assert abs(res.exponent) < 0.01


def test_lyapunov_driven_dimer_positive():
    x0 = sample(SamplerSpec.coherent((16, 14), seed=1), 1).points[0]
    res = lyapunov(DIMER, x0, 200.0, 0.5)
    assert res.exponent > 0.5


def test_lyapunov_chaotic_trimer_converges():
    res = lyapunov(TRIMER, chaotic_trimer_point(), 4000.0, 1.0, FlowConfig(dt=0.01))
    assert res.exponent > 0
    # sticky episodes near regular islands drag the early running mean down
    assert running_converged(res, 0.1, tail=0.25)
