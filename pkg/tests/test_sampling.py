import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhotoc.classical import conserved
from bhotoc.model import BoseHubbardParams
from bhotoc.sampling import (SamplerSpec, SamplingError, estimate, fsum_mean_stderr,
                             rescale_occupations, sample)


def test_fock_ring_total_number_exact():
    X = sample(SamplerSpec.fock_ring((52, 34, 14), seed=3), 2000).points
    N = conserved(BoseHubbardParams(L=3), X).N
    assert np.abs(N - 100).max() < 1e-12


def test_fock_ring_per_site_constraint():
    n = np.array([5.0, 0.0, 17.0])
    X = sample(SamplerSpec.fock_ring(n, seed=1), 300).points
    occ = (X[:, :3] ** 2 + X[:, 3:] ** 2 - 1) / 2
    np.testing.assert_allclose(occ, np.broadcast_to(n, occ.shape), atol=1e-12)


def test_coherent_moments():
    M = 100_000
    X = sample(SamplerSpec.coherent((4.0,), seed=8), M).points
    assert abs(X[:, 0].mean() - 2 * math.sqrt(2)) < 5 * math.sqrt(0.5 / M)
    assert abs(X[:, 1].mean()) < 5 * math.sqrt(0.5 / M)
    cov = np.cov(X.T)
    np.testing.assert_allclose(np.diag(cov), 0.5, rtol=0.05)
    assert abs(cov[0, 1]) < 0.05 * 0.5


def test_coherent_phase_convention():
    spec = SamplerSpec.coherent((9.0, 4.0), phases=(math.pi / 2, math.pi))
    np.testing.assert_allclose(spec.alpha, [3j, -2], atol=1e-15)
    X = sample(spec, 50_000).points
    np.testing.assert_allclose(X.mean(axis=0), [0, -2 * math.sqrt(2), 3 * math.sqrt(2), 0], atol=0.02)


@settings(max_examples=20)
@given(count=st.integers(2, 120), split=st.integers(1, 119), seed=st.integers(0, 2**64 - 1))
def test_counter_based_batches_compose(count, split, seed):
    split = min(split, count - 1)
    spec = SamplerSpec.coherent((1.0, 2.0), seed=seed)
    whole = sample(spec, count, 0).points
    parts = np.vstack([sample(spec, split, 0).points, sample(spec, count - split, split).points])
    np.testing.assert_array_equal(whole, parts)


def test_indices_recorded():
    b = sample(SamplerSpec.fock_ring((1, 2)), 5, offset=10)
    assert list(b.indices) == [10, 11, 12, 13, 14]
    assert len(b) == 5


def test_different_seeds_differ():
    a = sample(SamplerSpec.coherent((1.0,), seed=1), 4).points
    b = sample(SamplerSpec.coherent((1.0,), seed=2), 4).points
    assert not np.array_equal(a, b)


def test_spec_validation():
    with pytest.raises(ValueError):
        SamplerSpec.fock_ring((-1.0, 2.0))
    with pytest.raises(ValueError):
        SamplerSpec("coherent", alpha=(float("nan"),))
    with pytest.raises(ValueError):
        SamplerSpec("gaussian", alpha=(1.0,))
    with pytest.raises(ValueError):
        SamplerSpec.coherent((1.0,), seed=-1)


def test_estimate_constant():
    assert estimate(lambda X: np.ones(len(X)), SamplerSpec.coherent((1.0,)), 100) == (1.0, 0.0)


def test_estimate_total_number_on_ring():
    p = BoseHubbardParams(L=2)
    mean, err = estimate(lambda X: conserved(p, X).N, SamplerSpec.fock_ring((55, 45)), 1000)
    assert mean == pytest.approx(100.0, abs=1e-12)
    assert err < 1e-12


def test_estimate_symmetric_mean():
    mean, err = estimate(lambda X: X[:, 0], SamplerSpec.coherent((0.0,), seed=4), 5000)
    assert abs(mean) < 5 * err


def test_estimate_rejects_too_many_nonfinite():
    def fn(X):
        v = np.ones(len(X))
        v[::50] = np.nan
        return v

    with pytest.raises(SamplingError):
        estimate(fn, SamplerSpec.coherent((1.0,)), 1000)


def test_estimate_worker_independent():
    spec = SamplerSpec.coherent((2.0, 1.0), seed=6)
    one = estimate(_row_norms, spec, 700, workers=1)
    three = estimate(_row_norms, spec, 700, workers=3)
    assert one == three


def _row_norms(X):
    return np.linalg.norm(X, axis=1)


def test_fsum_reduction_is_order_independent():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(1000) * 10.0 ** rng.integers(-8, 8, 1000)
    m1, e1 = fsum_mean_stderr(v)
    m2, e2 = fsum_mean_stderr(v[::-1])
    assert m1 == m2 and e1 == e2


def test_rescale_occupations_keeps_phase():
    X = sample(SamplerSpec.fock_ring((10, 20), seed=1), 4).points
    Y = rescale_occupations(X, [1.1, 0.9, 1.0, 1.05])
    occ = lambda Z: (Z[:, :2] ** 2 + Z[:, 2:] ** 2 - 1) / 2
    np.testing.assert_allclose(occ(Y), occ(X) * np.array([1.1, 0.9, 1.0, 1.05])[:, None])
    np.testing.assert_allclose(np.arctan2(Y[:, 2:], Y[:, :2]), np.arctan2(X[:, 2:], X[:, :2]))


def test_fsum_stderr_survives_huge_values():
    v = np.array([1e200, 3e200, 2e200, 6e200])
    mean, err = fsum_mean_stderr(v)
    assert mean == pytest.approx(3e200)
    assert err == pytest.approx(np.std(v / 1e200, ddof=1) / 2 * 1e200, rel=1e-12)
