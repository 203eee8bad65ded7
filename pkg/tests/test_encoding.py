import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from crbrate.encoding import FeasibilityVars, hermitian_gradient, hermitian_to_real, real_to_hermitian

from conftest import random_hermitian


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    s = random_hermitian(rng, n)
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    enc = FeasibilityVars(n)
    x = enc.encode(w, s)
    assert x.shape == (2 * n + n * n,)
    w2, s2 = enc.decode(x)
    assert np.array_equal(w2, w) and np.allclose(s2, s, atol=0)
    assert np.array_equal(hermitian_to_real(real_to_hermitian(x[2 * n :], n)), x[2 * n :])


def test_gradient_matches_finite_differences(rng):
    n = 4
    g = random_hermitian(rng, n)
    s = random_hermitian(rng, n)
    x = hermitian_to_real(s)
    grad = hermitian_gradient(g)

    def f(x):
        return np.real(np.trace(g @ real_to_hermitian(x, n)))

    fd = np.array([(f(x + 1e-6 * e) - f(x - 1e-6 * e)) / 2e-6 for e in np.eye(len(x))])
    assert np.allclose(grad, fd, atol=1e-7)
    stacked = hermitian_gradient(np.stack([g, 2 * g]))
    assert np.allclose(stacked[1], 2 * grad)


def test_beam_gradient(rng):
    n = 3
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    enc = FeasibilityVars(n)
    g = enc.beam_gradient(c)
    assert np.isclose(g @ np.concatenate([w.real, w.imag]), np.real(np.vdot(w, c)))
