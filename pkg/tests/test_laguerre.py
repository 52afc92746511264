import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmpc.laguerre import build_AL, first_input, laguerre_basis, reconstruct_sequence
from oracles import L0_ALPHA09_M4

alphas = st.floats(0.0, 0.98)


def power_series_basis(alpha, M, N):
    """Independent construction: the Laguerre functions as a cascade of
    first-order filters driven by a unit impulse."""
    beta = 1 - alpha**2
    L = np.zeros((N, M))
    # first function: sqrt(beta) alpha^k
    L[:, 0] = np.sqrt(beta) * alpha ** np.arange(N)
    for j in range(1, M):
        prev = L[:, j - 1]
        out = np.zeros(N)
        state = 0.0
        # all-pass section (z^-1 - alpha)/(1 - alpha z^-1) applied to prev
        last_in = 0.0
        for k in range(N):
            out[k] = alpha * state + last_in - alpha * prev[k]
            state = out[k]
            last_in = prev[k]
        L[:, j] = out
    return L


def test_AL_closed_form_examples():
    np.testing.assert_allclose(build_AL(0.9, 3), [[0.9, 0, 0], [0.19, 0.9, 0], [-0.171, 0.19, 0.9]],
                               atol=1e-15)
    np.testing.assert_array_equal(build_AL(0.0, 3), [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(build_AL(0.5, 2), [[0.5, 0], [0.75, 0.5]])


@pytest.mark.parametrize("alpha", [-0.1, 1.0, 1.5, np.nan])
def test_AL_rejects_bad_pole(alpha):
    with pytest.raises(ValueError):
        build_AL(alpha, 3)


@pytest.mark.parametrize("M", [0, -1, 2.5])
def test_AL_rejects_bad_size(M):
    with pytest.raises(ValueError):
        build_AL(0.5, M)


def test_identity_when_pole_is_zero():
    np.testing.assert_array_equal(laguerre_basis(0.0, 4, 4).L, np.eye(4))


def test_first_row():
    np.testing.assert_allclose(laguerre_basis(0.9, 4, 20).L[0], L0_ALPHA09_M4, atol=1e-6)


def test_orthonormal_for_long_horizon():
    L = laguerre_basis(0.9, 4, 2000).L
    assert np.max(np.abs(L.T @ L - np.eye(4))) <= 1e-6


@given(alphas, st.integers(1, 6), st.integers(6, 40))
def test_matches_filter_cascade(alpha, M, N):
    np.testing.assert_allclose(laguerre_basis(alpha, M, N).L, power_series_basis(alpha, M, N),
                               atol=1e-12)


@given(alphas, st.integers(1, 8), st.integers(8, 60))
def test_recursion_residual(alpha, M, N):
    b = laguerre_basis(alpha, M, N)
    A = build_AL(alpha, M)
    assert np.max(np.abs(b.L[1:] - b.L[:-1] @ A.T)) <= 1e-12


def test_basis_is_read_only():
    b = laguerre_basis(0.9, 4, 20)
    with pytest.raises(ValueError):
        b.L[0, 0] = 1.0


def test_basis_shape_errors():
    with pytest.raises(ValueError):
        laguerre_basis(0.5, 5, 4)
    with pytest.raises(ValueError):
        laguerre_basis(0.5, 1, 0)


def test_reconstruct_examples():
    b = laguerre_basis(0.9, 4, 20)
    np.testing.assert_array_equal(reconstruct_sequence(b, np.zeros(4), 0.4), np.full(20, 0.4))
    ident = laguerre_basis(0.0, 3, 3)
    np.testing.assert_array_equal(reconstruct_sequence(ident, [0.2, -0.3, 0.7], 0.0),
                                  [0.2, -0.3, 0.7])
    np.testing.assert_allclose(reconstruct_sequence(laguerre_basis(0.9, 1, 2), [1.0], 0.0),
                               [0.435890, 0.392301], atol=1e-6)
    with pytest.raises(ValueError):
        reconstruct_sequence(b, np.zeros(3), 0.4)


def test_first_input_examples():
    b = laguerre_basis(0.9, 4, 20)
    assert first_input(b, np.zeros(4), 0.4) == 0.4
    assert first_input(laguerre_basis(0.0, 3, 5), [0.25, 1.0, 2.0], 0.0) == 0.25
    assert first_input(b, np.ones(4), 0.0) == pytest.approx(0.078896, abs=1e-6)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0, 1))
def test_first_input_is_element_zero(eta, u_ss):
    b = laguerre_basis(0.9, 4, 20)
    assert first_input(b, eta, u_ss) == reconstruct_sequence(b, eta, u_ss)[0]
