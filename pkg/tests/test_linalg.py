import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ismoc import linalg
from ismoc.models.rotor import cos_theta_matrix

from conftest import random_hermitian


def test_matvec_identity_zero_and_swap():
    v = np.array([1, 1j, -1])
    assert np.array_equal(linalg.matvec(np.eye(3), v), v)
    assert np.array_equal(linalg.matvec(np.zeros((2, 2)), [3.0, 4.0]), [0, 0])
    assert np.array_equal(linalg.matvec([[0, 1], [1, 0]], [2.0, 5.0j]), [5.0j, 2.0])


def test_matvec_dimension_mismatch():
    with pytest.raises(linalg.LinalgError, match="dimension mismatch"):
        linalg.matvec(np.eye(3), np.ones(2))


def test_solve_identity_and_diagonal():
    b = np.array([1.0, 2j, 3.0])
    assert np.allclose(linalg.solve_linear(np.eye(3), b), b, rtol=0, atol=0)
    assert np.allclose(linalg.solve_linear(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0], rtol=0, atol=1e-15)


def test_solve_random_residual(rng):
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)) + 8 * np.eye(8)
    b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = linalg.solve_linear(a, b)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) <= 1e-12


def test_solve_singular_reports_condition():
    with pytest.raises(linalg.LinalgError, match="condition number"):
        linalg.solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**31 - 1))
def test_solve_inverts_matvec(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)) + 2 * np.sqrt(dim) * np.eye(dim)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    assert np.max(np.abs(linalg.solve_linear(a, linalg.matvec(a, x)) - x)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


def test_dft_delta_and_constant():
    assert np.allclose(linalg.dft([1, 0, 0, 0]), [0.5] * 4, rtol=0, atol=1e-15)
    assert np.allclose(linalg.dft([0.5] * 4), [1, 0, 0, 0], rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 600), st.integers(0, 2**31 - 1))
def test_dft_isometry_and_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    f = linalg.dft(v)
    assert abs(np.linalg.norm(f) - np.linalg.norm(v)) <= 1e-12 * np.linalg.norm(v)
    assert np.max(np.abs(linalg.dft(f, inverse=True) - v)) <= 1e-12 * max(1.0, np.max(np.abs(v)))


def test_eig_diagonal_and_swap():
    w, _ = linalg.eig_hermitian(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1, 2, 3], rtol=0, atol=1e-15)
    w, v = linalg.eig_hermitian([[0, 1], [1, 0]])
    assert np.allclose(w, [-1, 1], rtol=0, atol=1e-15)
    s = 1 / np.sqrt(2)
    assert abs(abs(np.vdot(v[:, 0], [s, -s])) - 1) <= 1e-14
    assert abs(abs(np.vdot(v[:, 1], [s, s])) - 1) <= 1e-14


def test_eig_rejects_non_hermitian():
    with pytest.raises(linalg.LinalgError, match="not Hermitian"):
        linalg.eig_hermitian([[0, 1], [0, 0]])


def test_eig_cos_block_against_characteristic_polynomial():
    block = cos_theta_matrix(4)
    w, v = linalg.eig_hermitian(block)
    # independent oracle: roots of det(x I - A), coefficients from Faddeev-LeVerrier
    n = block.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(block)
    for k in range(1, n + 1):
        m = block @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(block @ m) / k)
    roots = np.sort(np.roots(coeffs).real)
    assert abs(w[-1] - roots[-1]) <= 1e-9
    assert np.allclose(w, roots, rtol=0, atol=1e-9)
    # eigenvector from the null space of (A - lambda I) via its tridiagonal recursion
    lam = roots[-1]
    x = np.zeros(n)
    x[0] = 1.0
    x[1] = lam / block[0, 1]
    for i in range(1, n - 1):
        x[i + 1] = (lam * x[i] - block[i, i - 1] * x[i - 1]) / block[i, i + 1]
    x /= np.linalg.norm(x)
    assert abs(abs(np.vdot(v[:, -1], x)) - 1) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**31 - 1))
def test_eig_residuals_and_orthonormality(dim, seed):
    rng = np.random.default_rng(seed)
    a = random_hermitian(rng, dim)
    w, v = linalg.eig_hermitian(a)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(a @ v - v * w)) <= 1e-9
    assert np.max(np.abs(v.conj().T @ v - np.eye(dim))) <= 1e-12
