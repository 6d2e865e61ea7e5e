import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gap_thermal.errors import InvalidParameterError, ResourceLimitError
from gap_thermal.models import (build_box_model, build_circle_model, build_custom_model,
                                kernel, kernel_mixed_derivative, thermalize)

# independent oracles: Jacobi theta series via mpmath
Z_CIRCLE_BETA2 = float(mpmath.jtheta(3, 0, mpmath.e ** -1))  # sum_{n in Z} e^{-n^2}
S_BOX_BETA1 = float((mpmath.jtheta(3, 0, mpmath.e ** -0.5) - 1) / 2)  # sum_{nu>=1} e^{-nu^2/2}


def test_circle_energies_and_zero_mode():
    s = thermalize(build_circle_model(), 2.0)
    pos = s.position()
    assert s.energies[pos[(2,)]] == 2.0
    assert s.energies[pos[(0,)]] == 0.0
    phi0 = s.eigenfunctions(np.linspace(0, 6, 7))[:, pos[(0,)]]
    np.testing.assert_allclose(phi0, 1 / math.sqrt(2 * math.pi), rtol=0, atol=1e-15)


def test_circle_partition_function_at_tail_mass_1e12():
    s = thermalize(build_circle_model(), 2.0, tail_mass=1e-12)
    assert Z_CIRCLE_BETA2 == pytest.approx(1.7726372048, abs=1e-10)
    assert s.z_trunc == pytest.approx(Z_CIRCLE_BETA2, rel=1e-12)


def test_circle_cutoff_is_smallest_satisfying_bound():
    s = thermalize(build_circle_model(), 2.0, tail_mass=1e-12)
    R = s.radius
    # brute-force tail with a huge cutoff
    tail = lambda r: 2 * sum(math.exp(-n * n) for n in range(r + 1, 60))
    assert tail(R) <= 1e-12 * s.z_trunc
    assert s.tail_bound >= tail(R)
    smaller = thermalize(build_circle_model(), 2.0, cutoff=R - 1)
    assert smaller.tail_bound > 1e-12 * smaller.z_trunc


def test_nonpositive_parameters_rejected():
    with pytest.raises(InvalidParameterError):
        build_circle_model(m=0.0)
    with pytest.raises(InvalidParameterError):
        build_circle_model(hbar=-1.0)
    with pytest.raises(InvalidParameterError):
        thermalize(build_circle_model(), 2.0, tail_mass=0.0)
    with pytest.raises(InvalidParameterError):
        thermalize(build_circle_model(), -1.0)


def test_weights_sorted_normalized_and_ground_state_largest(circle2):
    assert np.all(np.diff(circle2.energies) >= 0)
    assert np.sum(circle2.weights) == pytest.approx(1.0, abs=1e-15)
    assert np.all(circle2.weights > 0)
    assert np.argmax(circle2.weights) == 0
    assert circle2.weights[0] == pytest.approx(1 / circle2.z_trunc, rel=1e-15)


def test_degenerate_pair_kept_as_distinct_modes(circle2):
    pos = circle2.position()
    assert (3,) in pos and (-3,) in pos
    assert circle2.weights[pos[(3,)]] == circle2.weights[pos[(-3,)]]


@pytest.mark.parametrize("eps", [1e-6, 1e-10, 1e-14])
def test_tail_correctness_against_doubled_cutoff(eps):
    for model, beta in [(build_circle_model(), 2.0), (build_circle_model(m=3.0), 0.5),
                        (build_box_model(2, 1), 1.0)]:
        s = thermalize(model, beta, eps)
        big = thermalize(model, beta, cutoff=2 * s.radius)
        assert abs(s.z_trunc - big.z_trunc) / big.z_trunc <= eps


def test_box_single_particle_mode():
    s = thermalize(build_box_model(1, 1), 1.0)
    pos = s.position()
    q = np.array([0.3, 1.1, 2.5])
    np.testing.assert_allclose(s.eigenfunctions(q)[:, pos[(3,)]], math.sqrt(2 / math.pi) * np.sin(3 * q),
                               rtol=1e-14)
    assert s.energies[pos[(3,)]] == pytest.approx(9 / 2)
    assert s.weights[pos[(1,)]] / s.weights[pos[(2,)]] == pytest.approx(math.exp(1.5), rel=1e-13)


def test_box_two_particle_partition_function_factorizes():
    s = thermalize(build_box_model(2, 1), 1.0)
    direct = sum(math.exp(-(a * a + b * b) / 2) for a in range(1, 40) for b in range(1, 40))
    assert s.z_trunc == pytest.approx(S_BOX_BETA1**2, rel=1e-14)
    assert s.z_trunc == pytest.approx(direct, rel=1e-14)


def test_antisymmetric_sector_excludes_repeated_blocks():
    s = thermalize(build_box_model(2, 1, symmetry="antisymmetric"), 1.0)
    assert all(a < b for a, b in s.indices)
    assert (2, 2) not in s.position()
    s3 = thermalize(build_box_model(2, 2, symmetry="antisymmetric"), 2.0)
    for n in s3.indices:
        assert tuple(n[:2]) < tuple(n[2:])


def test_box_resource_limit():
    with pytest.raises(ResourceLimitError):
        thermalize(build_box_model(6, 3), 0.01)


def test_custom_model_validation():
    _, s = build_custom_model([(0, 0.5), (1, 0.5)])
    assert s.size == 2
    with pytest.raises(InvalidParameterError):
        build_custom_model([(0, 0.5), (1, 0.499)])
    with pytest.raises(InvalidParameterError):
        build_custom_model([(0, 1.5), (1, -0.5)])


def test_custom_eigenfunction_table():
    fns = [lambda q: np.ones_like(q) / math.sqrt(2 * math.pi),
           lambda q: np.exp(1j * q) / math.sqrt(2 * math.pi)]
    _, s = build_custom_model([("a", 0.25), ("b", 0.75)], eigenfunctions=fns)
    q = np.array([0.0, 1.0])
    np.testing.assert_allclose(s.eigenfunctions(q)[:, 1], np.exp(1j * q) / math.sqrt(2 * math.pi))
    np.testing.assert_allclose(kernel(s, q, q).real, 1 / (2 * math.pi))


def _trapezoid_gram(spectrum, n_grid=256):
    q = np.arange(n_grid) * (2 * math.pi / n_grid)
    phi = spectrum.eigenfunctions(q)
    return (phi.conj().T @ phi) * (2 * math.pi / n_grid)


def test_circle_orthonormality(circle2):
    G = _trapezoid_gram(circle2)
    np.testing.assert_allclose(G, np.eye(circle2.size), atol=1e-10)


def test_box_orthonormality_sectors():
    for sym in ("none", "symmetric", "antisymmetric"):
        s = thermalize(build_box_model(2, 1, symmetry=sym), 3.0)
        # Gauss-Legendre on [0, pi]^2 is exact for these trigonometric products at this order
        x, w = np.polynomial.legendre.leggauss(80)
        x = (x + 1) * math.pi / 2
        w = w * math.pi / 2
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w).ravel()
        phi = s.eigenfunctions(np.stack([X.ravel(), Y.ravel()], axis=1))
        G = (phi.conj().T * W) @ phi
        np.testing.assert_allclose(G, np.eye(s.size), atol=1e-10)


def test_kernel_trace_and_diagonal(circle2):
    q = np.linspace(0, 2 * math.pi, 401)
    diag = kernel(circle2, q, q)
    np.testing.assert_allclose(diag.real, 1 / (2 * math.pi), rtol=1e-14)
    trace = np.trapezoid(diag.real, q)
    assert trace == pytest.approx(1.0, abs=1e-8)


def test_box_kernel_trace():
    s = thermalize(build_box_model(1, 1), 1.0)
    x, w = np.polynomial.legendre.leggauss(120)
    x = (x + 1) * math.pi / 2
    w = w * math.pi / 2
    assert np.sum(w * kernel(s, x, x).real) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_kernel_hermitian(q1, q2):
    s = thermalize(build_circle_model(), 2.0)
    assert abs(kernel(s, q1, q2) - np.conj(kernel(s, q2, q1))) <= 1e-15
    assert kernel(s, q1, q1).real >= 0


def test_mixed_derivative_matches_finite_differences(circle2):
    q, h = 0.7, 1e-4
    expected = np.sum(circle2.weights * circle2.indices[:, 0] ** 2) / (2 * math.pi)
    assert kernel_mixed_derivative(circle2, q) == pytest.approx(expected, rel=1e-13)
    fd = (kernel(circle2, q + h, q + h) - kernel(circle2, q + h, q - h)
          - kernel(circle2, q - h, q + h) + kernel(circle2, q - h, q - h)) / (4 * h * h)
    assert fd.real == pytest.approx(expected, rel=1e-6)


def test_rho0_and_single_mode_kernels():
    _, rho0 = build_custom_model([(0, 1.0)], eigenfunctions="circle")
    q = np.linspace(0, 6, 5)
    np.testing.assert_allclose(kernel(rho0, q, q[::-1]), 1 / (2 * math.pi))
    np.testing.assert_array_equal(kernel_mixed_derivative(rho0, q), 0.0)
    _, one = build_custom_model([(1, 1.0)], eigenfunctions="circle")
    assert kernel_mixed_derivative(one, 0.4) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
