import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gap_thermal.diagnostics import sobolev_sum
from gap_thermal.errors import InvalidParameterError, StripDivergenceError, UnsupportedModelError
from gap_thermal.fields import (energy_from_fourier, evaluate, evaluate_complex, evaluate_derivative,
                                fourier_from_energy, lift_to_product, product_spectrum,
                                sector_embedding, symmetrize)
from gap_thermal.models import build_box_model, build_custom_model, thermalize
from gap_thermal.sampler import WaveFunction, sample_g, sample_gap


@pytest.fixture(scope="module")
def box2():
    return thermalize(build_box_model(2, 1), 1.0)


def test_parseval_on_circle(circle2):
    psi = sample_g(circle2, 1)
    n = 512
    q = np.arange(n) * 2 * math.pi / n
    l2 = np.sum(np.abs(evaluate(psi, q)) ** 2) * 2 * math.pi / n
    assert l2 == pytest.approx(psi.norm_sq()[()], rel=1e-12)


def test_scalar_and_batch_shapes(circle2):
    psi = sample_g(circle2, 2, size=3)
    assert evaluate(psi, np.array([0.1, 0.2])).shape == (3, 2)
    assert evaluate(psi[0], 0.1).shape == ()
    assert evaluate(psi[0], 0.1) == pytest.approx(evaluate(psi, np.array([0.1]))[0, 0])


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_circle_derivatives_match_finite_differences(circle2, ell):
    psi = sample_g(circle2, 4)
    q, h = 1.3, 1e-3
    lower = lambda x: evaluate_derivative(psi, x, ell - 1)
    fd = (lower(q + h) - lower(q - h)) / (2 * h)
    d = evaluate_derivative(psi, q, ell)
    assert abs(fd - d) <= 1e-6 * max(1.0, abs(d)) * 10 ** (ell - 1)


def test_box_derivative_direction(box2):
    psi = sample_g(box2, 5)
    q, h = np.array([0.9, 2.1]), 1e-4
    e = np.array([0.0, 1.0])
    fd = (evaluate(psi, q + h * e) - evaluate(psi, q - h * e)) / (2 * h)
    assert evaluate_derivative(psi, q, 1, direction=(0, 1)) == pytest.approx(fd, abs=1e-6)
    with pytest.raises(InvalidParameterError):
        evaluate_derivative(psi, q, 2, direction=(0, 1))
    with pytest.raises(InvalidParameterError):
        evaluate_derivative(psi, q, 1)


def test_box_vanishes_on_walls(box2):
    psi = sample_g(box2, 6)
    walls = np.array([[0.0, 1.0], [math.pi, 2.0], [0.5, 0.0], [1.5, math.pi]])
    assert np.max(np.abs(evaluate(psi, walls))) < 1e-14


def test_box_rejects_points_outside(box2):
    psi = sample_g(box2, 6)
    with pytest.raises(InvalidParameterError):
        evaluate(psi, np.array([4.0, 1.0]))


def test_custom_table_has_no_derivatives():
    fns = [lambda q: np.ones_like(q) / math.sqrt(2 * math.pi)]
    _, s = build_custom_model([("a", 1.0)], eigenfunctions=fns)
    with pytest.raises(UnsupportedModelError):
        evaluate_derivative(WaveFunction(s, [1.0]), 0.1)


def test_complex_continuation_agrees_with_real_axis(circle2):
    psi = sample_gap(circle2, 7)
    v, _ = evaluate_complex(psi, np.array([0.4 + 0j]))
    assert v[0] == pytest.approx(evaluate(psi, 0.4), abs=1e-15)


def test_cauchy_riemann(circle2):
    psi = sample_gap(circle2, 8)
    z, h = 1.0 + 0.05j, 1e-5
    f = lambda w: evaluate_complex(psi, np.array([w]))[0][0]
    dx = (f(z + h) - f(z - h)) / (2 * h)
    dy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    assert abs(dy - 1j * dx) < 1e-5 * abs(dx)


def test_strip_divergence_raises(circle2):
    psi = sample_gap(circle2, 8)
    with pytest.raises(StripDivergenceError) as err:
        evaluate_complex(psi, np.array([1.0 + 5.0j]))
    assert np.max(err.value.tail_estimate) > 1e-6


def test_fourier_round_trip_and_pointwise(box2):
    psi = sample_g(box2, 9)
    img = fourier_from_energy(psi)
    back = energy_from_fourier(img, box2)
    np.testing.assert_allclose(back.coefficients, psi.coefficients, atol=1e-15)
    q = np.array([[0.4, 2.2], [1.7, 0.3]])
    np.testing.assert_allclose(img.evaluate(q), evaluate(psi, q), atol=1e-12)
    # odd extension: each energy mode spreads over 2^D lattice points of equal modulus
    for ell in (0, 1, 2):
        w = np.sum(img.ks.astype(float) ** 2, axis=1) ** ell
        assert img.weighted_sum(w) == pytest.approx(4 * sobolev_sum(psi, ell), rel=1e-12)


def test_fourier_of_sector_goes_through_product():
    s = thermalize(build_box_model(2, 1, symmetry="antisymmetric"), 1.0)
    psi = sample_g(s, 10)
    img = fourier_from_energy(psi)
    q = np.array([[0.4, 2.2]])
    np.testing.assert_allclose(img.evaluate(q), evaluate(psi, q), atol=1e-12)


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("sector", ["symmetric", "antisymmetric"])
def test_projector_idempotent(N, sector):
    s = thermalize(build_box_model(N, 1), 1.5)
    psi = sample_g(s, 11, size=4)
    once = symmetrize(psi, sector)
    twice = symmetrize(once, sector)
    assert np.max(np.abs(twice.coefficients - once.coefficients)) < 1e-15


def test_projectors_are_complementary_for_two_particles(box2):
    psi = sample_g(box2, 12)
    total = symmetrize(psi, "symmetric").coefficients + symmetrize(psi, "antisymmetric").coefficients
    np.testing.assert_allclose(total, psi.coefficients, atol=1e-15)


def test_pauli_exclusion(box2):
    psi = sample_g(box2, 13)
    anti = symmetrize(psi, "antisymmetric")
    pos = box2.position()
    for k in range(1, 5):
        assert anti.coefficients[pos[(k, k)]] == 0
    q = np.array([[1.1, 1.1], [2.0, 2.0]])
    assert np.max(np.abs(evaluate(anti, q))) < 1e-14


def test_single_particle_projection_is_identity():
    s = thermalize(build_box_model(1, 2), 1.0)
    psi = sample_g(s, 14)
    np.testing.assert_array_equal(symmetrize(psi, "antisymmetric").coefficients, psi.coefficients)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["symmetric", "antisymmetric"]), st.integers(0, 10**6))
def test_sector_embedding_is_isometry_onto_projector_range(sector, seed):
    sec = thermalize(build_box_model(2, 1, symmetry=sector), 1.0)
    prod = product_spectrum(sec)
    U = sector_embedding(sec, prod)
    np.testing.assert_allclose(U.T @ U, np.eye(sec.size), atol=1e-14)
    psi = sample_g(sec, seed)
    lifted = lift_to_product(psi, prod)
    np.testing.assert_allclose(symmetrize(lifted, sector).coefficients, lifted.coefficients, atol=1e-14)
    q = np.array([[0.7, 2.4]])
    np.testing.assert_allclose(evaluate(lifted, q), evaluate(psi, q), atol=1e-13)


def test_product_mode_set_closed_under_swaps():
    s = thermalize(build_box_model(2, 1), 1.0)
    assert all(tuple(n[::-1]) in s.position() for n in s.indices)
