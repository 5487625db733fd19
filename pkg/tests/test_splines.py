import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    dense_roughness_matrix,
    dense_smoother,
    natural_spline,
    quadrature_roughness,
    random_knots,
)
from paleoconsensus.exceptions import InvalidInputError
from paleoconsensus.splines import (
    Smoother,
    build_derivative_matrix,
    build_roughness_matrix,
    derivative,
    effective_dof,
    interpolate,
    lambda_for_edf,
    roughness,
    roughness_at,
    second_derivatives,
    smooth,
)

TOY = np.array([0.0, 1.0, 2.0])
BUMP = np.array([0.0, 1.0, 0.0])


@st.composite
def knot_grids(draw, min_n=4, max_n=30):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_knots(rng, n), rng


# roughness matrix


def test_toy_roughness_values():
    K = build_roughness_matrix(TOY)
    assert roughness(np.ones(3), K) == pytest.approx(0.0, abs=1e-14)
    assert roughness(np.array([0.0, 5.0, 10.0]), K) == pytest.approx(0.0, abs=1e-12)
    assert roughness(BUMP, K) == pytest.approx(6.0, rel=1e-12)
    assert quadrature_roughness(TOY, BUMP) == pytest.approx(6.0, rel=1e-10)


def test_roughness_matrix_matches_dense_gram():
    rng = np.random.default_rng(1)
    for n in (3, 4, 7, 25):
        knots = random_knots(rng, n)
        K = build_roughness_matrix(knots).K
        Kref = dense_roughness_matrix(knots)
        assert np.allclose(K, Kref, rtol=1e-9, atol=1e-12 * np.abs(Kref).max())


@pytest.mark.parametrize("knots", [[0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 2.0, 1.0], [0, np.nan, 2]])
def test_roughness_matrix_rejects_bad_knots(knots):
    with pytest.raises(InvalidInputError):
        build_roughness_matrix(knots)


def test_roughness_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        roughness(np.ones(4), build_roughness_matrix(TOY))


@settings(max_examples=30, deadline=None)
@given(knot_grids(4, 50))
def test_roughness_matrix_structure(grid):
    knots, rng = grid
    K = build_roughness_matrix(knots).K
    scale = np.abs(K).max()
    assert np.allclose(K, K.T, atol=1e-12 * scale)
    eig = np.linalg.eigvalsh(K)
    assert eig.min() > -1e-8 * eig.max()
    assert np.sum(eig < 1e-8 * eig.max()) == 2
    line = 3.0 - 0.7 * knots
    assert np.allclose(K @ line, 0.0, atol=1e-8 * scale * np.abs(line).max())


@settings(max_examples=20, deadline=None)
@given(knot_grids(4, 30))
def test_roughness_matches_quadrature(grid):
    knots, rng = grid
    mu = rng.standard_normal(knots.size)
    K = build_roughness_matrix(knots)
    ref = quadrature_roughness(knots, mu)
    assert roughness(mu, K) == pytest.approx(ref, rel=1e-6)
    assert roughness_at(knots, mu) == pytest.approx(ref, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(knot_grids(3, 20), st.floats(-5, 5))
def test_roughness_homogeneity(grid, c):
    knots, rng = grid
    mu = rng.standard_normal(knots.size)
    K = build_roughness_matrix(knots)
    assert roughness(c * mu, K) == pytest.approx(c * c * roughness(mu, K), rel=1e-9, abs=1e-15)


def test_second_derivatives_match_scipy():
    rng = np.random.default_rng(2)
    knots = random_knots(rng, 12)
    mu = rng.standard_normal(12)
    ref = natural_spline(knots, mu).derivative(2)(knots)
    assert np.allclose(second_derivatives(knots, mu), ref, atol=1e-12)


# smoother


def test_smoother_toy():
    v = smooth(BUMP, 1.0, build_roughness_matrix(TOY))
    assert np.allclose(v, dense_smoother(BUMP, 1.0, dense_roughness_matrix(TOY)), atol=1e-12)
    assert np.allclose(v, [0.3, 0.4, 0.3], atol=1e-12)


def test_smoother_identity_and_linear():
    rng = np.random.default_rng(3)
    knots = random_knots(rng, 15)
    K = build_roughness_matrix(knots)
    mu = rng.standard_normal(15)
    assert np.array_equal(smooth(mu, 0.0, K), mu)
    line = 2.0 + 0.1 * knots
    for lam in (1e-3, 1.0, 1e6):
        assert np.allclose(smooth(line, lam, K), line, atol=1e-9)


def test_smoother_rejects_negative_lambda():
    with pytest.raises(InvalidInputError):
        smooth(BUMP, -1.0, build_roughness_matrix(TOY))


def test_smoother_matches_dense_solve():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = rng.integers(3, 30)
        knots = random_knots(rng, n)
        mu = rng.standard_normal(n)
        lam = 10 ** rng.uniform(-2, 6)
        ref = dense_smoother(mu, lam, dense_roughness_matrix(knots))
        assert np.allclose(smooth(mu, lam, build_roughness_matrix(knots)), ref, atol=1e-8)


def test_smoother_accepts_matrices_of_columns():
    rng = np.random.default_rng(5)
    knots = random_knots(rng, 10)
    M = rng.standard_normal((10, 4))
    S = Smoother(knots, 7.0)
    cols = np.column_stack([S(M[:, i]) for i in range(4)])
    assert np.allclose(S(M), cols, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(knot_grids(3, 30), st.floats(0, 1e8))
def test_smoother_reduces_roughness(grid, lam):
    knots, rng = grid
    K = build_roughness_matrix(knots)
    mu = rng.standard_normal(knots.size)
    assert roughness(smooth(mu, lam, K), K) <= roughness(mu, K) * (1 + 1e-9) + 1e-15


@settings(max_examples=20, deadline=None)
@given(knot_grids(4, 25), st.floats(1e-3, 1e6))
def test_smoother_spectrum(grid, lam):
    knots, rng = grid
    n = knots.size
    S = Smoother(knots, lam)(np.eye(n))
    eig = np.sort(np.linalg.eigvalsh(0.5 * (S + S.T)))
    assert eig[0] > 0
    assert eig[-1] <= 1 + 1e-10
    assert np.allclose(eig[-2:], 1.0, atol=1e-8)


def test_large_lambda_gives_least_squares_slope():
    rng = np.random.default_rng(6)
    knots = random_knots(rng, 20)
    mu = rng.standard_normal(20)
    lam = 1e8 * (knots[-1] - knots[0]) ** 3
    v = smooth(mu, lam, build_roughness_matrix(knots))
    s = np.linspace(knots[0], knots[-1], 50)
    slope = build_derivative_matrix(knots, s).D @ v
    ls_slope = np.polyfit(knots, mu, 1)[0]
    assert np.allclose(slope, ls_slope, atol=1e-4)


def test_effective_dof_limits():
    rng = np.random.default_rng(7)
    knots = random_knots(rng, 12)
    K = build_roughness_matrix(knots)
    assert effective_dof(K, 0.0) == pytest.approx(12)
    assert effective_dof(K, 1e15) == pytest.approx(2, abs=1e-3)
    lam = lambda_for_edf(K, 4.0)
    assert effective_dof(K, lam) == pytest.approx(4.0, rel=1e-8)
    ref = np.trace(np.linalg.inv(np.eye(12) + lam * K.K))
    assert ref == pytest.approx(4.0, rel=1e-8)


# derivative and interpolation


def test_derivative_matrix_linear_and_toy():
    rng = np.random.default_rng(8)
    knots = random_knots(rng, 9)
    s = np.linspace(knots[0], knots[-1], 33)
    D = build_derivative_matrix(knots, s).D
    assert np.allclose(D @ (1.0 + 2.0 * knots), 2.0, atol=1e-10)
    assert derivative(TOY, BUMP, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_derivative_matrix_matches_scipy_and_finite_differences():
    rng = np.random.default_rng(9)
    knots = random_knots(rng, 11)
    mu = rng.standard_normal(11)
    cs = natural_spline(knots, mu)
    s = np.sort(rng.uniform(knots[0], knots[-1], 40))
    D = build_derivative_matrix(knots, s).D
    assert np.allclose(D @ mu, cs.derivative()(s), atol=1e-11)
    inner = knots[1:-1]
    h = 1e-5
    fd = (interpolate(knots, mu, inner + h) - interpolate(knots, mu, inner - h)) / (2 * h)
    assert np.allclose(build_derivative_matrix(knots, inner).D @ mu, fd, atol=1e-6)


@pytest.mark.parametrize("s", [[-1.0, 0.5], [0.5, 3.0], [1.0, 0.5]])
def test_derivative_matrix_rejects_bad_grid(s):
    with pytest.raises(InvalidInputError):
        build_derivative_matrix(TOY, s)


def test_interpolate_properties():
    rng = np.random.default_rng(10)
    knots = random_knots(rng, 8)
    mu = rng.standard_normal(8)
    assert np.allclose(interpolate(knots, mu, knots), mu, atol=1e-13)
    assert interpolate(knots, 1 - 3 * knots, knots[2] + 0.3) == pytest.approx(1 - 3 * (knots[2] + 0.3))
    # tridiagonal reconstruction for the bump: gamma_1 = -3, so at 0.5 the value is 0.5 + (-3)(0.125-0.5)/6
    assert interpolate(TOY, BUMP, 0.5) == pytest.approx(0.6875, abs=1e-12)
    assert interpolate(TOY, BUMP, 0.5) == pytest.approx(float(natural_spline(TOY, BUMP)(0.5)), abs=1e-12)
    with pytest.raises(InvalidInputError):
        interpolate(TOY, BUMP, 2.5)
