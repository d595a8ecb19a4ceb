import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langevin_lab.problems import (
    LinearRegressionProblem,
    MatrixFactorizationProblem,
    OnlinePCAProblem,
    QuadraticSaddle,
    ScalarQuadratic,
    initial_point,
    make_spectrum,
    problem_from_config,
)

SUITE = {
    "scalar": {"name": "scalar_quadratic"},
    "saddle": {"name": "quadratic_saddle", "H": [[-0.5, 0.2], [0.2, 0.5]], "noise_cov": 0.3},
    "linreg": {"name": "linear_regression", "dim": 6, "spectrum": "decay(1)", "rotate": True, "seed": 1},
    "mf": {"name": "matrix_factorization", "m": 4, "r": 2, "spectrum": "decay(1)", "seed": 2},
    "pca": {"name": "online_pca", "m": 4, "r": 2, "spectrum": "decay(1)", "seed": 3},
}


def fd_grad(p, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (p.loss(x + e) - p.loss(x - e)) / (2 * h)
    return g


def fd_hessian(p, x, h=1e-5):
    H = np.zeros((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        H[:, i] = (p.grad(x + e) - p.grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


@pytest.mark.parametrize("key", SUITE)
def test_gradient_and_hessian_match_finite_differences(key, rng):
    p = problem_from_config(SUITE[key])
    for _ in range(10):
        x = p.center + rng.standard_normal(p.dim)
        assert rel_err(p.grad(x), fd_grad(p, x)) < 1e-4
        assert rel_err(p.hessian(x), fd_hessian(p, x)) < 1e-3


@pytest.mark.parametrize("key", SUITE)
def test_batched_calls_match_single(key, rng):
    p = problem_from_config(SUITE[key])
    X = rng.standard_normal((3, 2, p.dim))
    assert p.loss(X).shape == (3, 2)
    assert p.grad(X).shape == (3, 2, p.dim)
    assert p.hessian(X).shape == (3, 2, p.dim, p.dim)
    assert np.allclose(p.grad(X)[1, 0], p.grad(X[1, 0]))
    assert p.loss(X[0, 0]) == pytest.approx(float(p.loss(X)[0, 0]))
    assert isinstance(p.loss(X[0, 0]), float)


@pytest.mark.parametrize("key", ["saddle", "linreg", "mf", "pca"])
def test_sample_gradient_is_unbiased(key, rng):
    p = problem_from_config(SUITE[key])
    x = p.center + 0.5 * rng.standard_normal(p.dim)
    k = 100_000
    Z = rng.standard_normal((k, p.noise_size))
    xi = p.grad_from_normals(np.broadcast_to(x, (k, p.dim)), Z) - p.grad(x)
    se = xi.std(axis=0) / np.sqrt(k)
    assert np.all(np.abs(xi.mean(axis=0)) <= 4 * se + 1e-12)


def test_sample_grad_shapes(rng):
    p = problem_from_config(SUITE["mf"])
    X = rng.standard_normal((5, p.dim))
    assert p.sample_grad(X, rng).shape == (5, p.dim)
    assert np.array_equal(ScalarQuadratic().sample_grad(np.ones(1), rng), np.ones(1))


def test_wrong_dimension_rejected():
    p = problem_from_config(SUITE["linreg"])
    with pytest.raises(ValueError):
        p.grad(np.zeros(p.dim + 1))
    with pytest.raises(ValueError):
        p.grad_from_normals(np.zeros(p.dim), np.zeros(p.noise_size + 1))


def test_linear_regression_formulas():
    A = np.diag([1.0, 2.0])
    p = LinearRegressionProblem(A, [1.0, -1.0])
    x = np.array([2.0, 0.0])
    assert p.loss(x) == pytest.approx(0.5 * (1 + 2) + 0.5)
    assert p.grad(x) == pytest.approx([1.0, 2.0])
    assert p.loss(p.center) == pytest.approx(0.5)


def test_matrix_factorization_minimizer_and_scale():
    M = np.diag([3.0, 1.0, 0.0])
    p = MatrixFactorizationProblem(M, 2)
    x = p.minimizing_factor()
    assert p.loss(x) == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(p.grad(x)) < 1e-12
    X = np.ones((3, 2))
    D = X @ X.T - M
    assert p.loss(p.flatten(X)) == pytest.approx(0.5 * np.sum(D * D))
    assert np.allclose(p.unflatten(p.flatten(X)), X)


def test_online_pca_offset_matches_monte_carlo(rng):
    M = np.diag([2.0, 1.0, 0.5])
    p = OnlinePCAProblem(M, 1)
    v = rng.standard_normal((200_000, 3)) @ np.sqrt(M)
    W = v[:, :, None] * v[:, None, :] - M
    mc = 0.5 * np.mean(np.sum(W * W, axis=(1, 2)))
    assert p.offset == pytest.approx(mc, rel=0.02)


def test_quadratic_saddle_checks():
    with pytest.raises(ValueError):
        QuadraticSaddle([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        QuadraticSaddle(np.eye(2), noise_cov=-np.eye(2))
    p = QuadraticSaddle(np.diag([-1.0, 2.0]))
    assert p.noise_size == 0
    assert np.array_equal(p.hessian(np.zeros(2)), np.diag([-2.0, 4.0]))


def test_make_spectrum():
    assert make_spectrum("flat", 3) == pytest.approx([1, 1, 1])
    assert make_spectrum("decay(2)", 3) == pytest.approx([1, 0.25, 1 / 9])
    with pytest.raises(ValueError):
        make_spectrum("steep", 3)
    with pytest.raises(ValueError):
        make_spectrum([1.0, -1.0], 2)


def test_config_is_deterministic():
    a = problem_from_config(SUITE["linreg"])
    b = problem_from_config(SUITE["linreg"])
    assert np.array_equal(a.A, b.A) and np.array_equal(a.x_star, b.x_star)
    with pytest.raises(ValueError):
        problem_from_config({"name": "rosenbrock"})


def test_initial_point_specs(rng):
    p = problem_from_config({"name": "linear_regression", "dim": 4, "x_star": "zeros"})
    assert initial_point(p, {"offset": "harmonic"}) == pytest.approx([1, 1 / 2, 1 / 3, 1 / 4])
    assert np.linalg.norm(initial_point(p, {"offset": "unit", "scale": 0.75})) == pytest.approx(0.75)
    assert initial_point(p, [1, 2, 3, 4]) == pytest.approx([1, 2, 3, 4])
    with pytest.raises(ValueError):
        initial_point(p, [1, 2])


@settings(max_examples=25)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**31))
def test_factor_hessian_is_symmetric_and_matches_hvp(m, r, seed):
    r = min(r, m)
    rng = np.random.default_rng(seed)
    p = MatrixFactorizationProblem(np.diag(rng.uniform(0, 2, m)), r)
    x = rng.standard_normal(p.dim)
    z = rng.standard_normal(p.dim)
    H = p.hessian(x)
    assert np.allclose(H, H.T)
    assert np.allclose(H @ z, p.hvp(x, z))
