"""Objective suite with population loss, gradient, Hessian and a stochastic gradient.

Every method accepts either a single point of shape (d,) or a stack of points
of shape (..., d) and broadcasts over the leading axes.  Matrix-valued
parameters X of shape (m, r) are flattened column-major into vectors of
length m*r, so the steppers never see matrix shapes.

Stochastic gradients are generated from standard normal draws.  Each problem
declares how many normals one draw consumes (``noise_size``) and maps them to
a gradient sample with ``grad_from_normals``; ``sample_grad`` is the thin
wrapper that pulls the normals from a generator.
"""

from __future__ import annotations

import math
import re

import numpy as np


class Problem:
    """Interface shared by all objectives."""

    dim: int
    noise_size: int = 0
    minimizer: np.ndarray | None = None
    name: str = "problem"

    # subclasses implement the batched private versions
    def _loss(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad_from_normals(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self._grad(x)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(f"{self.name}: expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    def loss(self, x):
        v = self._loss(self._check(x))
        return float(v) if np.ndim(v) == 0 else v

    def grad(self, x) -> np.ndarray:
        return self._grad(self._check(x))

    def hessian(self, x) -> np.ndarray:
        return self._hessian(self._check(x))

    def grad_from_normals(self, x, z) -> np.ndarray:
        x = self._check(x)
        z = np.asarray(z, dtype=np.float64)
        if self.noise_size and z.shape[-1] != self.noise_size:
            raise ValueError(f"{self.name}: expected {self.noise_size} normals per draw, got {z.shape}")
        return self._grad_from_normals(x, z)

    def sample_grad(self, x, rng: np.random.Generator) -> np.ndarray:
        x = self._check(x)
        if self.noise_size == 0:
            return self._grad(x)
        z = rng.standard_normal(x.shape[:-1] + (self.noise_size,))
        return self._grad_from_normals(x, z)

    @property
    def center(self) -> np.ndarray:
        """Natural centre of the parameter space (x* when known, else 0)."""
        if self.minimizer is not None:
            return self.minimizer
        return np.zeros(self.dim)

    def grad_norm_bound(self, radius: float) -> float:
        """Upper bound on ||grad F(x)|| over ||x|| <= radius."""
        raise NotImplementedError(f"{self.name} has no gradient-norm bound")

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}


def _sym_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _check_symmetric(S: np.ndarray, what: str) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError(f"{what} must be symmetric")
    return 0.5 * (S + S.T)


class QuadraticSaddle(Problem):
    """F(x) = x^T H x, optionally with additive Gaussian gradient noise."""

    name = "quadratic_saddle"

    def __init__(self, H, noise_cov=None):
        self.H = _check_symmetric(H, "H")
        self.dim = self.H.shape[0]
        self.noise_cov = None
        self._noise_root = None
        if noise_cov is not None:
            cov = np.asarray(noise_cov, dtype=np.float64)
            if cov.ndim == 0:
                cov = float(cov) * np.eye(self.dim)
            cov = _check_symmetric(cov, "noise_cov")
            if cov.shape != self.H.shape:
                raise ValueError("noise_cov must match H")
            if np.linalg.eigvalsh(cov)[0] < -1e-12:
                raise ValueError("noise_cov must be positive semidefinite")
            self.noise_cov = cov
            self._noise_root = _sym_sqrt(cov)
            self.noise_size = self.dim

    def _loss(self, x):
        return np.einsum("...i,ij,...j->...", x, self.H, x)

    def _grad(self, x):
        return 2.0 * x @ self.H

    def _hessian(self, x):
        return np.broadcast_to(2.0 * self.H, x.shape[:-1] + self.H.shape).copy()

    def _grad_from_normals(self, x, z):
        return self._grad(x) + z @ self._noise_root

    def grad_norm_bound(self, radius):
        return 2.0 * np.linalg.norm(self.H, 2) * radius

    def describe(self):
        return {"name": self.name, "dim": self.dim, "H": self.H.tolist(),
                "noise_cov": None if self.noise_cov is None else self.noise_cov.tolist()}


class ScalarQuadratic(Problem):
    """F(x) = x**2 / 2 in one dimension with an exact (noiseless) gradient."""

    name = "scalar_quadratic"
    dim = 1

    def __init__(self):
        self.minimizer = np.zeros(1)

    def _loss(self, x):
        return 0.5 * x[..., 0] ** 2

    def _grad(self, x):
        return x.copy()

    def _hessian(self, x):
        return np.ones(x.shape[:-1] + (1, 1))

    def grad_norm_bound(self, radius):
        return float(radius)


class LinearRegressionProblem(Problem):
    """Streaming least squares with Gaussian design.

    F(x) = (x - x*)^T A (x - x*) / 2 + 1/2, and a single sample gives
    a (a^T x - b) with a ~ N(0, A) and b = a^T x* + eps, eps ~ N(0, 1).
    """

    name = "linear_regression"

    def __init__(self, A, x_star):
        self.A = _check_symmetric(A, "A")
        self.dim = self.A.shape[0]
        self.eigvals = np.linalg.eigvalsh(self.A)
        if self.eigvals[0] < -1e-12 * max(1.0, self.eigvals[-1]):
            raise ValueError("A must be positive semidefinite")
        self.x_star = np.asarray(x_star, dtype=np.float64).reshape(-1)
        if self.x_star.shape != (self.dim,):
            raise ValueError(f"x_star must have length {self.dim}")
        self.minimizer = self.x_star
        self._root = _sym_sqrt(self.A)
        self.noise_size = self.dim + 1

    def _loss(self, x):
        u = x - self.x_star
        return 0.5 * np.einsum("...i,ij,...j->...", u, self.A, u) + 0.5

    def _grad(self, x):
        return (x - self.x_star) @ self.A

    def _hessian(self, x):
        return np.broadcast_to(self.A, x.shape[:-1] + self.A.shape).copy()

    def _grad_from_normals(self, x, z):
        a = z[..., : self.dim] @ self._root
        resid = np.einsum("...i,...i->...", a, x - self.x_star) - z[..., self.dim]
        return a * resid[..., None]

    def grad_norm_bound(self, radius):
        return float(self.eigvals[-1] * (radius + np.linalg.norm(self.x_star)))

    def describe(self):
        return {"name": self.name, "dim": self.dim, "trace_A": float(self.eigvals.sum()),
                "lambda_max": float(self.eigvals[-1]), "lambda_min": float(self.eigvals[0])}


class _FactorProblem(Problem):
    """Shared algebra for s/2 * ||X X^T - M||_F^2 + offset over X in R^{m x r}."""

    scale = 1.0

    def __init__(self, M, r: int):
        self.M = _check_symmetric(M, "M")
        self.m = self.M.shape[0]
        self.r = int(r)
        if not 1 <= self.r <= self.m:
            raise ValueError(f"rank r must lie in [1, {self.m}], got {r}")
        self.M_eigvals = np.linalg.eigvalsh(self.M)
        if self.M_eigvals[0] < -1e-12 * max(1.0, self.M_eigvals[-1]):
            raise ValueError("M must be positive semidefinite")
        self.dim = self.m * self.r
        self.offset = 0.0

    def unflatten(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.swapaxes(x.reshape(x.shape[:-1] + (self.r, self.m)), -1, -2)

    def flatten(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (self.m * self.r,))

    def _residual(self, X):
        return X @ np.swapaxes(X, -1, -2) - self.M

    def _loss(self, x):
        D = self._residual(self.unflatten(x))
        return 0.5 * self.scale * np.einsum("...ij,...ij->...", D, D) + self.offset

    def _grad(self, x):
        X = self.unflatten(x)
        return self.flatten(2.0 * self.scale * self._residual(X) @ X)

    def hvp(self, x, z):
        """Hessian-vector product; z may carry extra leading axes."""
        X = self.unflatten(x)
        Z = self.unflatten(z)
        D = self._residual(X)
        XZt = X @ np.swapaxes(Z, -1, -2)
        S = XZt + np.swapaxes(XZt, -1, -2)
        return self.flatten(2.0 * self.scale * (S @ X + D @ Z))

    def _hessian(self, x):
        basis = np.eye(self.dim)
        H = self.hvp(x[..., None, :], basis)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def _factor_bound(self, radius):
        # ||(XX^T - M)X||_F <= (||X||_F^2 + ||M||_F) ||X||_F
        return 2.0 * self.scale * (radius**2 + np.linalg.norm(self.M)) * radius

    def grad_norm_bound(self, radius):
        return float(self._factor_bound(radius))

    def minimizing_factor(self) -> np.ndarray:
        """A flattened X with X X^T equal to the best rank-r approximation of M."""
        w, V = np.linalg.eigh(self.M)
        idx = np.argsort(w)[::-1][: self.r]
        X = V[:, idx] * np.sqrt(np.clip(w[idx], 0.0, None))
        return self.flatten(X)

    def describe(self):
        return {"name": self.name, "dim": self.dim, "m": self.m, "r": self.r,
                "trace_M": float(self.M_eigvals.sum()), "lambda_max_M": float(self.M_eigvals[-1]),
                "offset": self.offset}


class MatrixFactorizationProblem(_FactorProblem):
    """Online matrix factorization with F(X) = ||X X^T - M||_F^2 / 2.

    A sample uses omega with i.i.d. N(0, 1) entries and returns
    <X X^T - M, omega> (omega + omega^T) X, whose mean is grad F = 2 (XX^T - M) X.
    The factor 1/2 in F is the normalisation under which these two gradient
    formulas and the Hessian quadratic form are mutually consistent.
    """

    name = "matrix_factorization"
    scale = 1.0

    def __init__(self, M, r: int):
        super().__init__(M, r)
        self.noise_size = self.m * self.m

    def _grad_from_normals(self, x, z):
        X = self.unflatten(x)
        D = self._residual(X)
        W = z.reshape(z.shape[:-1] + (self.m, self.m))
        c = np.einsum("...ij,...ij->...", D, W)
        G = (self.scale * c)[..., None, None] * ((W + np.swapaxes(W, -1, -2)) @ X)
        return self.flatten(G)


class OnlinePCAProblem(_FactorProblem):
    """Online PCA: f(X, x) = ||X X^T - x x^T||_F^2 / 2 with x ~ N(0, M).

    F(X) = ||X X^T - M||_F^2 / 2 + C with C = E||x x^T - M||_F^2 / 2, which for a
    Gaussian equals ((tr M)^2 + ||M||_F^2) / 2.
    """

    name = "online_pca"
    scale = 1.0

    def __init__(self, M, r: int):
        super().__init__(M, r)
        self.noise_size = self.m
        self._root = _sym_sqrt(self.M)
        self.offset = 0.5 * (float(np.trace(self.M)) ** 2 + float(np.sum(self.M * self.M)))

    def _grad_from_normals(self, x, z):
        X = self.unflatten(x)
        v = z @ self._root
        W = v[..., :, None] * v[..., None, :] - self.M
        return self.flatten(2.0 * self.scale * (self._residual(X) - W) @ X)


# construction from configuration ------------------------------------------------

_DECAY = re.compile(r"^decay\(\s*([-+0-9.eE]+)\s*\)$")


def make_spectrum(spec, k: int) -> np.ndarray:
    """Eigenvalues from "flat", "decay(beta)" (lambda_j = j**-beta) or a list."""
    if isinstance(spec, str):
        if spec == "flat":
            return np.ones(k)
        m = _DECAY.match(spec.strip())
        if m:
            beta = float(m.group(1))
            return np.arange(1, k + 1, dtype=np.float64) ** (-beta)
        raise ValueError(f"unknown spectrum {spec!r}")
    vals = np.asarray(spec, dtype=np.float64).reshape(-1)
    if vals.size != k:
        raise ValueError(f"spectrum list has {vals.size} entries, expected {k}")
    if np.any(vals < 0):
        raise ValueError("spectrum entries must be nonnegative")
    return vals


def random_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))


def _psd_from_spectrum(vals: np.ndarray, size: int, rotate: bool, rng) -> np.ndarray:
    D = np.zeros(size)
    D[: vals.size] = vals
    if not rotate:
        return np.diag(D)
    Q = random_orthogonal(size, rng)
    S = (Q * D) @ Q.T
    return 0.5 * (S + S.T)


def problem_from_config(cfg: dict) -> Problem:
    """Build a problem from a plain mapping (see README for the keys)."""
    name = cfg["name"]
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    if name == "scalar_quadratic":
        return ScalarQuadratic()
    if name == "quadratic_saddle":
        H = np.asarray(cfg["H"], dtype=np.float64)
        if H.ndim == 1:
            H = np.diag(H)
        return QuadraticSaddle(H, cfg.get("noise_cov"))
    if name == "linear_regression":
        d = int(cfg["dim"])
        vals = make_spectrum(cfg.get("spectrum", "flat"), d)
        A = _psd_from_spectrum(vals, d, bool(cfg.get("rotate", False)), rng)
        xs = cfg.get("x_star", "gaussian")
        if xs == "zeros":
            x_star = np.zeros(d)
        elif xs == "gaussian":
            x_star = rng.standard_normal(d)
        else:
            x_star = np.asarray(xs, dtype=np.float64)
        return LinearRegressionProblem(A, x_star)
    if name in ("matrix_factorization", "online_pca"):
        m = int(cfg["m"])
        r = int(cfg.get("r", 1))
        spec = cfg.get("spectrum", "flat")
        k = int(cfg.get("rank_M", r if name == "matrix_factorization" else m))
        vals = make_spectrum(spec, k)
        M = _psd_from_spectrum(vals, m, bool(cfg.get("rotate", True)), rng)
        cls = MatrixFactorizationProblem if name == "matrix_factorization" else OnlinePCAProblem
        return cls(M, r)
    raise ValueError(f"unknown problem {name!r}")


def initial_point(problem: Problem, spec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Resolve an initial iterate.

    ``spec`` is an explicit list, or a mapping with ``offset`` in
    {"zeros", "ones", "harmonic", "unit", "gaussian"} (added to the problem
    centre) and an optional ``scale``.
    """
    if spec is None:
        return problem.center.copy()
    if not isinstance(spec, dict):
        x0 = np.asarray(spec, dtype=np.float64).reshape(-1)
        if x0.shape != (problem.dim,):
            raise ValueError(f"x0 must have length {problem.dim}")
        return x0
    d = problem.dim
    kind = spec.get("offset", "zeros")
    scale = float(spec.get("scale", 1.0))
    if kind == "zeros":
        u = np.zeros(d)
    elif kind == "ones":
        u = np.ones(d)
    elif kind == "harmonic":
        u = 1.0 / np.arange(1, d + 1)
    elif kind == "unit":
        u = np.ones(d) / math.sqrt(d)
    elif kind == "gaussian":
        rng = rng if rng is not None else np.random.default_rng(int(spec.get("seed", 0)))
        u = rng.standard_normal(d)
    else:
        raise ValueError(f"unknown x0 offset {kind!r}")
    return problem.center + scale * u
