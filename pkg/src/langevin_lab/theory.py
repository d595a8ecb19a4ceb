"""Closed-form hyper-parameter prescriptions, iteration bounds and validators.

Covers the FOSP and SOSP iteration bounds, the saddle-escape window D5, the
ergodicity constant chain, the Ornstein-Uhlenbeck reference formulas for a
quadratic saddle, exact variance recursions for the scalar chain and a
numerical check of the matrix-product estimates used in the escape analysis.

Large bounds are evaluated in log space; every result carries the base-10
logarithm so astronomically large values remain inspectable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from langevin_lab.schedule import StepSchedule

_LOG_OVERFLOW = 700.0


def _exp_or_inf(log_value: float) -> float:
    return math.exp(log_value) if log_value < _LOG_OVERFLOW else math.inf


def _ceil_or_inf(value: float):
    # values computed through logs land a few ulps off exact integers
    if not math.isfinite(value):
        return math.inf
    if value >= 2.0**53:
        return float(value)  # already integral; keeps JSON output readable
    r = round(value)
    if abs(value - r) <= 1e-9 * max(1.0, abs(value)):
        return int(r)
    return math.ceil(value)


def _require_positive(**kw):
    for k, v in kw.items():
        if v is None or not (v > 0) or not math.isfinite(v):
            raise ValueError(f"{k} must be positive and finite, got {v}")


def _require_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


# first order stationary points ----------------------------------------------------

@dataclass(frozen=True)
class FospBoundInputs:
    F0: float
    C2: float
    B1: float
    eta0: float
    alpha: float
    eps: float
    rho: float
    d: int
    C_alpha: float = 1.0


@dataclass(frozen=True)
class FospBound:
    delta0_max: float
    eta0_max: float
    N: float
    log10_N: float
    regime: str

    def to_dict(self):
        return asdict(self)


def fosp_bound(inp: FospBoundInputs) -> FospBound:
    """Noise cap, step cap and iteration count N for hitting an eps-FOSP w.p. 1 - rho."""
    _require_alpha(inp.alpha)
    _require_positive(F0=inp.F0, C2=inp.C2, B1=inp.B1, eta0=inp.eta0, eps=inp.eps, d=inp.d, C_alpha=inp.C_alpha)
    if not 0.0 < inp.rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {inp.rho}")
    eps2 = inp.eps**2
    delta0_max = inp.eps * math.sqrt(inp.rho) / (2.0 * math.sqrt(3.0 * inp.d * inp.C2))
    eta0_max = 1.0 / (6.0 * inp.C2)
    a = inp.alpha
    if a == 0.0:
        eta0_max = min(eta0_max, eps2 * inp.rho / (24.0 * inp.B1 * inp.C2))
        logN = math.log(8.0 * inp.F0) - math.log(eps2 * inp.rho * inp.eta0)
        regime = "alpha=0"
    elif a >= 0.5:
        base = (inp.F0 + inp.B1 * inp.C2 * inp.eta0**2) / (inp.rho * inp.eta0 * eps2)
        logN = math.log(inp.C_alpha) + math.log(base) / (1.0 - a)
        regime = "alpha>=1/2"
    else:
        t1 = math.log(inp.F0 / (inp.rho * inp.eta0 * eps2)) / (1.0 - a)
        t2 = math.log(inp.B1 * inp.C2 * inp.eta0 / (inp.rho * eps2)) / a
        logN = math.log(inp.C_alpha) + max(t1, t2)
        regime = "0<alpha<1/2"
    N = _ceil_or_inf(_exp_or_inf(logN))
    return FospBound(delta0_max, eta0_max, N, logN / math.log(10.0), regime)


# saddle escape --------------------------------------------------------------------

class DegenerateWindowError(ValueError):
    pass


def escape_window(lambda_H: float, D4: float) -> float:
    """D5 = (2 / lambda_H) log((16 D4 + 40) / lambda_H)."""
    if not lambda_H > 0:
        raise ValueError(f"lambda_H must be positive, got {lambda_H}")
    arg = (16.0 * D4 + 40.0) / lambda_H
    if not arg > 1.0:
        raise DegenerateWindowError(f"degenerate escape window: (16 D4 + 40) / lambda_H = {arg:g} <= 1")
    return 2.0 / lambda_H * math.log(arg)


# second order stationary points ---------------------------------------------------

@dataclass(frozen=True)
class SospBoundInputs:
    C0: float
    C3: float
    D4: float
    B2: float
    lambda_eps: float
    q: float
    eps: float
    rho: float
    d: int
    eta0: float | None = None
    alpha: float = 0.0
    C_alpha: float = 1.0
    C6_factor: float = 1.0


@dataclass(frozen=True)
class SospBound:
    Q: float
    C6: float
    delta0: float
    eta0_max: float
    eta0: float
    eps0: float
    N: float
    log10_delta0: float
    log10_eta0_max: float
    log10_eps0: float
    log10_N: float

    def to_dict(self):
        return asdict(self)


def sosp_bound(inp: SospBoundInputs) -> SospBound:
    """Prescriptions and iteration count for hitting an (eps, lambda_eps)-SOSP.

    The order-of-magnitude constant C6 is taken as C6_factor * max{...}.
    When ``eta0`` is omitted the largest admissible step is used for N.
    """
    _require_alpha(inp.alpha)
    _require_positive(C0=inp.C0, C3=inp.C3, D4=inp.D4, B2=inp.B2, lambda_eps=inp.lambda_eps, q=inp.q,
                      eps=inp.eps, d=inp.d, C_alpha=inp.C_alpha, C6_factor=inp.C6_factor)
    if not 0.0 < inp.rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {inp.rho}")
    L = math.log((16.0 * inp.D4 + 40.0) / inp.lambda_eps)
    if not L > 0:
        raise ValueError("log((16 D4 + 40) / lambda_eps) must be positive")
    L3 = math.log((16.0 * inp.D4 + 40.0) / inp.C3)
    if not L3 > 0:
        raise ValueError("log((16 D4 + 40) / C3) must be positive")
    Q = 2.0 / inp.lambda_eps * L
    C6 = inp.C6_factor * max(inp.q**-1.5 * inp.C3, 1.0 / inp.lambda_eps, 1.0, Q)
    log_delta0 = -1.5 * math.log(inp.d) - 3.5 * math.log(C6) - (9.0 + 18.0 * inp.q) * L
    log_eta_a = 2.0 * log_delta0 - math.log(inp.B2)
    log_eta_b = math.log(L3 / inp.C3)
    log_eta_max = min(log_eta_a, log_eta_b)
    shrink = min(inp.lambda_eps, 1.0, 1.0 / Q)
    log_eps0 = math.log(0.5) + min(math.log(inp.eps), log_delta0 + 0.5 * math.log(shrink))
    if inp.eta0 is None:
        log_eta0 = log_eta_max
    else:
        _require_positive(eta0=inp.eta0)
        log_eta0 = math.log(inp.eta0)
    # log of 2 C0 / (rho eta0 eps0^2) + Q / (eta0 rho), summed stably
    t1 = math.log(2.0 * inp.C0) - math.log(inp.rho) - log_eta0 - 2.0 * log_eps0
    t2 = math.log(Q) - log_eta0 - math.log(inp.rho)
    log_inner = max(t1, t2) + math.log1p(math.exp(-abs(t1 - t2)))
    logN = math.log(inp.C_alpha) + log_inner / (1.0 - inp.alpha)
    ln10 = math.log(10.0)
    return SospBound(
        Q=Q, C6=C6, delta0=math.exp(log_delta0), eta0_max=math.exp(log_eta_max), eta0=math.exp(log_eta0),
        eps0=math.exp(log_eps0), N=_ceil_or_inf(_exp_or_inf(logN)),
        log10_delta0=log_delta0 / ln10, log10_eta0_max=log_eta_max / ln10,
        log10_eps0=log_eps0 / ln10, log10_N=logN / ln10,
    )


# ergodicity -----------------------------------------------------------------------

@dataclass(frozen=True)
class ErgodicBoundInputs:
    c7: float
    D7: float
    B1: float
    B2: float
    d: int
    delta0: float
    eta0: float
    alpha: float
    z0: tuple
    eps: float
    p0: float
    D_F: float | None = None
    EF_n0: float | None = None
    samples: int = 10_000_000
    seed: int = 0


@dataclass(frozen=True)
class GaussianBallProbability:
    estimate: float
    ci_low: float
    ci_high: float
    hits: int
    samples: int
    exact: float

    @property
    def indistinguishable_from_zero(self) -> bool:
        return self.hits == 0


def gaussian_ball_probability(d: int, offset: float, radius: float, samples: int = 10_000_000,
                              rng: np.random.Generator | None = None, chunk: int = 1_000_000) -> GaussianBallProbability:
    """Monte Carlo P(||Z - offset e1|| <= radius) for Z ~ N(0, I_d).

    Uses ||Z - m e1||^2 = (Z1 - m)^2 + chi2_{d-1}.  The exact noncentral
    chi-square value is reported alongside as a reference.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    r2 = radius * radius
    hits = 0
    left = int(samples)
    while left > 0:
        k = min(chunk, left)
        q = (rng.standard_normal(k) - offset) ** 2
        if d > 1:
            q += rng.chisquare(d - 1, size=k)
        hits += int(np.count_nonzero(q <= r2))
        left -= k
    ci = stats.binomtest(hits, int(samples)).proportion_ci(confidence_level=0.95, method="exact")
    exact = float(stats.ncx2.cdf(r2, d, offset * offset)) if offset > 0 else float(stats.chi2.cdf(r2, d))
    return GaussianBallProbability(hits / samples, float(ci.low), float(ci.high), hits, int(samples), exact)


def normal_interval_probability(offset: float, radius: float) -> float:
    """P(|Z - offset| <= radius) in one dimension via the error function."""
    s = math.sqrt(2.0)
    return 0.5 * (math.erf((offset + radius) / s) - math.erf((offset - radius) / s))


def _first_index_below(sched: StepSchedule, level: float) -> float:
    """min{t >= 1 : eta_t <= level}."""
    t = max(1.0, math.ceil((sched.eta0 / level) ** (1.0 / sched.alpha)))
    if t < 1e15:
        t = int(t)
        while t > 1 and sched.step_at(t - 1) <= level:
            t -= 1
        while sched.step_at(t) > level:
            t += 1
    return float(t)


@dataclass(frozen=True)
class ErgodicConstants:
    M_V: float
    D_X: float
    D_F: float
    eps0: float
    n0: float
    c_alpha: float
    c_alpha_ci: tuple
    c_alpha_exact: float
    K: float
    J: float
    N: float
    log10_N: float
    N_is_lower_bound: bool

    def to_dict(self):
        return asdict(self)


def ergodic_constants(inp: ErgodicBoundInputs, problem=None) -> ErgodicConstants:
    """The constant chain M_V, D_X, D_F, eps0, n0, c_alpha and N.

    D_F is taken from the inputs, or from ``problem.grad_norm_bound(4 D_X)``.
    E F(X_{n0}) defaults to M_V when not supplied.
    """
    _require_alpha(inp.alpha)
    _require_positive(c7=inp.c7, d=inp.d, delta0=inp.delta0, eta0=inp.eta0, eps=inp.eps)
    if not 0.0 < inp.p0 < 1.0:
        raise ValueError(f"p0 must lie in (0, 1), got {inp.p0}")
    for k in ("D7", "B1", "B2"):
        if getattr(inp, k) < 0:
            raise ValueError(f"{k} must be nonnegative")
    z0 = np.atleast_1d(np.asarray(inp.z0, dtype=np.float64))
    M_V = 8.0 / inp.c7 * (inp.D7 + 6.0 * inp.B1 + 6.0 * inp.d * inp.delta0**2)
    D_X = max(inp.D7 + inp.c7 * M_V, float(np.linalg.norm(z0)), 1.0)
    if inp.D_F is not None:
        D_F = float(inp.D_F)
    elif problem is not None:
        D_F = float(problem.grad_norm_bound(4.0 * D_X))
    else:
        raise ValueError("D_F must be supplied, or a problem given to bound it")
    _require_positive(D_F=D_F)
    eps0 = min(inp.eps / (2.0 * D_F + 2.0 * math.sqrt(inp.B2) + 1.0), D_F / D_X)
    if inp.alpha == 0.0:
        if inp.eta0 > eps0:
            raise ValueError(f"constant step eta0={inp.eta0:g} never drops below eps0={eps0:g}")
        n0 = 1.0
    else:
        n0 = _first_index_below(StepSchedule(inp.eta0, inp.alpha), eps0)
    offset = 2.0 * D_X / (inp.delta0 * math.sqrt(eps0))
    radius = eps0 / (inp.delta0 * math.sqrt(2.0 * eps0))
    ball = gaussian_ball_probability(inp.d, offset, radius, inp.samples, np.random.default_rng(inp.seed))
    lower_only = ball.indistinguishable_from_zero
    c_alpha = 0.25 * (ball.ci_high if lower_only else ball.estimate)
    EF = M_V if inp.EF_n0 is None else float(inp.EF_n0)
    K = max(0.0, math.ceil(2.0 / (inp.c7 * eps0) * math.log(2.0 * EF / M_V))) if EF > 0 else 0.0
    J = math.ceil(math.log(0.5 * inp.p0) / math.log1p(-c_alpha)) if c_alpha < 1 else 1.0
    inner = (K + J * (1.0 + 8.0 / (inp.c7 * eps0))) / (4.0 * inp.p0 * eps0 * inp.eta0)
    log_tail = math.log(inner) / (1.0 - inp.alpha)
    N = n0 + _exp_or_inf(log_tail)
    log10_N = math.log10(N) if math.isfinite(N) else (max(log_tail, math.log(n0)) / math.log(10.0))
    return ErgodicConstants(M_V, D_X, D_F, eps0, n0, c_alpha, (0.25 * ball.ci_low, 0.25 * ball.ci_high),
                            0.25 * ball.exact, float(K), float(J), _ceil_or_inf(N), log10_N, lower_only)


# Ornstein-Uhlenbeck reference for F(x) = x^T H x ---------------------------------

def _eig_sym(H) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    return np.linalg.eigvalsh(0.5 * (H + H.T))


def ou_expected_loss(H, delta0: float, t: float) -> float:
    """E F(X_t) for dX = -2 H X dt + delta0 dW, X_0 = 0, F(x) = x^T H x."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    lam = _eig_sym(H)
    return float(delta0**2 / 4.0 * np.sum(-np.expm1(-4.0 * lam * t)))


def ou_covariance(H, delta0: float, t: float) -> np.ndarray:
    """Covariance delta0^2 int_0^t exp(-4 H (t - s)) ds of the same process."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(np.abs(lam) * t > 1e-12, -np.expm1(-4.0 * lam * t) / (4.0 * lam), t)
    return (V * (delta0**2 * g)) @ V.T


def escape_time(H) -> float:
    """t = log(2d) / (-4 lambda_1(H)), where lambda_1 is the smallest eigenvalue of H."""
    lam = _eig_sym(H)
    if not lam[0] < 0:
        raise ValueError("H has no negative eigenvalue")
    return math.log(2 * lam.size) / (-4.0 * lam[0])


# variance recursions --------------------------------------------------------------

def variance_path(method: str, sched: StepSchedule, n: int) -> np.ndarray:
    """V_0..V_n for x -> (1 - eta) x + noise on F = x^2 / 2 with delta0 = 1.

    SGLD adds variance eta_k per step, PGD adds eta_k**2.
    """
    method = str(getattr(method, "value", method)).upper()
    if method not in ("SGLD", "PGD"):
        raise ValueError(f"unknown method {method!r}")
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    V = np.zeros(n + 1)
    if n == 0:
        return V
    eta = sched.steps(1, n)
    add = eta if method == "SGLD" else eta * eta
    shrink = (1.0 - eta) ** 2
    v = 0.0
    for k in range(n):
        v = shrink[k] * v + add[k]
        V[k + 1] = v
    return V


def variance_recursion(method: str, sched: StepSchedule, n: int) -> float:
    return float(variance_path(method, sched, n)[-1])


# matrix product estimates ---------------------------------------------------------

@dataclass
class ClaimResult:
    passed: bool
    margin: float
    applicable: bool = True
    detail: str = ""


@dataclass
class HboundsReport:
    lambda_H: float
    D4: float
    C3: float
    delta0: float
    window_mass: float
    claims: dict = field(default_factory=dict)
    product_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims.values())

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _tol(x) -> float:
    return 1e-12 * max(1.0, abs(x))


def check_matrix_product_bounds(H, etas, o: int, n: int, *, D4: float | None = None, C3: float | None = None,
                                delta0: float | None = None) -> HboundsReport:
    """Verify the five estimates on A_{j:k} = (I - eta_{j+1} H) ... (I - eta_k H).

    ``etas[i - 1]`` is eta_i and must cover 1..n.  Quantities are evaluated in
    the eigenbasis of H (where every A_{j:k} is diagonal), and the product
    A_{o:n} is also formed by explicit matrix multiplication as a cross-check.

    Defaults: D4 = sum of positive eigenvalues, C3 = largest eigenvalue (at
    least 1e-12), delta0 = sqrt(eta_{o+1}) so that eta_j <= delta0**2 on the
    window.  Claim (c) is checked with the lower bound 1/2 C3^-1 exp(-2 s C3),
    which holds whenever s >= C3^-1 exp(-s C3), s = eta_{o+1:n}.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise ValueError("H must be a symmetric matrix")
    H = 0.5 * (H + H.T)
    etas = np.asarray(etas, dtype=np.float64).reshape(-1)
    o, n = int(o), int(n)
    if not 0 <= o < n <= etas.size:
        raise ValueError(f"need 0 <= o < n <= len(etas); got o={o}, n={n}, len={etas.size}")
    lam, V = np.linalg.eigh(H)
    lambda_H = float(-lam[0])
    if not lambda_H > 0:
        raise ValueError("lambda_max(-H) must be positive")
    w = etas[o:n]  # eta_{o+1}, ..., eta_n
    if np.any(w <= 0):
        raise ValueError("step sizes must be positive")
    normH = float(np.max(np.abs(lam)))
    if np.any(w * normH >= 0.5):
        raise ValueError("hypothesis eta_i ||H|| < 1/2 violated")
    pos_sum = float(np.sum(lam[lam > 0]))
    D4 = pos_sum if D4 is None else float(D4)
    if D4 < pos_sum - _tol(pos_sum):
        raise ValueError(f"D4={D4:g} is below the positive eigenvalue sum {pos_sum:g}")
    lam_max = float(max(lam[-1], 1e-12))
    C3 = lam_max if C3 is None else float(C3)
    if C3 < lam_max - _tol(lam_max):
        raise ValueError(f"C3={C3:g} is below the largest eigenvalue {lam_max:g}")
    delta0 = math.sqrt(float(w[0])) if delta0 is None else float(delta0)

    m = n - o
    fac = 1.0 - np.outer(w, lam)  # row k: eta_{o+1+k}
    # back[j - o] = diag of A_{j:n}, j = o..n
    back = np.ones((m + 1, lam.size))
    back[:m] = np.cumprod(fac[::-1], axis=0)[::-1]
    # fwd[k - o] = diag of A_{o:k}, k = o..n
    fwd = np.ones((m + 1, lam.size))
    fwd[1:] = np.cumprod(fac, axis=0)
    csum = np.concatenate([[0.0], np.cumsum(w)])  # csum[k - o] = eta_{o+1:k}
    s = float(csum[-1])
    tail = s - csum  # eta_{j+1:n} for j = o..n

    rep = HboundsReport(lambda_H, D4, C3, delta0, s)

    # explicit product for A_{o:n}
    A = np.eye(lam.size)
    for eta in w:
        A = A - eta * (H @ A)
    spectral = (V * fwd[-1]) @ V.T
    rep.product_residual = float(np.linalg.norm(A - spectral, 2) / max(1.0, np.linalg.norm(spectral, 2)))

    # (a)
    ma = np.min(np.exp(lambda_H * tail) - np.max(np.abs(back), axis=1))
    mb = np.min(np.exp(lambda_H * csum) - np.max(np.abs(fwd), axis=1))
    margin_a = float(min(ma, mb))
    rep.claims["a"] = ClaimResult(margin_a >= -_tol(1.0), margin_a)

    # (b): (I - A_{o:n}) H^+ = sum_j eta_j A_{j:n}
    p = np.sum(w[:, None] * back[1:], axis=0)
    rhs_b = s * math.exp(lambda_H * s)
    margin_b = float(rhs_b - np.max(np.abs(p)))
    rep.claims["b"] = ClaimResult(margin_b >= -_tol(rhs_b), margin_b)

    # (c)
    cvals = p * fwd[-1]
    margin_c0 = float(np.min(cvals))
    cond = s >= math.exp(-s * C3) / C3
    lower = 0.5 / C3 * math.exp(-2.0 * s * C3)
    margin_c1 = float(np.min(cvals) - lower)
    ok_c = margin_c0 >= 0 and (margin_c1 >= 0 if cond else True)
    rep.claims["c"] = ClaimResult(ok_c, min(margin_c0, margin_c1) if cond else margin_c0, True,
                                  f"lower bound {'applied' if cond else 'not applicable'}: {lower:.3e}")

    # (d)
    quad = back[1:] ** 2 * lam  # v_i^T A_{j:n} H A_{j:n} v_i for j = o+1..n
    lhs_d = float(np.sum(w * quad.sum(axis=1)))
    rhs_d = -0.25 * math.expm1(lambda_H * s) + 2.0 * s * D4
    margin_d = rhs_d - lhs_d
    rep.claims["d"] = ClaimResult(margin_d >= -_tol(rhs_d), margin_d)

    # (e)
    # a nonpositive threshold means the window condition holds trivially
    D5 = (2.0 / lambda_H) * math.log((16.0 * D4 + 40.0) / lambda_H)
    applicable = s >= D5 and float(w.max()) <= delta0**2 * (1.0 + 1e-12)
    lhs_e = float(np.sum(delta0**2 * w * quad.sum(axis=1) + w**2 * quad.max(axis=1)))
    rhs_e = -4.0 * delta0**2 * s
    margin_e = rhs_e - lhs_e
    rep.claims["e"] = ClaimResult((margin_e >= -_tol(rhs_e)) if applicable else True, margin_e, applicable,
                                  f"window mass {s:.4g} vs D5 {D5:.4g}")
    return rep


def random_hbounds_instance(rng: np.random.Generator, max_dim: int = 10, escape: bool | None = None):
    """A random admissible (H, etas, o, n) for check_matrix_product_bounds.

    Eigenvalues: the most negative is -lambda_H with lambda_H in [0.5, 1], the
    rest uniform in [-lambda_H, 1].  Steps follow eta0 * n^-alpha with
    eta0 ||H|| < 1/2.  With ``escape`` the window reaches the D5 threshold.
    """
    d = int(rng.integers(1, max_dim + 1))
    lam_H = float(rng.uniform(0.5, 1.0))
    lam = np.concatenate([[-lam_H], rng.uniform(-lam_H, 1.0, d - 1)])
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    H = (Q * lam) @ Q.T
    H = 0.5 * (H + H.T)
    normH = float(np.max(np.abs(lam)))
    sched = StepSchedule(float(rng.uniform(0.1, 0.49)) / normH, float(rng.uniform(0.0, 0.3)))
    o = int(rng.integers(0, 21))
    D4 = float(np.sum(lam[lam > 0]))
    D5 = escape_window(lam_H, D4)
    if escape is None:
        escape = bool(rng.integers(0, 2))
    target = D5 * float(rng.uniform(1.0, 1.5)) if escape else D5 * float(rng.uniform(0.05, 1.0))
    n = sched.window_end(o, target)
    return H, sched.steps(1, n), o, n
