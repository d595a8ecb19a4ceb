import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langevin_lab.dynamics import DynamicsConfig
from langevin_lab.problems import (
    LinearRegressionProblem,
    MatrixFactorizationProblem,
    QuadraticSaddle,
    ScalarQuadratic,
    problem_from_config,
    random_orthogonal,
)
from langevin_lab.schedule import StepSchedule
from langevin_lab.stationarity import (
    CENSORED,
    HittingRecord,
    RegionSpec,
    exceedance,
    hitting_summary,
    is_fosp,
    is_sosp,
    measure_hitting,
    min_eig,
    read_hitting_csv,
    write_hitting_csv,
)

LINREG = {"name": "linear_regression", "dim": 4, "spectrum": "decay(1)", "seed": 2}


def test_region_spec_validation():
    with pytest.raises(ValueError):
        RegionSpec("FOSP", -0.1)
    with pytest.raises(ValueError):
        RegionSpec("SOSP", 0.1)
    with pytest.raises(ValueError):
        RegionSpec("SOSP", 0.1, 0.0)
    with pytest.raises(ValueError):
        RegionSpec("TOSP", 0.1)
    assert RegionSpec("sosp", 0.1, 0.2).kind.value == "SOSP"


def test_fosp_examples():
    p = problem_from_config(LINREG)
    assert is_fosp(p, p.x_star, 1e-12)
    eps = 0.25
    assert not is_fosp(ScalarQuadratic(), [2 * eps], eps)
    assert is_fosp(ScalarQuadratic(), [eps], eps)


def test_fosp_is_vectorised():
    out = is_fosp(ScalarQuadratic(), np.array([[0.1], [0.3], [-0.2]]), 0.2)
    assert out.tolist() == [True, False, True]


def test_min_eig_examples(rng):
    assert min_eig(np.diag([1.0, -2.0, 3.0])) == pytest.approx(-2.0, abs=1e-12)
    assert min_eig(np.eye(7)) == pytest.approx(1.0)
    S = rng.standard_normal((20, 20))
    S = S + S.T
    assert min_eig(S) == pytest.approx(np.linalg.eigvals(S).real.min(), abs=1e-8 * np.linalg.norm(S, 2))


def test_min_eig_power_iteration_agrees(rng):
    S = rng.standard_normal((30, 30))
    S = S + S.T
    dense = min_eig(S, method="dense")
    assert min_eig(S, method="power") == pytest.approx(dense, abs=1e-6 * np.linalg.norm(S, 2))


def test_min_eig_rejects_asymmetry():
    with pytest.raises(ValueError):
        min_eig(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        min_eig(np.ones(3))
    with pytest.raises(ValueError):
        min_eig(np.eye(2), method="lanczos")


@settings(max_examples=30)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_min_eig_similarity_invariance(d, seed):
    rng = np.random.default_rng(seed)
    D = rng.uniform(-5, 5, d)
    Q = random_orthogonal(d, rng)
    S = Q @ np.diag(D) @ Q.T
    S = 0.5 * (S + S.T)
    assert min_eig(S) == pytest.approx(D.min(), abs=1e-8 * max(1.0, np.abs(D).max()))


def test_sosp_examples():
    saddle = QuadraticSaddle(np.diag([-1.0, 1.0]))
    assert not is_sosp(saddle, np.zeros(2), RegionSpec("SOSP", 0.1, 0.5))
    assert is_fosp(saddle, np.zeros(2), 0.1)
    p = problem_from_config(LINREG)
    assert is_sosp(p, p.x_star, RegionSpec("SOSP", 1e-9, 1e-9))
    with pytest.raises(ValueError):
        is_sosp(p, p.x_star, RegionSpec("FOSP", 0.1))


def test_sosp_at_factorization_minimizer():
    M = np.diag([2.0, 0.0, 0.0])
    p = MatrixFactorizationProblem(M, 1)
    X = p.minimizing_factor()
    assert np.allclose(p.unflatten(X) @ p.unflatten(X).T, M)
    eps = 0.01
    assert np.linalg.norm(p.grad(X)) <= 1e-12
    assert np.linalg.eigvalsh(p.hessian(X))[0] >= -1e-12
    assert is_sosp(p, X, RegionSpec("SOSP", eps, np.sqrt(eps)))


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-3, 2), st.floats(1e-3, 2))
def test_sosp_implies_fosp(a, b, eps, lam):
    p = QuadraticSaddle(np.diag([-0.3, 1.0]))
    x = np.array([a, b])
    if is_sosp(p, x, RegionSpec("SOSP", eps, lam)):
        assert is_fosp(p, x, eps)


def _cfg(max_iters=20_000, seed=3, delta0=0.3, eta0=0.02):
    return DynamicsConfig("SGLD", delta0, StepSchedule(eta0), max_iters, seed)


def test_hitting_at_start_is_zero():
    p = problem_from_config(LINREG)
    recs = measure_hitting(p, _cfg(), RegionSpec("FOSP", 0.1), 5, x0=p.x_star)
    assert [r.tau for r in recs] == [0] * 5
    assert all(is_fosp(p, r.witness, 0.1) for r in recs)


def test_zero_tolerance_is_always_censored():
    p = problem_from_config(LINREG)
    recs = measure_hitting(p, _cfg(max_iters=500), RegionSpec("FOSP", 0.0), 4, x0=p.x_star + 1.0)
    assert all(r.censored and r.budget == 500 for r in recs)
    assert exceedance(recs, 10) == 1.0


def test_hitting_witness_and_budget():
    p = problem_from_config(LINREG)
    recs = measure_hitting(p, _cfg(), RegionSpec("FOSP", 0.3), 20, x0=p.x_star + 2.0)
    for r in recs:
        if not r.censored:
            assert 0 < r.tau <= r.budget
            assert is_fosp(p, r.witness, 0.3)


def test_check_every_delays_detection():
    p = problem_from_config(LINREG)
    recs = measure_hitting(p, _cfg(), RegionSpec("FOSP", 0.3), 10, check_every=7, x0=p.x_star + 2.0)
    assert all(r.tau % 7 == 0 for r in recs if not r.censored)


@settings(max_examples=10)
@given(st.floats(0.05, 0.5), st.floats(1.0, 3.0))
def test_hitting_is_monotone_in_tolerance(eps, factor):
    p = problem_from_config(LINREG)
    x0 = p.x_star + 2.0
    small = measure_hitting(p, _cfg(max_iters=5000), RegionSpec("FOSP", eps), 8, x0=x0)
    big = measure_hitting(p, _cfg(max_iters=5000), RegionSpec("FOSP", eps * factor), 8, x0=x0)
    for s, b in zip(small, big):
        if not s.censored:
            assert not b.censored and b.tau <= s.tau


def test_divergence_is_recorded_not_raised():
    p = QuadraticSaddle([[10.0]], noise_cov=1.0)
    cfg = DynamicsConfig("SGLD", 0.1, StepSchedule(1.0), 100, 0)
    recs = measure_hitting(p, cfg, RegionSpec("FOSP", 1e-9), 3, x0=[1.0])
    assert all(r.censored and "diverged" in r.error for r in recs)


def test_measure_hitting_argument_checks():
    p = ScalarQuadratic()
    with pytest.raises(ValueError):
        measure_hitting(p, _cfg(), RegionSpec("FOSP", 0.1), 0)
    with pytest.raises(ValueError):
        measure_hitting(p, _cfg(), RegionSpec("FOSP", 0.1), 1, check_every=0)


def test_summary_and_exceedance():
    recs = [HittingRecord(i, t, 100) for i, t in enumerate([5, 10, 50, CENSORED])]
    assert exceedance(recs, 10) == 0.75
    assert exceedance(recs, 51) == 0.25
    s = hitting_summary(recs, thresholds=(10, 200))
    assert (s["hit"], s["censored"], s["budget"]) == (3, 1, 100)
    assert s["quantiles"]["0.5"] == 10
    assert s["quantiles"]["0.9"] is None
    assert s["exceedance"]["10"]["exact"]
    assert not s["exceedance"]["200"]["exact"]


def test_hitting_csv_round_trip(tmp_path):
    recs = [HittingRecord(0, 4, 10), HittingRecord(1, CENSORED, 10)]
    path = tmp_path / "h.csv"
    write_hitting_csv(path, recs, setting=0)
    write_hitting_csv(path, recs[:1], setting=1, append=True)
    back = read_hitting_csv(path)
    assert [(r.replica, r.tau) for r in back[0]] == [(0, 4), (1, CENSORED)]
    assert [r.tau for r in back[1]] == [4]


def test_linear_regression_fraction_late_is_small():
    # same shape as the theorem check, at a loose tolerance so it stays quick
    p = LinearRegressionProblem(np.eye(3), np.zeros(3))
    recs = measure_hitting(p, _cfg(max_iters=50_000, delta0=0.05, eta0=0.01), RegionSpec("FOSP", 0.2), 50,
                           x0=np.ones(3))
    assert exceedance(recs, 50_000) == 0.0
