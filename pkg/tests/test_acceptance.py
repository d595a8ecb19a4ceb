"""End-to-end acceptance checks, one test (or a few) per criterion.

Run alone with ``pytest -m acceptance``; the terminal summary lists a
pass/fail line per criterion.  The tests marked slow take several minutes
in total, most of it the exceedance check.
"""

import math
import time

import numpy as np
import pytest

from langevin_lab.constants import REFERENCE_SIZES, analytic_constants, dominance, empirical_constants
from langevin_lab.harness import (
    BUDGET_CAP,
    NOT_TESTABLE,
    ExperimentConfig,
    empirical_variance,
    escape_lemma_check,
    run_ergodicity_experiment,
    run_escape_experiment,
    run_experiment,
)
from langevin_lab.problems import ScalarQuadratic, problem_from_config
from langevin_lab.schedule import StepSchedule
from langevin_lab.theory import check_matrix_product_bounds, random_hbounds_instance, variance_recursion

pytestmark = pytest.mark.acceptance

SADDLE = np.diag([-0.5, 0.5])


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# 1 -------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def escape_report():
    start = time.perf_counter()
    rep = run_escape_experiment(SADDLE, 0.1, StepSchedule(1e-3), 500, seed=0)
    return rep, time.perf_counter() - start


@criterion(1, "OU escape formula")
def test_escape_matches_ou(escape_report):
    rep, elapsed = escape_report
    t_star = rep.summary["checks"]["t_star"]
    assert t_star["target_time"] == pytest.approx(math.log(4) / 4)
    assert t_star["ou_agrees"], t_star
    # at the escape time of the expected-loss formula the mean is below -d delta0^2 / 4
    t_esc = rep.summary["checks"]["t_escape"]
    assert t_esc["ou_agrees"], t_esc
    assert t_esc["below_escape_level"], t_esc
    assert elapsed < 60


@criterion(1, "OU escape formula")
@pytest.mark.xfail(strict=True, reason="at log(2d)/4 the OU mean is -d delta0^2/8, above the -d delta0^2/4 level")
def test_escape_level_at_t_star(escape_report):
    rep, _ = escape_report
    assert rep.summary["checks"]["t_star"]["below_escape_level"]


# 2 and 3 -------------------------------------------------------------------------------

CHECKPOINTS = (100, 1000, 10_000, 100_000)


@pytest.fixture(scope="module")
def scalar_variances():
    sched = StepSchedule(1.0, 0.6)
    start = time.perf_counter()
    out = {m: empirical_variance(ScalarQuadratic(), m, sched, 1.0, CHECKPOINTS, 10_000, seed=0)
           for m in ("SGLD", "PGD")}
    return sched, out, time.perf_counter() - start


@criterion(2, "variance limits of SGLD and PGD")
@pytest.mark.slow
def test_variance_limits(scalar_variances):
    _, var, elapsed = scalar_variances
    assert abs(var["SGLD"][100_000]["variance"] - 0.5) < 0.02
    assert var["PGD"][100_000]["variance"] < 0.02
    assert elapsed < 120


@criterion(3, "variance recursion exactness")
@pytest.mark.slow
def test_variance_recursion_exact(scalar_variances):
    sched, var, _ = scalar_variances
    for n in (100, 1000, 10_000):
        v = var["SGLD"][n]
        assert abs(v["variance"] - variance_recursion("SGLD", sched, n)) <= 5 * v["stderr"], (n, v)


# 4 -------------------------------------------------------------------------------------

THEOREM_FOSP = {
    "experiment": "hitting_fosp",
    "problem": {"name": "linear_regression", "dim": 10, "spectrum": "flat", "x_star": "zeros"},
    "region": {"epsilon": 0.5},
    "x0": {"offset": "unit", "scale": 0.75},
    "use_theorem_params": True,
    "theory": {"rho": 0.3, "C_alpha": 1.0},
    "replicas": 200,
    "master_seed": 0,
}


@criterion(4, "first-order exceedance probability")
@pytest.mark.slow
def test_theorem_exceedance():
    start = time.perf_counter()
    rep = run_experiment(ExperimentConfig.from_dict(THEOREM_FOSP))
    elapsed = time.perf_counter() - start
    st = rep.summary["settings"][0]
    summ = st["summary"]
    check = summ["exceedance_check"]
    assert check["N"] == st["N"]
    if st["N"] > BUDGET_CAP:
        assert any(NOT_TESTABLE in n for n in rep.notices)
        # the estimate is still exact when every replica hits inside the capped budget
        assert summ["exceedance"][f"{st['N']:g}"]["exact"]
    assert check["p_hat"] <= 0.3 + 3 * math.sqrt(0.3 * 0.7 / 200)
    assert check["passed"]
    assert elapsed < 600


# 5 and 6 -------------------------------------------------------------------------------

EPS_SWEEP = {
    "experiment": "hitting_fosp",
    "problem": {"name": "linear_regression", "dim": 40, "spectrum": "decay(2)", "x_star": "zeros"},
    "region": {"epsilon": 0.2},
    "x0": {"offset": "ones"},
    "use_theorem_params": True,
    "theory": {"rho": 0.3, "eta0_kappa": 0.05},
    "sweep": {"parameter": "epsilon", "values": [0.2, 0.1, 0.05]},
    "replicas": 50,
    "master_seed": 0,
}

DIM_SWEEP = {
    "experiment": "hitting_fosp",
    "problem": {"name": "linear_regression", "dim": 5, "spectrum": "decay(2)", "x_star": "zeros"},
    "region": {"epsilon": 0.2},
    "x0": {"offset": "harmonic"},
    "use_theorem_params": True,
    "theory": {"rho": 0.3},
    "sweep": {"parameter": "dim", "values": [5, 10, 20, 40]},
    "replicas": 50,
    "master_seed": 0,
}


@criterion(5, "first-order scaling in epsilon")
def test_eps_scaling():
    rep = run_experiment(ExperimentConfig.from_dict(EPS_SWEEP))
    scaling = rep.summary["scaling"]
    etas = [t["eta0"] for t in scaling["table"]]
    assert etas[0] / etas[1] == pytest.approx(4.0) and etas[1] / etas[2] == pytest.approx(4.0)
    assert all(st["summary"]["censored"] == 0 for st in rep.summary["settings"])
    assert 3.0 <= scaling["exponent"] <= 5.0, scaling


@criterion(6, "dimension independence")
def test_dimension_independence():
    rep = run_experiment(ExperimentConfig.from_dict(DIM_SWEEP))
    scaling = rep.summary["scaling"]
    assert [t["value"] for t in scaling["table"]] == [5, 10, 20, 40]
    assert all(st["summary"]["censored"] == 0 for st in rep.summary["settings"])
    assert scaling["max_ratio"] < 2.0, scaling


# 7 -------------------------------------------------------------------------------------


@criterion(7, "matrix product estimates")
def test_matrix_product_estimates():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    for _ in range(1000):
        H, etas, o, n = random_hbounds_instance(rng, max_dim=10)
        assert H.shape[0] <= 10
        rep = check_matrix_product_bounds(H, etas, o, n)
        assert rep.passed, {k: (c.passed, c.margin) for k, c in rep.claims.items()}
        for k, c in rep.claims.items():
            if c.applicable:
                worst[k] = min(worst.get(k, math.inf), c.margin)
    assert set(worst) == {"a", "b", "c", "d", "e"}
    assert min(worst.values()) >= 0, worst
    assert time.perf_counter() - start < 60


# 8 -------------------------------------------------------------------------------------

SUITE = {
    "scalar": {"name": "scalar_quadratic"},
    "saddle": {"name": "quadratic_saddle", "H": [[-0.5, 0.2], [0.2, 0.5]], "noise_cov": 0.3},
    "linreg": {"name": "linear_regression", "dim": 6, "spectrum": "decay(1)", "rotate": True, "seed": 1},
    "mf": {"name": "matrix_factorization", "m": 4, "r": 2, "spectrum": "decay(1)", "seed": 2},
    "pca": {"name": "online_pca", "m": 4, "r": 2, "spectrum": "decay(1)", "seed": 3},
}


def _fd_grad(p, x, h=1e-6):
    E = np.eye(x.size) * h
    return np.array([(p.loss(x + e) - p.loss(x - e)) / (2 * h) for e in E])


def _fd_hessian(p, x, h=1e-5):
    E = np.eye(x.size) * h
    H = np.array([(p.grad(x + e) - p.grad(x - e)) / (2 * h) for e in E]).T
    return 0.5 * (H + H.T)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


@criterion(8, "gradient and Hessian oracles")
@pytest.mark.parametrize("key", SUITE)
def test_oracles(key):
    p = problem_from_config(SUITE[key])
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = p.center + rng.standard_normal(p.dim)
        assert _rel(p.grad(x), _fd_grad(p, x)) < 1e-4
        assert _rel(p.hessian(x), _fd_hessian(p, x)) < 1e-3
    if p.noise_size:
        x = p.center + 0.5 * rng.standard_normal(p.dim)
        k = 100_000
        xi = p.grad_from_normals(np.broadcast_to(x, (k, p.dim)), rng.standard_normal((k, p.noise_size))) - p.grad(x)
        se = xi.std(axis=0) / math.sqrt(k)
        assert np.all(np.abs(xi.mean(axis=0)) <= 4 * se)


# 9 -------------------------------------------------------------------------------------


@criterion(9, "constant dominance")
@pytest.mark.parametrize("family", sorted(REFERENCE_SIZES))
def test_constant_dominance(family):
    for i, (cfg, gamma) in enumerate(REFERENCE_SIZES[family]):
        p = problem_from_config(cfg)
        rng = np.random.default_rng(np.random.SeedSequence(2024, spawn_key=(i,)))
        emp = empirical_constants(p, 10_000, 100, gamma, rng, boundary=0.5)
        dom = dominance(emp, analytic_constants(p, gamma), k=3.0)
        assert all(v["dominated"] for v in dom.values()), (cfg, dom)


# 10 ------------------------------------------------------------------------------------


@criterion(10, "noise is needed to leave the saddle")
def test_noise_is_needed():
    sched = StepSchedule(1e-3)
    quiet = run_escape_experiment(SADDLE, 0.0, sched, 50, seed=1)
    assert all(c["max_displacement"] == 0.0 for c in quiet.summary["checks"].values())
    lem0, _ = escape_lemma_check(SADDLE, sched, delta0=0.0, replicas=20, seed=1)
    assert lem0["stopped"]["max_displacement"] == 0.0
    assert lem0["unstopped"]["max_displacement"] == 0.0

    lem, _ = escape_lemma_check(SADDLE, sched, delta0=0.01, q=0.5, replicas=200, seed=1)
    assert all(lem["conditions"].values()), lem["conditions"]
    assert lem["contract_holds"], lem["stopped"]
    assert lem["stopped"]["mean"] < 0
    assert lem["unstopped_negative"]


# 11 ------------------------------------------------------------------------------------


@criterion(11, "ergodicity contrast")
@pytest.mark.slow
def test_ergodicity_contrast():
    start = time.perf_counter()
    rep = run_ergodicity_experiment(ScalarQuadratic(), StepSchedule(1.0, 0.6), 1.0, 1.5, 0.2, 10**6, 200,
                                    methods=("SGLD", "PGD"), late_after=10_000, seed=0)
    m = rep.summary["methods"]
    assert m["SGLD"]["hit_fraction"] >= 0.9
    assert m["PGD"]["late_hit_fraction"] <= 0.1
    assert time.perf_counter() - start < 300
