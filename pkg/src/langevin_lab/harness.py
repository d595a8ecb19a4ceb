"""Experiment orchestration: configs, the canonical experiments and result files.

Every experiment returns an ``ExperimentReport`` holding per-replica rows, a
summary recomputable from those rows and the resolved configuration with all
derived constants.  ``ExperimentReport.write`` produces ``records.csv``,
``summary.json`` and ``resolved_config.json``.

Record columns by experiment:

    hitting             setting, replica, tau, budget
    escape              run, replica, label, iteration, time, loss, norm
    ergodicity          method, replica, tau, tau_late, budget
    check_bounds        instance, dim, o, n, claim, passed, margin
    estimate_constants  constant, empirical, stderr, analytic, dominated

tau is -1 for replicas that never entered the region within the budget.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from langevin_lab.constants import (
    ConstantBundle,
    analytic_constants,
    coercivity_margins,
    coercivity_points,
    dominance,
    empirical_constants,
)
from langevin_lab.dynamics import DynamicsConfig, Method, run_batch
from langevin_lab.problems import (
    LinearRegressionProblem,
    Problem,
    QuadraticSaddle,
    ScalarQuadratic,
    _FactorProblem,
    initial_point,
    problem_from_config,
)
from langevin_lab.schedule import StepSchedule
from langevin_lab.stationarity import (
    RegionKind,
    RegionSpec,
    default_check_every,
    hitting_summary,
    measure_hitting,
)
from langevin_lab.theory import (
    ErgodicBoundInputs,
    FospBoundInputs,
    SospBoundInputs,
    check_matrix_product_bounds,
    ergodic_constants,
    escape_time,
    escape_window,
    fosp_bound,
    normal_interval_probability,
    ou_expected_loss,
    random_hbounds_instance,
    sosp_bound,
    variance_recursion,
)

BUDGET_CAP = 10**8
DIVERGENCE_LIMIT = 0.10
NOT_TESTABLE = "bound not testable at desk scale"

EXPERIMENTS = ("hitting_fosp", "hitting_sosp", "escape", "ergodicity", "check_bounds", "estimate_constants")
PROBLEMS = ("scalar_quadratic", "quadratic_saddle", "linear_regression", "matrix_factorization", "online_pca")

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MAT = {"anyOf": [_VEC, {"type": "array", "items": _VEC, "minItems": 1}]}
_BUDGET = {"type": "integer", "minimum": 1, "maximum": BUDGET_CAP}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(PROBLEMS)},
                "dim": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "r": {"type": "integer", "minimum": 1},
                "rank_M": {"type": "integer", "minimum": 1},
                "spectrum": {"anyOf": [
                    {"type": "string", "pattern": r"^(flat|decay\(\s*[0-9.eE+-]+\s*\))$"},
                    {"type": "array", "items": _NONNEG, "minItems": 1},
                ]},
                "rotate": {"type": "boolean"},
                "x_star": {"anyOf": [{"enum": ["gaussian", "zeros"]}, _VEC]},
                "seed": {"type": "integer", "minimum": 0},
                "H": _MAT,
                "noise_cov": {"anyOf": [_NONNEG, _MAT]},
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [m.value for m in Method]},
                "delta0": _NONNEG,
                "eta0": _POS,
                "alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "max_iters": _BUDGET,
                "check_every": {"type": "integer", "minimum": 1},
            },
        },
        "region": {
            "type": "object",
            "additionalProperties": False,
            "required": ["epsilon"],
            "properties": {
                "kind": {"enum": ["FOSP", "SOSP"]},
                "epsilon": _POS,
                "lambda_eps": _POS,
            },
        },
        "x0": {"anyOf": [
            _VEC,
            {"type": "object", "additionalProperties": False, "properties": {
                "offset": {"enum": ["zeros", "ones", "harmonic", "unit", "gaussian"]},
                "scale": {"type": "number"},
            }},
        ]},
        "replicas": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "threads": {"type": "integer", "minimum": 1},
        "use_theorem_params": {"type": "boolean"},
        "theory": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "C_alpha": _POS,
                "C6_factor": _POS,
                "q": _POS,
                "gamma": _POS,
                "c": _POS,
                "eta0_kappa": _POS,
                "constants": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: _NONNEG for k in ("C2", "C3", "C0", "B1", "B2", "D4", "c7", "D7")},
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["parameter", "values"],
            "properties": {
                "parameter": {"enum": ["epsilon", "dim"]},
                "values": {"type": "array", "items": _POS, "minItems": 1},
            },
        },
        "escape": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "times": {"type": "array", "items": _POS},
                "lemma": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "q": _POS,
                        "delta0": _NONNEG,
                        "mass_factor": {"type": "number", "minimum": 2, "maximum": 3},
                        "replicas": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "ergodicity": {
            "type": "object",
            "additionalProperties": False,
            "required": ["z0", "eps"],
            "properties": {
                "z0": {"anyOf": [{"type": "number"}, _VEC]},
                "eps": _POS,
                "budget": _BUDGET,
                "late_after": {"type": "integer", "minimum": 0},
                "methods": {"type": "array", "items": {"enum": [m.value for m in Method]}, "minItems": 1},
                "checkpoints": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "p0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "instances": {"type": "integer", "minimum": 1},
                "max_dim": {"type": "integer", "minimum": 1},
            },
        },
        "constants": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": _POS,
                "samples": {"type": "integer", "minimum": 10_000},
                "points": {"type": "integer", "minimum": 10},
                "pairs": {"type": "integer", "minimum": 2},
                "c": _POS,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

_NEEDS_PROBLEM = ("hitting_fosp", "hitting_sosp", "escape", "ergodicity", "estimate_constants")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` points at the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_config(raw: dict) -> dict:
    """Schema and consistency checks; returns a deep copy with defaults filled."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        raise ConfigError(_json_path(err.absolute_path), err.message)
    cfg = copy.deepcopy(raw)
    exp = cfg["experiment"]
    if exp in _NEEDS_PROBLEM and "problem" not in cfg:
        raise ConfigError("$.problem", f"required for experiment {exp!r}")
    cfg.setdefault("replicas", 100)
    cfg.setdefault("master_seed", 0)
    cfg.setdefault("threads", 1)
    cfg.setdefault("use_theorem_params", False)
    cfg.setdefault("theory", {})
    dyn = cfg.setdefault("dynamics", {})
    dyn.setdefault("method", "SGLD")
    dyn.setdefault("alpha", 0.0)

    prob = cfg.get("problem")
    if prob is not None:
        name = prob["name"]
        need = {"linear_regression": ("dim",), "matrix_factorization": ("m",), "online_pca": ("m",),
                "quadratic_saddle": ("H",)}.get(name, ())
        for k in need:
            if k not in prob:
                raise ConfigError(f"$.problem.{k}", f"required for problem {name!r}")
    if exp in ("hitting_fosp", "hitting_sosp"):
        region = cfg.get("region")
        if region is None:
            raise ConfigError("$.region", "required for hitting experiments")
        region.setdefault("kind", "FOSP" if exp == "hitting_fosp" else "SOSP")
        if region["kind"] != ("FOSP" if exp == "hitting_fosp" else "SOSP"):
            raise ConfigError("$.region.kind", f"does not match experiment {exp!r}")
        if region["kind"] == "SOSP" and "lambda_eps" not in region:
            raise ConfigError("$.region.lambda_eps", "required for an SOSP region")
        if not cfg["use_theorem_params"]:
            for k in ("delta0", "max_iters"):
                if k not in dyn:
                    raise ConfigError(f"$.dynamics.{k}", "required unless use_theorem_params is set")
            if "eta0" not in dyn and "eta0_kappa" not in cfg["theory"]:
                raise ConfigError("$.dynamics.eta0", "required unless use_theorem_params or theory.eta0_kappa is set")
        sweep = cfg.get("sweep")
        if sweep and sweep["parameter"] == "dim":
            if prob["name"] not in ("linear_regression", "matrix_factorization", "online_pca"):
                raise ConfigError("$.sweep.parameter", f"cannot sweep the dimension of {prob['name']!r}")
            if isinstance(cfg.get("x0"), list):
                raise ConfigError("$.x0", "an explicit x0 cannot follow a dimension sweep")
            for i, v in enumerate(sweep["values"]):
                if float(v) != int(v):
                    raise ConfigError(f"$.sweep.values[{i}]", "dimensions must be integers")
    if exp in ("escape", "ergodicity"):
        for k in ("delta0", "eta0"):
            if k not in dyn:
                raise ConfigError(f"$.dynamics.{k}", f"required for experiment {exp!r}")
    if exp == "escape":
        if prob["name"] != "quadratic_saddle":
            raise ConfigError("$.problem.name", "the escape experiment runs on quadratic_saddle")
        if "max_iters" in dyn:
            raise ConfigError("$.dynamics.max_iters", "the escape experiment sets its own horizon")
    if exp == "ergodicity" and "ergodicity" not in cfg:
        raise ConfigError("$.ergodicity", "required for experiment 'ergodicity'")

    if prob is not None and isinstance(cfg.get("x0"), list):
        try:
            p = problem_from_config(prob)
        except (ValueError, KeyError) as e:
            raise ConfigError("$.problem", str(e)) from None
        if len(cfg["x0"]) != p.dim:
            raise ConfigError("$.x0", f"has length {len(cfg['x0'])} but the problem has dimension {p.dim}")
    if exp == "ergodicity" and prob is not None:
        z0 = np.atleast_1d(np.asarray(cfg["ergodicity"]["z0"], dtype=np.float64))
        p = problem_from_config(prob)
        if z0.size != p.dim:
            raise ConfigError("$.ergodicity.z0", f"has length {z0.size} but the problem has dimension {p.dim}")
    return cfg


@dataclass
class ExperimentConfig:
    """Validated configuration (see ``SCHEMA`` for the accepted fields)."""

    experiment: str
    problem: dict | None
    dynamics: dict
    region: dict | None
    replicas: int
    master_seed: int
    threads: int
    x0: object = None
    use_theorem_params: bool = False
    theory: dict = field(default_factory=dict)
    sweep: dict | None = None
    escape: dict = field(default_factory=dict)
    ergodicity: dict | None = None
    bounds: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        c = validate_config(raw)
        return cls(
            experiment=c["experiment"], problem=c.get("problem"), dynamics=c["dynamics"], region=c.get("region"),
            replicas=c["replicas"], master_seed=c["master_seed"], threads=c["threads"], x0=c.get("x0"),
            use_theorem_params=c["use_theorem_params"], theory=c["theory"], sweep=c.get("sweep"),
            escape=c.get("escape", {}), ergodicity=c.get("ergodicity"), bounds=c.get("bounds", {}),
            constants=c.get("constants", {}), output=c.get("output", {}),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("$", f"invalid JSON ({e})") from None
        if not isinstance(raw, dict):
            raise ConfigError("$", "the config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = {k: copy.deepcopy(v) for k, v in self.__dict__.items() if v is not None}
        return {k: v for k, v in out.items() if v != {} or k in ("dynamics", "theory")}


@dataclass
class ExperimentReport:
    experiment: str
    columns: list
    rows: list
    summary: dict
    resolved: dict
    notices: list = field(default_factory=list)
    divergence_fraction: float = 0.0

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "records.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        summary = dict(self.summary, notices=list(self.notices), divergence_fraction=self.divergence_fraction)
        with open(out / "summary.json", "w") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        with open(out / "resolved_config.json", "w") as fh:
            json.dump(_jsonable(self.resolved), fh, indent=2, sort_keys=True)
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int, float, bool)):
        return obj.value
    return obj


def mean_ci(values, level: float = 0.95) -> dict:
    """Sample mean with a normal-approximation confidence half-width."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    z = float(stats.norm.ppf(0.5 + level / 2))
    return {"mean": float(np.mean(v)), "sd": sd, "n": int(n), "half_width": z * sd / math.sqrt(n)}


def proportion_ci(hits: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(hits), int(n)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _rng_x0(seed: int) -> np.random.Generator:
    # separate from the replica streams, which use spawn keys (replica, channel)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2**31 - 1,)))


# theorem parameters ---------------------------------------------------------------------

def _auto_gamma(p: Problem, x0: np.ndarray) -> float:
    if isinstance(p, _FactorProblem):
        X = p.unflatten(x0)
        return max(1.0, float(np.linalg.norm(X @ X.T)))
    return max(1.0, float(np.linalg.norm(x0 - p.center)))


def resolve_constants(p: Problem, x0: np.ndarray, theory: dict) -> ConstantBundle:
    """Constants for the theorem prescriptions: explicit values override analytic ones."""
    explicit = dict(theory.get("constants", {}))
    gamma = float(theory.get("gamma", _auto_gamma(p, x0)))
    try:
        b = analytic_constants(p, gamma, c=theory.get("c"))
    except ValueError:
        if not explicit:
            raise ConfigError("$.theory.constants", f"no closed-form constants for {p.name!r}; supply them") from None
        b = ConstantBundle(None, None, None, None, None, None, None, None, provenance="config", gamma=gamma)
    for k, v in explicit.items():
        setattr(b, k, float(v))
    if explicit:
        b.provenance = "config" if b.provenance == "config" else "analytic+config"
    return b


def _require(bundle: ConstantBundle, *names):
    for k in names:
        if getattr(bundle, k) is None:
            raise ConfigError(f"$.theory.constants.{k}", "required to compute the theorem prescriptions")


def theorem_parameters(p: Problem, x0: np.ndarray, region: RegionSpec, dyn: dict, theory: dict,
                       use_theorem: bool) -> dict:
    """delta0, eta0, budget N and the bound record for one hitting setting.

    Without ``use_theorem`` the configured delta0 and eta0 are used and a
    problem lacking constants simply gets no bound (N = inf).
    """
    try:
        bundle = resolve_constants(p, x0, theory)
    except ConfigError as e:
        if use_theorem:
            raise
        eta0 = dyn["eta0"] if "eta0" in dyn else float(theory["eta0_kappa"]) * region.epsilon**2
        return {"delta0": float(dyn["delta0"]), "eta0": float(eta0), "N": math.inf,
                "rho": float(theory.get("rho", 0.1)), "bound": {"unavailable": str(e)}, "constants": None}
    rho = float(theory.get("rho", 0.1))
    alpha = float(dyn.get("alpha", 0.0))
    C_alpha = float(theory.get("C_alpha", 1.0))
    eps = region.epsilon
    if "eta0_kappa" in theory:
        eta0 = float(theory["eta0_kappa"]) * eps * eps
    else:
        eta0 = dyn.get("eta0")
    if region.kind is RegionKind.FOSP:
        _require(bundle, "C2", "B1")
        F0 = float(p.loss(x0))
        mk = lambda e: FospBoundInputs(F0=F0, C2=bundle.C2, B1=bundle.B1, eta0=e, alpha=alpha, eps=eps, rho=rho,
                                       d=p.dim, C_alpha=C_alpha)
        first = fosp_bound(mk(eta0 if eta0 is not None else 1.0))
        if eta0 is None:
            eta0 = first.eta0_max
        bound = fosp_bound(mk(eta0))
        delta0 = bound.delta0_max
        N = bound.N
        record = bound.to_dict()
    else:
        _require(bundle, "C0", "C3", "D4", "B2")
        bound = sosp_bound(SospBoundInputs(
            C0=bundle.C0, C3=bundle.C3, D4=bundle.D4, B2=bundle.B2, lambda_eps=region.lambda_eps,
            q=float(theory.get("q", 1.0)), eps=eps, rho=rho, d=p.dim, eta0=eta0, alpha=alpha, C_alpha=C_alpha,
            C6_factor=float(theory.get("C6_factor", 1.0))))
        eta0 = bound.eta0
        delta0 = bound.delta0
        N = bound.N
        record = bound.to_dict()
    if not use_theorem:
        delta0 = dyn["delta0"]
        eta0 = dyn.get("eta0", eta0)
    return {"delta0": float(delta0), "eta0": float(eta0), "N": N, "rho": rho, "bound": record,
            "constants": bundle.to_dict()}


# hitting experiments --------------------------------------------------------------------

def _setting_configs(cfg: ExperimentConfig):
    sweep = cfg.sweep
    if not sweep:
        yield None, cfg.problem, cfg.region["epsilon"]
        return
    for v in sweep["values"]:
        prob = copy.deepcopy(cfg.problem)
        eps = cfg.region["epsilon"]
        if sweep["parameter"] == "epsilon":
            eps = float(v)
        elif "m" in prob:
            prob["m"] = int(v)
        else:
            prob["dim"] = int(v)
        yield v, prob, eps


def run_hitting_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Hitting times of the FOSP/SOSP region, one setting per sweep value."""
    if cfg.experiment not in ("hitting_fosp", "hitting_sosp"):
        raise ConfigError("$.experiment", "expected a hitting experiment")
    dyn = cfg.dynamics
    rows, settings, notices = [], [], []
    diverged = total = 0
    for s, (value, prob_cfg, eps) in enumerate(_setting_configs(cfg)):
        p = problem_from_config(prob_cfg)
        x0 = initial_point(p, cfg.x0, _rng_x0(cfg.master_seed))
        region = RegionSpec(cfg.region["kind"], eps, cfg.region.get("lambda_eps"))
        tp = theorem_parameters(p, x0, region, dyn, cfg.theory, cfg.use_theorem_params)
        N = tp["N"]
        if "max_iters" in dyn:
            budget = int(dyn["max_iters"])
        else:
            budget = int(min(N, BUDGET_CAP)) if math.isfinite(N) else BUDGET_CAP
        if "unavailable" in tp["bound"]:
            notices.append(f"setting {s}: no theorem bound ({tp['bound']['unavailable']})")
        elif not N <= BUDGET_CAP:
            notices.append(f"setting {s}: N = {N:.4g} exceeds the 1e8 cap; {NOT_TESTABLE}")
        dc = DynamicsConfig(dyn["method"], tp["delta0"], StepSchedule(tp["eta0"], float(dyn["alpha"])), budget,
                            seed=cfg.master_seed)
        check_every = int(dyn.get("check_every", default_check_every(p.dim)))
        records = measure_hitting(p, dc, region, cfg.replicas, check_every, x0=x0, threads=cfg.threads)
        diverged += sum(1 for r in records if r.error)
        total += len(records)
        thresholds = (N,) if math.isfinite(N) else ()
        summ = hitting_summary(records, thresholds=thresholds)
        rho = tp["rho"]
        if thresholds:
            p_hat = summ["exceedance"][f"{N:g}"]["p_hat"]
            limit = rho + 3.0 * math.sqrt(rho * (1.0 - rho) / len(records))
            summ["exceedance_check"] = {"N": N, "p_hat": p_hat, "rho": rho, "limit": limit,
                                        "passed": bool(p_hat <= limit)}
        settings.append({
            "setting": s, "value": value, "dim": p.dim, "epsilon": eps, "delta0": tp["delta0"],
            "eta0": tp["eta0"], "alpha": float(dyn["alpha"]), "N": N, "budget": budget,
            "F0": float(p.loss(x0)), "bound": tp["bound"], "constants": tp["constants"], "summary": summ,
        })
        rows.extend([s, r.replica, r.tau, r.budget] for r in records)
    summary = {"experiment": cfg.experiment, "settings": [
        {k: st[k] for k in ("setting", "value", "dim", "epsilon", "N", "budget", "summary")} for st in settings]}
    if cfg.sweep and len(settings) > 1:
        summary["scaling"] = scaling_table(settings, cfg.sweep["parameter"])
    resolved = cfg.to_dict()
    resolved["settings"] = [{k: v for k, v in st.items() if k != "summary"} for st in settings]
    frac = diverged / total if total else 0.0
    return ExperimentReport(cfg.experiment, ["setting", "replica", "tau", "budget"], rows, summary, resolved,
                            notices, frac)


def scaling_table(settings: list, parameter: str) -> dict:
    """Median hitting time per sweep value and the log-log slope of median against |value|."""
    table = [{"value": st["value"], "median_tau": st["summary"]["quantiles"].get("0.5"), "N": st["N"],
              "eta0": st["eta0"]} for st in settings]
    med = [t["median_tau"] for t in table]
    out = {"parameter": parameter, "table": table, "slope": None, "max_ratio": None}
    if parameter == "epsilon":
        out["exponent"] = None
    if all(m is not None and m > 0 for m in med):
        vals = [float(t["value"]) for t in table]
        out["slope"] = loglog_slope(vals, med)
        if parameter == "epsilon":
            out["exponent"] = -out["slope"]  # tau ~ eps^-exponent
        out["max_ratio"] = max(med) / min(med)
    return out


# saddle escape --------------------------------------------------------------------------

def _saddle_H(p: QuadraticSaddle) -> np.ndarray:
    return np.asarray(p.H, dtype=np.float64)


def run_escape_experiment(H, delta0: float, sched: StepSchedule, replicas: int, *, seed: int = 0, threads: int = 1,
                          times=(), noise_cov=None, lemma: dict | None = None) -> ExperimentReport:
    """SGLD on F(x) = x^T H x from the saddle x = 0, compared with the OU prediction.

    The iterate is recorded at the first iteration whose accumulated step
    mass reaches each time of interest: t* = log(2d) / (4 lambda_max(-2H)),
    log(2d) / (-4 lambda_1(H)) and any extra ``times``.  The OU reference is
    evaluated at the accumulated mass actually reached.  ``lemma`` adds the
    stopped-window check of the descent contract (see ``escape_lemma_check``).
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    if not lam[0] < 0:
        raise ValueError("H needs a negative eigenvalue")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    d = lam.size
    p = QuadraticSaddle(H, noise_cov)
    labels = {"t_star": math.log(2 * d) / (4.0 * float(np.max(np.linalg.eigvalsh(-2.0 * H)))),
              "t_escape": escape_time(H)}
    for i, t in enumerate(times):
        labels[f"t{i}"] = float(t)
    idx = {k: sched.window_end(0, t) for k, t in labels.items()}
    horizon = max(idx.values())
    cfg = DynamicsConfig(Method.SGLD, delta0, sched, horizon, seed=seed)
    res = run_batch(p, cfg, np.zeros(d), replicas, snapshots=sorted(set(idx.values())), threads=threads)
    rows, checks = [], {}
    for k, n in idx.items():
        Xn = res.snapshots[n]
        losses = p.loss(Xn)
        norms = np.linalg.norm(Xn, axis=1)
        mass = sched.mass(1, n)
        ou = ou_expected_loss(H, delta0, mass)
        ci = mean_ci(losses)
        level = -d * delta0**2 / 4.0
        checks[k] = {
            "target_time": labels[k], "iteration": n, "time": mass, "ou_expected_loss": ou, **ci,
            "ou_agrees": bool(abs(ci["mean"] - ou) <= 3.0 * ci["half_width"]),
            "escape_level": level, "below_escape_level": bool(ci["mean"] <= level + 3.0 * ci["half_width"]),
            "max_displacement": float(np.max(norms)),
        }
        rows.extend(["main", int(r), k, n, mass, float(f), float(z)]
                    for r, f, z in zip(res.replicas, losses, norms))
    summary = {"experiment": "escape", "dim": d, "delta0": delta0, "replicas": replicas, "checks": checks,
               "diverged": int(np.sum(res.diverged >= 0))}
    resolved = {"H": H.tolist(), "delta0": delta0, "schedule": sched.to_dict(), "replicas": replicas, "seed": seed,
                "times": labels, "iterations": idx}
    frac = float(np.mean(res.diverged >= 0))
    if lemma is not None:
        lem, lrows = escape_lemma_check(H, sched, seed=seed, threads=threads, **lemma)
        summary["lemma"] = lem
        resolved["lemma"] = {k: v for k, v in lem.items() if k not in ("stopped", "unstopped")}
        rows.extend(lrows)
    return ExperimentReport("escape", ["run", "replica", "label", "iteration", "time", "loss", "norm"], rows,
                            summary, resolved, [], frac)


def escape_lemma_check(H, sched: StepSchedule, *, delta0: float = 0.01, q: float = 0.5, mass_factor: float = 2.0,
                       replicas: int = 200, o: int = 0, seed: int = 0, threads: int = 1):
    """Expected loss over an escape window started at the saddle, stopped and unstopped.

    With lambda_H = lambda_max(-hess F), D4 the positive part of the Hessian
    trace and C3 = ||hess F|| (the Hessian is constant), the window mass is
    mass_factor * D5 with D5 = escape_window(lambda_H, D4), and the stopped
    run halts once ||X_n - X_o|| >= b = q lambda_H / C3.  The contract is
    mean F(X_{n ^ tau_b}) <= F(X_o) - mass * delta0^2.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    hess = 2.0 * H
    ev = np.linalg.eigvalsh(hess)
    lam_H = float(-ev[0])
    D4 = float(np.sum(ev[ev > 0]))
    C3 = float(np.max(np.abs(ev)))
    D5 = escape_window(lam_H, D4)
    n = sched.window_end(o, mass_factor * D5)
    mass = sched.mass(o + 1, n)
    eta_max = float(sched.steps(o + 1, o + 1)[0])
    conditions = {
        "step_condition": bool(eta_max * C3 < 0.5),
        "window_lower": bool(mass >= 2.0 * D5),
        "window_upper": bool(mass <= 3.0 * D5),
    }
    b = q * lam_H / C3
    p = QuadraticSaddle(H)
    x_o = np.zeros(H.shape[0])
    bound = float(p.loss(x_o)) - mass * delta0**2
    cfg = DynamicsConfig(Method.SGLD, delta0, sched, n, seed=seed)
    out = {"lambda_H": lam_H, "D4": D4, "C3": C3, "D5": D5, "o": o, "n": n, "mass": mass, "b": b, "q": q,
           "delta0": delta0, "bound": bound, "conditions": conditions, "replicas": replicas}
    rows = []
    for label, stop in (("stopped", lambda X, k: np.linalg.norm(X - x_o, axis=1) >= b), ("unstopped", None)):
        res = run_batch(p, cfg, x_o, replicas, stop=stop, threads=threads)
        ok = res.diverged < 0
        losses = p.loss(res.final)
        ci = mean_ci(losses[ok]) if ok.any() else {"mean": math.nan, "half_width": math.nan, "sd": math.nan, "n": 0}
        out[label] = {**ci, "diverged": int(np.sum(~ok)), "stopped_early": int(np.sum(res.tau >= 0)),
                      "max_displacement": float(np.max(np.linalg.norm(res.final - x_o, axis=1)))}
        rows.extend([f"lemma_{label}", int(r), "window_end", int(k), sched.mass(o + 1, int(k)) if k > o else 0.0,
                     float(f), float(np.linalg.norm(x))]
                    for r, k, f, x in zip(res.replicas, res.final_index, losses, res.final))
    st = out["stopped"]
    out["contract_holds"] = bool(st["mean"] <= bound + 3.0 * st["half_width"])
    out["unstopped_negative"] = bool(out["unstopped"]["mean"] < 0)
    return out, rows


# ergodicity -----------------------------------------------------------------------------

def empirical_variance(p: Problem, method, sched: StepSchedule, delta0: float, checkpoints, replicas: int, *,
                       seed: int = 0, threads: int = 1, x0=None) -> dict:
    """Per-checkpoint sample variance of the first coordinate, with a standard error.

    The standard error uses the sample fourth central moment.
    """
    checkpoints = sorted(int(c) for c in checkpoints)
    x0 = p.center if x0 is None else np.asarray(x0, dtype=np.float64)
    cfg = DynamicsConfig(method, delta0, sched, checkpoints[-1], seed=seed)
    res = run_batch(p, cfg, x0, replicas, snapshots=checkpoints, threads=threads)
    out = {}
    for n in checkpoints:
        x = res.snapshots[n][:, 0]
        c = x - x.mean()
        v = float(np.mean(c * c)) * replicas / (replicas - 1)
        m4 = float(np.mean(c**4))
        se = math.sqrt(max(m4 - v * v, 0.0) / replicas)
        out[n] = {"variance": v, "stderr": se}
    return out


def run_ergodicity_experiment(p: Problem, sched: StepSchedule, delta0: float, z0, eps: float, budget: int,
                              replicas: int, *, methods=("SGLD", "PGD"), late_after: int = 0, checkpoints=(),
                              seed: int = 0, threads: int = 1, x0=None, check_every: int | None = None,
                              p0: float | None = None) -> ExperimentReport:
    """Visits to the eps-ball around z0 for each method on identical injected noise.

    tau is the first checked iteration inside the ball and tau_late the first
    one after ``late_after`` (equal to tau when late_after = 0).  For the
    scalar quadratic the report adds iterate variances at ``checkpoints``
    against the exact recursion and the stationary per-checkpoint ball
    probability of N(0, delta0^2 / 2).
    """
    z0 = np.atleast_1d(np.asarray(z0, dtype=np.float64))
    if z0.size != p.dim:
        raise ValueError(f"z0 has length {z0.size}, problem dimension is {p.dim}")
    if budget > BUDGET_CAP:
        raise ValueError("budget exceeds the 1e8 cap")
    x0 = p.center if x0 is None else np.asarray(x0, dtype=np.float64)
    check_every = default_check_every(p.dim) if check_every is None else int(check_every)

    eps2 = eps * eps

    def ball(X, n):
        D = X - z0
        return np.einsum("ij,ij->i", D, D) <= eps2

    def late_ball(X, n):
        if n <= late_after:
            return np.zeros(X.shape[0], dtype=bool)
        return ball(X, n)

    rows, per_method, diverged, total = [], {}, 0, 0
    for m in methods:
        m = Method.parse(m)
        cfg = DynamicsConfig(m, delta0, sched, int(budget), seed=seed)
        first = run_batch(p, cfg, x0, replicas, stop=ball, check_every=check_every, threads=threads)
        late = first if late_after == 0 else run_batch(p, cfg, x0, replicas, stop=late_ball,
                                                       check_every=check_every, threads=threads)
        bad = (first.diverged >= 0) | (late.diverged >= 0)
        diverged += int(np.sum(bad))
        total += replicas
        hit = int(np.sum(first.tau >= 0))
        hit_late = int(np.sum(late.tau >= 0))
        per_method[m.value] = {
            "hit_fraction": hit / replicas, "hit_ci": proportion_ci(hit, replicas),
            "late_hit_fraction": hit_late / replicas, "late_hit_ci": proportion_ci(hit_late, replicas),
            "diverged": int(np.sum(bad)),
        }
        rows.extend([m.value, int(r), int(a), int(b), int(budget)]
                    for r, a, b in zip(first.replicas, first.tau, late.tau))
    summary = {"experiment": "ergodicity", "z0": z0.tolist(), "eps": eps, "budget": int(budget),
               "late_after": int(late_after), "replicas": replicas, "methods": per_method}
    if isinstance(p, ScalarQuadratic):
        summary["stationary_ball_probability"] = normal_interval_probability(
            float(z0[0]) * math.sqrt(2.0) / delta0, eps * math.sqrt(2.0) / delta0)
        if checkpoints:
            var = {}
            for m in methods:
                m = Method.parse(m)
                if m not in (Method.SGLD, Method.PGD):
                    continue
                emp = empirical_variance(p, m, sched, delta0, checkpoints, replicas, seed=seed, threads=threads, x0=x0)
                var[m.value] = {str(n): {**v, "predicted": delta0**2 * variance_recursion(m.value, sched, n)}
                                for n, v in emp.items()}
            summary["variance"] = var
    resolved = {"problem": p.describe(), "schedule": sched.to_dict(), "delta0": delta0, "z0": z0.tolist(),
                "eps": eps, "budget": int(budget), "replicas": replicas, "methods": [Method.parse(m).value for m in methods],
                "late_after": int(late_after), "seed": seed, "check_every": check_every}
    if p0 is not None:
        try:
            b = analytic_constants(p, max(1.0, float(np.linalg.norm(x0 - p.center))))
            ec = ergodic_constants(ErgodicBoundInputs(
                c7=b.c7, D7=b.D7, B1=b.B1, B2=b.B2, d=p.dim, delta0=delta0, eta0=sched.eta0, alpha=sched.alpha,
                z0=tuple(z0), eps=eps, p0=p0), problem=p)
            resolved["ergodic_constants"] = ec.to_dict()
        except (ValueError, NotImplementedError) as e:
            resolved["ergodic_constants"] = {"unavailable": str(e)}
    frac = diverged / total if total else 0.0
    return ExperimentReport("ergodicity", ["method", "replica", "tau", "tau_late", "budget"], rows, summary,
                            resolved, [], frac)


# bounds and constants -------------------------------------------------------------------

def run_check_bounds(cfg: ExperimentConfig) -> ExperimentReport:
    """Validator margins for random matrix-product instances plus the theorem constants."""
    opts = cfg.bounds
    count = int(opts.get("instances", 1000))
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.master_seed), spawn_key=(2**31 - 2,)))
    rows, worst, failures = [], {}, 0
    for i in range(count):
        H, etas, o, n = random_hbounds_instance(rng, int(opts.get("max_dim", 10)))
        rep = check_matrix_product_bounds(H, etas, o, n)
        failures += int(not rep.passed)
        for name, c in rep.claims.items():
            rows.append([i, H.shape[0], o, n, name, bool(c.passed), float(c.margin)])
            if c.applicable:
                worst[name] = min(worst.get(name, math.inf), float(c.margin))
    summary = {"experiment": "check_bounds", "instances": count, "failures": failures, "min_margins": worst}
    resolved = cfg.to_dict()
    if cfg.problem is not None:
        p = problem_from_config(cfg.problem)
        x0 = initial_point(p, cfg.x0, _rng_x0(cfg.master_seed))
        theorem = {}
        if cfg.region is not None:
            region = RegionSpec(cfg.region.get("kind", "FOSP"), cfg.region["epsilon"], cfg.region.get("lambda_eps"))
            theorem = theorem_parameters(p, x0, region, cfg.dynamics, cfg.theory, True)
        else:
            theorem = {"constants": resolve_constants(p, x0, cfg.theory).to_dict()}
        resolved["theorem"] = theorem
        summary["theorem"] = theorem
    return ExperimentReport("check_bounds", ["instance", "dim", "o", "n", "claim", "passed", "margin"], rows,
                            summary, resolved)


def run_estimate_constants(cfg: ExperimentConfig) -> ExperimentReport:
    """Analytic and empirical constant bundles with a dominance verdict per constant."""
    opts = cfg.constants
    p = problem_from_config(cfg.problem)
    gamma = float(opts.get("gamma", 2.0))
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.master_seed), spawn_key=(2**31 - 3,)))
    emp = empirical_constants(p, int(opts.get("samples", 20_000)), int(opts.get("points", 20)), gamma, rng,
                              pairs=int(opts.get("pairs", 1000)))
    ana = analytic_constants(p, gamma, c=opts.get("c"))
    dom = dominance(emp, ana)
    coer = coercivity_margins(p, ana, coercivity_points(p, ana, 1000, rng))
    rows = [[k, v["empirical"], v["stderr"], v["analytic"], v["dominated"]] for k, v in dom.items()]
    summary = {"experiment": "estimate_constants", "problem": p.describe(), "gamma": gamma,
               "analytic": ana.to_dict(), "empirical": emp.to_dict(), "dominance": dom,
               "all_dominated": all(v["dominated"] for v in dom.values()), "coercivity": coer}
    return ExperimentReport("estimate_constants", ["constant", "empirical", "stderr", "analytic", "dominated"], rows,
                            summary, cfg.to_dict())


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    exp = cfg.experiment
    if exp in ("hitting_fosp", "hitting_sosp"):
        return run_hitting_experiment(cfg)
    if exp == "escape":
        p = problem_from_config(cfg.problem)
        dyn = cfg.dynamics
        sched = StepSchedule(float(dyn["eta0"]), float(dyn["alpha"]))
        rep = run_escape_experiment(_saddle_H(p), float(dyn["delta0"]), sched, cfg.replicas, seed=cfg.master_seed,
                                    threads=cfg.threads, times=cfg.escape.get("times", ()),
                                    noise_cov=cfg.problem.get("noise_cov"), lemma=cfg.escape.get("lemma"))
        rep.resolved = {**cfg.to_dict(), **rep.resolved}
        return rep
    if exp == "ergodicity":
        p = problem_from_config(cfg.problem)
        dyn, e = cfg.dynamics, cfg.ergodicity
        x0 = None if cfg.x0 is None else initial_point(p, cfg.x0, _rng_x0(cfg.master_seed))
        rep = run_ergodicity_experiment(
            p, StepSchedule(float(dyn["eta0"]), float(dyn["alpha"])), float(dyn["delta0"]), e["z0"], e["eps"],
            int(e.get("budget", 10**6)), cfg.replicas, methods=e.get("methods", ("SGLD", "PGD")),
            late_after=int(e.get("late_after", 0)), checkpoints=e.get("checkpoints", ()), seed=cfg.master_seed,
            threads=cfg.threads, x0=x0, check_every=dyn.get("check_every"), p0=e.get("p0"))
        rep.resolved = {**cfg.to_dict(), **rep.resolved}
        return rep
    if exp == "check_bounds":
        return run_check_bounds(cfg)
    if exp == "estimate_constants":
        return run_estimate_constants(cfg)
    raise ConfigError("$.experiment", f"unknown experiment {exp!r}")
