"""Approximate first/second order stationary points and hitting times.

A point is an eps-FOSP when ||grad F(x)|| <= eps and an (eps, lambda)-SOSP
when additionally lambda_min(hess F(x)) >= -lambda.  Both tests use the
population gradient and Hessian and treat the boundary as inside.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass

import numpy as np

from langevin_lab.dynamics import DynamicsConfig, run_batch
from langevin_lab.problems import Problem

CENSORED = -1
DENSE_LIMIT = 512


class RegionKind(str, enum.Enum):
    FOSP = "FOSP"
    SOSP = "SOSP"


@dataclass(frozen=True)
class RegionSpec:
    kind: RegionKind
    epsilon: float
    lambda_eps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RegionKind(str(getattr(self.kind, "value", self.kind)).upper()))
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if self.kind is RegionKind.SOSP and not (self.lambda_eps is not None and self.lambda_eps > 0):
            raise ValueError("an SOSP region needs lambda_eps > 0")

    def to_dict(self):
        return {"kind": self.kind.value, "epsilon": self.epsilon, "lambda_eps": self.lambda_eps}


@dataclass
class HittingRecord:
    replica: int
    tau: int
    budget: int
    witness: np.ndarray | None = None
    error: str | None = None

    @property
    def censored(self) -> bool:
        return self.tau == CENSORED


def is_fosp(p: Problem, x, eps: float):
    """||grad F(x)|| <= eps; vectorised over leading axes of x."""
    g = p.grad(x)
    ok = np.einsum("...i,...i->...", g, g) <= eps * eps
    return bool(ok) if np.ndim(ok) == 0 else ok


def _power_min_eig(H: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    # the top eigenvalue of cI - H is c - lambda_min(H) when c bounds the spectrum
    c = float(np.max(np.sum(np.abs(H), axis=1)))
    if c == 0.0:
        return 0.0
    B = c * np.eye(H.shape[0]) - H
    v = np.random.default_rng(seed).standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    mu = float(v @ B @ v)
    for _ in range(max_iter):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        mu_new = float(v @ B @ v)
        if abs(mu_new - mu) <= tol * c:
            mu = mu_new
            break
        mu = mu_new
    return c - mu


def min_eig(Hm, method: str = "auto") -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Dense eigensolve up to dimension 512, shifted power iteration above
    (``method`` may force "dense" or "power").
    """
    H = np.asarray(Hm, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = np.linalg.norm(H, 2) if H.size else 0.0
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    if method == "auto":
        method = "dense" if H.shape[0] <= DENSE_LIMIT else "power"
    if method == "dense":
        return float(np.linalg.eigvalsh(H)[0])
    if method == "power":
        return _power_min_eig(0.5 * (H + H.T))
    raise ValueError(f"unknown method {method!r}")


def is_sosp(p: Problem, x, spec: RegionSpec):
    """FOSP test plus lambda_min(hess F) >= -lambda_eps; vectorised over leading axes."""
    if spec.kind is not RegionKind.SOSP:
        raise ValueError("is_sosp needs an SOSP region spec")
    x = np.asarray(x, dtype=np.float64)
    ok = np.asarray(is_fosp(p, x, spec.epsilon))
    flat_ok = ok.reshape(-1).copy()
    xs = x.reshape(-1, p.dim)
    cand = np.flatnonzero(flat_ok)
    if cand.size:
        if p.dim <= DENSE_LIMIT:
            lam = np.linalg.eigvalsh(p.hessian(xs[cand]))[:, 0]
        else:
            lam = np.array([min_eig(p.hessian(xs[i])) for i in cand])
        flat_ok[cand] = lam >= -spec.lambda_eps
    out = flat_ok.reshape(ok.shape)
    return bool(out) if out.ndim == 0 else out


def region_predicate(p: Problem, spec: RegionSpec):
    if spec.kind is RegionKind.FOSP:
        return lambda X, n: is_fosp(p, X, spec.epsilon)
    return lambda X, n: is_sosp(p, X, spec)


def default_check_every(d: int) -> int:
    return 1 if d <= 64 else 10


def measure_hitting(p: Problem, cfg: DynamicsConfig, spec: RegionSpec, replicas: int, check_every: int | None = None,
                    *, x0=None, threads: int = 1) -> list[HittingRecord]:
    """First checked iteration in the region for each replica (CENSORED if never)."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if check_every is None:
        check_every = default_check_every(p.dim)
    if check_every < 1:
        raise ValueError("check_every must be >= 1")
    x0 = p.center if x0 is None else np.asarray(x0, dtype=np.float64)
    res = run_batch(p, cfg, x0, replicas, stop=region_predicate(p, spec), check_every=check_every, threads=threads)
    out = []
    for i, r in enumerate(res.replicas):
        if res.diverged[i] >= 0:
            out.append(HittingRecord(int(r), CENSORED, int(cfg.max_iters), None,
                                     f"diverged at iteration {int(res.diverged[i])}"))
        elif res.tau[i] >= 0:
            out.append(HittingRecord(int(r), int(res.tau[i]), int(cfg.max_iters), res.final[i].copy()))
        else:
            out.append(HittingRecord(int(r), CENSORED, int(cfg.max_iters)))
    return out


def exceedance(records: list[HittingRecord], N: float) -> float:
    """Fraction of replicas with tau >= N, counting censored ones as late.

    Exact whenever N <= budget or no replica is censored; otherwise an
    upper bound.
    """
    late = sum(1 for r in records if r.censored or r.tau >= N)
    return late / len(records)


def hitting_summary(records: list[HittingRecord], thresholds=(), quantiles=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
    """Quantiles of tau (censored values counted as +inf) and exceedance fractions."""
    taus = np.array([np.inf if r.censored else r.tau for r in records], dtype=np.float64)
    qs = {}
    for q in quantiles:
        v = float(np.quantile(taus, q, method="inverted_cdf"))
        qs[f"{q:g}"] = v if np.isfinite(v) else None
    budget = max(r.budget for r in records)
    exc = {}
    for N in thresholds:
        exc[f"{N:g}"] = {"p_hat": exceedance(records, N), "exact": bool(N <= budget or np.isfinite(taus).all())}
    return {
        "replicas": len(records),
        "hit": int(np.isfinite(taus).sum()),
        "censored": int((~np.isfinite(taus)).sum()),
        "errors": sum(1 for r in records if r.error),
        "budget": int(budget),
        "quantiles": qs,
        "exceedance": exc,
    }


def write_hitting_csv(path, records: list[HittingRecord], setting: int = 0, append: bool = False):
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["setting", "replica", "tau", "budget"])
        for r in records:
            w.writerow([setting, r.replica, r.tau, r.budget])


def read_hitting_csv(path) -> dict[int, list[HittingRecord]]:
    out: dict[int, list[HittingRecord]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = HittingRecord(int(row["replica"]), int(row["tau"]), int(row["budget"]))
            out.setdefault(int(row["setting"]), []).append(rec)
    return out


def dump_summary(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
