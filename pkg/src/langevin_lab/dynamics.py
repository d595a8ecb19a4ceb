"""SGLD and its comparators (SGD, ULA, PGD) plus trajectory runners.

Update rules, with eta = eta_{n+1} and zeta ~ N(0, I):

    SGLD  x - eta * sample_grad(x) + delta0 * sqrt(eta) * zeta
    SGD   SGLD with delta0 = 0
    ULA   x - eta * grad(x)        + delta0 * sqrt(eta) * zeta
    PGD   x - eta * grad(x)        + delta0 * eta * zeta

Randomness for replica r comes from two generators derived from
(seed, r): one for the injected noise zeta and one for the stochastic
gradient.  The injected noise is therefore the same sequence for every
method at a given seed, which is what the SGLD/PGD comparisons rely on.

``run`` is the plain per-step reference loop.  ``run_batch`` advances many
replicas at once on stacked arrays; it draws each replica's normals from that
replica's own generators, so results do not depend on batching or threads.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from langevin_lab.problems import Problem
from langevin_lab.schedule import StepSchedule

DIVERGENCE_FACTOR = 1e6


class Method(str, enum.Enum):
    SGLD = "SGLD"
    SGD = "SGD"
    ULA = "ULA"
    PGD = "PGD"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected one of {[m.value for m in cls]}") from None

    @property
    def stochastic(self) -> bool:
        return self in (Method.SGLD, Method.SGD)


@dataclass(frozen=True)
class DynamicsConfig:
    method: Method
    delta0: float
    schedule: StepSchedule
    max_iters: int
    seed: int = 0
    thin: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not (self.delta0 >= 0 and math.isfinite(self.delta0)):
            raise ValueError(f"delta0 must be a nonnegative real, got {self.delta0}")
        if int(self.max_iters) < 0:
            raise ValueError("max_iters must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def effective_delta0(self) -> float:
        return 0.0 if self.method is Method.SGD else float(self.delta0)

    @property
    def thinning(self) -> int:
        if self.thin is not None:
            return max(1, int(self.thin))
        return max(1, int(self.max_iters) // 10_000)

    def noise_scale(self, eta):
        """Multiplier of zeta for step size eta (scalar or array)."""
        d0 = self.effective_delta0
        if self.method is Method.PGD:
            return d0 * eta
        return d0 * np.sqrt(eta)

    def to_dict(self) -> dict:
        return {"method": self.method.value, "delta0": self.delta0, **self.schedule.to_dict(),
                "max_iters": int(self.max_iters), "seed": int(self.seed)}


class DivergenceError(RuntimeError):
    def __init__(self, index: int, replica: int | None = None, detail: str = ""):
        self.index = index
        self.replica = replica
        where = f" in replica {replica}" if replica is not None else ""
        super().__init__(f"iterate diverged at iteration {index}{where}{': ' + detail if detail else ''}")


@dataclass
class Streams:
    zeta: np.random.Generator
    omega: np.random.Generator


def replica_streams(seed: int, replica: int) -> Streams:
    """Independent generators for the injected noise and the gradient noise."""
    def make(channel):
        return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replica), channel)))
    return Streams(zeta=make(0), omega=make(1))


def step(method, p: Problem, x, n: int, cfg: DynamicsConfig, rng) -> np.ndarray:
    """X_{n+1} from X_n = x.

    ``rng`` is either a ``Streams`` pair or a single generator used for both
    the stochastic gradient and the injected noise.
    """
    method = Method.parse(method)
    if n < 0:
        raise ValueError("iteration index must be >= 0")
    if isinstance(rng, Streams):
        zeta_rng, omega_rng = rng.zeta, rng.omega
    else:
        zeta_rng = omega_rng = rng
    x = p._check(x)
    eta = cfg.schedule.step_at(n + 1)
    g = p.sample_grad(x, omega_rng) if method.stochastic else p.grad(x)
    zeta = zeta_rng.standard_normal(x.shape)
    d0 = 0.0 if method is Method.SGD else cfg.delta0
    scale = d0 * eta if method is Method.PGD else d0 * math.sqrt(eta)
    return x - eta * g + scale * zeta


@dataclass
class Trajectory:
    iterations: list[int]
    iterates: list[np.ndarray]
    losses: list[float]
    grad_norms: list[float]
    stop_reason: str
    final_index: int

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


StopFn = Callable[[np.ndarray, int], object]


def _divergence_limit(x0: np.ndarray) -> float:
    return DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(x0)))


def run(p: Problem, cfg: DynamicsConfig, x0, stop: StopFn | None = None, *, replica: int = 0,
        radius: float | None = None, full: bool = False) -> Trajectory:
    """Single trajectory, one step at a time.

    ``stop(x, n)`` is evaluated at every iteration including n = 0.  When
    ``radius`` is given the run also ends once ||x - x0|| >= radius.
    """
    x = p._check(np.array(x0, dtype=np.float64, copy=True))
    if x.ndim != 1:
        raise ValueError("run expects a single initial point")
    streams = replica_streams(cfg.seed, replica)
    limit = _divergence_limit(x)
    thin = 1 if full else cfg.thinning
    traj = Trajectory([], [], [], [], "budget", 0)

    def record(n, x):
        traj.iterations.append(n)
        traj.iterates.append(x.copy())
        traj.losses.append(float(p.loss(x)))
        traj.grad_norms.append(float(np.linalg.norm(p.grad(x))))

    x_start = x.copy()
    n = 0
    while True:
        if stop is not None and bool(stop(x, n)):
            traj.stop_reason = "region_hit"
            break
        if radius is not None and np.linalg.norm(x - x_start) >= radius:
            traj.stop_reason = "radius_exceeded"
            break
        if n >= cfg.max_iters:
            break
        if n % thin == 0:
            record(n, x)
        x = step(cfg.method, p, x, n, cfg, streams)
        n += 1
        nrm = float(np.linalg.norm(x))
        if not nrm <= limit:
            raise DivergenceError(n, replica, f"||x|| = {nrm:.3g}")
    if not traj.iterations or traj.iterations[-1] != n:
        record(n, x)
    traj.final_index = n
    return traj


@dataclass
class BatchResult:
    """Outcome of advancing a block of replicas.

    tau[i] is the first checked iteration at which the stop predicate held
    (-1 if never); diverged[i] is the iteration of divergence (-1 if none);
    final_index[i] is where replica i stopped advancing.
    """

    replicas: np.ndarray
    tau: np.ndarray
    diverged: np.ndarray
    final_index: np.ndarray
    final: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def concat(parts: list["BatchResult"]) -> "BatchResult":
        keys = sorted(set().union(*[p.snapshots for p in parts])) if parts else []
        return BatchResult(
            replicas=np.concatenate([p.replicas for p in parts]),
            tau=np.concatenate([p.tau for p in parts]),
            diverged=np.concatenate([p.diverged for p in parts]),
            final_index=np.concatenate([p.final_index for p in parts]),
            final=np.concatenate([p.final for p in parts]),
            snapshots={k: np.concatenate([p.snapshots[k] for p in parts]) for k in keys},
        )


def _chunk_len(n_rep: int, width: int) -> int:
    # keep pre-drawn normals around 64 MB
    return int(np.clip(8_000_000 // max(1, n_rep * width), 16, 4096))


def _draw(gens: list[np.random.Generator], L: int, k: int) -> np.ndarray:
    # replica-major so each generator fills a contiguous block
    out = np.empty((len(gens), L, k))
    for j, g in enumerate(gens):
        g.standard_normal(out=out[j])
    return out


def _run_block(p: Problem, cfg: DynamicsConfig, x0: np.ndarray, reps: np.ndarray, stop, check_every: int,
               snapshots: tuple[int, ...]) -> BatchResult:
    R, d = reps.size, p.dim
    method = cfg.method
    use_omega = method.stochastic and p.noise_size > 0
    use_zeta = cfg.effective_delta0 > 0
    streams = [replica_streams(cfg.seed, int(r)) for r in reps]
    zgens = [s.zeta for s in streams]
    wgens = [s.omega for s in streams]

    X = np.array(np.broadcast_to(x0, (R, d)), dtype=np.float64)
    lim2 = _divergence_limit(x0) ** 2
    tau = np.full(R, -1, dtype=np.int64)
    diverged = np.full(R, -1, dtype=np.int64)
    final_index = np.full(R, int(cfg.max_iters), dtype=np.int64)
    snaps = {}
    snap_set = set(int(s) for s in snapshots)
    if 0 in snap_set:
        snaps[0] = X.copy()

    idx = np.arange(R)
    if stop is not None:
        hit = np.asarray(stop(X, 0), dtype=bool).reshape(R)
        tau[hit] = 0
        final_index[hit] = 0
        idx = idx[~hit]
    Xa = X[idx]
    width = d + (p.noise_size if use_omega else 0)
    chunk = _chunk_len(max(1, R), width)
    n = 0
    while n < cfg.max_iters and idx.size:
        L = min(chunk, cfg.max_iters - n)
        etas = cfg.schedule.steps(n + 1, n + L)
        scales = cfg.noise_scale(etas)
        Z = _draw([zgens[i] for i in idx], L, d) if use_zeta else None
        W = _draw([wgens[i] for i in idx], L, p.noise_size) if use_omega else None
        for k in range(L):
            G = p._grad_from_normals(Xa, W[:, k]) if use_omega else p._grad(Xa)
            Xa -= etas[k] * G
            if use_zeta:
                Xa += scales[k] * Z[:, k]
            n += 1
            ok = np.einsum("ij,ij->i", Xa, Xa) <= lim2
            drop = None
            if not ok.all():
                drop = ~ok
                diverged[idx[drop]] = n
                final_index[idx[drop]] = n
                X[idx[drop]] = Xa[drop]
            if n in snap_set:
                X[idx] = Xa
                snaps[n] = X.copy()
            if stop is not None and n % check_every == 0:
                if drop is None:
                    hit = np.asarray(stop(Xa, n), dtype=bool).reshape(-1)
                else:
                    hit = np.zeros(idx.size, dtype=bool)
                    if ok.any():
                        hit[ok] = np.asarray(stop(Xa[ok], n), dtype=bool).reshape(-1)
                if hit.any():
                    tau[idx[hit]] = n
                    final_index[idx[hit]] = n
                    drop = hit if drop is None else drop | hit
            if drop is not None:
                X[idx[drop]] = Xa[drop]
                keep = ~drop
                idx, Xa = idx[keep], Xa[keep]
                if use_zeta:
                    Z = Z[keep]
                if use_omega:
                    W = W[keep]
                if not idx.size:
                    break
    X[idx] = Xa
    return BatchResult(reps.copy(), tau, diverged, final_index, X, snaps)


def run_batch(p: Problem, cfg: DynamicsConfig, x0, replicas: int, *, stop: StopFn | None = None,
              check_every: int = 1, snapshots=(), replica_offset: int = 0, threads: int = 1) -> BatchResult:
    """Advance ``replicas`` independent copies started at x0.

    Replica indices are replica_offset, ..., replica_offset + replicas - 1 and
    determine the random streams.  Replicas stop advancing once ``stop``
    fires (checked at n = 0 and every ``check_every`` iterations) or they
    diverge.  ``snapshots`` lists iterations at which to copy all iterates.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if check_every < 1:
        raise ValueError("check_every must be >= 1")
    x0 = p._check(np.asarray(x0, dtype=np.float64)).reshape(-1)
    reps = np.arange(replica_offset, replica_offset + replicas)
    snapshots = tuple(sorted(int(s) for s in snapshots))
    threads = max(1, min(int(threads), replicas))
    if threads == 1:
        return _run_block(p, cfg, x0, reps, stop, check_every, snapshots)
    blocks = np.array_split(reps, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda b: _run_block(p, cfg, x0, b, stop, check_every, snapshots), blocks))
    return BatchResult.concat(parts)


def write_trajectory_csv(path, trajectories, problem: Problem | None = None, with_hessian: bool = False):
    """Rows replica, iteration, loss, grad_norm, min_hessian_eig (blank unless computed)."""
    from langevin_lab.stationarity import min_eig

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "iteration", "loss", "grad_norm", "min_hessian_eig"])
        for replica, traj in trajectories:
            for n, x, f, g in zip(traj.iterations, traj.iterates, traj.losses, traj.grad_norms):
                lam = ""
                if with_hessian and problem is not None:
                    lam = repr(min_eig(problem.hessian(x)))
                w.writerow([replica, n, repr(f), repr(g), lam])
