"""Power-law step-size schedules eta_n = eta0 * n**(-alpha).

Iterations are 1-indexed: eta_1 is the step that produces X_1 from X_0.
Partial sums are formed by correctly rounded summation of the individual
steps, so that window and bound checks do not depend on summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Largest number of steps materialised at once when summing long ranges.
_BLOCK = 1 << 20
# Windows needing more iterations than this are rejected rather than searched.
WINDOW_LIMIT = 1e10


@dataclass(frozen=True)
class PartialSums:
    lo: int
    hi: int
    sum_eta: float
    sum_eta_sq: float


@dataclass(frozen=True)
class StepSchedule:
    eta0: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.eta0) and self.eta0 > 0):
            raise ValueError(f"eta0 must be positive and finite, got {self.eta0}")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    def step_at(self, n: int) -> float:
        """eta_n for a single 1-based iteration index."""
        n = int(n)
        if n < 1:
            raise ValueError(f"iteration index must be >= 1, got {n}")
        return float(self.steps(n, n)[0])

    def steps(self, lo: int, hi: int) -> np.ndarray:
        """Array [eta_lo, ..., eta_hi] (inclusive)."""
        lo, hi = int(lo), int(hi)
        if lo < 1:
            raise ValueError(f"iteration index must be >= 1, got {lo}")
        if hi < lo:
            return np.empty(0)
        if self.alpha == 0.0:
            return np.full(hi - lo + 1, float(self.eta0))
        n = np.arange(lo, hi + 1, dtype=np.float64)
        return self.eta0 * np.power(n, -self.alpha)

    def cumulative(self, lo: int, hi: int) -> PartialSums:
        """Exact partial sums of eta_i and eta_i**2 over lo <= i <= hi."""
        lo, hi = int(lo), int(hi)
        if lo < 1:
            raise ValueError(f"lo must be >= 1, got {lo}")
        if lo > hi:
            raise ValueError(f"lo={lo} exceeds hi={hi}")
        s1, s2 = [], []
        for a in range(lo, hi + 1, _BLOCK):
            eta = self.steps(a, min(hi, a + _BLOCK - 1))
            s1.append(math.fsum(eta))
            s2.append(math.fsum(eta * eta))
        return PartialSums(lo, hi, math.fsum(s1), math.fsum(s2))

    def mass(self, lo: int, hi: int) -> float:
        """eta_{lo:hi}, with the empty-range convention mass(lo, lo - 1) = 0."""
        if hi < lo:
            return 0.0
        return self.cumulative(lo, hi).sum_eta

    def window_end(self, o: int, target: float) -> int:
        """Smallest n > o with eta_{o+1:n} >= target."""
        o = int(o)
        if o < 0:
            raise ValueError(f"o must be >= 0, got {o}")
        if not target > 0:
            raise ValueError(f"target must be positive, got {target}")
        p = 1.0 - self.alpha
        bound = (target * p / self.eta0 + (o + 1.0) ** p) ** (1.0 / p)
        if bound > WINDOW_LIMIT:
            raise ValueError(f"step mass {target:g} after {o} needs up to {bound:.3g} iterations")
        # Locate the crossing with a running cumsum, then settle it with exact sums.
        total = 0.0
        a = o + 1
        block = 1024
        while True:
            eta = self.steps(a, a + block - 1)
            run = total + np.cumsum(eta)
            hit = np.flatnonzero(run >= target)
            if hit.size:
                n = a + int(hit[0])
                break
            total = float(run[-1])
            a += block
            block = min(2 * block, _BLOCK)
        while n > o + 1 and self.mass(o + 1, n - 1) >= target:
            n -= 1
        while self.mass(o + 1, n) < target:
            n += 1
        return n

    def to_dict(self) -> dict:
        return {"eta0": self.eta0, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "StepSchedule":
        return cls(float(d["eta0"]), float(d.get("alpha", 0.0)))


def integral_bracket(sched: StepSchedule, N: int) -> tuple[float, float]:
    """Lower and upper integral bounds on eta_{1:N} for 0 < alpha < 1."""
    a = sched.alpha
    if a == 0.0:
        return sched.eta0 * N, sched.eta0 * N
    core = (N ** (1.0 - a) - 1.0) / (1.0 - a)
    return sched.eta0 * core, sched.eta0 * (1.0 + core)
