"""Shared-risk-group failure model and SLO-driven spare sizing.

A shared risk group (SRG) is a set of components that fail together: a
single accelerator, or a whole server with all of its accelerators. Each
group fails independently with a constant probability, either supplied
directly or derived from observed repair/active durations. The number of
simultaneous failures across N groups then follows a Poisson-binomial
distribution, which this module computes exactly with an O(N^2) dynamic
program instead of the O(2^N) sum over failure subsets. Spare capacity is
sized as the smallest K whose tail probability Z(K) = P(at least K groups
fail) is within the SLO budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from lumionsim import _kernels
from lumionsim.errors import DomainError

BRUTE_FORCE_LIMIT = 20


class Granularity(str, Enum):
    """What one shared risk group covers."""

    TPU = "tpu"
    SERVER = "server"


def derive_p_fail(t_repair: float, t_active: float) -> float:
    """Failure probability as the fraction of time a group spends faulty.

    ``t_repair`` is the time the group is down (including repair),
    ``t_active`` the time it is healthy, both in hours.
    """
    if t_repair < 0 or t_active < 0:
        raise DomainError("durations must be nonnegative")
    total = t_active + t_repair
    if total <= 0:
        raise DomainError("total duration must be positive")
    return t_repair / total


@dataclass(frozen=True)
class SrgSpec:
    """One shared risk group with its failure probability."""

    id: str
    granularity: Granularity
    p_fail: float
    t_repair_h: float | None = None
    t_active_h: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_fail <= 1.0:
            raise DomainError(f"p_fail must be in [0, 1], got {self.p_fail}")

    @classmethod
    def from_durations(
        cls, id: str, granularity: Granularity, t_repair_h: float, t_active_h: float
    ) -> SrgSpec:
        p = derive_p_fail(t_repair_h, t_active_h)
        return cls(id, granularity, p, t_repair_h=t_repair_h, t_active_h=t_active_h)


@dataclass(frozen=True)
class SloPolicy:
    """Availability objective: spares must cover failures S = slo/100 of the time."""

    slo_percent: float

    def __post_init__(self):
        if not 0.0 < self.slo_percent <= 100.0:
            raise DomainError(f"slo_percent must be in (0, 100], got {self.slo_percent}")

    @property
    def s(self) -> float:
        return self.slo_percent / 100.0

    @property
    def tail_budget(self) -> float:
        """Largest acceptable probability of the uncovered failure tail."""
        return 1.0 - self.s


class DpMatrix:
    """Exact distribution of the simultaneous-failure count.

    ``rows[i][k]`` is the probability that exactly k of the first i groups
    fail; row i is therefore a probability distribution over k = 0..i.
    """

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise DomainError("dp grid must be square (n+1, n+1)")
        self._rows = rows
        self._tail: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self._rows.shape[0] - 1

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    def tail(self) -> np.ndarray:
        """Suffix sums of the final row: tail[k] = P(at least k failures).

        Length n+2 so tail[n+1] == 0. Accumulated back to front, which
        keeps the sequence non-increasing even under rounding.
        """
        if self._tail is None:
            final = self._rows[self.n]
            tail = np.zeros(self.n + 2)
            tail[: self.n + 1] = np.cumsum(final[::-1])[::-1]
            self._tail = tail
        return self._tail


def _validated_probabilities(p) -> np.ndarray:
    arr = np.asarray(list(p), dtype=np.float64)
    if arr.size and (np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr))):
        raise DomainError("every probability must be in [0, 1]")
    return arr


def build_dp(p) -> DpMatrix:
    """Build the failure-count distribution for per-group probabilities ``p``.

    Runs in time and memory proportional to N^2, which stays tractable at
    N = 10,000 where direct subset enumeration would be astronomically
    expensive.
    """
    arr = _validated_probabilities(p)
    n = arr.size
    rows = np.zeros((n + 1, n + 1), dtype=np.float64)
    rows[0, 0] = 1.0
    if n:
        _kernels.fill_dp(rows, arr)
    return DpMatrix(rows)


def z_of_k(dp: DpMatrix, k: int) -> float:
    """Probability that at least ``k`` of the modeled groups fail.

    Defined for 0 <= k <= n+1, with z(0) == 1 and z(n+1) == 0 exactly.
    """
    if not 0 <= k <= dp.n + 1:
        raise DomainError(f"k must be in [0, {dp.n + 1}], got {k}")
    if k == 0:
        return 1.0
    return float(min(1.0, dp.tail()[k]))


def brute_force_z(p, k: int) -> float:
    """Tail probability by direct enumeration of all failure subsets.

    Exponential-time oracle used to validate the dynamic program; refuses
    populations larger than 20 groups.
    """
    arr = _validated_probabilities(p)
    n = arr.size
    if n > BRUTE_FORCE_LIMIT:
        raise DomainError(f"brute-force oracle limited to N <= {BRUTE_FORCE_LIMIT}")
    if k < 0:
        raise DomainError("k must be nonnegative")
    if n == 0:
        return 1.0 if k == 0 else 0.0
    masks = np.arange(1 << n, dtype=np.uint32)
    bits = (masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1
    subset_probs = np.where(bits == 1, arr, 1.0 - arr).prod(axis=1)
    failure_counts = bits.sum(axis=1)
    return float(subset_probs[failure_counts >= k].sum())


def min_spares(p, slo: SloPolicy) -> int:
    """Smallest spare count K with z_of_k(K) within the SLO tail budget.

    Returns N+1 when even N spares cannot meet the objective (every group
    may need replacing more often than the SLO tolerates).
    """
    dp = build_dp(p)
    budget = slo.tail_budget
    for k in range(1, dp.n + 1):
        if z_of_k(dp, k) <= budget:
            return k
    return dp.n + 1


def sample_probabilities(n: int, prange: tuple[float, float], rng) -> list[float]:
    """Draw n failure probabilities uniformly from [lo, hi]."""
    lo, hi = prange
    if not (0.0 <= lo <= hi <= 1.0):
        raise DomainError(f"probability range must satisfy 0 <= lo <= hi <= 1, got {prange}")
    return [lo + rng.random() * (hi - lo) for _ in range(n)]


def load_population(source) -> list[SrgSpec]:
    """Read a shared-risk-group population from a JSON document.

    Accepts a path, a JSON string, or an already-parsed list of records.
    Each record is either {id, granularity, p_fail} or
    {id, granularity, t_repair_h, t_active_h}.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.exists():
            records = json.loads(path.read_text())
        else:
            records = json.loads(str(source))
    else:
        records = source
    if not isinstance(records, list):
        raise DomainError("population document must be a JSON list of records")
    population = []
    for i, rec in enumerate(records):
        try:
            gran = Granularity(str(rec["granularity"]).lower())
        except (KeyError, ValueError) as exc:
            raise DomainError(f"record {i}: bad or missing granularity") from exc
        rid = str(rec.get("id", i))
        if "p_fail" in rec:
            population.append(SrgSpec(rid, gran, float(rec["p_fail"])))
        elif "t_repair_h" in rec and "t_active_h" in rec:
            population.append(
                SrgSpec.from_durations(
                    rid, gran, float(rec["t_repair_h"]), float(rec["t_active_h"])
                )
            )
        else:
            raise DomainError(
                f"record {i}: need p_fail or both t_repair_h and t_active_h"
            )
    return population
