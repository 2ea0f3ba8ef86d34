"""Multi-rack failure simulation and policy comparison.

Each simulated rack is filled with slices, hit with a random set of
accelerator failures, and handled under three policies:

* ``lumion``   - patch in place: every failed accelerator is replaced by a
  spare on the rack's extra server, with optical circuits routed to the
  failed unit's in-slice neighbors.
* ``tpu_migration`` - move every affected job to fresh hardware, consuming
  one replacement accelerator per slice member.
* ``kubernetes``    - evict each server holding a failure and replace it
  with a free 8-accelerator server.

Overprovisioning is replacement accelerators consumed minus accelerators
actually failed. A recovery timeline model splits the reaction time into
detection, spare search, fabric reconfiguration, and software restart.
"""

from __future__ import annotations

import os
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from lumionsim.errors import DomainError
from lumionsim.fabric import (
    Coord,
    RackTopology,
    SliceAllocation,
    SliceDistribution,
    SparePlacement,
    build_rack,
)
from lumionsim.failure import Granularity
from lumionsim.routing import (
    DEFAULT_BUDGET_MS,
    DEFAULT_MAX_HOPS,
    FiberGraph,
    replacement_requests,
    route_exact,
    sample_rack_state,
)
from lumionsim.seeds import derive_seed

KUBERNETES_SERVER_SIZE = 8
DEFAULT_SPARE_PLACEMENT: Coord = (0, -1, 1)
THREADS_ENV_VAR = "LUMION_BENCH_THREADS"


class Policy(str, Enum):
    LUMION = "lumion"
    TPU_MIGRATION = "tpu_migration"
    KUBERNETES = "kubernetes"


@dataclass(frozen=True)
class FailureEvent:
    """Failed accelerators in one rack."""

    rack_id: int
    failed_tpus: frozenset[Coord]
    srg_granularity: Granularity = Granularity.TPU


@dataclass(frozen=True)
class PolicyOutcome:
    """What one policy spent handling one rack's failures."""

    policy: Policy
    replacements: int
    failed: int
    overprovisioning: int
    extra_fibers: int = 0
    feasible: bool = True
    stranded_healthy: int = 0

    @property
    def overprovisioning_with_stranded(self) -> int:
        """Alternative accounting that also counts healthy accelerators
        stranded on evicted servers."""
        return self.overprovisioning + self.stranded_healthy


@dataclass(frozen=True)
class RecoveryTimeline:
    """Phases of one in-place recovery, in seconds."""

    t_detect: float = 0.0
    t_spare_search: float = 0.0
    t_reconfigure: float = 1.0
    t_software_restart: float = 0.0

    def __post_init__(self):
        for name in ("t_detect", "t_spare_search", "t_reconfigure", "t_software_restart"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")

    @property
    def total(self) -> float:
        return self.t_detect + self.t_spare_search + self.t_reconfigure + self.t_software_restart

    @property
    def reconfigure_fraction(self) -> float:
        """Share of the total reaction time spent reprogramming the fabric."""
        return self.t_reconfigure / self.total if self.total > 0 else 0.0


def recovery_timeline(
    t_detect: float = 0.0,
    t_spare_search: float = 0.0,
    t_reconfigure: float = 1.0,
    t_software_restart: float = 0.0,
) -> RecoveryTimeline:
    """Build a recovery timeline from configurable phase durations."""
    return RecoveryTimeline(t_detect, t_spare_search, t_reconfigure, t_software_restart)


def _allocations_by_tpu(allocations) -> dict[Coord, SliceAllocation]:
    return {t: a for a in allocations for t in a.tpus}


def apply_lumion(
    rack: RackTopology,
    allocations: list[SliceAllocation],
    event: FailureEvent,
    budget_ms: float = DEFAULT_BUDGET_MS,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> PolicyOutcome:
    """Patch failures in place using the rack's spare server.

    Each failed accelerator is matched to a distinct free spare and the
    replacement circuits are routed with the exact minimizer. When there
    are more failures than spares the outcome is marked infeasible and
    only the matched subset is patched.
    """
    if not rack.spare_servers:
        raise DomainError("lumion policy needs a rack built with a spare server")
    failed = sorted(event.failed_tpus)
    spares = [t for t in rack.spare_tpus if t not in event.failed_tpus]
    matched = list(zip(failed, spares))
    alloc_of = _allocations_by_tpu(allocations)
    failed_set = frozenset(failed)
    requests = []
    for f, spare in matched:
        alloc = alloc_of.get(f)
        if alloc is None:
            raise DomainError(f"failed TPU {f} is not in any allocated slice")
        requests.extend(
            replacement_requests(rack, alloc, f, spare, exclude=failed_set)
        )
    graph = FiberGraph.from_rack(rack, allocations)
    plan = route_exact(graph, requests, budget_ms=budget_ms, max_hops=max_hops)
    return PolicyOutcome(
        policy=Policy.LUMION,
        replacements=len(matched),
        failed=len(failed),
        overprovisioning=len(matched) - len(failed),
        extra_fibers=plan.total_extra,
        feasible=len(matched) == len(failed),
    )


def apply_tpu_migration(
    allocations: list[SliceAllocation], event: FailureEvent
) -> PolicyOutcome:
    """Migrate every slice touched by a failure to fresh accelerators."""
    alloc_of = _allocations_by_tpu(allocations)
    affected: set[SliceAllocation] = set()
    for f in event.failed_tpus:
        alloc = alloc_of.get(f)
        if alloc is None:
            raise DomainError(f"failed TPU {f} is not in any allocated slice")
        affected.add(alloc)
    replacements = sum(a.size for a in affected)
    failed = len(event.failed_tpus)
    return PolicyOutcome(
        policy=Policy.TPU_MIGRATION,
        replacements=replacements,
        failed=failed,
        overprovisioning=replacements - failed,
    )


def apply_kubernetes(
    rack: RackTopology, allocations: list[SliceAllocation], event: FailureEvent
) -> PolicyOutcome:
    """Evict servers holding failures; replacements come as 8-accelerator servers.

    Overprovisioning counts only the replacement accelerators; healthy
    allocated accelerators stranded on evicted servers are reported
    separately under the alternative accounting.
    """
    evicted = {rack.server_of(f) for f in event.failed_tpus}
    allocated = {t for a in allocations for t in a.tpus}
    stranded = sum(
        1
        for t in allocated
        if rack.server_of(t) in evicted and t not in event.failed_tpus
    )
    replacements = KUBERNETES_SERVER_SIZE * len(evicted)
    failed = len(event.failed_tpus)
    return PolicyOutcome(
        policy=Policy.KUBERNETES,
        replacements=replacements,
        failed=failed,
        overprovisioning=replacements - failed,
        stranded_healthy=stranded,
    )


@dataclass(frozen=True)
class RackRecord:
    """Per-rack, per-policy simulation outcome row."""

    rack_id: int
    policy: Policy
    failed: int
    replacements: int
    overprovisioning: int
    extra_fibers: int
    feasible: bool


@dataclass
class ScenarioReport:
    """Aggregated scenario results plus the raw per-rack records."""

    racks: int
    seed: int
    policies: tuple[Policy, ...]
    records: list[RackRecord]
    aggregates: dict[str, dict[str, float]] = field(default_factory=dict)
    spare_racks_touched: int = 0
    kernel_backend: str = ""

    def recompute_aggregates(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for policy in self.policies:
            vals = [r.overprovisioning for r in self.records if r.policy == policy]
            out[policy.value] = {
                "mean_overprovisioning": statistics.fmean(vals) if vals else 0.0,
                "std_overprovisioning": statistics.pstdev(vals) if vals else 0.0,
                "mean_extra_fibers": statistics.fmean(
                    [r.extra_fibers for r in self.records if r.policy == policy]
                )
                if vals
                else 0.0,
                "racks": float(len(vals)),
            }
        return out


_POLICY_ORDER = (Policy.LUMION, Policy.TPU_MIGRATION, Policy.KUBERNETES)


def simulate_rack(
    rack_id: int,
    seed: int,
    rack: RackTopology,
    distribution: SliceDistribution,
    failure_range: tuple[int, int],
    policies: tuple[Policy, ...],
    budget_ms: float,
    max_hops: int,
) -> list[RackRecord]:
    """Simulate one rack under its derived seed and evaluate each policy."""
    rng = random.Random(derive_seed(seed, rack_id))
    allocations, failed = sample_rack_state(rng, distribution, failure_range)
    event = FailureEvent(rack_id=rack_id, failed_tpus=frozenset(failed))
    records = []
    for policy in _POLICY_ORDER:
        if policy not in policies:
            continue
        if policy is Policy.LUMION:
            outcome = apply_lumion(rack, allocations, event, budget_ms, max_hops)
        elif policy is Policy.TPU_MIGRATION:
            outcome = apply_tpu_migration(allocations, event)
        else:
            outcome = apply_kubernetes(rack, allocations, event)
        records.append(
            RackRecord(
                rack_id=rack_id,
                policy=policy,
                failed=outcome.failed,
                replacements=outcome.replacements,
                overprovisioning=outcome.overprovisioning,
                extra_fibers=outcome.extra_fibers,
                feasible=outcome.feasible,
            )
        )
    return records


def _simulate_chunk(args) -> list[RackRecord]:
    rack_ids, seed, placement, distribution, failure_range, policies, budget_ms, max_hops = args
    rack = build_rack(SparePlacement(placement))
    out = []
    for rack_id in rack_ids:
        out.extend(
            simulate_rack(
                rack_id, seed, rack, distribution, failure_range,
                policies, budget_ms, max_hops,
            )
        )
    return out


def configured_threads() -> int:
    """Parallelism cap from the environment, defaulting to serial."""
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_scenario(
    racks: int = 1024,
    distribution: SliceDistribution | None = None,
    seed: int = 7,
    failure_range: tuple[int, int] = (1, 4),
    spare_placement: Coord = DEFAULT_SPARE_PLACEMENT,
    policies: tuple[Policy, ...] = _POLICY_ORDER,
    budget_ms: float = DEFAULT_BUDGET_MS,
    max_hops: int = DEFAULT_MAX_HOPS,
    threads: int | None = None,
) -> ScenarioReport:
    """Simulate failures in every rack and aggregate policy statistics.

    Rack trials are independent: each rack draws its own generator from
    the master seed, so the report is identical for a fixed seed no matter
    how the work is parallelized. ``threads`` defaults to the
    LUMION_BENCH_THREADS environment variable, or 1.
    """
    from lumionsim import _kernels
    from lumionsim.fabric import DEFAULT_SLICE_DISTRIBUTION

    if racks < 1:
        raise DomainError("need at least one rack")
    distribution = distribution or DEFAULT_SLICE_DISTRIBUTION
    policies = tuple(p if isinstance(p, Policy) else Policy(p) for p in policies)
    threads = configured_threads() if threads is None else max(1, threads)

    placement = tuple(spare_placement)
    records: list[RackRecord] = []
    if threads == 1 or racks < 4:
        rack = build_rack(SparePlacement(placement))
        for rack_id in range(racks):
            records.extend(
                simulate_rack(
                    rack_id, seed, rack, distribution, failure_range,
                    policies, budget_ms, max_hops,
                )
            )
    else:
        chunk = max(1, racks // (threads * 8))
        jobs = [
            (
                list(range(start, min(start + chunk, racks))),
                seed, placement, distribution, failure_range,
                policies, budget_ms, max_hops,
            )
            for start in range(0, racks, chunk)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk_records in pool.map(_simulate_chunk, jobs):
                records.extend(chunk_records)
    records.sort(key=lambda r: (r.rack_id, _POLICY_ORDER.index(r.policy)))

    failed_by_rack: dict[int, int] = {}
    for r in records:
        failed_by_rack[r.rack_id] = r.failed
    report = ScenarioReport(
        racks=racks,
        seed=seed,
        policies=policies,
        records=records,
        spare_racks_touched=sum(1 for v in failed_by_rack.values() if v > 0),
        kernel_backend=_kernels.BACKEND,
    )
    report.aggregates = report.recompute_aggregates()
    return report
