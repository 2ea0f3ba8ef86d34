"""Fiber routing: replacement requests, exact minimizer vs oracle and
baselines, and the spare-placement sweep."""

import itertools
import random
from collections import Counter

import pytest

from lumionsim.errors import DomainError, NoSpareAvailable
from lumionsim.fabric import (
    DEFAULT_SLICE_DISTRIBUTION,
    SPARE_OFFSETS,
    SliceRequest,
    SparePlacement,
    allocate_slices,
    build_rack,
)
from lumionsim.routing import (
    CircuitRequest,
    FiberGraph,
    build_rack_instance,
    instance_requests,
    placement_sweep,
    recompute_plan_cost,
    replacement_requests,
    route_exact,
    route_ksp,
)


def _alloc_one(shape, seed=0):
    allocs, skipped = allocate_slices(build_rack(), [SliceRequest(shape)], seed)
    assert allocs and not skipped
    return allocs[0]


class TestReplacementRequests:
    def test_corner_of_flat_slice_two_neighbors(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((2, 2, 1))
        corner = min(alloc.tpus)
        reqs = replacement_requests(rack, alloc, corner, rack.spare_tpus[0])
        assert len(reqs) == 2

    def test_pair_slice_single_neighbor(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((2, 1, 1))
        corner = min(alloc.tpus)
        reqs = replacement_requests(rack, alloc, corner, rack.spare_tpus[0])
        assert len(reqs) == 1

    def test_full_rack_six_neighbors(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((4, 4, 4))
        reqs = replacement_requests(rack, alloc, (1, 1, 1), rack.spare_tpus[0])
        assert len(reqs) == 6
        assert all(r.dst == (0, -1, 1) for r in reqs)

    def test_failed_outside_slice_rejected(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((2, 1, 1))
        with pytest.raises(DomainError):
            replacement_requests(rack, alloc, (3, 3, 3), rack.spare_tpus[0])

    def test_missing_spare(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((2, 1, 1))
        with pytest.raises(NoSpareAvailable):
            replacement_requests(rack, alloc, min(alloc.tpus), None)

    def test_excluded_neighbors_skipped(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((4, 4, 4))
        full = replacement_requests(rack, alloc, (1, 1, 1), rack.spare_tpus[0])
        trimmed = replacement_requests(
            rack, alloc, (1, 1, 1), rack.spare_tpus[0],
            exclude=frozenset({(0, 1, 1), (2, 1, 1)}),
        )
        assert len(trimmed) == len(full) - 2


class TestFiberGraph:
    def test_disconnected_rejected(self):
        with pytest.raises(DomainError):
            FiberGraph(nodes=[0, 1, 2], edges=[(0, 1)])

    def test_self_loop_rejected(self):
        with pytest.raises(DomainError):
            FiberGraph(nodes=[0, 1], edges=[(0, 0), (0, 1)])

    def test_full_rack_base_load_saturates_budget(self):
        # one contiguous 4x4x4 slice needs exactly the 4 provisioned fibers
        # on every adjacent server pair
        rack = build_rack()
        alloc = _alloc_one((4, 4, 4))
        graph = FiberGraph.from_rack(rack, [alloc])
        assert graph.base_load == [4] * len(graph.edges)
        assert graph.capacity == [4] * len(graph.edges)

    def test_json_roundtrip(self):
        rack = build_rack(SparePlacement((0, 0, -1)))
        alloc = _alloc_one((2, 2, 2))
        graph = FiberGraph.from_rack(rack, [alloc])
        clone = FiberGraph.from_json(graph.to_json())
        assert clone.edges == graph.edges
        assert clone.base_load == graph.base_load
        assert clone.capacity == graph.capacity


def _random_small_graph(rng):
    """Connected random graph with 5-7 nodes, suitable for enumeration."""
    n = rng.randint(5, 7)
    nodes = list(range(n))
    edges = set()
    order = nodes[1:]
    rng.shuffle(order)
    reached = [0]
    for node in order:
        edges.add(tuple(sorted((node, rng.choice(reached)))))
        reached.append(node)
    for _ in range(rng.randint(1, 3)):
        a, b = rng.sample(nodes, 2)
        edges.add(tuple(sorted((a, b))))
    capacity = {e: rng.randint(0, 2) for e in edges}
    base_load = {e: rng.randint(0, 2) for e in edges}
    return FiberGraph(nodes, sorted(edges), capacity, base_load)


def _oracle_min_extra(graph, requests, max_hops):
    """Independent exhaustive minimum over the same candidate path sets."""
    cand_sets = [
        graph.candidate_paths(r.src, r.dst, max_hops) for r in requests
    ]
    n_edges = len(graph.edges)
    best = None
    for combo in itertools.product(*cand_sets):
        load = Counter()
        for cand in combo:
            for eid in cand.edge_ids:
                load[eid] += 1
        total = sum(
            max(0, graph.base_load[eid] + load[eid] - graph.capacity[eid])
            for eid in range(n_edges)
        )
        if best is None or total < best:
            best = total
    return best


class TestRouteExact:
    def test_empty_requests(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        graph = FiberGraph.from_rack(rack, [])
        plan = route_exact(graph, [])
        assert plan.total_extra == 0 and plan.optimal

    def test_single_request_under_capacity(self):
        graph = FiberGraph(nodes=[0, 1, 2], edges=[(0, 1), (1, 2)], capacity=4)
        plan = route_exact(graph, [CircuitRequest(0, 2)])
        assert plan.total_extra == 0
        assert plan.routes[0] == (0, 1, 2)

    def test_intra_server_request_is_fiber_free(self):
        graph = FiberGraph(nodes=[0, 1], edges=[(0, 1)], capacity=0)
        plan = route_exact(graph, [CircuitRequest(0, 0)])
        assert plan.total_extra == 0
        assert plan.routes[0] == (0,)

    def test_adversarial_detour_found(self, adversarial_instance):
        graph, requests = adversarial_instance
        exact = route_exact(graph, requests)
        assert exact.total_extra == 0 and exact.optimal
        greedy = route_ksp(graph, requests, 1)
        assert greedy.total_extra > 0

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_enumeration_oracle(self, seed):
        rng = random.Random(seed)
        graph = _random_small_graph(rng)
        n_req = rng.randint(1, 4)
        requests = []
        for _ in range(n_req):
            a, b = rng.sample(list(graph.nodes), 2)
            requests.append(CircuitRequest(a, b))
        max_hops = 3
        plan = route_exact(graph, requests, max_hops=max_hops)
        assert plan.optimal
        assert plan.total_extra == _oracle_min_extra(graph, requests, max_hops)

    def test_deterministic(self):
        inst = build_rack_instance(99, DEFAULT_SLICE_DISTRIBUTION)
        a = route_exact(inst.graph, list(inst.requests))
        b = route_exact(inst.graph, list(inst.requests))
        assert a.routes == b.routes and a.total_extra == b.total_extra

    def test_tie_break_prefers_fewer_hops_then_lex(self):
        # diamond with a chord: two sinks so the flow shortcut stays out
        graph = FiberGraph(
            nodes=[0, 1, 2, 3],
            edges=[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)],
            capacity=10,
        )
        plan = route_exact(graph, [CircuitRequest(0, 2), CircuitRequest(1, 3)])
        assert plan.total_extra == 0
        assert plan.routes[0] == (0, 2)
        assert plan.routes[1] == (1, 0, 3)
        assert plan.total_hops == 3

    def test_budget_cut_flagged_and_dominated(self):
        rng = random.Random(1)
        graph = _random_small_graph(rng)
        requests = []
        for _ in range(4):
            a, b = rng.sample(list(graph.nodes), 2)
            requests.append(CircuitRequest(a, b))
        full = route_exact(graph, requests, max_hops=4)
        cut = route_exact(graph, requests, budget_ms=0.001, max_hops=4)
        assert cut.total_extra >= full.total_extra
        assert cut.total_extra <= route_ksp(graph, requests, 5).total_extra
        if cut.total_extra > full.total_extra:
            assert not cut.optimal

    def test_wavelength_classes_share_fibers(self):
        graph = FiberGraph(nodes=[0, 1], edges=[(0, 1)], capacity=1)
        same = [CircuitRequest(0, 1, "w0"), CircuitRequest(0, 1, "w0")]
        assert route_exact(graph, same).total_extra == 1
        mixed = [CircuitRequest(0, 1, "w0"), CircuitRequest(0, 1, "w1")]
        assert route_exact(graph, mixed).total_extra == 0

    def test_plan_cost_recomputable(self):
        inst = build_rack_instance(5, DEFAULT_SLICE_DISTRIBUTION)
        plan = route_exact(inst.graph, list(inst.requests))
        extra, total = recompute_plan_cost(inst.graph, plan)
        assert total == plan.total_extra
        assert extra == plan.extra_fibers

    def test_routes_are_simple_paths(self):
        for seed in range(5):
            inst = build_rack_instance(seed, DEFAULT_SLICE_DISTRIBUTION)
            plan = route_exact(inst.graph, list(inst.requests))
            for req, route in zip(plan.requests, plan.routes):
                assert len(set(route)) == len(route)
                if not req.intra_server:
                    assert route[0] == req.src and route[-1] == req.dst


class TestRouteKsp:
    def test_single_request_matches_exact(self):
        inst = build_rack_instance(3, DEFAULT_SLICE_DISTRIBUTION)
        req = [inst.requests[0]]
        assert route_ksp(inst.graph, req, 5).routes == route_exact(inst.graph, req).routes

    @pytest.mark.parametrize("seed", range(20))
    def test_exact_dominates_ksp(self, seed):
        inst = build_rack_instance(seed, DEFAULT_SLICE_DISTRIBUTION)
        exact = route_exact(inst.graph, list(inst.requests))
        for k in (5, 10):
            assert exact.total_extra <= route_ksp(inst.graph, list(inst.requests), k).total_extra

    @pytest.mark.parametrize("seed", range(10))
    def test_greedy_shortest_path_no_better_than_k10(self, seed):
        inst = build_rack_instance(1000 + seed, DEFAULT_SLICE_DISTRIBUTION)
        k1 = route_ksp(inst.graph, list(inst.requests), 1)
        k10 = route_ksp(inst.graph, list(inst.requests), 10)
        assert k1.total_extra >= k10.total_extra

    def test_adversarial_gap(self, adversarial_instance):
        graph, requests = adversarial_instance
        exact = route_exact(graph, requests)
        for k in (5, 10):
            ksp = route_ksp(graph, requests, k)
            assert ksp.total_extra >= max(1, 1.2 * exact.total_extra)

    def test_yen_matches_networkx(self):
        nx = pytest.importorskip("networkx")
        rng = random.Random(7)
        for _ in range(10):
            graph = _random_small_graph(rng)
            g = nx.Graph(list(graph.edges))
            a, b = rng.sample(list(graph.nodes), 2)
            ours = [c.hops for c in graph.k_shortest_paths(a, b, 4)]
            theirs = [
                len(p) - 1
                for p in itertools.islice(nx.shortest_simple_paths(g, a, b), 4)
            ]
            assert sorted(ours) == sorted(theirs)


class TestPlacementSweep:
    def test_minimum_trials_enforced(self):
        with pytest.raises(DomainError):
            placement_sweep(DEFAULT_SLICE_DISTRIBUTION, trials=0, seed=1)
        with pytest.raises(DomainError):
            placement_sweep(DEFAULT_SLICE_DISTRIBUTION, trials=99, seed=1)

    def test_zero_failures_all_tie_at_zero(self):
        result = placement_sweep(
            DEFAULT_SLICE_DISTRIBUTION, trials=100, seed=1, failure_range=(0, 0)
        )
        assert all(s.mean_extra == 0.0 for s in result.stats)
        assert result.ranking == tuple(sorted(SPARE_OFFSETS))

    def test_ranking_is_strict_permutation(self):
        result = placement_sweep(DEFAULT_SLICE_DISTRIBUTION, trials=100, seed=2)
        assert sorted(result.ranking) == sorted(SPARE_OFFSETS)
        assert len(set(result.ranking)) == 5


class TestInstanceGeneration:
    def test_too_many_failures_rejected(self):
        rack = build_rack(SparePlacement((0, -1, 1)))
        alloc = _alloc_one((4, 4, 4))
        failed = tuple(sorted(alloc.tpus))[:5]
        with pytest.raises(NoSpareAvailable):
            instance_requests(rack, [alloc], failed)

    def test_instances_reproducible(self):
        a = build_rack_instance(42, DEFAULT_SLICE_DISTRIBUTION)
        b = build_rack_instance(42, DEFAULT_SLICE_DISTRIBUTION)
        assert a.allocations == b.allocations
        assert a.failed == b.failed
        assert a.requests == b.requests
