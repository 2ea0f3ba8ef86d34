"""Replacement-circuit routing over inter-server fibers.

When an accelerator fails, each of its in-slice neighbors needs a new
optical circuit to the replacement accelerator's server. Circuits of the
same wavelength class may not share a fiber, so a rack state can demand
more fibers on an edge than are provisioned. The exact router minimizes
the total fiber overflow with a branch-and-bound search over candidate
simple paths; the K-shortest-paths router is the baseline it is compared
against. A placement sweep ranks the five spare-server positions by the
mean overflow they induce over randomized rack states.
"""

from __future__ import annotations

import heapq
import random
import statistics
from dataclasses import dataclass, field

from lumionsim.errors import DomainError, NoSpareAvailable
from lumionsim.fabric import (
    Coord,
    RackTopology,
    SPARE_OFFSETS,
    SliceAllocation,
    SliceDistribution,
    SparePlacement,
    build_rack,
    saturate_rack,
    server_of_base_tpu,
    slice_used_links,
    tpu_neighbors,
)
from lumionsim.seeds import derive_seed

DEFAULT_MAX_HOPS = 6
DEFAULT_BUDGET_MS = 500.0
KSP_GUARD_K = 10
MIN_SWEEP_TRIALS = 100

# Deterministic stand-in for the wall clock: the search budget is spent in
# explored nodes at this fixed rate, so identical inputs always cut off at
# the same point regardless of machine speed.
NODES_PER_MS = 400


@dataclass(frozen=True)
class CircuitRequest:
    """One replacement circuit between two servers."""

    src: Coord
    dst: Coord
    wavelength_class: str = "w0"

    @property
    def intra_server(self) -> bool:
        return self.src == self.dst


Edge = tuple[Coord, Coord]

_SHARED_PATH_CACHES: dict = {}


def _canonical(u: Coord, v: Coord) -> Edge:
    return (u, v) if u <= v else (v, u)


class _Candidate:
    """A candidate path: node sequence plus resolved edge ids."""

    __slots__ = ("nodes", "edge_ids", "hops")

    def __init__(self, nodes: tuple[Coord, ...], edge_ids: tuple[int, ...]):
        self.nodes = nodes
        self.edge_ids = edge_ids
        self.hops = len(edge_ids)


class FiberGraph:
    """Inter-server fiber topology with per-edge capacity and standing load.

    ``base_load`` counts fibers already consumed by the rings of allocated
    slices; replacement circuits are routed on top of it. Candidate-path
    enumeration is cached per (src, dst) since it depends only on the
    topology, not on the load.
    """

    def __init__(self, nodes, edges, capacity=4, base_load=None):
        self.nodes = tuple(sorted(set(nodes)))
        node_set = set(self.nodes)
        canon = set()
        for u, v in edges:
            if u not in node_set or v not in node_set:
                raise DomainError(f"edge ({u}, {v}) references unknown node")
            if u == v:
                raise DomainError("self-loop edges are not allowed")
            canon.add(_canonical(u, v))
        self.edges: tuple[Edge, ...] = tuple(sorted(canon))
        self.edge_index = {e: i for i, e in enumerate(self.edges)}
        adjacency: dict[Coord, list[tuple[Coord, int]]] = {n: [] for n in self.nodes}
        for i, (u, v) in enumerate(self.edges):
            adjacency[u].append((v, i))
            adjacency[v].append((u, i))
        self.adjacency = {n: tuple(sorted(nbrs)) for n, nbrs in adjacency.items()}
        if isinstance(capacity, dict):
            self.capacity = [int(capacity.get(e, 0)) for e in self.edges]
        else:
            self.capacity = [int(capacity)] * len(self.edges)
        base_load = base_load or {}
        self.base_load = [int(base_load.get(e, 0)) for e in self.edges]
        if any(c < 0 for c in self.capacity) or any(b < 0 for b in self.base_load):
            raise DomainError("capacities and base loads must be nonnegative")
        self._check_connected()
        # candidate enumeration depends only on the topology, so graphs
        # sharing an edge set (e.g. every rack in a sweep) share caches
        self._paths, self._yen = _SHARED_PATH_CACHES.setdefault(self.edges, ({}, {}))

    def _check_connected(self):
        if not self.nodes:
            raise DomainError("graph needs at least one node")
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for nbr, _ in self.adjacency[stack.pop()]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if len(seen) != len(self.nodes):
            raise DomainError("fiber graph must be connected")

    @classmethod
    def from_rack(
        cls, rack: RackTopology, allocations: list[SliceAllocation]
    ) -> FiberGraph:
        """Build the rack's fiber graph with slice rings as standing load."""
        pairs = rack.server_pairs()
        capacity = {p: rack.fiber_capacity(p) for p in pairs}
        load: dict[Edge, int] = {p: 0 for p in pairs}
        for alloc in allocations:
            for u, v in slice_used_links(alloc):
                su = server_of_base_tpu(u)
                sv = server_of_base_tpu(v)
                if su != sv:
                    load[_canonical(su, sv)] += 1
        return cls(rack.servers, pairs, capacity, load)

    def shortest_path(self, src, dst, banned_nodes=(), banned_edges=()):
        """Deterministic BFS shortest path; neighbors scanned in sorted order."""
        if src == dst:
            return _Candidate((src,), ())
        banned_nodes = set(banned_nodes)
        banned_edges = set(banned_edges)
        parent: dict[Coord, tuple[Coord, int]] = {src: (src, -1)}
        queue = [src]
        head = 0
        while head < len(queue):
            node = queue[head]
            head += 1
            for nbr, eid in self.adjacency[node]:
                if nbr in parent or nbr in banned_nodes or eid in banned_edges:
                    continue
                parent[nbr] = (node, eid)
                if nbr == dst:
                    nodes, eids = [dst], []
                    cur = dst
                    while cur != src:
                        prev, eid2 = parent[cur]
                        eids.append(eid2)
                        nodes.append(prev)
                        cur = prev
                    nodes.reverse()
                    eids.reverse()
                    return _Candidate(tuple(nodes), tuple(eids))
                queue.append(nbr)
        return None

    def simple_paths(self, src: Coord, dst: Coord, max_hops: int) -> list[_Candidate]:
        """All simple paths from src to dst with at most ``max_hops`` edges."""
        out: list[_Candidate] = []
        path = [src]
        eids: list[int] = []
        visited = {src}

        def rec(node: Coord, depth: int):
            if node == dst:
                out.append(_Candidate(tuple(path), tuple(eids)))
                return
            if depth == max_hops:
                return
            for nbr, eid in self.adjacency[node]:
                if nbr in visited:
                    continue
                visited.add(nbr)
                path.append(nbr)
                eids.append(eid)
                rec(nbr, depth + 1)
                visited.remove(nbr)
                path.pop()
                eids.pop()

        rec(src, 0)
        out.sort(key=lambda c: (c.hops, c.nodes))
        return out

    def k_shortest_paths(self, src: Coord, dst: Coord, k: int) -> list[_Candidate]:
        """K shortest loop-free paths (unit edge weights), deterministic."""
        if k < 1:
            raise DomainError("k must be at least 1")
        key = (src, dst, k)
        cached = self._yen.get(key)
        if cached is not None:
            return cached
        first = self.shortest_path(src, dst)
        if first is None:
            self._yen[key] = []
            return []
        paths = [first]
        candidates: list[tuple[int, tuple, tuple]] = []
        seen = {first.nodes}
        while len(paths) < k:
            prev = paths[-1]
            for i in range(prev.hops):
                spur = prev.nodes[i]
                root_nodes = prev.nodes[: i + 1]
                root_eids = prev.edge_ids[:i]
                banned_edges = {
                    p.edge_ids[i] for p in paths if p.nodes[: i + 1] == root_nodes
                }
                banned_nodes = set(root_nodes[:-1])
                sp = self.shortest_path(spur, dst, banned_nodes, banned_edges)
                if sp is None:
                    continue
                nodes = root_nodes + sp.nodes[1:]
                if nodes in seen:
                    continue
                seen.add(nodes)
                eids = root_eids + sp.edge_ids
                heapq.heappush(candidates, (len(eids), nodes, eids))
            if not candidates:
                break
            hops, nodes, eids = heapq.heappop(candidates)
            paths.append(_Candidate(nodes, eids))
        paths.sort(key=lambda c: (c.hops, c.nodes))
        self._yen[key] = paths
        return paths

    def candidate_paths(self, src: Coord, dst: Coord, max_hops: int) -> list[_Candidate]:
        """Exact-router candidate set: all simple paths up to ``max_hops``,
        plus the K-shortest guard set so the exact optimum can never lose
        to the KSP baseline on candidates alone."""
        key = (src, dst, max_hops)
        cached = self._paths.get(key)
        if cached is not None:
            return cached
        cands = {c.nodes: c for c in self.simple_paths(src, dst, max_hops)}
        for c in self.k_shortest_paths(src, dst, KSP_GUARD_K):
            cands.setdefault(c.nodes, c)
        out = sorted(cands.values(), key=lambda c: (c.hops, c.nodes))
        self._paths[key] = out
        return out

    def to_json(self) -> dict:
        return {
            "nodes": [list(n) for n in self.nodes],
            "edges": [[list(u), list(v)] for u, v in self.edges],
            "capacity": self.capacity,
            "base_load": self.base_load,
        }

    @classmethod
    def from_json(cls, doc: dict) -> FiberGraph:
        nodes = [tuple(n) for n in doc["nodes"]]
        edges = [(tuple(u), tuple(v)) for u, v in doc["edges"]]
        capacity = {e: c for e, c in zip(sorted(_canonical(*e) for e in edges), doc["capacity"])}
        base = {e: b for e, b in zip(sorted(_canonical(*e) for e in edges), doc["base_load"])}
        return cls(nodes, edges, capacity, base)


@dataclass
class CircuitPlan:
    """Routed circuits with the fiber overflow they induce.

    ``routes[i]`` is the server path for request i (a single node for an
    intra-server request). ``extra_fibers`` maps each edge to the fibers
    needed beyond its capacity; ``total_extra`` is their sum.
    """

    requests: tuple[CircuitRequest, ...]
    routes: tuple[tuple[Coord, ...], ...]
    extra_fibers: dict[Edge, int]
    total_extra: int
    total_hops: int
    optimal: bool = True

    def to_json(self) -> dict:
        return {
            "routes": [[list(n) for n in r] for r in self.routes],
            "extra_fibers": [[list(u), list(v), x] for (u, v), x in sorted(self.extra_fibers.items())],
            "total_extra": self.total_extra,
            "total_hops": self.total_hops,
            "optimal": self.optimal,
        }


class _LoadState:
    """Per-edge circuit counts by wavelength class, with incremental overflow."""

    def __init__(self, graph: FiberGraph):
        self.base = graph.base_load
        self.cap = graph.capacity
        self.counts: list[dict[str, int]] = [dict() for _ in graph.edges]
        self.peak: list[int] = [0] * len(graph.edges)

    def _overflow(self, eid: int, peak: int) -> int:
        return max(0, self.base[eid] + peak - self.cap[eid])

    def add(self, edge_ids, cls: str) -> int:
        """Commit one circuit; returns the overflow increase."""
        delta = 0
        for eid in edge_ids:
            counts = self.counts[eid]
            c = counts.get(cls, 0) + 1
            counts[cls] = c
            if c > self.peak[eid]:
                delta += self._overflow(eid, c) - self._overflow(eid, self.peak[eid])
                self.peak[eid] = c
        return delta

    def remove(self, edge_ids, cls: str):
        for eid in edge_ids:
            counts = self.counts[eid]
            c = counts[cls] - 1
            if c:
                counts[cls] = c
            else:
                del counts[cls]
            new_peak = max(counts.values(), default=0)
            self.peak[eid] = new_peak

    def probe(self, edge_ids, cls: str) -> int:
        """Overflow increase if one circuit were added, without committing."""
        delta = 0
        for eid in edge_ids:
            c = self.counts[eid].get(cls, 0) + 1
            if c > self.peak[eid]:
                delta += self._overflow(eid, c) - self._overflow(eid, self.peak[eid])
        return delta

    def extra_by_edge(self, edges) -> dict[Edge, int]:
        return {
            edges[eid]: self._overflow(eid, self.peak[eid])
            for eid in range(len(edges))
            if self._overflow(eid, self.peak[eid]) > 0
        }

    def total_extra(self) -> int:
        return sum(
            self._overflow(eid, self.peak[eid]) for eid in range(len(self.base))
        )


def replacement_requests(
    rack: RackTopology,
    alloc: SliceAllocation,
    failed: Coord,
    spare: Coord,
    wavelength_class: str = "w0",
    exclude: frozenset[Coord] = frozenset(),
) -> list[CircuitRequest]:
    """Circuits needed to splice a spare in for one failed accelerator.

    Emits one request per torus neighbor of the failed TPU within its
    slice, from the neighbor's server to the spare's server. Neighbors in
    ``exclude`` (typically accelerators being replaced themselves, whose
    stand-ins share the spare server) are skipped. Requests whose two
    endpoints are the same server consume no fibers but are still emitted.
    """
    if failed not in alloc.tpus:
        raise DomainError(f"failed TPU {failed} is not part of the slice")
    if spare is None:
        raise NoSpareAvailable("no free healthy spare TPU")
    spare_server = rack.server_of(spare)
    requests = []
    for nbr in tpu_neighbors(failed):
        if nbr in alloc.tpus and nbr not in exclude:
            requests.append(
                CircuitRequest(server_of_base_tpu(nbr), spare_server, wavelength_class)
            )
    return requests


def _plan_from_routes(graph, requests, chosen, optimal) -> CircuitPlan:
    state = _LoadState(graph)
    routes = []
    hops = 0
    for req, cand in zip(requests, chosen):
        if cand is None:
            routes.append((req.src,))
            continue
        state.add(cand.edge_ids, req.wavelength_class)
        routes.append(cand.nodes)
        hops += cand.hops
    return CircuitPlan(
        requests=tuple(requests),
        routes=tuple(routes),
        extra_fibers=state.extra_by_edge(graph.edges),
        total_extra=state.total_extra(),
        total_hops=hops,
        optimal=optimal,
    )


class _SinkFlow:
    """Min-cost flow relaxation for same-class circuits sharing one sink.

    Relaxes the per-circuit path constraints to a single-commodity flow
    with convex overflow costs, which both lower-bounds the optimum and,
    when its decomposition maps back onto candidate paths, certifies an
    incumbent as optimal without any search.
    """

    def __init__(self, graph: FiberGraph, sink: Coord):
        self.graph = graph
        self.sink = sink
        # directional flow per edge id; at most one direction is nonzero
        self.flow: list[dict[Coord, int]] = [dict() for _ in graph.edges]

    def _net(self, eid: int) -> int:
        return sum(self.flow[eid].values())

    def _marginal(self, eid: int, frm: Coord, to: Coord) -> int:
        """Cost change of pushing one unit frm -> to over edge eid."""
        base, cap = self.graph.base_load[eid], self.graph.capacity[eid]
        opposing = self.flow[eid].get(to, 0)
        net = self._net(eid)
        if opposing > 0:
            return max(0, base + net - 1 - cap) - max(0, base + net - cap)
        return max(0, base + net + 1 - cap) - max(0, base + net - cap)

    def _push(self, eid: int, frm: Coord, to: Coord):
        opposing = self.flow[eid].get(to, 0)
        if opposing > 0:
            if opposing == 1:
                del self.flow[eid][to]
            else:
                self.flow[eid][to] = opposing - 1
        else:
            self.flow[eid][frm] = self.flow[eid].get(frm, 0) + 1

    def solve(self, supplies: dict[Coord, int]) -> int:
        """Route all supply units to the sink; returns the total overflow."""
        remaining = dict(supplies)
        total_units = sum(remaining.values())
        for _ in range(total_units):
            # Bellman-Ford from the active sources; cancellation arcs can be
            # negative but the successive-shortest-path invariant rules out
            # negative cycles
            dist = {n: (0 if remaining.get(n, 0) > 0 else None) for n in self.graph.nodes}
            parent: dict[Coord, tuple[Coord, int]] = {}
            for _ in range(len(self.graph.nodes)):
                changed = False
                for eid, (u, v) in enumerate(self.graph.edges):
                    for frm, to in ((u, v), (v, u)):
                        du = dist[frm]
                        if du is None:
                            continue
                        nd = du + self._marginal(eid, frm, to)
                        dv = dist[to]
                        if dv is None or nd < dv:
                            dist[to] = nd
                            parent[to] = (frm, eid)
                            changed = True
                if not changed:
                    break
            if dist[self.sink] is None:
                raise DomainError("sink unreachable in flow relaxation")
            # walk the parent chain back to the source it started from
            node = self.sink
            hops = []
            while node in parent:
                frm, eid = parent[node]
                hops.append((frm, node, eid))
                node = frm
            for frm, to, eid in hops:
                self._push(eid, frm, to)
            remaining[node] -= 1
            if remaining[node] == 0:
                del remaining[node]
        return sum(
            max(0, self.graph.base_load[eid] + self._net(eid) - self.graph.capacity[eid])
            for eid in range(len(self.graph.edges))
        )

    def decompose(self, supplies: dict[Coord, int]) -> dict[Coord, list[tuple]] | None:
        """Split the flow into one node path per supply unit, per source."""
        flow = [dict(f) for f in self.flow]
        adjacency = self.graph.adjacency
        paths: dict[Coord, list[tuple]] = {}
        for src in sorted(supplies):
            for _ in range(supplies[src]):
                path = [src]
                seen = {src: 0}
                node = src
                while node != self.sink:
                    step = None
                    for nbr, eid in adjacency[node]:
                        if flow[eid].get(node, 0) > 0:
                            step = (nbr, eid)
                            break
                    if step is None:
                        return None
                    nbr, eid = step
                    if flow[eid][node] == 1:
                        del flow[eid][node]
                    else:
                        flow[eid][node] -= 1
                    if nbr in seen:
                        # zero-cost loop in the flow: drop it from the walk
                        path = path[: seen[nbr] + 1]
                        seen = {n: i for i, n in enumerate(path)}
                        node = nbr
                        continue
                    path.append(nbr)
                    seen[nbr] = len(path) - 1
                    node = nbr
                paths.setdefault(src, []).append(tuple(path))
        return paths


def _evaluate_choice(graph, circuits, group_cands, group_cls, choice):
    """Cost and hops of a grouped candidate-index assignment."""
    state = _LoadState(graph)
    cost = 0
    hops = 0
    for pos, gid in enumerate(circuits):
        cand = group_cands[gid][choice[pos]]
        cost += state.add(cand.edge_ids, group_cls[gid])
        hops += cand.hops
    return cost, hops


def route_exact(
    graph: FiberGraph,
    requests: list[CircuitRequest],
    budget_ms: float = DEFAULT_BUDGET_MS,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> CircuitPlan:
    """Minimize total fiber overflow exactly by branch and bound.

    Searches assignments of candidate simple paths to circuits. The
    incumbent is seeded with the greedy plan and both K-shortest-path
    plans, so the result never loses to those baselines even if the
    budget runs out. When every circuit shares one wavelength class and
    one destination, a min-cost-flow relaxation bounds the optimum from
    below; if a seeded incumbent meets that bound the search is skipped
    entirely. Identical requests are interchangeable, so their candidate
    indices are constrained to be non-decreasing. Ties between equal-cost
    plans resolve deterministically, preferring fewer total hops and then
    earlier candidate order.

    The search budget is a deterministic node quota derived from
    ``budget_ms`` at a fixed nodes-per-millisecond rate; if it runs out
    the best plan found so far is returned with ``optimal=False``.
    """
    if budget_ms <= 0:
        raise DomainError("budget must be positive")
    requests = list(requests)
    fiber_ids = [i for i, r in enumerate(requests) if not r.intra_server]

    if not fiber_ids:
        return _plan_from_routes(graph, requests, [None] * len(requests), True)

    # group interchangeable circuits
    group_keys: list[tuple] = []
    group_members: dict[tuple, list[int]] = {}
    for i in fiber_ids:
        r = requests[i]
        key = (r.src, r.dst, r.wavelength_class)
        if key not in group_members:
            group_members[key] = []
            group_keys.append(key)
        group_members[key].append(i)

    group_cands = [graph.candidate_paths(k[0], k[1], max_hops) for k in group_keys]
    group_cls = [k[2] for k in group_keys]
    group_count = [len(group_members[k]) for k in group_keys]
    cand_index = [{c.nodes: ci for ci, c in enumerate(cands)} for cands in group_cands]
    single_class = len({k[2] for k in group_keys}) == 1
    sinks = {k[1] for k in group_keys}
    single_sink = len(sinks) == 1

    circuits: list[int] = []  # group id per circuit, groups contiguous
    for gid in range(len(group_keys)):
        circuits.extend([gid] * group_count[gid])
    n_circ = len(circuits)

    state = _LoadState(graph)

    def incumbent_from_paths(paths_per_group) -> tuple[int, int, list[int]] | None:
        """Map per-group node paths onto candidate indices and score them."""
        choice = []
        for gid in range(len(group_keys)):
            indices = []
            for nodes in paths_per_group[gid]:
                ci = cand_index[gid].get(tuple(nodes))
                if ci is None:
                    return None
                indices.append(ci)
            choice.extend(sorted(indices))
        cost, hops = _evaluate_choice(graph, circuits, group_cands, group_cls, choice)
        return cost, hops, choice

    candidates_for_best: list[tuple[int, int, list[int]]] = []

    # greedy incumbent: cheapest-looking candidate per circuit in order
    greedy_choice = []
    for gid in circuits:
        cands = group_cands[gid]
        best_ci = min(
            range(len(cands)),
            key=lambda ci: (state.probe(cands[ci].edge_ids, group_cls[gid]),
                            cands[ci].hops, cands[ci].nodes),
        )
        greedy_choice.append(best_ci)
        state.add(cands[best_ci].edge_ids, group_cls[gid])
    for i in range(n_circ - 1, -1, -1):
        state.remove(group_cands[circuits[i]][greedy_choice[i]].edge_ids,
                     group_cls[circuits[i]])
    cost, hops = _evaluate_choice(graph, circuits, group_cands, group_cls, greedy_choice)
    candidates_for_best.append((cost, hops, greedy_choice))

    # seeding the incumbent with the actual KSP plans guarantees the exact
    # plan dominates them even if the search budget runs out
    for k in (5, KSP_GUARD_K):
        ksp_plan = route_ksp(graph, requests, k)
        ksp_paths = [[] for _ in group_keys]
        for i in fiber_ids:
            r = requests[i]
            gid = group_keys.index((r.src, r.dst, r.wavelength_class))
            ksp_paths[gid].append(tuple(ksp_plan.routes[i]))
        seeded = incumbent_from_paths(ksp_paths)
        if seeded is not None:
            candidates_for_best.append(seeded)

    # flow relaxation: lower bound, and often an optimal incumbent outright
    flow_lb = 0
    if single_class and single_sink:
        sink = next(iter(sinks))
        supplies: dict[Coord, int] = {}
        for key, members in group_members.items():
            supplies[key[0]] = supplies.get(key[0], 0) + len(members)
        flow = _SinkFlow(graph, sink)
        flow_lb = flow.solve(supplies)
        decomposed = flow.decompose(supplies)
        if decomposed is not None:
            src_order = {k[0]: gid for gid, k in enumerate(group_keys)}
            per_group = [[] for _ in group_keys]
            ok = True
            for src, paths in decomposed.items():
                gid = src_order.get(src)
                if gid is None:
                    ok = False
                    break
                per_group[gid].extend(paths)
            if ok and all(len(per_group[g]) == group_count[g] for g in range(len(group_keys))):
                seeded = incumbent_from_paths(per_group)
                if seeded is not None:
                    candidates_for_best.append(seeded)

    best_cost, best_hops, best_choice = min(
        candidates_for_best, key=lambda t: (t[0], t[1])
    )
    best = {"cost": best_cost, "hops": best_hops, "choice": best_choice}

    proven = best["cost"] <= flow_lb if (single_class and single_sink) else False

    if not proven:
        # static per-circuit lower bounds against the initial load; valid
        # for a single wavelength class, where overflow increments only
        # grow as load accumulates
        lb_alone = []
        minhops = []
        for gid in range(len(group_keys)):
            cands = group_cands[gid]
            minhops.append(min(c.hops for c in cands))
            if single_class:
                lb_alone.append(
                    min(state.probe(c.edge_ids, group_cls[gid]) for c in cands)
                )
            else:
                lb_alone.append(0)
        suffix_lb = [0] * (n_circ + 1)
        suffix_minhops = [0] * (n_circ + 1)
        for i in range(n_circ - 1, -1, -1):
            suffix_lb[i] = suffix_lb[i + 1] + lb_alone[circuits[i]]
            suffix_minhops[i] = suffix_minhops[i + 1] + minhops[circuits[i]]

        # every simple path ends on an edge at the sink, so remaining
        # circuits must squeeze through the sink's residual capacity
        sink_eids: tuple[int, ...] = ()
        if single_class and single_sink:
            sink_node = next(iter(sinks))
            sink_eids = tuple(eid for _, eid in graph.adjacency[sink_node])
        remaining_after = [0] * (n_circ + 1)
        for i in range(n_circ - 1, -1, -1):
            remaining_after[i] = remaining_after[i + 1] + 1

        def sink_cut(rem: int) -> int:
            if not sink_eids or rem == 0:
                return 0
            slack = 0
            for eid in sink_eids:
                slack += max(
                    0, state.cap[eid] - state.base[eid] - state.peak[eid]
                )
            return max(0, rem - slack)

        max_nodes = max(1, int(budget_ms * NODES_PER_MS))
        counter = {"nodes": 0, "aborted": False}
        chosen = [0] * n_circ
        cur = {"cost": 0, "hops": 0}

        def dfs(i: int, start_idx: int):
            if counter["aborted"]:
                return
            if i == n_circ:
                if (cur["cost"], cur["hops"]) < (best["cost"], best["hops"]):
                    best["cost"] = cur["cost"]
                    best["hops"] = cur["hops"]
                    best["choice"] = chosen[:]
                return
            gid = circuits[i]
            cands = group_cands[gid]
            cls = group_cls[gid]
            same_next = i + 1 < n_circ and circuits[i + 1] == gid
            for ci in range(start_idx, len(cands)):
                counter["nodes"] += 1
                if counter["nodes"] > max_nodes:
                    counter["aborted"] = True
                    return
                cand = cands[ci]
                delta = state.add(cand.edge_ids, cls)
                cur["cost"] += delta
                cur["hops"] += cand.hops
                bound_cost = cur["cost"] + max(
                    suffix_lb[i + 1], sink_cut(remaining_after[i + 1])
                )
                bound_hops = cur["hops"] + suffix_minhops[i + 1]
                if bound_cost < best["cost"] or (
                    bound_cost == best["cost"] and bound_hops < best["hops"]
                ):
                    chosen[i] = ci
                    dfs(i + 1, ci if same_next else 0)
                state.remove(cand.edge_ids, cls)
                cur["cost"] -= delta
                cur["hops"] -= cand.hops
                if counter["aborted"]:
                    return

        dfs(0, 0)
        proven = not counter["aborted"] or best["cost"] <= flow_lb

    chosen_cands: list[_Candidate | None] = [None] * len(requests)
    pos = 0
    for gid, key in enumerate(group_keys):
        for member in group_members[key]:
            chosen_cands[member] = group_cands[gid][best["choice"][pos]]
            pos += 1
    return _plan_from_routes(graph, requests, chosen_cands, proven)


def route_ksp(graph: FiberGraph, requests: list[CircuitRequest], k: int) -> CircuitPlan:
    """Baseline: greedily route each request over its k shortest paths.

    Requests are processed in input order; each picks, among its k
    shortest loop-free paths, the one adding the least overflow (ties go
    to the shorter, then lexicographically smaller path). Never proves
    optimality, so plans carry ``optimal=False``.
    """
    state = _LoadState(graph)
    chosen: list[_Candidate | None] = []
    for req in requests:
        if req.intra_server:
            chosen.append(None)
            continue
        cands = graph.k_shortest_paths(req.src, req.dst, k)
        if not cands:
            raise DomainError(f"no path between {req.src} and {req.dst}")
        pick = min(
            cands,
            key=lambda c: (state.probe(c.edge_ids, req.wavelength_class), c.hops, c.nodes),
        )
        state.add(pick.edge_ids, req.wavelength_class)
        chosen.append(pick)
    plan = _plan_from_routes(graph, requests, chosen, False)
    return plan


def recompute_plan_cost(graph: FiberGraph, plan: CircuitPlan) -> tuple[dict[Edge, int], int]:
    """Re-derive overflow from a plan's routes, for consistency checking."""
    state = _LoadState(graph)
    for req, route in zip(plan.requests, plan.routes):
        if len(route) < 2:
            continue
        eids = []
        for u, v in zip(route, route[1:]):
            eid = graph.edge_index.get(_canonical(u, v))
            if eid is None:
                raise DomainError(f"route uses unknown edge ({u}, {v})")
            eids.append(eid)
        state.add(eids, req.wavelength_class)
    return state.extra_by_edge(graph.edges), state.total_extra()


@dataclass(frozen=True)
class RackInstance:
    """One randomized rack state with its replacement-routing problem."""

    rack: RackTopology
    allocations: tuple[SliceAllocation, ...]
    failed: tuple[Coord, ...]
    requests: tuple[CircuitRequest, ...]
    graph: FiberGraph = field(compare=False)


def sample_rack_state(
    rng: random.Random,
    distribution: SliceDistribution,
    failure_range: tuple[int, int] = (1, 4),
) -> tuple[list[SliceAllocation], tuple[Coord, ...]]:
    """Fill the base rack from the distribution and pick failed TPUs.

    The sampled state only involves the base 64 TPUs, so it is identical
    for every spare placement under the same generator state.
    """
    lo, hi = failure_range
    if lo < 0 or hi < lo:
        raise DomainError(f"bad failure count range {failure_range}")
    allocations = saturate_rack(build_rack(), distribution, rng)
    pool = sorted({t for a in allocations for t in a.tpus})
    count = rng.randint(lo, hi) if hi > 0 else 0
    failed = tuple(sorted(rng.sample(pool, min(count, len(pool))))) if count else ()
    return allocations, failed


def instance_requests(
    rack: RackTopology,
    allocations: list[SliceAllocation],
    failed: tuple[Coord, ...],
) -> list[CircuitRequest]:
    """Replacement circuits for a set of failures, spares assigned in order."""
    spares = rack.spare_tpus
    if len(failed) > len(spares):
        raise NoSpareAvailable(
            f"{len(failed)} failures exceed {len(spares)} spare TPUs"
        )
    alloc_of = {t: a for a in allocations for t in a.tpus}
    failed_set = frozenset(failed)
    requests: list[CircuitRequest] = []
    for f, spare in zip(sorted(failed), spares):
        requests.extend(
            replacement_requests(rack, alloc_of[f], f, spare, exclude=failed_set)
        )
    return requests


def build_rack_instance(
    trial_seed: int,
    distribution: SliceDistribution,
    placement: SparePlacement | Coord = (0, -1, 1),
    failure_range: tuple[int, int] = (1, 4),
    rack: RackTopology | None = None,
) -> RackInstance:
    """Generate one seeded rack instance for routing experiments."""
    if rack is None:
        rack = build_rack(placement if isinstance(placement, SparePlacement)
                          else SparePlacement(tuple(placement)))
    rng = random.Random(trial_seed)
    allocations, failed = sample_rack_state(rng, distribution, failure_range)
    requests = instance_requests(rack, allocations, failed)
    graph = FiberGraph.from_rack(rack, allocations)
    return RackInstance(rack, tuple(allocations), failed, tuple(requests), graph)


@dataclass(frozen=True)
class PlacementStats:
    """Mean/stddev of exact-route overflow for one spare position."""

    offset: Coord
    mean_extra: float
    std_extra: float
    trials: int


@dataclass(frozen=True)
class PlacementSweepResult:
    stats: tuple[PlacementStats, ...]
    ranking: tuple[Coord, ...]

    @property
    def best(self) -> Coord:
        return self.ranking[0]


def placement_sweep(
    distribution: SliceDistribution,
    trials: int,
    seed: int,
    failure_range: tuple[int, int] = (1, 4),
    budget_ms: float = DEFAULT_BUDGET_MS,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> PlacementSweepResult:
    """Rank the five spare positions by mean exact-route fiber overflow.

    Every candidate position sees the identical trial ensemble (same
    allocations, same failures), so differences come from the position
    alone. Ranking ties break toward the lexicographically smaller offset.
    """
    if trials < MIN_SWEEP_TRIALS:
        raise DomainError(f"placement sweep needs at least {MIN_SWEEP_TRIALS} trials")
    racks = {off: build_rack(SparePlacement(off)) for off in SPARE_OFFSETS}
    extras: dict[Coord, list[int]] = {off: [] for off in SPARE_OFFSETS}
    for t in range(trials):
        rng = random.Random(derive_seed(seed, t))
        allocations, failed = sample_rack_state(rng, distribution, failure_range)
        for off in SPARE_OFFSETS:
            rack = racks[off]
            requests = instance_requests(rack, allocations, failed)
            graph = FiberGraph.from_rack(rack, allocations)
            plan = route_exact(graph, requests, budget_ms, max_hops)
            extras[off].append(plan.total_extra)
    stats = []
    for off in sorted(SPARE_OFFSETS):
        vals = extras[off]
        stats.append(
            PlacementStats(
                offset=off,
                mean_extra=statistics.fmean(vals),
                std_extra=statistics.pstdev(vals),
                trials=trials,
            )
        )
    ranking = tuple(s.offset for s in sorted(stats, key=lambda s: (s.mean_extra, s.offset)))
    return PlacementSweepResult(stats=tuple(stats), ranking=ranking)
