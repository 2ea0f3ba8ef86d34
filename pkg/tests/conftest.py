"""Shared fixtures for routing experiments."""

import pytest

from lumionsim.routing import CircuitRequest, FiberGraph


@pytest.fixture
def adversarial_instance():
    """Instance where every short path crosses a saturated edge.

    Eleven 3-hop paths from node 0 to node 1 all share the saturated edge
    (1, 5); a single 4-hop detour through nodes 2-3-4 has spare capacity.
    K-shortest-path routing (k <= 11) never sees the detour, so it pays
    one overflow per circuit, while the exact router pays nothing.
    """
    s, t, b = 0, 1, 5
    relays = list(range(10, 21))
    detour = [2, 3, 4]
    edges = [(s, r) for r in relays] + [(r, b) for r in relays] + [(b, t)]
    edges += [(s, detour[0]), (detour[0], detour[1]), (detour[1], detour[2]), (detour[2], t)]
    capacity = {tuple(sorted(e)): 4 for e in edges}
    for e in [(s, detour[0]), (detour[0], detour[1]), (detour[1], detour[2]), (detour[2], t)]:
        capacity[tuple(sorted(e))] = 8
    base_load = {tuple(sorted((b, t))): 4}
    graph = FiberGraph(
        nodes=[s, t, b] + relays + detour,
        edges=edges,
        capacity=capacity,
        base_load=base_load,
    )
    requests = [CircuitRequest(s, t) for _ in range(5)]
    return graph, requests
