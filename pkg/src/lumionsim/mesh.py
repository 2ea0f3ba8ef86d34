"""Optical interposer mesh: switch grid, vertex merging, disjoint routing.

The interposer is modeled as a rectangular grid of switches joined by
waveguides; boundary switches expose attachment ports. Merging each
horizontally adjacent switch pair into one supernode halves the vertex
count while preserving adjacency, which keeps shortest-path routing fast
on meshes with tens of thousands of switches. Every committed connection
must hold its waveguide edges exclusively, so requests are routed one by
one on the residual graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lumionsim import _kernels
from lumionsim.errors import DomainError, RouteUnavailable

GridCoord = tuple[int, int]


@dataclass(frozen=True)
class MziMesh:
    """Rectangular switch grid with 4-neighbor waveguide edges."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DomainError("mesh dimensions must be at least 1x1")

    @property
    def node_count(self) -> int:
        return self.rows * self.cols

    @property
    def edge_count(self) -> int:
        return self.rows * (self.cols - 1) + (self.rows - 1) * self.cols

    @property
    def ports(self) -> list[GridCoord]:
        """Perimeter switches, the mesh's attachment points."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                if r in (0, self.rows - 1) or c in (0, self.cols - 1):
                    out.append((r, c))
        return out


def build_mesh(rows: int, cols: int) -> MziMesh:
    return MziMesh(rows, cols)


@dataclass(frozen=True)
class MeshRoute:
    """A committed connection: its port pair and supernode path."""

    request: tuple[GridCoord, GridCoord]
    path: tuple[GridCoord, ...]

    @property
    def edges(self) -> tuple[tuple[GridCoord, GridCoord], ...]:
        return tuple(
            (a, b) if a <= b else (b, a) for a, b in zip(self.path, self.path[1:])
        )


class MergedMesh:
    """The mesh after pairwise horizontal merging, with route occupancy.

    Merging (r, 2c) with (r, 2c+1) yields a rows x ceil(cols/2) grid whose
    supernodes inherit every adjacency of their constituents. Routes are
    committed on this graph; an edge carries at most one route at a time.
    """

    def __init__(self, source: MziMesh):
        self.source = source
        self.rows = source.rows
        self.cols = (source.cols + 1) // 2
        self._hblock = np.zeros((self.rows, max(self.cols - 1, 0)), dtype=np.uint8)
        self._vblock = np.zeros((max(self.rows - 1, 0), self.cols), dtype=np.uint8)
        self.committed: set[MeshRoute] = set()

    @property
    def supernode_count(self) -> int:
        return self.rows * self.cols

    @property
    def edge_count(self) -> int:
        return self.rows * (self.cols - 1) + (self.rows - 1) * self.cols

    def merge_map(self, node: GridCoord) -> GridCoord:
        r, c = node
        if not (0 <= r < self.source.rows and 0 <= c < self.source.cols):
            raise DomainError(f"{node} is outside the source mesh")
        return (r, c // 2)

    def supernodes(self) -> list[GridCoord]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def neighbors(self, node: GridCoord) -> list[GridCoord]:
        r, c = node
        out = []
        if r > 0:
            out.append((r - 1, c))
        if c > 0:
            out.append((r, c - 1))
        if c + 1 < self.cols:
            out.append((r, c + 1))
        if r + 1 < self.rows:
            out.append((r + 1, c))
        return out

    @property
    def occupied(self) -> set[tuple[GridCoord, GridCoord]]:
        out = set()
        for route in self.committed:
            out.update(route.edges)
        return out

    def _edge_slot(self, a: GridCoord, b: GridCoord):
        (r1, c1), (r2, c2) = sorted((a, b))
        if r1 == r2 and c2 == c1 + 1:
            return self._hblock, (r1, c1)
        if c1 == c2 and r2 == r1 + 1:
            return self._vblock, (r1, c1)
        raise DomainError(f"({a}, {b}) is not a mesh edge")

    def is_free(self, a: GridCoord, b: GridCoord) -> bool:
        arr, idx = self._edge_slot(a, b)
        return not arr[idx]

    def _set_edges(self, route: MeshRoute, value: int):
        for a, b in route.edges:
            arr, idx = self._edge_slot(a, b)
            arr[idx] = value

    def commit(self, route: MeshRoute):
        for a, b in route.edges:
            if not self.is_free(a, b):
                raise DomainError(f"edge ({a}, {b}) is already occupied")
        self._set_edges(route, 1)
        self.committed.add(route)

    def release(self, route: MeshRoute):
        if route not in self.committed:
            raise DomainError("route is not currently committed")
        self._set_edges(route, 0)
        self.committed.discard(route)

    def shortest_free_path(self, src: GridCoord, dst: GridCoord):
        """Shortest path between supernodes avoiding occupied edges."""
        ncols = self.cols
        s = src[0] * ncols + src[1]
        d = dst[0] * ncols + dst[1]
        flat = _kernels.grid_bfs(self.rows, self.cols, self._hblock, self._vblock, s, d)
        if flat is None:
            return None
        return tuple(divmod(n, ncols) for n in flat)


def merge_adjacent(mesh: MziMesh) -> MergedMesh:
    """Merge horizontally adjacent switch pairs into supernodes."""
    return MergedMesh(mesh)


def route_disjoint(
    mesh: MergedMesh, requests: list[tuple[GridCoord, GridCoord]]
) -> list[MeshRoute]:
    """Route requests in order, each on the residual graph of the last.

    Request endpoints are ports of the original mesh; they are mapped
    through the merge. Each route is the shortest free path, neighbors
    tried in lexicographic order, and its edges are committed before the
    next request is considered. Raises RouteUnavailable with the failing
    request index; earlier commitments remain in place.
    """
    ports = set(mesh.source.ports)
    routes = []
    for i, (src, dst) in enumerate(requests):
        if src == dst:
            raise DomainError(f"request {i}: ports must be distinct")
        if src not in ports or dst not in ports:
            raise DomainError(f"request {i}: endpoints must be mesh ports")
        s = mesh.merge_map(src)
        d = mesh.merge_map(dst)
        path = mesh.shortest_free_path(s, d)
        if path is None:
            raise RouteUnavailable(i)
        route = MeshRoute(request=(src, dst), path=path)
        mesh.commit(route)
        routes.append(route)
    return routes


def release_route(mesh: MergedMesh, route: MeshRoute):
    """Return a committed route's waveguide edges to the free pool."""
    mesh.release(route)


def routes_edge_disjoint(routes: list[MeshRoute]) -> bool:
    """Check pairwise edge-disjointness by direct set intersection."""
    seen: set = set()
    for route in routes:
        edges = set(route.edges)
        if edges & seen:
            return False
        seen |= edges
    return True
