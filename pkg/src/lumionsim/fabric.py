"""Rack fabric model: accelerator torus, servers, slices, ring bandwidth.

A rack is a 4x4x4 torus of TPUs grouped into 16 servers of 4 TPUs each
(a 2x2x4 server torus; each server owns a 2x2x1 block of TPUs). Tenant
slices are axis-aligned sub-blocks, wrap-around allowed, packed first-fit.
Collective traffic runs in logical rings along each axis, so a slice's
usable bandwidth along an axis is the bandwidth of the slowest link on
any of its rings in that direction.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field

from lumionsim.errors import DomainError

Coord = tuple[int, int, int]

TPU_DIMS: Coord = (4, 4, 4)
SERVER_DIMS: Coord = (2, 2, 4)
TPUS_PER_SERVER = 4
DEFAULT_FIBER_BUDGET = 4

# Symmetry-unique server-grid positions where an extra server can attach.
SPARE_OFFSETS: tuple[Coord, ...] = (
    (-1, 0, 0),
    (0, -1, 0),
    (0, 0, -1),
    (0, -1, 1),
    (-1, 0, 1),
)


def parse_shape(text: str) -> Coord:
    """Parse a shape such as '4x2x2' into an integer triple."""
    try:
        parts = tuple(int(t) for t in text.lower().split("x"))
    except ValueError as exc:
        raise DomainError(f"bad slice shape {text!r}") from exc
    if len(parts) != 3:
        raise DomainError(f"slice shape needs three dimensions, got {text!r}")
    return parts


def base_tpus() -> list[Coord]:
    return [
        (x, y, z)
        for x in range(TPU_DIMS[0])
        for y in range(TPU_DIMS[1])
        for z in range(TPU_DIMS[2])
    ]


def server_of_base_tpu(tpu: Coord) -> Coord:
    """Server coordinate owning a base-rack TPU (2x2x1 TPU block per server)."""
    return (tpu[0] // 2, tpu[1] // 2, tpu[2])


def tpu_neighbors(tpu: Coord) -> list[Coord]:
    """The six wrap-around torus neighbors of a base-rack TPU."""
    out = []
    for axis in range(3):
        for step in (1, -1):
            c = list(tpu)
            c[axis] = (c[axis] + step) % TPU_DIMS[axis]
            out.append(tuple(c))
    return out


@dataclass(frozen=True)
class SparePlacement:
    """Position of the extra spare server, one of the five unique candidates."""

    offset: Coord

    def __post_init__(self):
        if tuple(self.offset) not in SPARE_OFFSETS:
            raise DomainError(
                f"spare offset must be one of {SPARE_OFFSETS}, got {self.offset}"
            )

    @property
    def attached_servers(self) -> tuple[Coord, ...]:
        """Base servers the spare is fibered to: its torus neighbors.

        The offset sits one step outside the 2x2x4 server grid; its unit
        neighbors reduced modulo the torus dimensions give the servers
        whose faces and wrap paths it adjoins.
        """
        found = set()
        for axis in range(3):
            for step in (1, -1):
                q = list(self.offset)
                q[axis] += step
                found.add(
                    (q[0] % SERVER_DIMS[0], q[1] % SERVER_DIMS[1], q[2] % SERVER_DIMS[2])
                )
        return tuple(sorted(found))

    @property
    def tpus(self) -> tuple[Coord, ...]:
        ox, oy, oz = self.offset
        return tuple(
            sorted((2 * ox + dx, 2 * oy + dy, oz) for dx in (0, 1) for dy in (0, 1))
        )


@dataclass(frozen=True)
class RackTopology:
    """A rack's accelerators, servers, fiber budgets, and link bandwidths."""

    tpu_dims: Coord = TPU_DIMS
    server_dims: Coord = SERVER_DIMS
    tpus_per_server: int = TPUS_PER_SERVER
    default_bandwidth: float = 1.0
    link_overrides: dict[tuple[Coord, Coord], float] = field(default_factory=dict)
    fiber_budget: int = DEFAULT_FIBER_BUDGET
    fiber_overrides: dict[tuple[Coord, Coord], int] = field(default_factory=dict)
    spare_servers: tuple[SparePlacement, ...] = ()

    @property
    def base_servers(self) -> list[Coord]:
        return [
            (x, y, z)
            for x in range(self.server_dims[0])
            for y in range(self.server_dims[1])
            for z in range(self.server_dims[2])
        ]

    @property
    def servers(self) -> list[Coord]:
        return self.base_servers + [sp.offset for sp in self.spare_servers]

    @property
    def tpus(self) -> list[Coord]:
        out = base_tpus()
        for sp in self.spare_servers:
            out.extend(sp.tpus)
        return out

    @property
    def spare_tpus(self) -> list[Coord]:
        out = []
        for sp in self.spare_servers:
            out.extend(sp.tpus)
        return sorted(out)

    def server_of(self, tpu: Coord) -> Coord:
        for sp in self.spare_servers:
            if tpu in sp.tpus:
                return sp.offset
        x, y, z = tpu
        if 0 <= x < 4 and 0 <= y < 4 and 0 <= z < 4:
            return server_of_base_tpu(tpu)
        raise DomainError(f"{tpu} is not a TPU of this rack")

    def server_pairs(self) -> list[tuple[Coord, Coord]]:
        """All adjacent server pairs carrying fiber bundles, spare included."""
        pairs = set()
        for s in self.base_servers:
            for axis in range(3):
                t = list(s)
                t[axis] = (t[axis] + 1) % self.server_dims[axis]
                t = tuple(t)
                if t != s:
                    pairs.add(tuple(sorted((s, t))))
        for sp in self.spare_servers:
            for attached in sp.attached_servers:
                pairs.add(tuple(sorted((sp.offset, attached))))
        return sorted(pairs)

    def fiber_capacity(self, pair: tuple[Coord, Coord]) -> int:
        return self.fiber_overrides.get(tuple(sorted(pair)), self.fiber_budget)

    def bandwidth(self, u: Coord, v: Coord) -> float:
        """Bandwidth of the directed TPU link u -> v."""
        return self.link_overrides.get((u, v), self.default_bandwidth)


def build_rack(
    spare: SparePlacement | None = None,
    default_bandwidth: float = 1.0,
    link_overrides: dict | None = None,
    fiber_budget: int = DEFAULT_FIBER_BUDGET,
) -> RackTopology:
    """Build the canonical 64-TPU rack, optionally with one spare server.

    The spare adds a 17th server at the given offset with its own fiber
    budget toward its torus-adjacent servers; the base rack keeps its
    original dimensions and wrap-around links untouched.
    """
    spares: tuple[SparePlacement, ...] = ()
    if spare is not None:
        if not isinstance(spare, SparePlacement):
            spare = SparePlacement(tuple(spare))
        spares = (spare,)
    return RackTopology(
        default_bandwidth=default_bandwidth,
        link_overrides=dict(link_overrides or {}),
        fiber_budget=fiber_budget,
        spare_servers=spares,
    )


@dataclass(frozen=True)
class SliceRequest:
    """A tenant request for an i x j x k torus-shaped slice."""

    shape: Coord

    def __post_init__(self):
        shape = tuple(self.shape)
        if len(shape) != 3 or any(d < 1 for d in shape):
            raise DomainError(f"slice shape must be three positive ints, got {shape}")
        if any(d > t for d, t in zip(shape, TPU_DIMS)):
            raise DomainError(f"slice shape {shape} exceeds rack dimensions {TPU_DIMS}")
        if math.prod(shape) > 64:
            raise DomainError(f"slice volume {math.prod(shape)} exceeds the rack")

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class SliceAllocation:
    """A placed slice: oriented extents anchored at an origin, wrap allowed."""

    request: SliceRequest
    origin: Coord
    extents: Coord
    tpus: frozenset[Coord]
    contiguous: bool = True

    @property
    def size(self) -> int:
        return len(self.tpus)


def _bit(tpu: Coord) -> int:
    return tpu[0] * 16 + tpu[1] * 4 + tpu[2]


_ORIGINS = base_tpus()
_BLOCK_MASKS: dict[Coord, list[int]] = {}


def _block_cells(origin: Coord, extents: Coord) -> list[Coord]:
    ox, oy, oz = origin
    ex, ey, ez = extents
    return [
        ((ox + dx) % 4, (oy + dy) % 4, (oz + dz) % 4)
        for dx in range(ex)
        for dy in range(ey)
        for dz in range(ez)
    ]


def _block_masks(extents: Coord) -> list[int]:
    masks = _BLOCK_MASKS.get(extents)
    if masks is None:
        masks = []
        for origin in _ORIGINS:
            m = 0
            for cell in _block_cells(origin, extents):
                m |= 1 << _bit(cell)
            masks.append(m)
        _BLOCK_MASKS[extents] = masks
    return masks


class _Packer:
    """First-fit packer over the base rack, tracked as a 64-bit occupancy mask."""

    def __init__(self):
        self.free_mask = (1 << 64) - 1
        self.allocations: list[SliceAllocation] = []

    @property
    def free_count(self) -> int:
        return bin(self.free_mask).count("1")

    def try_place(
        self, request: SliceRequest, orientations: list[Coord]
    ) -> SliceAllocation | None:
        for extents in orientations:
            masks = _block_masks(extents)
            for oi in range(64):
                m = masks[oi]
                if self.free_mask & m == m:
                    origin = _ORIGINS[oi]
                    alloc = SliceAllocation(
                        request, origin, extents, frozenset(_block_cells(origin, extents))
                    )
                    self.free_mask &= ~m
                    self.allocations.append(alloc)
                    return alloc
        return None


def _shuffled_orientations(shape: Coord, rng: random.Random) -> list[Coord]:
    orients = sorted(set(itertools.permutations(shape)))
    rng.shuffle(orients)
    return orients


def allocate_slices(
    rack: RackTopology, requests: list[SliceRequest], rng_seed: int
) -> tuple[list[SliceAllocation], list[SliceRequest]]:
    """Place requests first-fit in lexicographic origin order.

    Each request's axis orientation list is shuffled under the seed before
    the scan, so placement is deterministic for a fixed seed. Requests that
    fit nowhere are skipped and returned separately.
    """
    rng = random.Random(rng_seed)
    packer = _Packer()
    skipped = []
    for req in requests:
        if packer.try_place(req, _shuffled_orientations(req.shape, rng)) is None:
            skipped.append(req)
    return packer.allocations, skipped


@dataclass(frozen=True)
class SliceDistribution:
    """Weighted catalogue of slice shapes used to fill racks."""

    shapes: tuple[Coord, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.shapes) != len(self.weights) or not self.shapes:
            raise DomainError("distribution needs matching, nonempty shapes and weights")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise DomainError("weights must be nonnegative with a positive sum")
        for s in self.shapes:
            SliceRequest(s)

    @classmethod
    def from_dict(cls, mapping: dict[str, float]) -> SliceDistribution:
        shapes = tuple(parse_shape(k) for k in mapping)
        return cls(shapes, tuple(float(v) for v in mapping.values()))

    def sample(self, rng: random.Random) -> SliceRequest:
        shape = rng.choices(self.shapes, weights=self.weights, k=1)[0]
        return SliceRequest(shape)


DEFAULT_SLICE_DISTRIBUTION = SliceDistribution(
    shapes=((1, 1, 1), (2, 2, 1), (2, 2, 2), (4, 2, 2), (4, 4, 2), (4, 4, 4)),
    weights=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
)


def saturate_rack(
    rack: RackTopology,
    distribution: SliceDistribution,
    rng: random.Random,
    max_misses: int = 32,
) -> list[SliceAllocation]:
    """Draw shapes from the distribution until the rack is full.

    Stops when no free TPU remains or after ``max_misses`` consecutive
    draws that fit nowhere.
    """
    packer = _Packer()
    misses = 0
    while packer.free_mask and misses < max_misses:
        req = distribution.sample(rng)
        if packer.try_place(req, _shuffled_orientations(req.shape, rng)) is None:
            misses += 1
        else:
            misses = 0
    return packer.allocations


def _lines(alloc: SliceAllocation, axis: int):
    """Yield each line of the slice along ``axis`` as an ordered TPU list."""
    ox = alloc.origin
    ex = alloc.extents
    others = [a for a in range(3) if a != axis]
    for i in range(ex[others[0]]):
        for j in range(ex[others[1]]):
            line = []
            for t in range(ex[axis]):
                cell = [0, 0, 0]
                cell[others[0]] = (ox[others[0]] + i) % TPU_DIMS[others[0]]
                cell[others[1]] = (ox[others[1]] + j) % TPU_DIMS[others[1]]
                cell[axis] = (ox[axis] + t) % TPU_DIMS[axis]
                line.append(tuple(cell))
            yield line


def ring_links(alloc: SliceAllocation, axis: int) -> list[tuple[Coord, Coord]]:
    """Undirected TPU links used by the slice's rings along one axis.

    Each line of extent e uses its e-1 consecutive links; a line spanning
    the full rack dimension closes the ring through the wrap-around link.
    Extent-1 lines need no communication and use nothing.
    """
    if not alloc.contiguous:
        raise DomainError("ring links are defined for contiguous slices only")
    extent = alloc.extents[axis]
    if extent < 2:
        return []
    links = []
    for line in _lines(alloc, axis):
        for a, b in zip(line, line[1:]):
            links.append(tuple(sorted((a, b))))
        if extent == TPU_DIMS[axis]:
            links.append(tuple(sorted((line[-1], line[0]))))
    return links


def slice_used_links(alloc: SliceAllocation) -> list[tuple[Coord, Coord]]:
    """All undirected TPU links used by the slice's rings, every axis."""
    out = []
    for axis in range(3):
        out.extend(ring_links(alloc, axis))
    return out


def ring_bandwidth(rack: RackTopology, alloc: SliceAllocation, axis: int) -> float:
    """Bottleneck bandwidth of the slice's rings along ``axis``.

    The ring throughput is set by its slowest link, both directions
    considered. A degenerate single-node ring returns +inf, meaning no
    communication is needed in that direction.
    """
    if axis not in (0, 1, 2):
        raise DomainError(f"axis must be 0, 1 or 2, got {axis}")
    base = set(base_tpus())
    if not alloc.tpus <= base:
        raise DomainError("slice is not allocated on this rack")
    if alloc.extents[axis] < 2:
        return math.inf
    worst = math.inf
    for u, v in ring_links(alloc, axis):
        worst = min(worst, rack.bandwidth(u, v), rack.bandwidth(v, u))
    return worst
