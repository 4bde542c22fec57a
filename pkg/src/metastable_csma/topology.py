"""Bipartite interference graphs and their hard-core configuration spaces.

Vertices are dense integers ``0 .. |U|+|V|-1`` with the U side first, and a
configuration is stored as an integer bitmask (bit ``i`` set means vertex
``i`` is active).  Every other module relies on this layout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

DEFAULT_CAP = 2 ** 24


class GraphError(ValueError):
    """Invalid graph description."""


class FeasibilityError(ValueError):
    """A configuration violates the hard-core constraint."""


class StateSpaceTooLarge(RuntimeError):
    """Independent-set enumeration exceeded the configured cap."""


@dataclass(frozen=True)
class BipartiteGraph:
    u_vertices: tuple
    v_vertices: tuple
    edges: frozenset
    adjacency: tuple = field(repr=False, compare=False)
    name: str = field(default="", compare=False)

    @property
    def n_u(self) -> int:
        return len(self.u_vertices)

    @property
    def n_v(self) -> int:
        return len(self.v_vertices)

    @property
    def n(self) -> int:
        return self.n_u + self.n_v

    @property
    def u_mask(self) -> int:
        return (1 << self.n_u) - 1

    @property
    def v_mask(self) -> int:
        return ((1 << self.n) - 1) ^ self.u_mask

    @property
    def neighbor_masks(self) -> tuple:
        """Bitmask of the neighbours of each vertex."""
        return tuple(sum(1 << j for j in nbrs) for nbrs in self.adjacency)

    def is_u(self, i: int) -> bool:
        return i < self.n_u

    def is_complete_bipartite(self) -> bool:
        return len(self.edges) == self.n_u * self.n_v

    def config(self, active: Iterable[int] = ()) -> "HardCoreConfig":
        mask = 0
        for i in active:
            if not 0 <= i < self.n:
                raise GraphError(f"vertex {i} out of range")
            mask |= 1 << i
        return HardCoreConfig.from_mask(self, mask)

    def u_config(self) -> "HardCoreConfig":
        return HardCoreConfig(self, self.u_mask)

    def v_config(self) -> "HardCoreConfig":
        return HardCoreConfig(self, self.v_mask)

    def empty_config(self) -> "HardCoreConfig":
        return HardCoreConfig(self, 0)


def _build(u_labels: Sequence, v_labels: Sequence, index_edges: Iterable[tuple], name: str) -> BipartiteGraph:
    n_u, n_v = len(u_labels), len(v_labels)
    if n_u == 0 or n_v == 0:
        raise GraphError("both sides of the bipartition must be nonempty")
    edges = set()
    for i, j in index_edges:
        if i == j:
            raise GraphError(f"self-loop at vertex {i}")
        a, b = min(i, j), max(i, j)
        if not (a < n_u <= b):
            raise GraphError(f"edge ({i}, {j}) does not cross the bipartition")
        edges.add((a, b))
    adjacency = [[] for _ in range(n_u + n_v)]
    for a, b in sorted(edges):
        adjacency[a].append(b)
        adjacency[b].append(a)
    return BipartiteGraph(
        u_vertices=tuple(u_labels),
        v_vertices=tuple(v_labels),
        edges=frozenset(edges),
        adjacency=tuple(tuple(sorted(x)) for x in adjacency),
        name=name,
    )


def make_complete_bipartite(m: int, n: int) -> BipartiteGraph:
    if m < 1 or n < 1:
        raise GraphError(f"complete bipartite sizes must be positive, got ({m}, {n})")
    edges = [(i, m + j) for i in range(m) for j in range(n)]
    return _build(list(range(m)), list(range(m, m + n)), edges, f"complete:{m},{n}")


def make_even_torus(m: int, n: int) -> BipartiteGraph:
    """Nearest-neighbour torus Z_m x Z_n split by coordinate parity.

    Sites with even ``x + y`` form U.  Wraparound duplicates (m or n equal
    to 2) collapse to a single edge.
    """
    if m % 2 or n % 2 or m < 2 or n < 2:
        raise GraphError(f"torus sides must be even and >= 2, got ({m}, {n})")
    sites = [(x, y) for x in range(m) for y in range(n)]
    u_sites = [p for p in sites if (p[0] + p[1]) % 2 == 0]
    v_sites = [p for p in sites if (p[0] + p[1]) % 2 == 1]
    index = {p: k for k, p in enumerate(u_sites + v_sites)}
    edges = set()
    for x, y in u_sites:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = ((x + dx) % m, (y + dy) % n)
            edges.add((index[(x, y)], index[q]))
    return _build(u_sites, v_sites, edges, f"torus:{m},{n}")


def from_edge_list(u_labels: Sequence[Hashable], v_labels: Sequence[Hashable],
                   edges: Iterable[tuple]) -> BipartiteGraph:
    u_labels, v_labels = list(u_labels), list(v_labels)
    index = {}
    for lab in u_labels + v_labels:
        if lab in index:
            raise GraphError(f"duplicate label {lab!r}")
        index[lab] = len(index)
    pairs = []
    for a, b in edges:
        if a not in index or b not in index:
            missing = a if a not in index else b
            raise GraphError(f"edge references unknown label {missing!r}")
        pairs.append((index[a], index[b]))
    return _build(u_labels, v_labels, pairs, "file")


def load_graph_file(path) -> BipartiteGraph:
    data = json.loads(Path(path).read_text())
    return from_edge_list(data["u"], data["v"], [tuple(e) for e in data["edges"]])


def parse_graph_spec(spec) -> BipartiteGraph:
    """Build a graph from ``complete:m,n``, ``torus:m,n``, ``file:PATH`` or a JSON dict."""
    if isinstance(spec, BipartiteGraph):
        return spec
    if isinstance(spec, dict):
        if "edges" in spec:
            return from_edge_list(spec["u"], spec["v"], [tuple(e) for e in spec["edges"]])
        kind = spec.get("type")
        if kind in ("complete", "torus"):
            return parse_graph_spec(f"{kind}:{spec['m']},{spec['n']}")
        raise GraphError(f"unrecognised graph block {spec!r}")
    kind, _, arg = str(spec).partition(":")
    if kind == "file":
        return load_graph_file(arg)
    if kind in ("complete", "torus"):
        try:
            m, n = (int(t) for t in arg.split(","))
        except ValueError:
            raise GraphError(f"expected {kind}:m,n, got {spec!r}") from None
        return make_complete_bipartite(m, n) if kind == "complete" else make_even_torus(m, n)
    raise GraphError(f"unknown graph spec {spec!r}")


def is_independent(g: BipartiteGraph, subset: int) -> bool:
    if subset >> g.n:
        raise GraphError("subset references vertices outside the graph")
    nbr = g.neighbor_masks
    i, rest = 0, subset
    while rest:
        if rest & 1 and subset & nbr[i]:
            return False
        rest >>= 1
        i += 1
    return True


@dataclass(frozen=True)
class HardCoreConfig:
    graph: BipartiteGraph = field(repr=False)
    mask: int

    @classmethod
    def from_mask(cls, g: BipartiteGraph, mask: int) -> "HardCoreConfig":
        if not is_independent(g, mask):
            raise FeasibilityError(f"configuration {mask:#b} is not an independent set")
        return cls(g, mask)

    @property
    def u_part(self) -> int:
        return self.mask & self.graph.u_mask

    @property
    def v_part(self) -> int:
        return self.mask & self.graph.v_mask

    @property
    def counts(self) -> tuple:
        return bin(self.u_part).count("1"), bin(self.v_part).count("1")

    def active(self) -> list:
        return [i for i in range(self.graph.n) if self.mask >> i & 1]


def partial_order_leq(x: HardCoreConfig, y: HardCoreConfig) -> bool:
    """``x`` below ``y``: x has a superset of U-activity and a subset of V-activity."""
    if x.graph != y.graph:
        raise GraphError("configurations live on different graphs")
    return (x.u_part & y.u_part) == y.u_part and (x.v_part & y.v_part) == x.v_part


def mask_leq(g: BipartiteGraph, x: int, y: int) -> bool:
    xu, yu = x & g.u_mask, y & g.u_mask
    xv, yv = x & g.v_mask, y & g.v_mask
    return (xu & yu) == yu and (xv & yv) == xv


def _independent_sets(g: BipartiteGraph, cap: int) -> list:
    nbr = g.neighbor_masks
    out = []

    def extend(i: int, mask: int, blocked: int) -> None:
        if i == g.n:
            out.append(mask)
            if len(out) > cap:
                raise StateSpaceTooLarge(
                    f"{g.name or 'graph'} has more than {cap} independent sets")
            return
        extend(i + 1, mask, blocked)
        if not blocked >> i & 1:
            extend(i + 1, mask | 1 << i, blocked | nbr[i])

    extend(0, 0, 0)
    return out


@dataclass(frozen=True)
class StateSpace:
    graph: BipartiteGraph
    configs: tuple
    index_of: dict = field(repr=False, compare=False)
    counts: tuple = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.configs)

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def u_index(self) -> int:
        return self.index_of[self.graph.u_mask]

    @property
    def v_index(self) -> int:
        return self.index_of[self.graph.v_mask]

    @property
    def empty_index(self) -> int:
        return self.index_of[0]

    def config(self, k: int) -> HardCoreConfig:
        return HardCoreConfig(self.graph, self.configs[k])

    def neighbors(self, k: int):
        """Yield ``(j, kind, site)`` for single-site moves out of state ``k``.

        ``kind`` is ``"birth_u"``, ``"birth_v"`` or ``"death"``.
        """
        g = self.graph
        x = self.configs[k]
        nbr = g.neighbor_masks
        for i in range(g.n):
            bit = 1 << i
            if x & bit:
                yield self.index_of[x ^ bit], "death", i
            elif not x & nbr[i]:
                yield self.index_of[x | bit], "birth_u" if i < g.n_u else "birth_v", i


def enumerate_configs(g: BipartiteGraph, cap: int = DEFAULT_CAP) -> StateSpace:
    """All independent sets, ordered by total activity then by active vertex ids."""
    masks = _independent_sets(g, cap)

    def key(mask):
        ids = tuple(i for i in range(g.n) if mask >> i & 1)
        return len(ids), ids

    masks.sort(key=key)
    um = g.u_mask
    counts = tuple((bin(x & um).count("1"), bin(x & ~um).count("1")) for x in masks)
    return StateSpace(
        graph=g,
        configs=tuple(masks),
        index_of={x: k for k, x in enumerate(masks)},
        counts=counts,
    )
