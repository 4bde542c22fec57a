"""Order-of-magnitude arithmetic on the energy landscape.

A quantity that behaves like ``lambda**d`` is represented by its degree
``d = a*beta_U + b*beta_V`` with integers ``a, b``.  Products add degrees,
sums take the max, and all comparisons are exact rationals.  The clock rate
has degree ``beta_V`` because ``beta_V > beta_U``.

Prefactors are invisible here, so "asymptotically larger" means strictly
larger degree, and the ``log gamma`` factor in the no-deep-well criterion is
absorbed by requiring a strict degree gap.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional

from .rates import RateSchedule, as_fraction
from .topology import BipartiteGraph, StateSpace


class UnreachableError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class AsymptoticDegree:
    value: Fraction
    a: int = 0
    b: int = 0

    @classmethod
    def of(cls, a: int, b: int, betas) -> "AsymptoticDegree":
        bu, bv = _betas(betas)
        return cls(a * bu + b * bv, a, b)

    def __add__(self, other: "AsymptoticDegree") -> "AsymptoticDegree":
        return AsymptoticDegree(self.value + other.value, self.a + other.a, self.b + other.b)

    def __neg__(self) -> "AsymptoticDegree":
        return AsymptoticDegree(-self.value, -self.a, -self.b)

    def __sub__(self, other: "AsymptoticDegree") -> "AsymptoticDegree":
        return self + (-other)

    def __str__(self) -> str:
        return str(self.value)


def _betas(betas) -> tuple:
    if isinstance(betas, RateSchedule):
        return betas.beta_u, betas.beta_v
    bu, bv = betas
    return as_fraction(bu), as_fraction(bv)


def partition_degree(space: StateSpace, betas) -> AsymptoticDegree:
    return max(AsymptoticDegree.of(a, b, betas) for a, b in space.counts)


def pi_degree(space: StateSpace, x: int, betas) -> AsymptoticDegree:
    a, b = space.counts[x]
    return AsymptoticDegree.of(a, b, betas) - partition_degree(space, betas)


def _kernel_degree(kind: str, betas) -> AsymptoticDegree:
    # lambda_U / gamma, lambda_V / gamma, 1 / gamma
    return {
        "birth_u": AsymptoticDegree.of(1, -1, betas),
        "birth_v": AsymptoticDegree.of(0, 0, betas),
        "death": AsymptoticDegree.of(0, -1, betas),
    }[kind]


def resistance_degree(space: StateSpace, x: int, y: int, betas) -> AsymptoticDegree:
    for j, kind, _ in space.neighbors(x):
        if j == y:
            return -(pi_degree(space, x, betas) + _kernel_degree(kind, betas))
    raise ValueError(f"states {x} and {y} are not a single-site move apart")


def _edge_degrees(space: StateSpace, betas) -> dict:
    zdeg = partition_degree(space, betas)
    out = {}
    for x in range(space.size):
        a, b = space.counts[x]
        pdeg = AsymptoticDegree.of(a, b, betas) - zdeg
        for y, kind, _ in space.neighbors(x):
            if x < y:
                out[(x, y)] = -(pdeg + _kernel_degree(kind, betas))
    return out


def critical_resistance_degree(space: StateSpace, A: Iterable[int], B: Iterable[int],
                               betas, _edges: Optional[dict] = None) -> AsymptoticDegree:
    """Minimax edge-resistance degree over paths from ``A`` to ``B``.

    Binary search over the sorted distinct edge degrees, checking whether
    ``A`` and ``B`` connect using only edges at or below the threshold.
    """
    A, B = set(A), set(B)
    if not A or not B:
        raise ValueError("A and B must be nonempty")
    if A & B:
        raise ValueError("A and B must be disjoint")
    edges = _edge_degrees(space, betas) if _edges is None else _edges
    levels = sorted(set(edges.values()))
    lo, hi = 0, len(levels) - 1
    if not levels or not _connects(space.size, edges, levels[hi], A, B):
        raise UnreachableError("no path between the two sets")
    while lo < hi:
        mid = (lo + hi) // 2
        if _connects(space.size, edges, levels[mid], A, B):
            hi = mid
        else:
            lo = mid + 1
    return levels[lo]


def _connects(n: int, edges: dict, threshold: AsymptoticDegree, A: set, B: set) -> bool:
    adj = [[] for _ in range(n)]
    for (x, y), d in edges.items():
        if d.value <= threshold.value:
            adj[x].append(y)
            adj[y].append(x)
    seen = set(A)
    stack = sorted(A)
    while stack:
        k = stack.pop()
        if k in B:
            return True
        for j in adj[k]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return False


def _pi_degrees(space: StateSpace, betas) -> list:
    zdeg = partition_degree(space, betas)
    return [AsymptoticDegree.of(a, b, betas) - zdeg for a, b in space.counts]


def j_minus(space: StateSpace, x: int, betas) -> set:
    """States with strictly larger stationary-probability degree than ``x``."""
    degs = [d.value for d in _pi_degrees(space, betas)]
    return {k for k in range(space.size) if degs[k] > degs[x]}


def bottleneck_to(space: StateSpace, targets: Iterable[int], betas,
                  _edges: Optional[dict] = None) -> list:
    """Minimax resistance degree from every state to ``targets`` (None if cut off).

    Multi-source Dijkstra where a path costs its largest edge degree.
    """
    edges = _edge_degrees(space, betas) if _edges is None else _edges
    adj = [[] for _ in range(space.size)]
    for (x, y), d in edges.items():
        adj[x].append((y, d))
        adj[y].append((x, d))
    best = [None] * space.size
    done = [False] * space.size
    heap = []
    for t in sorted(set(targets)):
        # the empty-path value; any real edge dominates it
        best[t] = AsymptoticDegree(Fraction(-10 ** 9))
        heapq.heappush(heap, (best[t].value, t))
    while heap:
        _, k = heapq.heappop(heap)
        if done[k]:
            continue
        done[k] = True
        for j, d in adj[k]:
            cand = max(best[k], d, key=lambda z: z.value)
            if not done[j] and (best[j] is None or cand.value < best[j].value):
                best[j] = cand
                heapq.heappush(heap, (cand.value, j))
    return best


def gamma_barrier(space: StateSpace, betas) -> AsymptoticDegree:
    """Degree of pi(u) * Psi(u, v): the hill between u and v."""
    u, v = space.u_index, space.v_index
    return pi_degree(space, u, betas) + critical_resistance_degree(space, {u}, {v}, betas)


class WellDepth(NamedTuple):
    via_targets: AsymptoticDegree
    via_j_minus: AsymptoticDegree

    @property
    def agree(self) -> bool:
        return self.via_targets.value == self.via_j_minus.value


def gamma_check_barrier(space: StateSpace, betas) -> WellDepth:
    """Depth of the deepest well away from u and v, computed two ways.

    ``via_targets`` escapes to ``{u, v}``; ``via_j_minus`` escapes to states
    of strictly larger stationary degree.
    """
    if space.size < 3:
        raise ValueError("need at least three states")
    u, v = space.u_index, space.v_index
    edges = _edge_degrees(space, betas)
    pdeg = _pi_degrees(space, betas)
    to_uv = bottleneck_to(space, {u, v}, betas, edges)
    by_level = {}
    for x in range(space.size):
        by_level.setdefault(pdeg[x].value, []).append(x)
    to_higher = {}
    for level in by_level:
        higher = {k for k in range(space.size) if pdeg[k].value > level}
        if higher:
            to_higher[level] = bottleneck_to(space, higher, betas, edges)
    best_t = best_j = None
    for x in range(space.size):
        if x in (u, v):
            continue
        if to_uv[x] is None:
            raise UnreachableError(f"state {x} cannot reach u or v")
        dt = pdeg[x] + to_uv[x]
        best_t = dt if best_t is None or dt.value > best_t.value else best_t
        paths = to_higher.get(pdeg[x].value)
        if paths is not None and paths[x] is not None:
            dj = pdeg[x] + paths[x]
            best_j = dj if best_j is None or dj.value > best_j.value else best_j
    if best_j is None:
        best_j = best_t
    return WellDepth(best_t, best_j)


@dataclass
class AssumptionReport:
    complete_bipartite_multi_u: bool
    stability_inequality: bool
    no_deep_well: bool
    energy_barrier: bool
    cbg_condition: bool
    gamma_degree: Fraction
    gamma_check_degree: Fraction
    gamma_check_j_minus_degree: Fraction
    well_forms_agree: bool
    notes: list

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("gamma_degree", "gamma_check_degree", "gamma_check_j_minus_degree"):
            d[k] = str(d[k])
        return d


def check_assumptions(space: StateSpace, g: BipartiteGraph, betas) -> AssumptionReport:
    bu, bv = _betas(betas)
    gam = gamma_barrier(space, betas)
    well = gamma_check_barrier(space, betas)
    complete = g.is_complete_bipartite() and g.n_u > 1
    notes = []
    cbg = bv < (g.n_u + 1) * bu
    if g.is_complete_bipartite() and not cbg:
        notes.append("beta_v >= (|U|+1) beta_u: the crossover law does not depend on beta_v "
                     "for complete bipartite graphs, so beta_v may be lowered")
    if not well.agree:
        notes.append(f"well-depth forms disagree: {well.via_targets} vs {well.via_j_minus}")
    return AssumptionReport(
        complete_bipartite_multi_u=complete,
        stability_inequality=bu * g.n_u < bv * g.n_v,
        no_deep_well=well.via_targets.value < gam.value,
        energy_barrier=2 * well.via_targets.value < gam.value,
        cbg_condition=cbg,
        gamma_degree=gam.value,
        gamma_check_degree=well.via_targets.value,
        gamma_check_j_minus_degree=well.via_j_minus.value,
        well_forms_agree=well.agree,
        notes=notes,
    )


def landscape_report(space: StateSpace, g: BipartiteGraph, betas) -> dict:
    """All degrees and assumption booleans as a JSON-ready dict."""
    u, v, e = space.u_index, space.v_index, space.empty_index
    rep = check_assumptions(space, g, betas).to_dict()
    bu, bv = _betas(betas)
    rep.update({
        "graph": g.name,
        "n_states": space.size,
        "beta_u": str(bu),
        "beta_v": str(bv),
        "pi_degree": {"u": str(pi_degree(space, u, betas)), "v": str(pi_degree(space, v, betas)),
                      "empty": str(pi_degree(space, e, betas))},
        "psi_degree_uv": str(critical_resistance_degree(space, {u}, {v}, betas)),
    })
    return rep
