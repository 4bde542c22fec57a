"""Exact frozen-parameter computations on an enumerated state space.

All linear algebra is dense and meant for spaces of at most ~10^4 states.
Solves are done on the rate (generator) scale, which is the kernel scaled
by the clock rate, so entries stay O(lambda) instead of O(1/gamma).
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .rates import RateSchedule, gamma_at, lambda_u_at, lambda_v_at
from .topology import StateSpace

MAX_DENSE_STATES = 10_000
RESIDUAL_TOL = 1e-10


class StructuralError(RuntimeError):
    """The configuration graph is disconnected or a solve is singular."""


@dataclass(frozen=True)
class TransitionKernel:
    matrix: np.ndarray
    frozen_time: float
    gamma: float


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray
    lambda_u: float
    lambda_v: float


def clock_rate(space: StateSpace, lu: float, lv: float) -> float:
    g = space.graph
    return (1 + lu) * g.n_u + (1 + lv) * g.n_v


@functools.lru_cache(maxsize=64)
def _move_incidence(space: StateSpace) -> tuple:
    """0/1 matrices of U-births, V-births and deaths between states."""
    n = space.size
    if n > MAX_DENSE_STATES:
        raise StructuralError(f"{n} states exceed the dense-solve limit {MAX_DENSE_STATES}")
    mats = {kind: np.zeros((n, n)) for kind in ("birth_u", "birth_v", "death")}
    for k in range(n):
        for j, kind, _ in space.neighbors(k):
            mats[kind][k, j] = 1.0
    for m in mats.values():
        m.setflags(write=False)
    return mats["birth_u"], mats["birth_v"], mats["death"]


def rate_matrix(space: StateSpace, lu: float, lv: float) -> np.ndarray:
    """Off-diagonal transition rates; the diagonal holds minus the row sums."""
    bu, bv, d = _move_incidence(space)
    q = lu * bu + lv * bv + d
    q[np.diag_indices(space.size)] = -q.sum(axis=1)
    return q


def kernel_matrix(space: StateSpace, lu: float, lv: float) -> np.ndarray:
    gam = clock_rate(space, lu, lv)
    return np.eye(space.size) + rate_matrix(space, lu, lv) / gam


def kernel_at(space: StateSpace, s: RateSchedule, t: float) -> TransitionKernel:
    lu, lv = lambda_u_at(s, t), lambda_v_at(s, t)
    return TransitionKernel(kernel_matrix(space, lu, lv), t, clock_rate(space, lu, lv))


def stationary(space: StateSpace, lu: float, lv: float) -> StationaryDistribution:
    if lu < 0 or lv <= 0:
        raise ValueError("need lu >= 0 and lv > 0")
    a = np.array([c[0] for c in space.counts], dtype=float)
    b = np.array([c[1] for c in space.counts], dtype=float)
    with np.errstate(divide="ignore"):
        logw = a * np.log(lu) + b * np.log(lv) if lu > 0 else np.where(a > 0, -np.inf, b * np.log(lv))
    logw -= logw.max()
    w = np.exp(logw)
    return StationaryDistribution(w / w.sum(), lu, lv)


def _solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        # conductance systems span many orders of magnitude; accuracy is
        # judged by the residual below instead of the rcond estimate
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            x = scipy.linalg.solve(a, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise StructuralError(f"singular system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise StructuralError("non-finite solution (disconnected state space?)")
    scale = np.abs(a).sum(axis=1).max() * np.abs(x).max() + np.abs(rhs).max()
    resid = np.abs(a @ x - rhs).max() / scale if scale > 0 else 0.0
    if resid > RESIDUAL_TOL:
        raise StructuralError(f"relative residual {resid:.2e} above {RESIDUAL_TOL}")
    return x


def committor(space: StateSpace, lu: float, lv: float, src: int, dst: int) -> np.ndarray:
    """P_x(hit dst before src) for every state x, with h(src)=0, h(dst)=1."""
    q = rate_matrix(space, lu, lv)
    interior = np.array([k for k in range(space.size) if k not in (src, dst)], dtype=int)
    h = np.zeros(space.size)
    h[dst] = 1.0
    if interior.size:
        h[interior] = _solve(-q[np.ix_(interior, interior)], q[interior, dst])
    return h


def hitting_prob_before_return(space: StateSpace, lu: float, lv: float) -> float:
    """Chance that a trial from u reaches v before the next clock tick at u.

    A tick that leaves the chain at u counts as a return, so the escape
    probability picks up a factor ``rate out of u / gamma``.
    """
    u, v = space.u_index, space.v_index
    q = rate_matrix(space, lu, lv)
    h = committor(space, lu, lv, u, v)
    out = q[u].copy()
    out[u] = 0.0
    return float(out @ h) / clock_rate(space, lu, lv)


def expected_hitting_time(space: StateSpace, lu: float, lv: float, src: int, dst: int) -> float:
    """Mean continuous time to go from ``src`` to ``dst`` (expected ticks / gamma)."""
    if src == dst:
        raise ValueError("src and dst must differ")
    q = rate_matrix(space, lu, lv)
    keep = np.array([k for k in range(space.size) if k != dst], dtype=int)
    m = _solve(-q[np.ix_(keep, keep)], np.ones(keep.size))
    return float(m[int(np.searchsorted(keep, src))])


def conductances(space: StateSpace, lu: float, lv: float) -> np.ndarray:
    pi = stationary(space, lu, lv).probs
    c = pi[:, None] * kernel_matrix(space, lu, lv)
    np.fill_diagonal(c, 0.0)
    # symmetrise away rounding noise; detailed balance makes this exact in theory
    return 0.5 * (c + c.T)


def effective_resistance(space: StateSpace, lu: float, lv: float, a: int, b: int) -> float:
    """Resistance between states ``a`` and ``b`` in the network c(x,y) = pi(x)K(x,y).

    Returns ``inf`` when ``a`` and ``b`` are not connected by positive conductances.
    """
    if a == b:
        raise ValueError("endpoints must differ")
    c = conductances(space, lu, lv)
    reach = _component(c, a)
    if b not in reach:
        return math.inf
    nodes = sorted(reach)
    pos = {k: i for i, k in enumerate(nodes)}
    sub = c[np.ix_(nodes, nodes)]
    lap = np.diag(sub.sum(axis=1)) - sub
    ia, ib = pos[a], pos[b]
    interior = np.array([i for i in range(len(nodes)) if i not in (ia, ib)], dtype=int)
    # solve for psi = 1 - voltage directly: forming 1 - phi near a deep well
    # at ``a`` cancels most significant digits
    psi = np.zeros(len(nodes))
    psi[ib] = 1.0
    if interior.size:
        psi[interior] = _solve(lap[np.ix_(interior, interior)], sub[interior, ib])
    current = float(sub[ia] @ psi)
    return 1.0 / current


def _component(c: np.ndarray, start: int) -> set:
    seen, stack = {start}, [start]
    while stack:
        k = stack.pop()
        for j in np.flatnonzero(c[k] > 0):
            j = int(j)
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def eps_check_at(space: StateSpace, s: RateSchedule, t: float) -> float:
    return hitting_prob_before_return(space, lambda_u_at(s, t), lambda_v_at(s, t))


def nu_check(space: StateSpace, s: RateSchedule, g, t: float) -> float:
    """Instantaneous crossover rate: frozen success probability times clock rate."""
    lu, lv = lambda_u_at(s, t), lambda_v_at(s, t)
    return hitting_prob_before_return(space, lu, lv) * gamma_at(s, g, t)


def mean_crossover_at(space: StateSpace, s: RateSchedule, t: float) -> float:
    lu, lv = lambda_u_at(s, t), lambda_v_at(s, t)
    return expected_hitting_time(space, lu, lv, space.u_index, space.v_index)
