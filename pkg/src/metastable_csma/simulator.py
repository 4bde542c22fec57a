"""Monte-Carlo simulation of the hard-core dynamics with time-varying rates.

Every site carries a death clock (rate 1) and a birth clock (rate
``lambda_U(t)`` or ``lambda_V(t)``); a birth at a site with an active
neighbour is discarded.  The superposition of all clocks is the driving
clock of total rate ``gamma(t)``.

``simulate_hitting`` only materialises the clocks that can change the state
(deaths of active sites, births of unblocked inactive sites).  A clock that is
dormant is skipped; by memorylessness its next tick is drawn afresh when it
wakes up.  Ticks that leave the state unchanged ("null" ticks) form an
independent Poisson process of rate ``gamma(t) - effective rate`` and are only
counted, or placed in time when the trial log needs them.

``simulate_coupled`` runs every clock of two copies on shared randomness so
that the partial order between the copies is preserved.
"""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import rates as R
from .rates import RateSchedule
from .topology import BipartiteGraph, FeasibilityError, HardCoreConfig, is_independent, mask_leq

log = logging.getLogger(__name__)

DEATH, BIRTH, NULL_COUNT, NULL_PLACE, MARK = range(5)


class ConfigurationError(ValueError):
    """Coupling preconditions violated."""


def replicate_seed(base_seed: int, index: int) -> int:
    """Stable 63-bit seed for replicate ``index`` of an experiment."""
    h = hashlib.blake2b(f"{int(base_seed)}:{int(index)}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def stream(seed: int, site: int, kind: int) -> np.random.Generator:
    """Counter-based generator for one (replicate, site, clock type)."""
    ss = np.random.SeedSequence(seed, spawn_key=(site, kind))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class RegenLog:
    """Trials started at every tick spent in u (plus time 0 when starting there).

    ``length[k]`` counts ticks in ``(start[k], start[k] + duration[k]]``.
    """

    start: np.ndarray
    success: np.ndarray
    length: np.ndarray
    duration: np.ndarray
    first_success: Optional[float]
    timeout: bool = False

    @property
    def n_trials(self) -> int:
        return int(self.start.size)


@dataclass
class HittingSample:
    t_v: float
    n_events: int
    seed: int
    replicate: int = 0
    timeout: bool = False
    t_max: float = math.inf
    regen_log: Optional[RegenLog] = field(default=None, repr=False)


@dataclass
class CouplingSample:
    times: np.ndarray
    states: np.ndarray
    states_prime: np.ndarray
    order_violations: int
    t_v: float
    t_v_prime: float
    seed: int = 0


def _exact_gap(start: float, end: float) -> float:
    """``d`` with ``start + d == end`` in floating point."""
    d = end - start
    for _ in range(8):
        got = start + d
        if got == end:
            return d
        d = np.nextafter(d, math.inf if got < end else -math.inf)
    return d


class _Rates:
    """Scalar and vectorised rate evaluation with the thinning envelope."""

    def __init__(self, s: RateSchedule, g: BipartiteGraph, t_max: float):
        self.s, self.g = s, g
        self.window = R.thinning_window(s, t_max)
        self.freeze = math.inf if s.freeze_time is None else s.freeze_time
        self.const_u = R.lambda_u_at(s, self.freeze) if self.freeze < math.inf else None
        self.const_v = R.lambda_v_at(s, self.freeze) if self.freeze < math.inf else None
        self.depletion = R.u_depletion_time(s)

    def lu(self, t):
        return R.lambda_u_at(self.s, t)

    def lv(self, t):
        return R.lambda_v_at(self.s, t)

    def lu_vec(self, t: np.ndarray) -> np.ndarray:
        s = self.s
        base = np.maximum(s.c_u * s.lam - s.mu_u * np.minimum(t, self.freeze), 0.0)
        return base ** float(s.beta_u)

    def lv_vec(self, t: np.ndarray) -> np.ndarray:
        s = self.s
        return (s.c_v * s.lam + s.mu_v * np.minimum(t, self.freeze)) ** float(s.beta_v)

    def next_birth(self, rng: np.random.Generator, t: float, on_u: bool, t_max: float) -> float:
        """First tick after ``t`` of a site birth clock, by thinning on windows."""
        while t <= t_max:
            if t >= self.freeze:
                rate = self.const_u if on_u else self.const_v
                return t + rng.standard_exponential() / rate if rate > 0 else math.inf
            if on_u and t >= self.depletion:
                return math.inf
            end = min(t + self.window, self.freeze)
            env = self.lu(t) if on_u else self.lv(end)
            t_prop = t + rng.standard_exponential() / env
            if t_prop > end:
                t = end
                continue
            t = t_prop
            actual = self.lu(t) if on_u else self.lv(t)
            if actual > env * (1 + 1e-12):
                raise AssertionError(f"thinning envelope {env} below rate {actual} at t={t}")
            if rng.random() * env <= actual:
                return t
        return math.inf


def _check_start(g: BipartiteGraph, cfg) -> int:
    mask = cfg.mask if isinstance(cfg, HardCoreConfig) else int(cfg)
    if isinstance(cfg, HardCoreConfig) and cfg.graph != g:
        raise FeasibilityError("configuration belongs to another graph")
    if not is_independent(g, mask):
        raise FeasibilityError(f"start configuration {mask:#b} is not an independent set")
    return mask


def simulate_hitting(g: BipartiteGraph, s: RateSchedule, x0, target, seed: int,
                     t_max: float, regen_log: bool = False, replicate: int = 0) -> HittingSample:
    """First time the process started at ``x0`` equals ``target``.

    Runs that pass ``t_max`` return ``t_v = inf`` with ``timeout=True``.
    With ``regen_log`` the trials started at ticks in the all-U state are
    recorded (requires ``x0`` to be the all-U state).
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    x = _check_start(g, x0)
    tgt = _check_start(g, target)
    u_mask = g.u_mask
    if regen_log and x != u_mask:
        raise ValueError("the trial log needs the start at the all-U configuration")
    if x == tgt:
        empty = RegenLog(np.empty(0), np.empty(0, bool), np.empty(0, int), np.empty(0), None)
        return HittingSample(0.0, 0, seed, replicate, False, t_max, empty if regen_log else None)

    rt = _Rates(s, g, t_max)
    n, n_u = g.n, g.n_u
    nbr = g.neighbor_masks
    death_rng = [stream(seed, i, DEATH) for i in range(n)]
    birth_rng = [stream(seed, i, BIRTH) for i in range(n)]
    null_rng = stream(seed, n, NULL_COUNT)
    place_rng = stream(seed, n, NULL_PLACE)

    nxt = [math.inf] * n
    t = 0.0
    for i in range(n):
        if x >> i & 1:
            nxt[i] = death_rng[i].standard_exponential()
        elif not x & nbr[i]:
            nxt[i] = rt.next_birth(birth_rng[i], 0.0, i < n_u, t_max)

    n_eff = 0
    null_mass = 0.0  # integrated null rate not yet turned into a count
    n_null = 0

    # trial bookkeeping
    chunks = []
    open_start = 0.0 if regen_log else None
    open_ticks = 0

    def eligible_counts(mask):
        eu = ev = 0
        for i in range(n):
            if not mask >> i & 1 and not mask & nbr[i]:
                if i < n_u:
                    eu += 1
                else:
                    ev += 1
        return eu, ev

    n_active = bin(x).count("1")
    eu, ev = eligible_counts(x)

    while True:
        i = min(range(n), key=nxt.__getitem__)
        t_new = nxt[i]
        timed_out = t_new > t_max
        t_end = t_max if timed_out else t_new
        mass = (R.integrated_gamma(s, g, t, t_end) - n_active * (t_end - t)
                - eu * R.integrated_lambda_u(s, t, t_end) - ev * R.integrated_lambda_v(s, t, t_end))
        mass = max(mass, 0.0)
        if regen_log and x == u_mask:
            ticks = _place_null_ticks(place_rng, rt, g, t, t_end, null_rng.poisson(mass),
                                      n_active, eu, ev)
            n_null += ticks.size
            if ticks.size:
                starts = np.concatenate(([open_start], ticks[:-1]))
                chunks.append((starts, np.zeros(ticks.size, bool), np.ones(ticks.size, int),
                               ticks - starts))
                open_start = float(ticks[-1])
                open_ticks = 0
        elif regen_log:
            k = int(null_rng.poisson(mass))
            n_null += k
            open_ticks += k
        else:
            null_mass += mass
        if timed_out:
            break

        # apply the effective tick at site i
        t = t_new
        n_eff += 1
        bit = 1 << i
        if x & bit:
            x ^= bit
            n_active -= 1
            nxt[i] = rt.next_birth(birth_rng[i], t, i < n_u, t_max) if not x & nbr[i] else math.inf
            for j in g.adjacency[i]:
                if not x & nbr[j]:
                    nxt[j] = rt.next_birth(birth_rng[j], t, j < n_u, t_max)
        else:
            x |= bit
            n_active += 1
            nxt[i] = t + death_rng[i].standard_exponential()
            for j in g.adjacency[i]:
                nxt[j] = math.inf
        eu, ev = eligible_counts(x)

        if regen_log:
            open_ticks += 1
            if x == tgt:
                d = _exact_gap(open_start, t)
                chunks.append((np.array([open_start]), np.array([True]),
                               np.array([open_ticks]), np.array([d])))
                break
            if x == u_mask:
                chunks.append((np.array([open_start]), np.array([False]),
                               np.array([open_ticks]), np.array([t - open_start])))
                open_start, open_ticks = t, 0
        elif x == tgt:
            break

    if not regen_log:
        n_null = int(null_rng.poisson(null_mass))
    trial_log = None
    if regen_log:
        parts = list(zip(*chunks)) if chunks else [[np.empty(0)], [np.empty(0, bool)],
                                                   [np.empty(0, int)], [np.empty(0)]]
        starts, succ, length, dur = (np.concatenate(p) for p in parts)
        first = float(starts[succ][0]) if succ.any() else None
        trial_log = RegenLog(starts, succ, length.astype(int), dur, first, timed_out)
    return HittingSample(
        t_v=math.inf if timed_out else t,
        n_events=n_eff + n_null,
        seed=seed,
        replicate=replicate,
        timeout=timed_out,
        t_max=t_max,
        regen_log=trial_log,
    )


def _place_null_ticks(rng, rt: _Rates, g: BipartiteGraph, a: float, b: float, count,
                      n_active: int, eu: int, ev: int) -> np.ndarray:
    """Positions of ``count`` null ticks on ``(a, b)`` in a fixed state.

    The null rate is ``gamma(t)`` minus the rates of the clocks that would
    change the state (deaths of active sites, births of eligible sites).
    """
    count = int(count)
    if count == 0 or b <= a:
        return np.empty(0)
    wu, wv, const = g.n_u - eu, g.n_v - ev, g.n - n_active
    env = wu * rt.lu(a) + wv * rt.lv(b) + const
    out = []
    need = count
    while need > 0:
        m = max(2 * need, 16)
        cand = rng.uniform(a, b, size=m)
        rate = wu * rt.lu_vec(cand) + wv * rt.lv_vec(cand) + const
        keep = cand[rng.random(m) * env <= rate]
        out.append(keep[:need])
        need -= min(need, keep.size)
    return np.sort(np.concatenate(out))


def _run_one(args) -> HittingSample:
    g, s, x0, target, base_seed, rep, t_max, regen = args
    return simulate_hitting(g, s, x0, target, replicate_seed(base_seed, rep), t_max,
                            regen_log=regen, replicate=rep)


def simulate_many(g: BipartiteGraph, s: RateSchedule, x0, target, base_seed: int,
                  replicates: int, t_max: float, regen_log: bool = False,
                  jobs: int = 1, first: int = 0) -> list:
    """Independent replicates with stable per-replicate seeds, sorted by index."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    x0 = _check_start(g, x0)
    target = _check_start(g, target)
    tasks = [(g, s, x0, target, base_seed, rep, t_max, regen_log)
             for rep in range(first, first + replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        out = [_run_one(a) for a in tasks]
    return sorted(out, key=lambda h: h.replicate)


def regeneration_log(g: BipartiteGraph, s: RateSchedule, seed: int, t_max: float,
                     replicate: int = 0) -> HittingSample:
    """Crossover run from u to v with the full trial log."""
    return simulate_hitting(g, s, g.u_mask, g.v_mask, seed, t_max, regen_log=True,
                            replicate=replicate)


@dataclass
class TrialSummary:
    n_trials: int
    n_success: int
    failed_length_sum: int
    n_failed: int

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_trials

    @property
    def success_se(self) -> float:
        p = self.success_rate
        return math.sqrt(p * (1 - p) / self.n_trials)

    @property
    def mean_failed_length(self) -> float:
        return self.failed_length_sum / self.n_failed if self.n_failed else math.nan


def summarize_trials(samples: Sequence[HittingSample]) -> TrialSummary:
    n_trials = n_success = lsum = n_failed = 0
    for h in samples:
        lg = h.regen_log
        if lg is None:
            raise ValueError("sample has no trial log")
        n_trials += lg.n_trials
        n_success += int(lg.success.sum())
        fail = ~lg.success
        lsum += int(lg.length[fail].sum())
        n_failed += int(fail.sum())
    return TrialSummary(n_trials, n_success, lsum, n_failed)


# ---------------------------------------------------------------------------
# monotone coupling

def _check_coupling(s: RateSchedule, sp: RateSchedule, t_max: float, g: BipartiteGraph,
                    x0: int, x0p: int) -> None:
    if not mask_leq(g, x0, x0p):
        raise ConfigurationError("initial configurations are not ordered")
    horizon = t_max if math.isfinite(t_max) else 10 * max(R.u_depletion_time(s), R.u_depletion_time(sp))
    grid = set(np.linspace(0.0, horizon, 513).tolist())
    for sch in (s, sp):
        for bp in (sch.freeze_time, R.u_depletion_time(sch)):
            if bp is not None and bp <= horizon:
                grid.add(bp)
    for t in sorted(grid):
        if R.lambda_u_at(s, t) < R.lambda_u_at(sp, t) or R.lambda_v_at(s, t) > R.lambda_v_at(sp, t):
            raise ConfigurationError(
                f"schedules not ordered at t={t}: need lambda_U >= lambda_U' and lambda_V <= lambda_V'")


def simulate_coupled(g: BipartiteGraph, s: RateSchedule, s_prime: RateSchedule, x0, x0_prime,
                     seed: int, t_max: float, stop_at_target: bool = True) -> CouplingSample:
    """Two copies driven by the same clocks.

    Death clocks are shared per site.  Birth proposals per site run at an
    envelope above both copies' rates; a uniform mark decides acceptance in
    each copy, so the copy with the smaller rate accepts a subset of the
    births of the other.  The copy ``x`` favours U, ``x'`` favours V.
    """
    if not t_max > 0 or not math.isfinite(t_max):
        raise ValueError("coupled runs need a finite positive t_max")
    x = _check_start(g, x0)
    xp = _check_start(g, x0_prime)
    _check_coupling(s, s_prime, t_max, g, x, xp)
    n, n_u = g.n, g.n_u
    nbr = g.neighbor_masks
    v_mask = g.v_mask
    window = min(R.thinning_window(s, t_max), R.thinning_window(s_prime, t_max))
    death_rng = [stream(seed, i, DEATH) for i in range(n)]
    birth_rng = [stream(seed, i, BIRTH) for i in range(n)]
    mark_rng = [stream(seed, i, MARK) for i in range(n)]

    def rate(sch, t, on_u):
        return R.lambda_u_at(sch, t) if on_u else R.lambda_v_at(sch, t)

    def envelope(t0, on_u):
        t1 = t0 + window
        tt = t0 if on_u else t1
        return t1, max(rate(s, tt, on_u), rate(s_prime, tt, on_u))

    # per site: next death tick, next birth proposal, current birth window
    next_death = [death_rng[i].standard_exponential() for i in range(n)]
    win_end, env = [0.0] * n, [0.0] * n
    next_birth = [0.0] * n

    def draw_birth(i, t):
        on_u = i < n_u
        while True:
            if t >= win_end[i]:
                win_end[i], env[i] = envelope(t, on_u)
            if env[i] <= 0:
                t = win_end[i]
                if t > t_max:
                    return math.inf
                continue
            cand = t + birth_rng[i].standard_exponential() / env[i]
            if cand <= win_end[i]:
                return cand
            t = win_end[i]
            if t > t_max:
                return math.inf

    for i in range(n):
        next_birth[i] = draw_birth(i, 0.0)

    times, xs, xps = [0.0], [x], [xp]
    violations = 0
    t_v = 0.0 if x == v_mask else math.inf
    t_vp = 0.0 if xp == v_mask else math.inf
    while True:
        i_d = min(range(n), key=next_death.__getitem__)
        i_b = min(range(n), key=next_birth.__getitem__)
        if next_death[i_d] <= next_birth[i_b]:
            t, i, is_birth = next_death[i_d], i_d, False
        else:
            t, i, is_birth = next_birth[i_b], i_b, True
        if t > t_max:
            break
        bit = 1 << i
        if is_birth:
            on_u = i < n_u
            w = mark_rng[i].random() * env[i]
            if w <= rate(s, t, on_u) and not x & (bit | nbr[i]):
                x |= bit
            if w <= rate(s_prime, t, on_u) and not xp & (bit | nbr[i]):
                xp |= bit
            next_birth[i] = draw_birth(i, t)
        else:
            x &= ~bit
            xp &= ~bit
            next_death[i] = t + death_rng[i].standard_exponential()
        if (x, xp) != (xs[-1], xps[-1]):
            times.append(t)
            xs.append(x)
            xps.append(xp)
            if not mask_leq(g, x, xp):
                violations += 1
            if x == v_mask and t_v == math.inf:
                t_v = t
            if xp == v_mask and t_vp == math.inf:
                t_vp = t
        if stop_at_target and t_v < math.inf and t_vp < math.inf:
            break
    return CouplingSample(np.array(times), np.array(xs, dtype=np.int64),
                          np.array(xps, dtype=np.int64), violations, t_v, t_vp, seed)


# ---------------------------------------------------------------------------
# Poisson clock with independently coloured ticks

Rate = Union[float, Callable[[float], float]]


def colored_poisson_trial(gamma: Rate, eps: Callable[[float], float], seed, t_max: float,
                          gamma_bound: Optional[float] = None) -> float:
    """First success time on ``{0}`` plus the ticks of a Poisson clock.

    Each time ``s`` in that set is an independent trial with success
    probability ``eps(s)``.  ``gamma`` is a constant or a callable rate, in
    which case ``gamma_bound`` must dominate it on ``[0, t_max]``.  Returns
    ``inf`` when no success happens by ``t_max``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if rng.random() < eps(0.0):
        return 0.0
    const = not callable(gamma)
    if const:
        bound = float(gamma)
    elif gamma_bound is None:
        raise ValueError("a callable gamma needs gamma_bound")
    else:
        bound = float(gamma_bound)
    if bound <= 0:
        return math.inf
    t = 0.0
    while True:
        t += rng.standard_exponential() / bound
        if t > t_max:
            return math.inf
        if not const:
            g = gamma(t)
            if g > bound:
                raise ValueError(f"gamma({t}) = {g} exceeds gamma_bound {bound}")
            if rng.random() * bound > g:
                continue
        if rng.random() < eps(t):
            return t


# ---------------------------------------------------------------------------
# survival estimation

@dataclass
class SurvivalCurve:
    tau: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    n: np.ndarray
    censored_fraction: float


def estimate_survival(samples: Sequence[HittingSample], M: float, tau_grid) -> SurvivalCurve:
    """Fraction of runs with ``T_v > M*tau`` and its binomial standard error.

    A timed-out run counts as surviving while ``M*tau < t_max``; beyond its
    horizon it is excluded from that grid point.
    """
    if not samples:
        raise ValueError("no samples")
    if not M > 0:
        raise ValueError("M must be positive")
    tau = np.asarray(tau_grid, dtype=float)
    tv = np.array([h.t_v for h in samples], dtype=float)
    to = np.array([h.timeout for h in samples], dtype=bool)
    tm = np.array([h.t_max for h in samples], dtype=float)
    surv, se, ns = [], [], []
    dropped = False
    for x in tau:
        cut = M * x
        valid = ~to | (cut < tm)
        dropped |= not valid.all()
        k = int(valid.sum())
        if k == 0:
            surv.append(math.nan)
            se.append(math.nan)
            ns.append(0)
            continue
        p = float(np.count_nonzero(valid & (to | (tv > cut)))) / k
        surv.append(p)
        se.append(math.sqrt(p * (1 - p) / k))
        ns.append(k)
    if dropped:
        log.warning("timed-out runs excluded at grid points beyond their horizon")
    return SurvivalCurve(tau, np.array(surv), np.array(se), np.array(ns, dtype=int), float(to.mean()))
