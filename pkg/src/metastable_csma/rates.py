"""Time-varying activation rates and the total clock rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from .topology import BipartiteGraph


class ScheduleError(ValueError):
    pass


def as_fraction(value) -> Fraction:
    """Parse ``"p/q"`` strings, ints, decimals or floats into an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # "1.5" and 1.5 should give the same rational
        return Fraction(repr(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class RateSchedule:
    """Power-law activation rates.

    ``lambda_U(t) = ([c_u*lam - mu_u*t]^+)^beta_u`` and
    ``lambda_V(t) = (c_v*lam + mu_v*t)^beta_v``, with ``t`` replaced by
    ``min(t, freeze_time)`` when a freeze time is set.  A freeze time of 0
    gives a time-homogeneous process.
    """

    lam: float
    c_u: float = 1.0
    c_v: float = 1.0
    mu_u: float = 1.0
    mu_v: float = 1.0
    beta_u: Fraction = Fraction(1)
    beta_v: Fraction = Fraction(3, 2)
    freeze_time: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "beta_u", as_fraction(self.beta_u))
        object.__setattr__(self, "beta_v", as_fraction(self.beta_v))
        for name in ("lam", "c_u", "c_v", "mu_u", "mu_v"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ScheduleError(f"{name} must be positive and finite, got {val}")
        if not self.beta_v > self.beta_u > 0:
            raise ScheduleError(
                f"need beta_v > beta_u > 0, got beta_u={self.beta_u}, beta_v={self.beta_v}")
        if self.freeze_time is not None and self.freeze_time < 0:
            raise ScheduleError("freeze_time must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "RateSchedule":
        known = {"lambda", "c_u", "c_v", "mu_u", "mu_v", "beta_u", "beta_v", "freeze_time"}
        extra = set(d) - known
        if extra:
            raise ScheduleError(f"unknown schedule keys {sorted(extra)}")
        if "lambda" not in d:
            raise ScheduleError("schedule needs 'lambda'")
        kw = {k: float(d[k]) for k in ("c_u", "c_v", "mu_u", "mu_v") if k in d}
        for k in ("beta_u", "beta_v"):
            if k in d:
                kw[k] = as_fraction(d[k])
        ft = d.get("freeze_time")
        return cls(lam=float(d["lambda"]), freeze_time=None if ft is None else float(ft), **kw)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "c_u": self.c_u, "c_v": self.c_v,
            "mu_u": self.mu_u, "mu_v": self.mu_v,
            "beta_u": str(self.beta_u), "beta_v": str(self.beta_v),
            "freeze_time": self.freeze_time,
        }

    def frozen_at(self, t: float) -> "RateSchedule":
        """The homogeneous schedule with parameters of time ``t``."""
        return replace(self, freeze_time=self._clip(t))

    @property
    def is_frozen_at_zero(self) -> bool:
        return self.freeze_time == 0

    def _clip(self, t: float) -> float:
        if t < 0:
            raise ScheduleError(f"negative time {t}")
        return t if self.freeze_time is None else min(t, self.freeze_time)


def lambda_u_at(s: RateSchedule, t: float) -> float:
    base = s.c_u * s.lam - s.mu_u * s._clip(t)
    if base <= 0:
        return 0.0
    return base ** float(s.beta_u)


def lambda_v_at(s: RateSchedule, t: float) -> float:
    return (s.c_v * s.lam + s.mu_v * s._clip(t)) ** float(s.beta_v)


def gamma_at(s: RateSchedule, g: BipartiteGraph, t: float) -> float:
    return (1 + lambda_u_at(s, t)) * g.n_u + (1 + lambda_v_at(s, t)) * g.n_v


def gamma_sup(s: RateSchedule, g: BipartiteGraph, t0: float, t1: float) -> float:
    """Upper bound of the clock rate on ``[t0, t1]`` (U rates fall, V rates rise)."""
    if not 0 <= t0 <= t1:
        raise ScheduleError(f"bad interval [{t0}, {t1}]")
    return (1 + lambda_u_at(s, t0)) * g.n_u + (1 + lambda_v_at(s, t1)) * g.n_v


def alpha(s: RateSchedule) -> Fraction:
    return s.beta_v / s.beta_u - 1


def u_depletion_time(s: RateSchedule) -> float:
    return s.c_u * s.lam / s.mu_u


def thinning_window(s: RateSchedule, t_max: float) -> float:
    """Length of the windows on which thinning envelopes are recomputed."""
    w = s.lam / (8 * max(s.mu_u, s.mu_v))
    if math.isfinite(t_max):
        w = min(w, t_max / 64)
    return w


def _power_antiderivative(base0: float, slope: float, beta: float, t0: float, t1: float) -> float:
    """Integral of (base0 + slope*t)^beta over [t0, t1] where the base stays >= 0."""
    if slope == 0:
        return base0 ** beta * (t1 - t0)
    a = max(base0 + slope * t0, 0.0)
    b = max(base0 + slope * t1, 0.0)
    return (b ** (beta + 1) - a ** (beta + 1)) / (slope * (beta + 1))


def integrated_lambda_u(s: RateSchedule, t0: float, t1: float) -> float:
    """Integral of lambda_U over [t0, t1]."""
    if t1 <= t0:
        return 0.0
    out = 0.0
    ft = math.inf if s.freeze_time is None else s.freeze_time
    if t0 < ft:
        hi = min(t1, ft, u_depletion_time(s))
        if hi > t0:
            out += _power_antiderivative(s.c_u * s.lam, -s.mu_u, float(s.beta_u), t0, hi)
    if t1 > ft:
        out += lambda_u_at(s, ft) * (t1 - max(t0, ft))
    return out


def integrated_lambda_v(s: RateSchedule, t0: float, t1: float) -> float:
    if t1 <= t0:
        return 0.0
    out = 0.0
    ft = math.inf if s.freeze_time is None else s.freeze_time
    if t0 < ft:
        hi = min(t1, ft)
        out += _power_antiderivative(s.c_v * s.lam, s.mu_v, float(s.beta_v), t0, hi)
    if t1 > ft:
        out += lambda_v_at(s, ft) * (t1 - max(t0, ft))
    return out


def integrated_gamma(s: RateSchedule, g: BipartiteGraph, t0: float, t1: float) -> float:
    return ((t1 - t0) * g.n + g.n_u * integrated_lambda_u(s, t0, t1)
            + g.n_v * integrated_lambda_v(s, t0, t1))
