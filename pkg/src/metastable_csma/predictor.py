"""Predicted law of the crossover time and closed-form reference values."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from . import rates as R
from .exact_oracle import nu_check
from .rates import RateSchedule
from .topology import BipartiteGraph, StateSpace, enumerate_configs

DEFAULT_THRESHOLDS = (0.1, 10.0)


@dataclass
class SurvivalPrediction:
    tau: np.ndarray
    survival: np.ndarray
    regime: str
    product: float
    M: float
    nu0: float
    tau_star: float


def regime_classify(M: float, nu0: float, tol_low: float = DEFAULT_THRESHOLDS[0],
                    tol_high: float = DEFAULT_THRESHOLDS[1]) -> tuple:
    """Label ``M * nu0`` as subcritical, critical or supercritical.

    The thresholds are arbitrary cut-offs; the raw product is returned too.
    """
    if not tol_low < tol_high:
        raise ValueError("need tol_low < tol_high")
    prod = M * nu0
    if prod > tol_high:
        return "supercritical", prod
    if prod < tol_low:
        return "subcritical", prod
    return "critical", prod


def _space(g: BipartiteGraph, space: Optional[StateSpace]) -> StateSpace:
    return enumerate_configs(g) if space is None else space


def critical_timescale(g: BipartiteGraph, s: RateSchedule, space: Optional[StateSpace] = None) -> float:
    return 1.0 / nu_check(_space(g, space), s, g, 0.0)


def depletion_horizon(s: RateSchedule) -> float:
    """Time at which lambda_U reaches 0, or inf if the schedule freezes earlier."""
    td = R.u_depletion_time(s)
    if s.freeze_time is not None and s.freeze_time < td:
        return math.inf
    return td


def predicted_survival(g: BipartiteGraph, s: RateSchedule, M: float, tau_grid,
                       space: Optional[StateSpace] = None, rtol: float = 1e-6,
                       slack: float = 0.0, thresholds=DEFAULT_THRESHOLDS) -> SurvivalPrediction:
    """``exp(-int_0^tau M nu(M sigma) dsigma)`` with the frozen-parameter rate from the exact oracle.

    Grid points with ``M*tau`` at or beyond the depletion time of U plus
    ``slack`` get survival 0.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or np.any(tau < 0) or np.any(np.diff(tau) < 0):
        raise ValueError("tau grid must be a nondecreasing list of nonnegative values")
    sp = _space(g, space)
    nu0 = nu_check(sp, s, g, 0.0)
    regime, prod = regime_classify(M, nu0, *thresholds)
    t_dep = depletion_horizon(s)
    cut = t_dep + slack

    def nu(t):
        return nu_check(sp, s, g, t)

    # integrate in real time t = M sigma; the exponent is the same integral
    ft = s.freeze_time
    surv = np.empty(tau.size)
    acc, t_prev = 0.0, 0.0
    for k, x in enumerate(tau):
        t_k = M * x
        if t_k >= cut:
            surv[k:] = 0.0
            break
        if t_k > t_prev:
            acc += _integrate(nu, t_prev, t_k, ft, nu0, rtol)
            t_prev = t_k
        surv[k] = math.exp(-acc)
    return SurvivalPrediction(tau, surv, regime, prod, M, nu0, t_dep / M)


def _integrate(f, a: float, b: float, freeze: Optional[float], nu0: float, rtol: float) -> float:
    if freeze is not None and freeze <= a:
        # parameters constant on the whole piece
        return f(freeze) * (b - a)
    if freeze is not None and a < freeze < b:
        return _integrate(f, a, freeze, None, nu0, rtol) + f(freeze) * (b - freeze)
    val, _err = integrate.quad(f, a, b, epsrel=rtol, epsabs=0.0, limit=200)
    return val


def cbg_closed_form_survival(m: int, beta_u, c_u: float, mu_u: float, lam: float,
                             M: float, tau: float) -> float:
    """Survival from the complete-bipartite rate ``(c_u lam - mu_u t)^-p``, ``p = (m-1) beta_u``."""
    p = (m - 1) * float(R.as_fraction(beta_u))
    if p <= 0:
        raise ValueError("need (m - 1) * beta_u > 0")
    if tau <= 0:
        return 1.0
    top = c_u * lam
    if tau >= top / (mu_u * M):
        return 0.0
    rest = top - mu_u * M * tau
    if p == 1:
        return (rest / top) ** (1.0 / mu_u)
    exponent = (rest ** (1 - p) - top ** (1 - p)) / (mu_u * (p - 1))
    return math.exp(-exponent)


def cbg_prefactor(g: BipartiteGraph, s: RateSchedule, space: Optional[StateSpace] = None) -> float:
    """Bounded constant ``nu(0) * lambda_U(0)^(|U|-1)`` that the closed form leaves out."""
    return nu_check(_space(g, space), s, g, 0.0) * R.lambda_u_at(s, 0.0) ** (g.n_u - 1)


def cbg_calibrated_survival(g: BipartiteGraph, s: RateSchedule, M: float, tau_grid,
                            space: Optional[StateSpace] = None) -> np.ndarray:
    """Closed-form complete-bipartite survival with the exact prefactor at time 0 folded in."""
    kappa = cbg_prefactor(g, s, space)
    return np.array([cbg_closed_form_survival(g.n_u, s.beta_u, s.c_u, s.mu_u, s.lam, M, x) ** kappa
                     for x in np.asarray(tau_grid, dtype=float)])


def cbg_mean_crossover(m: int, lambda_u: float) -> float:
    """Leading-order mean crossover time ``lambda_U^(m-1) / m`` on a complete bipartite graph."""
    if m < 2 or lambda_u <= 0:
        raise ValueError("need m >= 2 and lambda_u > 0")
    return lambda_u ** (m - 1) / m


def torus_mean_crossover(m: int, n: int, lambda_u: float, lambda_v: float, alpha: float) -> float:
    """Leading-order mean crossover time on the even torus Z_m x Z_n."""
    if not 0 < alpha < 1:
        raise ValueError("formula holds for 0 < alpha < 1")
    if m % 2 or n % 2:
        raise ValueError("torus sides must be even")
    ell = math.ceil(1 / alpha)
    return lambda_u ** (ell * (ell + 1) + 1) / (4 * m * n * ell * lambda_v ** (ell * (ell - 1)))
