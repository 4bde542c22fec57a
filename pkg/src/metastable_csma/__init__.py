"""Hard-core (CSMA) dynamics with time-varying activation rates on bipartite graphs.

Exact small-instance oracles, energy-landscape degrees, Monte-Carlo
simulation of the crossover time from the all-U to the all-V configuration,
and its predicted time-varying exponential law.
"""
from .exact_oracle import (effective_resistance, expected_hitting_time, hitting_prob_before_return,
                           kernel_at, nu_check, stationary)
from .predictor import (cbg_closed_form_survival, cbg_mean_crossover, critical_timescale,
                        predicted_survival, regime_classify, torus_mean_crossover)
from .rates import RateSchedule, gamma_at, lambda_u_at, lambda_v_at
from .simulator import (colored_poisson_trial, estimate_survival, regeneration_log,
                        simulate_coupled, simulate_hitting, simulate_many)
from .topology import (BipartiteGraph, HardCoreConfig, StateSpace, enumerate_configs,
                       from_edge_list, make_complete_bipartite, make_even_torus)

__version__ = "0.1.0"
