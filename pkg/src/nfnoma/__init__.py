"""Simulator for NOMA coexistence of near-field and far-field massive MIMO users.

Far-field users are admitted onto zero-forcing beams preconfigured for
near-field users. The package provides the physical channel models, the
precoder, a greedy beam scheduler, the rate model, a successive-convex-
approximation optimizer for the general case, exact solvers for the
single-user and single-beam special cases, and a seeded Monte Carlo
experiment harness with CSV output.
"""

from .channels import (ChannelSet, build_channel_set, far_field_channel,
                       near_field_channel, path_loss, perturb_csi)
from .exact import (BBResult, SingleUserSolution, bb_solve, check_feasible,
                    initial_box, solve_single_ff, solve_single_ff_bisection)
from .geometry import (SPEED_OF_LIGHT, SystemConfig, UlaGeometry,
                       check_field_regions, deterministic_scenario,
                       drop_half_ring, rayleigh_distance)
from .harness import (ExperimentConfig, ResultRow, build_instance,
                      dbm_to_watt, run_experiment, run_to_csv, watt_to_dbm)
from .precoding import (EffectiveChannels, IllConditionedChannels, Precoder,
                        build_precoder, effective_channels)
from .rates import (Allocation, QosInfeasibleError, RateReport, evaluate,
                    qos_power, qos_power_vector, rate_ff, rate_ff_nf, rate_nf,
                    validate_allocation)
from .sca import (LinearBounds, ScaPoint, ScaResult, StackedGains, initial_point,
                  linearize, point_objective, point_to_allocation, refit_point,
                  sca_loop, solve_subproblem, stack_gains)
from .scheduling import Assignment, greedy_assign

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
