"""Budget-constrained minimax regulation: finite-horizon multiplier search and steady-state LMI."""

from .model import (LinearSystem, ProblemInstance, ValidationReport, example_system, load_system,
                    random_stable_system, save_system, validate)
from .riccati import RiccatiError, lambda_lower_bound, recursion_trajectory, riccati_step
from .lambda_opt import FiniteHorizonSolution, Region, dp_oracle, solve_finite
from .sdp import SdpProblem, SdpSolution, SdpStatus, solve_sdp
from .steady_state import (SteadyStateSolution, classify, hinf_gamma_oracle, riccati_fixed_point,
                           solve_steady_lmi, solve_steady_scan)
from .analysis import (bench_complexity, convergence_sweep, region_limit_membership, region_linear,
                       simulate_receding, turnpike_profile)

__version__ = "0.1.0"
