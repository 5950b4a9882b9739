"""Traveling waves of strongly competing two-species systems and their segregated limit."""

from .limits import ConvergenceReport, compare_with_limit, convergence_study, shift_align
from .model import (CoefficientField2x2, CompetitionSystem, Preset, ScalarField, ScalarLimitProblem,
                    lotka_volterra, make_preset, potts_petrovskii, reduce_to_scalar, scalar_problem, skt,
                    validate_assumptions)
from .phaseplane import (BracketInvalid, LimitWave, MinimalSpeedsNotOrdered, NoSemiWave, ProfileOptions,
                         RootNotBracketed, ShootOptions, flux_at_zero, free_boundary_residual,
                         match_bistable, minimal_speed, shoot_semi_wave)
from .speedsign import (InapplicableHypothesis, cross_check_sign, kpp_linear_speed, sign_functional,
                        speed_estimates)
from .system_wave import (DiscretizedWave, NewtonDiverged, SolverConfig, continue_in_k,
                          initial_guess_from_limit, solve_tw)

__version__ = "0.1.0"
