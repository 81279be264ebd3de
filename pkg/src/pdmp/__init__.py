"""Event-driven continuous-time samplers with exact event times.

Three piecewise-deterministic processes (Hamiltonian flow with refreshment,
per-coordinate sign flips, and gradient reflections) share one simulation
core, backed by exact first-arrival sampling, rate formulas, decay-rate
estimators, a truncated-generator oracle for 1D Gaussian targets, and a
config-driven experiment harness.
"""

from .diagnostics import (DecayFit, InsufficientSignalError, Observable,
                          ObservableCurve, coordinate_observable,
                          default_window, ensemble_mean_curve, envelope_curve,
                          fit_decay_rate, interval_time_average, moment_check,
                          parse_observable, position_at, positions_at,
                          segment_time_average)
from .events import (EnvelopeViolationError, affine_rate_integral,
                     first_arrival_affine, first_arrival_thinning,
                     sample_exponential)
from .harness import (ExperimentReport, PRESETS, RunConfig, build_potential,
                      preset_rows, run_experiment, run_sweep)
from .potentials import (CurvatureUnboundedError, CustomPotential,
                         DOUBLE_WELL_POINCARE, Factor1D, Potential,
                         PotentialMeta, Product1DPotential,
                         QuadraticPotential, convexity_barrier,
                         diagonal_gaussian, double_well_factor,
                         isotropic_gaussian, quadratic_factor)
from .rates import (RateReport, build_rate_report, cj_constant, optimal_gamma,
                    optimal_window, rate_lower_bound)
from .samplers import (EventRecord, PhaseState, Trajectory, bps_advance,
                       refresh_velocity, reflect, rhmc_advance, simulate,
                       stationary_state, zz_advance)
from .seeding import chain_rng, chain_seed, splitmix64
from .spectral import (SpectralTrace, TruncatedGenerator,
                       abs_position_matrix, assemble_generator_1d,
                       decay_rate_spectral, lowering_matrix, position_matrix,
                       propagate, spectral_radius_estimate, suggested_dt,
                       x_mode)

__version__ = "0.1.0"
