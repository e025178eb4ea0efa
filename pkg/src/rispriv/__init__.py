"""Simulation and design toolkit for transmitter privacy behind a
reconfigurable surface: correlated channel models, mismatched linear
estimation at an unwanted sensor, and a penalty-dual alternating projected
gradient optimizer for the precoders and surface phases."""

from .comm import (Design, RateContext, achievable_rate, composite_channel,
                   interference_covariance, qos_residual, rate_context)
from .gradcheck import fd_gradient, run_gradcheck
from .gradients import EvalRecord, ThetaContext, Workspace, XCache
from .harness import (AoaResult, SweepSpec, TrialRecord, apply_sweep_value,
                      bartlett_aoa, run_aoa_study, run_convergence, run_sweep,
                      run_trial, transmitter_bearing_deg, write_csv)
from .linalg import NumericalError, block_trace, cgauss, herm, kron2, kron_eye, \
    psd_sqrt, unvec, vec
from .optimizer import (IterPoint, OptimizerReport, PddState, ProblemContext,
                        armijo_step, augmented_objective, grad_F, grad_theta,
                        initial_design, inner_loop, optimize, outer_loop,
                        project_phases, project_precoder, update_tau)
from .scenario import (ChannelSet, KronFactors, PriorSet, SystemConfig,
                       apply_prior_scenario, config_from_dict,
                       config_from_toml, dbm_to_watt, derive_priors,
                       desk_config, paper_scale_config, path_loss_db,
                       ris_correlation, sample_channels, true_sensing_stats,
                       ula_correlation, ula_steering, watt_to_dbm)
from .sensing import (LmmseFilter, ObservationBlock, build_observation,
                      error_covariance, error_mean, estimate_channel,
                      filter_mse, lmmse_gain_sensor, lmmse_gain_transmitter,
                      make_observation, normalized_objective,
                      predicted_mse_full, predicted_objective,
                      sample_observations, simulate_observation, true_mse)

__version__ = "0.1.0"
