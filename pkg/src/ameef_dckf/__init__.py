"""Distributed cubature Kalman filtering under the adaptive
minimum-error-entropy-with-fiducial-points criterion.

The package bundles the robust filter core (Cauchy-kernel MEEF weights,
cubature prediction, fixed-point measurement update, information-form
distribution), the push-sum leader-follower average-consensus protocol,
non-Gaussian noise generators, the network orchestrator and a Monte
Carlo benchmark CLI. Hot numeric kernels run in a compiled extension
when available, with an equivalent pure-NumPy fallback selected at
import (see `ameef_dckf.backend`).
"""

from ._accel import BACKEND as backend
from .ckf import (FixedPointResult, RegressionModel, StateEstimate,
                  SystemModel, build_regression, cubature_points,
                  fixed_point_update, gain_iml, gain_regression,
                  info_form_update, linear_model, local_statistics,
                  measurement_moments, predict, robust_cholesky,
                  statistical_linearization)
from .consensus import (ConsensusNetwork, PushSumState, SensorGraph,
                        build_weights, lfac_round, run_lfac, step_size_bound)
from .kernels import (KernelParams, WeightMatrices, adaptive_bandwidth,
                      cauchy_kernel, meef_cost, meef_cost_gradient,
                      sigma_max_bound, weight_matrices)
from .metrics import MetricsReport, monte_carlo
from .network import (VARIANTS, FusionPacket, NodeRuntime, distributed_step,
                      kernel_for_variant, run_trajectory)
from .noise import NoiseSpec, sample, scenario_preset
from .scenarios import ScenarioConfig, land_vehicle_scenario, load_scenario

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
