"""Geometric hidden community model: sampling, recovery, thresholds."""

from .distributions import (BernoulliGate, DistributionFamily, GaussianShift,
                            PiecewisePoly, TablePMF, family_from_dict, log_density,
                            phi_t, sample_edge_weight, symmetric_bernoulli,
                            validate_family)
from .errors import (AssumptionViolation, ConfigurationError, ContractViolation,
                     DomainError, GhcmError, RecoveryFailure)
from .evaluation import (PermissibleSet, agreement, discrepancy, flip_bad_vertices,
                         genie_loglik, permissible_relabelings, restricted_mle_oracle)
from .geometry import (SpatialGrid, build_grid, sample_poisson_points,
                       toroidal_distance, visible_pairs)
from .infotheory import ThresholdReport, ch_divergence, nu_d, phibar_t, threshold_report
from .model import (UNLABELED, Instance, ModelConfig, build_instance, load_instance,
                    normalized_distance, sample_instance, save_instance)
from .harness import (ExperimentPlan, TrialResult, run_sweep, run_trial,
                      select_algorithm, wilson_interval)
from .recovery import (BlockGrid, PhaseDiagnostics, VisibilityGraph, build_visibility_graph,
                       choose_chi_delta, partition_blocks, propagate_block, recover,
                       recover_1d_segments, refine_all, seed_map_labeling)

__version__ = "0.1.0"
