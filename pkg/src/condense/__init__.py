"""condense: compact large (covariate, response) datasets into conditional
support points and fit penalized-likelihood conditional densities on the
reduced data, scored by CRPS."""

from .data import Dataset, read_dataset_csv, write_dataset_csv
from .density import BasisConfig, DensityModel, FitReport, fit, model_from_json, model_to_json
from .errors import DomainError, NumericalError
from .metrics import (QuadratureRule, StepCdf, FunctionCdf, crps_average,
                      crps_empirical_closed_form, crps_single, empirical_cdf,
                      energy_distance_empirical, gauss_legendre_rule,
                      l2_discrepancy_sq, conditional_l2_discrepancy_sq,
                      response_domain, skl)
from .partitioning import (Partition, PartitionConfig, bin_partition, choose_K,
                           kmeans_centers, sp_centers, voronoi_partition)
from .reduction import (Allocation, ReducedSet, allocate_sizes, couple_covariates,
                        csp_reduce, mcsp_reduce, read_reduced_csv,
                        uniform_subsample, vanilla_sp_reduce, write_reduced_csv)
from .simgen import CaseSpec, TruthOracle, generate, train_test_split, truth_crps
from .support_points import (SpConfig, SpResult, empirical_energy_objective,
                             sp_fixed_point_step, support_points_1d,
                             support_points_nd)

__version__ = "0.1.0"
