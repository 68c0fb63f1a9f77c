"""Robust statistics for interval-valued data.

Interval observations are (center, range, latent distribution) tuples; the
library provides the Mallows distance, barycenter, and symbolic covariance
for them, a minimum-covariance-determinant estimator of location/scatter
with one-step reweighting, the robust Interval-Mahalanobis distance with
adjusted-boxplot and farness cutoffs for outlier detection, and a
simulation harness with contamination scenarios and evaluation metrics.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (Barycenter, IntervalDataset, IntervalObservation,
                   SymbolicCov, WeightVector, barycenter, load_interval_csv,
                   macrodata_cov_2p, mallows_distance_sq, mallows_distances_sq,
                   symbolic_cov, symbolic_cov_from_blocks, write_interval_csv)
from .errors import (DegenerateDataError, DegenerateSpreadError, IvmcdError,
                     SingularCovarianceError, UnreliableFitError,
                     ValidationError)
from .estimator import (ImcdConfig, ImcdFit, cstep_distances, gradient,
                        imcd_fit, minorization_step, objective_logdet, reweight)
from .latent import (LatentMoments, LatentSpec, build_moments,
                     cross_expectation, latent_mean, latent_second_moment,
                     specs_from_config)
from .outlier import (DistanceTable, MallowsAdjBox, OutlierReport,
                      detect_outliers, distance_distance_table,
                      interval_mahalanobis_all, interval_mahalanobis_sq,
                      interval_mahalanobis_sq_quadform)
from .simulate import (ScenarioConfig, angle_error, classification_metrics,
                       frobenius_rel_error, generate_scenario,
                       kl_divergence_gauss, paper_grid, run_grid)
from .univariate import (AdjBox, AdjustedFences, Farness, FarnessModel,
                         adjusted_fences, farness_scores, medcouple,
                         median_mad_standardize, robust_yj_fit, yeo_johnson,
                         yeo_johnson_inverse)
