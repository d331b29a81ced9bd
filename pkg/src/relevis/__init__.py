"""Relevance-map toolkit for small 3D image classifiers.

The package covers the full desk-scale loop: synthesize a cohort with a
known lesion, regress out nuisance covariates, train a compact 3D CNN,
walk its decisions back to voxel space with layer-wise relevance
propagation, and inspect the result through analysis helpers, a CLI,
and an HTTP service for the interactive viewer.
"""

from .analyze import (Cluster, ClusterSet, OcclusionResult, cluster_size_histogram,
                      extract_clusters, occlusion_scan, region_relevance,
                      region_volume, slice_profile)
from .backend import BACKEND
from .errors import (AtlasError, DataError, DegenerateClassError,
                     DegenerateInputError, DegenerateLabelsError,
                     DegenerateRelevanceError, DimsError, FormatError, IoError,
                     NumericError, RejectedError, RelevisError, ShapeError,
                     SingularDesignError, UnsupportedError)
from .evaluate import (Metrics, PearsonResult, ROCCurve, classification_metrics,
                       pearson_r, relevance_volume_correlation, roc_auc, roc_curve,
                       stratified_kfold, volume_baseline, youden_threshold)
from .lrp import (ConservationReport, RelevanceMap, RuleConfig, conservation_report,
                  fold_batchnorm, relevance_map)
from .phantom import (GROUPS, PhantomSpec, SubjectRecord, generate_atlas,
                      generate_cohort, generate_phantom)
from .residualize import (COVARIATE_NAMES, ResidualModel, apply_scalar,
                          apply_voxelwise, fit_scalar, fit_voxelwise,
                          load_residual_model, save_residual_model)
from .volume import (Atlas, Volume3D, load_atlas, lookup, read_volume, save_atlas,
                     write_volume)

__version__ = "0.1.0"
