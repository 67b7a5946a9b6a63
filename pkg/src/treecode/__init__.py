"""Code-matrix fusion for distributed classification and estimation in tree networks."""

__version__ = "0.1.0"

from .codebook import (CodeMatrix, FusionOutcome, from_integer_columns, fuse_batch, hamming_distance,
                       min_distance, min_hamming_fuse, read_code_matrix, to_integer_columns,
                       write_code_matrix)
from .design import AnnealSchedule, anneal, cyclic_column_replacement, design_tree_codes
from .error_analysis import (chained_classification_error, classification_bound, estimation_bound,
                             estimation_error_recursive, intermediate_error, leaf_error_exact)
from .exceptions import CapacityError, ConfigError, EncodingOverflowError, NumericalError
from .local_rules import pbpo_fixed_point
from .observation import (GaussianShiftModel, HypothesisSet, NormalPrior, RegionModel, UniformPrior,
                          snr_to_s)
from .quantizer import RegionTree, lloyd_max, quantize_region_tree
from .treesim import TreeConfig, run_classification, run_estimation, sweep
