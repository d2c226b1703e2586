"""Poisson multinomial distribution: exact, approximate and simulated pmfs, plus applications."""

from .aggregate import (AggregatedGroup, AggregatedSoftmaxRegression, FitResult, fit, loglik,
                        predict_spm, softmax_spm)
from .bench import accuracy_study, random_spm, timing_study
from .confusion import (CellInterval, ClassifierOutput, ConfusionMatrixUQ, build_confusion_pmd,
                        cell_interval, cell_marginal_pmf, joint_pmf)
from .distribution import PoissonMultinomial
from .errors import MemoryCapError, NumericalFailure, PMDError, SPMError, SupportError, method_advice
from .exact import PmfArray, cdf_at, pmf_at, pmf_at_many, pmf_blockwise, pmf_full
from .normal import mvn_rect_prob, na_cdf_at, na_pmf_at
from .oracle import enumerate_pmf, poisson_binomial_pmf
from .simulation import sample, sim_error_bounds, sim_pmf_at
from .spm import SPM, BlockPartition, detect_blocks, moments, read_spm_csv, validate_spm
from .voting import mode, q_mode, winner_probabilities

__version__ = "0.1.0"
