"""GaussianFace: multi-task discriminative GPLVM for pairwise face verification."""

__version__ = "0.1.0"

from .exceptions import ContractViolation, NumericalFailure, OptimizationFailure  # noqa: E402
from .kernels import HyperParams, kernel_matrix, cross_kernel, ard_kernel  # noqa: E402
from .kfda import PriorConfig, build_kfda, kfda_objective  # noqa: E402
from .laplace import LaplaceGP, laplace_mode  # noqa: E402
from .model import DomainData, ModelConfig, TrainedModel, train, load_model, save_model  # noqa: E402
from .cluster import ClusterOptions, Codebook, build_codebook, cluster  # noqa: E402
from .pipelines import (  # noqa: E402
    FacePair,
    FeatureExtractor,
    PairSet,
    bc_probabilities,
    combined_probabilities,
    extract_features,
    train_bc,
    train_combined,
    train_fe,
    verify_bc,
    verify_combined,
)
from .config import Config, load_config  # noqa: E402
from .evaluation import EvalReport, kfold_eval, roc_curve  # noqa: E402
from .synth import SyntheticDomainSpec, gen_domains  # noqa: E402
