"""Supervised (BP-sLDA) and unsupervised (BP-LDA) topic models trained
end-to-end by backpropagation through unrolled mirror-descent MAP inference.
"""

from .corpus import LabeledDoc, SparseBow, Vocabulary
from .evaluation import auc, predictive_r2, topic_sparsity
from .gradients import (
    GradientBundle,
    backprop_phi,
    grad_phi_unsup,
    grad_u,
    loss_supervised,
    prior_grad_phi,
)
from .inference import (
    MdaOptions,
    Prediction,
    ThetaTrajectory,
    infer_theta,
    map_objective,
    mda_step,
    predict,
)
from .model import (
    Hyperparams,
    Model,
    OutputParams,
    Task,
    TopicMatrix,
    load_model,
    normalize_to_simplex,
    save_model,
)
from .oracle import SynthSpec, brute_map, fd_gradient, sample_corpus
from .training import (
    AdaptState,
    TrainConfig,
    adaptive_lr,
    running_average,
    smd_update_column,
    train_supervised,
    train_unsupervised,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptState",
    "GradientBundle",
    "Hyperparams",
    "LabeledDoc",
    "MdaOptions",
    "Model",
    "OutputParams",
    "Prediction",
    "SparseBow",
    "SynthSpec",
    "Task",
    "ThetaTrajectory",
    "TopicMatrix",
    "TrainConfig",
    "Vocabulary",
    "adaptive_lr",
    "auc",
    "backprop_phi",
    "brute_map",
    "fd_gradient",
    "grad_phi_unsup",
    "grad_u",
    "infer_theta",
    "load_model",
    "loss_supervised",
    "map_objective",
    "mda_step",
    "normalize_to_simplex",
    "predict",
    "predictive_r2",
    "prior_grad_phi",
    "running_average",
    "sample_corpus",
    "save_model",
    "smd_update_column",
    "topic_sparsity",
    "train_supervised",
    "train_unsupervised",
]
