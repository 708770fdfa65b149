"""Heteroscedastic label-noise training with a logistic-normal likelihood.

The package trains small classifiers whose logits are read as the mean of a
Gaussian on an unconstrained logit space; pushing that Gaussian through a
(tempered) softmax-centered bijection yields a distribution over the
probability simplex.  Training maximizes the resulting log-density of
smoothed target logits, so the learned covariance can attenuate examples
whose labels look wrong.  Standard robust-loss baselines and a small
experiment harness are included.
"""

from .bijectors import (
    BijectorConfig,
    LogitVector,
    SimplexBoundaryError,
    SimplexPoint,
    inverse_log_det_jacobian,
    softmax_centered,
    softmax_centered_inverse,
    target_logits,
    target_matrix,
    tempered_forward,
    tempered_inverse,
    tempered_inverse_log_det_jacobian,
)
from .lowrank import GaussianParams, LowRankCov, gaussian_nll
from .logistic_normal import (
    SIGMA_MODES,
    LNOutput,
    SigmaSpec,
    batch_loss_grads,
    grad_at_optimal_sigma,
    log_prob,
    loss_grads,
    optimal_scalar_sigma,
    optimal_sigma,
    predict,
    predict_labels,
    train_loss,
)
from .baselines import (
    HetConfig,
    ce_loss,
    gce_loss,
    het_loss,
    ls_loss,
    nan_target,
)
from .net import MLPSpec, OptimizerSpec, forward, init_params, load_checkpoint, save_checkpoint
from .data import (
    NoiseSpec,
    NoisyDataset,
    circles,
    gaussian_blobs,
    inject_noise,
    load_mnist_idx,
    split_dataset,
    two_moons,
)
from .harness import (
    DataConfig,
    ExperimentConfig,
    MethodConfig,
    ModelConfig,
    NoiseConfig,
    attenuation_curve,
    gradcheck,
    residual_report,
    run_experiment,
    sweep,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "BijectorConfig",
    "DataConfig",
    "ExperimentConfig",
    "GaussianParams",
    "HetConfig",
    "LNOutput",
    "LogitVector",
    "LowRankCov",
    "MLPSpec",
    "MethodConfig",
    "ModelConfig",
    "NoiseConfig",
    "NoiseSpec",
    "NoisyDataset",
    "OptimizerSpec",
    "SIGMA_MODES",
    "SigmaSpec",
    "SimplexBoundaryError",
    "SimplexPoint",
    "attenuation_curve",
    "batch_loss_grads",
    "ce_loss",
    "circles",
    "forward",
    "gaussian_blobs",
    "gaussian_nll",
    "gce_loss",
    "grad_at_optimal_sigma",
    "gradcheck",
    "het_loss",
    "init_params",
    "inject_noise",
    "inverse_log_det_jacobian",
    "load_checkpoint",
    "load_mnist_idx",
    "log_prob",
    "loss_grads",
    "ls_loss",
    "nan_target",
    "optimal_scalar_sigma",
    "optimal_sigma",
    "predict",
    "predict_labels",
    "residual_report",
    "run_experiment",
    "save_checkpoint",
    "softmax_centered",
    "softmax_centered_inverse",
    "split_dataset",
    "sweep",
    "target_logits",
    "target_matrix",
    "tempered_forward",
    "tempered_inverse",
    "tempered_inverse_log_det_jacobian",
    "train_loss",
    "train_model",
    "two_moons",
]
