"""Surrogate-model training workbench: lattice augmentation, density-weighted
loss and transfer learning on a synthetic seismic-response oracle."""

from .augment import AugmentOp, apply_op, augment_instance, build_training_set
from .dataset import Dataset
from .lattice import CoreGeometry, CrackConfig, make_geometry, random_crack_config
from .loss import LossSpec, ModeFit, estimate_mode_sigma, standard_loss, weighted_loss, weighted_loss_gradient, z_factor
from .nn import Model, ModelArch, init_model, load_weights, save_weights, surrogate_arch
from .oracle import OracleConfig, agreement_check, generate_dataset, oracle_label
from .train import TrainConfig, TrainHistory, run_repeats, split_validation, train, transfer_train

__version__ = "0.1.0"

__all__ = [
    "AugmentOp", "apply_op", "augment_instance", "build_training_set",
    "Dataset",
    "CoreGeometry", "CrackConfig", "make_geometry", "random_crack_config",
    "LossSpec", "ModeFit", "estimate_mode_sigma", "standard_loss", "weighted_loss", "weighted_loss_gradient", "z_factor",
    "Model", "ModelArch", "init_model", "load_weights", "save_weights", "surrogate_arch",
    "OracleConfig", "agreement_check", "generate_dataset", "oracle_label",
    "TrainConfig", "TrainHistory", "run_repeats", "split_validation", "train", "transfer_train",
]
