"""Deep registration and compressibility regression on generated datasets."""

from .data import (
    DataError,
    Record,
    load_fields,
    load_pairs,
    read_efd,
    read_manifest,
    read_pgm,
    write_efd,
)
from .gradcam import grad_cam
from .registration import (
    EpochStats,
    RegistrationConfig,
    RegistrationUNet,
    field_rmse,
    ncc_loss,
    predict_displacements,
    smoothness_loss,
    train_registration,
    warp_images,
)
from .regression import (
    RegressionCNN,
    RegressionConfig,
    augment_fields,
    normalize_fields,
    predict_nu,
    sigma_nu,
    train_regression,
)

__all__ = [
    "DataError",
    "Record",
    "load_fields",
    "load_pairs",
    "read_efd",
    "read_manifest",
    "read_pgm",
    "write_efd",
    "grad_cam",
    "EpochStats",
    "RegistrationConfig",
    "RegistrationUNet",
    "field_rmse",
    "ncc_loss",
    "predict_displacements",
    "smoothness_loss",
    "train_registration",
    "warp_images",
    "RegressionCNN",
    "RegressionConfig",
    "augment_fields",
    "normalize_fields",
    "predict_nu",
    "sigma_nu",
    "train_regression",
]
