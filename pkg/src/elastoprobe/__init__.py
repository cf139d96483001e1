"""2D linear-elastic displacement pipeline and Poisson's-ratio estimation."""

from .fields import (
    BCMap,
    FieldError,
    Grid2D,
    NuMap,
    ScalarImage,
    VectorField2D,
    divergence,
    grad_div,
    laplacian,
    read_field,
    read_nu_map,
    read_pgm,
    write_field,
    write_pgm,
)
from .solver import SolverConfig, SolverError, SparseSystem, assemble, residual, solve
from .warper import sample_bilinear, warp
from .estimator import EstimatorConfig, nu_map, nu_summary
from .noise import (
    AngleProfile,
    NoiseSpec,
    angle_between,
    apply_noise,
    build_profile,
    default_profile,
    sweep_alpha,
)
from .metrics import rmse, sd, table2_report
from .bvp import (
    BvpParams,
    BvpSpec,
    DatasetRecord,
    bc_from_spec,
    central_bvp,
    generate_dataset,
    random_bvp,
    read_manifest,
    synthetic_texture,
)

__version__ = "0.1.0"
