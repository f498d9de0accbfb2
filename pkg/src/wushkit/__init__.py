"""wushkit: closed-form adaptive blockwise transforms for low-bit quantization.

The package has three layers:

* linear-algebra and quantizer primitives (``linalg``, ``quantformats``),
* the noise-model theory validators (``noise``, ``stats_bounds``),
* the transform construction and layer pipeline (``transforms``, ``pipeline``)
  plus file/CLI plumbing (``tensorio``, ``config``, ``cli``).

Hot kernels run through numba when available; set ``WUSHKIT_BACKEND=numpy``
to force the pure-numpy fallbacks (see ``wushkit._accel``).
"""

from ._accel import get_backend, set_backend
from .errors import (
    BadMagic,
    DimOverflow,
    InvalidCovariance,
    InvalidSpec,
    NaNInput,
    NoConvergence,
    NotPositiveDefinite,
    NotPowerOfTwo,
    NotSymmetric,
    NumericalError,
    OutOfRange,
    ShapeMismatch,
    Singular,
    TruncatedPayload,
    UnsupportedVersion,
    ValidationError,
    WushkitError,
)
from .linalg import SymEigen, cholesky, hadamard, invert, random_rotation, sym_eigen
from .noise import (
    FpRelative,
    IntAbsmax,
    compose_transform,
    fp_trace_term,
    int_bounds,
    midrise_int_quantizer,
    one_sided_loss_mc,
    random_spd_moment,
)
from .quantformats import (
    E2M1,
    E4M3,
    E8M0,
    INT4_GAUSSIAN_CLIP,
    FpFormat,
    IntSpec,
    QuantScheme,
    enumerate_grid,
    int4_scheme,
    mxfp4_scheme,
    nvfp4_scheme,
    quantize_group,
    quantize_matrix,
    round_bf16,
    rtn_value,
    scheme_by_name,
)
from .stats_bounds import (
    MaxSqEstimate,
    gaussian_max_bound,
    laplacian_max_bound,
    mc_max_sq,
    survival_expectation,
)
from .tensorio import read_tensor, write_tensor
from .transforms import (
    BlockTransform,
    LayerPlan,
    build_block,
    build_layer_plan,
    second_moments,
)
from .pipeline import (
    LossReport,
    SyntheticSpec,
    first_order_gap,
    forward_quantized,
    gen_synthetic,
    layer_loss,
    sweep,
    sweep_cell,
)
from .config import ExperimentConfig, load_config, parse_config, write_sweep_csv

__version__ = "0.1.0"

__all__ = [
    "get_backend",
    "set_backend",
    "WushkitError",
    "ValidationError",
    "NumericalError",
    "NotSymmetric",
    "NotPositiveDefinite",
    "NotPowerOfTwo",
    "Singular",
    "NoConvergence",
    "NaNInput",
    "ShapeMismatch",
    "OutOfRange",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedPayload",
    "DimOverflow",
    "InvalidSpec",
    "InvalidCovariance",
    "SymEigen",
    "cholesky",
    "sym_eigen",
    "hadamard",
    "random_rotation",
    "invert",
    "FpFormat",
    "IntSpec",
    "QuantScheme",
    "E2M1",
    "E4M3",
    "E8M0",
    "INT4_GAUSSIAN_CLIP",
    "enumerate_grid",
    "rtn_value",
    "round_bf16",
    "quantize_group",
    "quantize_matrix",
    "mxfp4_scheme",
    "nvfp4_scheme",
    "int4_scheme",
    "scheme_by_name",
    "FpRelative",
    "IntAbsmax",
    "compose_transform",
    "fp_trace_term",
    "int_bounds",
    "one_sided_loss_mc",
    "midrise_int_quantizer",
    "random_spd_moment",
    "MaxSqEstimate",
    "gaussian_max_bound",
    "laplacian_max_bound",
    "mc_max_sq",
    "survival_expectation",
    "read_tensor",
    "write_tensor",
    "BlockTransform",
    "LayerPlan",
    "build_block",
    "build_layer_plan",
    "second_moments",
    "LossReport",
    "SyntheticSpec",
    "gen_synthetic",
    "forward_quantized",
    "layer_loss",
    "first_order_gap",
    "sweep",
    "sweep_cell",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "write_sweep_csv",
    "__version__",
]
