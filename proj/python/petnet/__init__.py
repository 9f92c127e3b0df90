"""From-scratch CNN micro-framework on synthetic PET-like phantoms.

Thin python surface over the C++ core: tensors, layer forwards, the two
reference architectures, the training loop, the phantom generator and the
finite-difference gradient checks.
"""

from ._core import (
    ConfigError,
    FormatError,
    Model,
    NumericError,
    PhantomSample,
    ShapeError,
    Tensor,
    TrainReport,
    build_toy_cnn,
    build_unet,
    concat_channels,
    conv2d,
    evaluate,
    flatten,
    generate_phantoms,
    gradcheck_run_all,
    load_model,
    matmul,
    maxpool2,
    read_pgm,
    relu,
    save_model,
    sigmoid,
    softmax,
    train,
    upsample_nearest,
    write_pgm,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "Model",
    "NumericError",
    "PhantomSample",
    "ShapeError",
    "Tensor",
    "TrainReport",
    "build_toy_cnn",
    "build_unet",
    "concat_channels",
    "conv2d",
    "evaluate",
    "flatten",
    "generate_phantoms",
    "gradcheck_run_all",
    "load_model",
    "matmul",
    "maxpool2",
    "read_pgm",
    "relu",
    "save_model",
    "sigmoid",
    "softmax",
    "train",
    "upsample_nearest",
    "write_pgm",
]
