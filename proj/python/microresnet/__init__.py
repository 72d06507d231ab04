"""Small residual networks: architectures, ops, augmentation and training CLI."""

from ._core import (
    ArchSpec,
    DataError,
    Error,
    FormatError,
    Model,
    NumericalError,
    ParseError,
    TapeError,
    ShapeError,
    __version__,
    augment,
    avg_pool2d,
    build_model,
    conv2d,
    count_layers,
    count_params,
    gradcheck,
    gradcheck_op_names,
    infer_shapes,
    linear,
    load_arch,
    load_model,
    max_pool2d,
    parse_arch,
    preset_names,
    published_layer_count_mismatch,
    relu,
    rescale_bilinear,
    run_cli,
    softmax_cross_entropy,
    synth_dataset,
    to_plain_convnet,
    zero_pad_channels,
)

__all__ = [name for name in dir() if not name.startswith("_")]
