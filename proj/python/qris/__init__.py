"""Python bindings for the qris C++ core."""

from ._qris import (
    NUM_FEATURES,
    Model,
    QrisError,
    analyze,
    binarize_to_grid,
    build_dataset,
    decode_format_bits,
    decode_image,
    encode,
    encode_png,
    encode_with,
    estimate_module_size,
    evaluate_scores,
    extract_features,
    feature_names,
    format_bits,
    preprocess,
    render,
)

__all__ = [
    "NUM_FEATURES",
    "Model",
    "QrisError",
    "analyze",
    "binarize_to_grid",
    "build_dataset",
    "decode_format_bits",
    "decode_image",
    "encode",
    "encode_png",
    "encode_with",
    "estimate_module_size",
    "evaluate_scores",
    "extract_features",
    "feature_names",
    "format_bits",
    "preprocess",
    "render",
]
