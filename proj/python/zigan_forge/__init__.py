"""Few-shot calligraphy font style transfer.

The heavy lifting lives in the native ``_core`` module; this package re-exports
it. ``torch`` is imported first so its shared libraries are already loaded.
"""

import torch  # noqa: F401

from ._core import (
    ZiganError,
    binarize,
    cam_attention,
    cli,
    decoder_specs,
    denormalize_image,
    encoder_specs,
    fid_from_features,
    frechet_distance,
    gaussian_kernel,
    has_glyph,
    iou,
    lr_at,
    median_heuristic_bank,
    mk_mmd_sq,
    normalize_image,
    render_glyph,
    split_codepoints,
    total_losses,
    weighted_total,
)

__version__ = "0.1.0"

__all__ = [
    "ZiganError",
    "binarize",
    "cam_attention",
    "cli",
    "decoder_specs",
    "denormalize_image",
    "encoder_specs",
    "fid_from_features",
    "frechet_distance",
    "gaussian_kernel",
    "has_glyph",
    "iou",
    "lr_at",
    "median_heuristic_bank",
    "mk_mmd_sq",
    "normalize_image",
    "render_glyph",
    "split_codepoints",
    "total_losses",
    "weighted_total",
]
