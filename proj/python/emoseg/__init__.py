"""Event-prior moving-object segmentation: python surface over the C++ core."""

from ._core import (
    SceneConfig,
    bilinear_resize,
    boundary_f,
    build_st_map,
    conv1x1,
    depthwise_conv3x3,
    dilate,
    generate_scene,
    infer_checkpoint,
    jaccard,
    maxpool_to,
    softmax_spatial,
)

__all__ = [
    "SceneConfig",
    "bilinear_resize",
    "boundary_f",
    "build_st_map",
    "conv1x1",
    "depthwise_conv3x3",
    "dilate",
    "generate_scene",
    "infer_checkpoint",
    "jaccard",
    "maxpool_to",
    "softmax_spatial",
]
