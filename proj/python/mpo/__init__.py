"""Fit binary patterns onto planes in the weight space of small classifiers."""

from ._core import (  # noqa: F401
    ModelSpec,
    Mask,
    Dataset,
    PlaneParams,
    TrainConfig,
    GridResult,
    make_mlp,
    make_conv_net,
    reference_net,
    init_plane,
    orthogonalize,
    materialize,
    checkerboard,
    checkerboard_with_border,
    random_mask,
    make_synthetic,
    load_idx,
    load_cifar10,
    evaluate,
    train,
    eval_grid,
    black_white_means,
    pearson,
    save_plane,
    load_plane,
    MpoError,
)
