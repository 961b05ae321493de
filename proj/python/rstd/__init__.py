"""Tensor-decomposed and randomly shuffled tensor-decomposed convolution kernels."""

from ._rstd import (
    Permutation,
    RstdError,
    Topology,
    build_topology,
    compression_ratio,
    contract,
    conv2d,
    init_cores,
    rank1_tr_split_forward,
    reconstruct,
    reconstruct_gradient,
    shuffle,
    table1_param_counts,
    tt_svd,
    unshuffle,
)

__all__ = [
    "Permutation",
    "RstdError",
    "Topology",
    "build_topology",
    "compression_ratio",
    "contract",
    "conv2d",
    "init_cores",
    "rank1_tr_split_forward",
    "reconstruct",
    "reconstruct_gradient",
    "shuffle",
    "table1_param_counts",
    "tt_svd",
    "unshuffle",
]
