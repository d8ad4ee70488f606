"""Layer-parallel multigrid forward propagation for deep residual networks.

The forward pass of a residual network is a sequential recursion over
layers. This package treats that recursion as a block-bidiagonal nonlinear
system and solves it with full-approximation multigrid over the layer
index: blocks of layers relax concurrently, information crosses block
boundaries once per sweep, and the cycle count to a fixed residual norm is
independent of depth. Truncating the solve after a couple of cycles yields
approximate states good enough for training gradients.
"""

from .errors import ConfigurationError, DimensionError, IdxParseError, ProtocolError
from .kernels import (
    TransformParams,
    apply_transform,
    conv2d_params,
    dense_params,
    l2_norm,
    transform_vjp,
)
from .multigrid import (
    CycleReport,
    MgHierarchy,
    MgLevel,
    assemble_coarse_source,
    build_hierarchy,
    c_relaxation,
    compute_residual,
    f_relaxation,
    fcf_relaxation,
    initial_guess,
    mg_cycle,
    restrict_states,
    solve,
    solve_forward,
)
from .network import (
    ResidualNetwork,
    forward_logits,
    load_network,
    output_state,
    propagation_operator,
    readout_logits,
    save_network,
    sequential_forward,
    source_from_input,
)
from .parallel import (
    BlockPartition,
    BoundaryMessage,
    ExchangeTracker,
    decode_message,
    encode_message,
    exchange_and_c_relax,
    make_partition,
    parallel_f_relax,
    wire_roundtrip_transport,
)
from .synthetic import (
    random_network,
    random_sample,
    synthetic_digits,
    write_digit_idx_files,
    write_idx_images,
    write_idx_labels,
)
from .training import (
    Dataset,
    EpochStats,
    Gradients,
    TrainConfig,
    evaluate,
    load_mnist_idx,
    loss_and_grad,
    sgd_update,
    train_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "BoundaryMessage",
    "ConfigurationError",
    "CycleReport",
    "Dataset",
    "DimensionError",
    "EpochStats",
    "ExchangeTracker",
    "Gradients",
    "IdxParseError",
    "MgHierarchy",
    "MgLevel",
    "ProtocolError",
    "ResidualNetwork",
    "TrainConfig",
    "TransformParams",
    "apply_transform",
    "assemble_coarse_source",
    "build_hierarchy",
    "c_relaxation",
    "compute_residual",
    "conv2d_params",
    "decode_message",
    "dense_params",
    "encode_message",
    "evaluate",
    "exchange_and_c_relax",
    "f_relaxation",
    "fcf_relaxation",
    "forward_logits",
    "initial_guess",
    "l2_norm",
    "load_mnist_idx",
    "load_network",
    "loss_and_grad",
    "make_partition",
    "mg_cycle",
    "output_state",
    "parallel_f_relax",
    "propagation_operator",
    "random_network",
    "random_sample",
    "readout_logits",
    "restrict_states",
    "save_network",
    "sequential_forward",
    "sgd_update",
    "solve",
    "solve_forward",
    "source_from_input",
    "synthetic_digits",
    "train_epoch",
    "transform_vjp",
    "wire_roundtrip_transport",
    "write_digit_idx_files",
    "write_idx_images",
    "write_idx_labels",
]
