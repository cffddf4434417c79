"""Adaptive frame selection for sequence classification.

A recurrent agent, guided by attention over a cheap global memory of the
whole sequence, picks a small number of informative time steps to
classify a feature sequence. Training uses a policy gradient with a
learned utility baseline; at inference time the utility estimates drive
an early exit so easy inputs cost fewer frames.
"""

from . import _kernels
from ._binio import (
    BadMagicError,
    DimensionMismatchError,
    FormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .agent import (
    AgentDims,
    AgentParameters,
    AgentState,
    StepOutput,
    init_params,
    load_checkpoint,
    location_to_index,
    save_checkpoint,
    step,
    zero_state,
)
from .data import (
    Dataset,
    FeatureSequence,
    SyntheticSpec,
    derive_memory,
    generate,
    read_dataset,
    write_dataset,
)
from .inference import (
    CostModel,
    InferenceResult,
    StopConfig,
    cost_of,
    run_adaptive,
    run_fixed,
    stop_by_entropy,
)
from .learning import (
    TrainConfig,
    Trajectory,
    discounted_returns,
    fit,
    loss_classification,
    loss_utility,
    margin,
    reward_margin_increase,
    train_epoch,
)
from .memory import AttentionResult, GlobalMemory, attend, positional_encode
from .numerics import Rng, finite_diff_grad, gaussian_sample, softmax

__version__ = "0.1.0"

kernel_backend = _kernels.active_name
kernel_backends_available = _kernels.available
