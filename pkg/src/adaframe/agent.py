"""The recurrent agent: a single-layer LSTM whose input is the current
frame feature concatenated with an attention context from the global
memory, plus three linear heads off the hidden state:

* class scores (softmax),
* the mean of the Gaussian frame-selection policy (sigmoid, in (0,1)),
* a scalar utility estimating discounted future reward.

Forward/backward per step run on the selected kernel backend; this
module owns parameter layout, initialization, and the checkpoint format.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._binio import (
    BadMagicError,
    DimensionMismatchError,
    Reader,
    TruncatedFileError,
    VersionMismatchError,
    atomic_write_bytes,
)
from .memory import AttentionResult, GlobalMemory
from .numerics import Rng

__all__ = [
    "AgentDims",
    "AgentParameters",
    "AgentState",
    "StepOutput",
    "init_params",
    "zero_state",
    "step",
    "step_with_cache",
    "step_backward",
    "location_to_index",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"AFCK"
CHECKPOINT_VERSION = 1

# Canonical block order: checkpoint layout, flat-vector layout, and the
# order weight blocks are drawn during initialization.
_BLOCK_NAMES = (
    "w_in", "b_in", "w_forget", "b_forget", "w_out", "b_out",
    "w_cand", "b_cand", "query_proj", "class_w", "class_b",
    "select_w", "utility_w",
)
_BIAS_BLOCKS = frozenset({"b_in", "b_forget", "b_out", "b_cand", "class_b"})


@dataclass(frozen=True)
class AgentDims:
    feature_dim: int   # full-resolution frame feature size
    memory_dim: int    # global-memory feature size (even)
    hidden_dim: int
    num_classes: int

    def __post_init__(self):
        for name in ("feature_dim", "memory_dim", "hidden_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.memory_dim % 2 != 0:
            raise ValueError("memory_dim must be even (sinusoidal encoding pairs)")

    @property
    def gate_input_dim(self) -> int:
        """Width of [frame, context, h_prev] fed to each LSTM gate."""
        return self.feature_dim + self.memory_dim + self.hidden_dim


def _block_shapes(dims: AgentDims) -> dict[str, tuple[int, ...]]:
    h, z, c, m = dims.hidden_dim, dims.gate_input_dim, dims.num_classes, dims.memory_dim
    return {
        "w_in": (h, z), "b_in": (h,),
        "w_forget": (h, z), "b_forget": (h,),
        "w_out": (h, z), "b_out": (h,),
        "w_cand": (h, z), "b_cand": (h,),
        "query_proj": (m, h),
        "class_w": (c, h), "class_b": (c,),
        "select_w": (h,), "utility_w": (h,),
    }


def param_count(dims: AgentDims) -> int:
    """Closed-form trainable parameter count for the given dims."""
    h, z, c, m = dims.hidden_dim, dims.gate_input_dim, dims.num_classes, dims.memory_dim
    return 4 * (h * z + h) + m * h + c * h + c + 2 * h


@dataclass
class AgentParameters:
    """All trainable weights. Also doubles as the gradient buffer layout."""

    dims: AgentDims
    w_in: np.ndarray
    b_in: np.ndarray
    w_forget: np.ndarray
    b_forget: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    w_cand: np.ndarray
    b_cand: np.ndarray
    query_proj: np.ndarray
    class_w: np.ndarray
    class_b: np.ndarray
    select_w: np.ndarray
    utility_w: np.ndarray

    def __post_init__(self):
        shapes = _block_shapes(self.dims)
        for name in _BLOCK_NAMES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shapes[name]:
                raise ValueError(f"{name}: expected shape {shapes[name]}, got {arr.shape}")
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, dims: AgentDims) -> "AgentParameters":
        shapes = _block_shapes(dims)
        return cls(dims, *(np.zeros(shapes[n]) for n in _BLOCK_NAMES))

    def blocks(self):
        """(name, array) pairs in canonical order."""
        return [(name, getattr(self, name)) for name in _BLOCK_NAMES]

    @staticmethod
    def is_bias(name: str) -> bool:
        return name in _BIAS_BLOCKS

    def count(self) -> int:
        return sum(arr.size for _, arr in self.blocks())

    def copy(self) -> "AgentParameters":
        return AgentParameters(self.dims, *(arr.copy() for _, arr in self.blocks()))

    def kernel_tuple(self):
        return (self.w_in, self.w_forget, self.w_out, self.w_cand,
                self.b_in, self.b_forget, self.b_out, self.b_cand,
                self.query_proj, self.class_w, self.class_b,
                self.select_w, self.utility_w)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.blocks()])

    @classmethod
    def from_vector(cls, dims: AgentDims, vec: np.ndarray) -> "AgentParameters":
        shapes = _block_shapes(dims)
        expected = param_count(dims)
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (expected,):
            raise ValueError(f"expected flat vector of length {expected}, got {vec.shape}")
        arrays, offset = [], 0
        for name in _BLOCK_NAMES:
            size = int(np.prod(shapes[name]))
            arrays.append(vec[offset:offset + size].reshape(shapes[name]).copy())
            offset += size
        return cls(dims, *arrays)


def init_params(dims: AgentDims, scale: float, rng: Rng) -> AgentParameters:
    """Uniform weights in [-scale, scale]; forget bias 1, other biases 0.

    Weight blocks are drawn in canonical block order (biases skipped), so
    a given seed always yields the same parameters.
    """
    if scale < 0:
        raise ValueError("init scale must be non-negative")
    shapes = _block_shapes(dims)
    arrays = []
    for name in _BLOCK_NAMES:
        if AgentParameters.is_bias(name):
            arrays.append(np.zeros(shapes[name]))
        else:
            arrays.append(rng.uniform(-scale, scale, shapes[name]))
    params = AgentParameters(dims, *arrays)
    params.b_forget[:] = 1.0
    return params


@dataclass
class AgentState:
    h: np.ndarray
    c: np.ndarray
    t: int = 0


@dataclass
class StepOutput:
    scores: np.ndarray       # class probabilities, sum to 1
    location_mean: float     # policy mean, strictly inside (0,1)
    utility: float           # estimated discounted future reward


def zero_state(dims: AgentDims) -> AgentState:
    return AgentState(h=np.zeros(dims.hidden_dim), c=np.zeros(dims.hidden_dim), t=0)


def _check_step_inputs(params: AgentParameters, state: AgentState,
                       v: np.ndarray, memory: GlobalMemory):
    dims = params.dims
    if v.shape != (dims.feature_dim,):
        raise ValueError(f"frame feature has shape {v.shape}, expected ({dims.feature_dim},)")
    if state.h.shape != (dims.hidden_dim,) or state.c.shape != (dims.hidden_dim,):
        raise ValueError("agent state does not match hidden_dim")
    if memory.dim != dims.memory_dim:
        raise ValueError(f"memory dim {memory.dim} != agent memory_dim {dims.memory_dim}")


def step_with_cache(params: AgentParameters, state: AgentState, v: np.ndarray,
                    memory: GlobalMemory, raw_values: bool = False):
    """Like :func:`step` but also returns the kernel cache for backward."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    _check_step_inputs(params, state, v, memory)
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    kern = _kernels.get()
    h, c, scores, loc_mean, utility, attn_w, context, cache = kern.step_forward(
        params.kernel_tuple(), enc, values, state.h, state.c, v)
    new_state = AgentState(h=h, c=c, t=state.t + 1)
    out = StepOutput(scores=scores, location_mean=loc_mean, utility=utility)
    attn = AttentionResult(weights=attn_w, context=context)
    return new_state, out, attn, cache


def step(params: AgentParameters, state: AgentState, v: np.ndarray,
         memory: GlobalMemory, raw_values: bool = False):
    """One agent step; returns (new_state, StepOutput, AttentionResult)."""
    new_state, out, attn, _ = step_with_cache(params, state, v, memory, raw_values)
    return new_state, out, attn


def step_backward(params: AgentParameters, memory: GlobalMemory, cache,
                  grads: AgentParameters, dh: np.ndarray | None = None,
                  dc: np.ndarray | None = None, d_scores: np.ndarray | None = None,
                  d_location_mean: float = 0.0, d_utility: float = 0.0,
                  raw_values: bool = False):
    """Backward of one step given its forward cache.

    Accumulates parameter gradients into ``grads`` (an AgentParameters
    used as a buffer) and returns (dh_prev, dc_prev) to keep unrolling.
    """
    if cache is None:
        raise ValueError("step_backward requires the cached forward values")
    hidden = params.dims.hidden_dim
    if dh is None:
        dh = np.zeros(hidden)
    if dc is None:
        dc = np.zeros(hidden)
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    kern = _kernels.get()
    return kern.step_backward(
        params.kernel_tuple(), enc, values, cache,
        np.ascontiguousarray(dh, dtype=np.float64),
        np.ascontiguousarray(dc, dtype=np.float64),
        None if d_scores is None else np.ascontiguousarray(d_scores, dtype=np.float64),
        float(d_location_mean), float(d_utility), grads.kernel_tuple())


def location_to_index(loc: float, num_frames: int) -> int:
    """Map a policy location in [0,1] to a frame index; clamps both ends."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    loc = min(max(float(loc), 0.0), 1.0)
    return min(int(math.floor(loc * num_frames)), num_frames - 1)


def save_checkpoint(params: AgentParameters, horizon: int, path: str):
    """Write the versioned checkpoint.

    Layout: magic "AFCK", u32 version, five u32 dims (feature_dim,
    memory_dim, hidden_dim, num_classes, training horizon), then each
    block in canonical order as u32 element count + little-endian f64.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    dims = params.dims
    out = [CHECKPOINT_MAGIC,
           struct.pack("<6I", CHECKPOINT_VERSION, dims.feature_dim, dims.memory_dim,
                       dims.hidden_dim, dims.num_classes, horizon)]
    for _, arr in params.blocks():
        out.append(struct.pack("<I", arr.size))
        out.append(arr.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(out))


def load_checkpoint(path: str) -> tuple[AgentParameters, int]:
    """Read a checkpoint; returns (params, training horizon).

    Raises BadMagicError / VersionMismatchError / TruncatedFileError /
    DimensionMismatchError on the corresponding corruption.
    """
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), name=path)
    reader.expect_magic(CHECKPOINT_MAGIC)
    version = reader.read_u32()
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, "
                                   f"expected {CHECKPOINT_VERSION}")
    feature_dim = reader.read_u32()
    memory_dim = reader.read_u32()
    hidden_dim = reader.read_u32()
    num_classes = reader.read_u32()
    horizon = reader.read_u32()
    try:
        dims = AgentDims(feature_dim, memory_dim, hidden_dim, num_classes)
    except ValueError as exc:
        raise DimensionMismatchError(f"{path}: invalid dims in header: {exc}") from exc
    if horizon < 1:
        raise DimensionMismatchError(f"{path}: invalid training horizon {horizon}")

    shapes = _block_shapes(dims)
    arrays = []
    for name in _BLOCK_NAMES:
        expected = int(np.prod(shapes[name]))
        count = reader.read_u32()
        if count != expected:
            raise DimensionMismatchError(
                f"{path}: block {name} has {count} values, expected {expected}")
        arrays.append(reader.read_f64_array(count).reshape(shapes[name]))
    if not reader.at_end():
        raise DimensionMismatchError(f"{path}: trailing bytes after last block")
    return AgentParameters(dims, *arrays), horizon
