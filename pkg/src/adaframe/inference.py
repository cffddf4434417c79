"""Inference-time rollouts.

Training uses a fixed number of steps; at test time the rollout can exit
early by watching the utility head. A running max of the utilities seen
so far is kept per video, and every step whose utility sits more than a
threshold below that max counts as a violation; once violations exceed
the patience the current step's scores become the final prediction.
Violations are counted cumulatively by default (``consecutive=True``
resets the counter whenever a step is within the threshold).

Compute is accounted per observed frame: a fixed feature-extraction
cost, plus (for the agent only) the overhead of building the global
memory, amortized per frame by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .agent import AgentParameters, location_to_index
from .memory import GlobalMemory

__all__ = [
    "StopConfig",
    "CostModel",
    "InferenceResult",
    "default_patience",
    "run_adaptive",
    "run_fixed",
    "entropy",
    "stop_by_entropy",
    "run_entropy_stop",
    "cost_of",
    "cost_of_frames",
]


def default_patience(threshold: float, horizon: int) -> int:
    """2 below a threshold of 0.7, horizon//2 + 1 from 0.7 up."""
    return 2 if threshold < 0.7 else horizon // 2 + 1


@dataclass
class StopConfig:
    threshold: float          # utility drop tolerated before a violation
    horizon: int              # trained step budget (hard cap)
    patience: int | None = None   # violations allowed; None applies the default rule
    consecutive: bool = False     # count only consecutive violations

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.patience is None:
            self.patience = default_patience(self.threshold, self.horizon)
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class CostModel:
    """GFLOPs accounting per observed frame.

    ``gflops_overhead_per_frame`` covers the global-memory features; set
    ``overhead_once=True`` to charge it once per video instead (for
    sensitivity analysis). ``gflops_agent_per_frame`` optionally counts
    the recurrent agent itself (about 2 * parameter count FLOPs per
    step); it is 0 by default since feature extraction dominates.
    """

    gflops_full_frame: float = 7.82
    gflops_overhead_per_frame: float = 1.32
    gflops_agent_per_frame: float = 0.0
    overhead_once: bool = False

    def __post_init__(self):
        for name in ("gflops_full_frame", "gflops_overhead_per_frame",
                     "gflops_agent_per_frame"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def adaframe(cls, agent_param_count: int | None = None,
                 overhead_once: bool = False) -> "CostModel":
        agent = 0.0 if agent_param_count is None else 2.0 * agent_param_count / 1e9
        return cls(gflops_agent_per_frame=agent, overhead_once=overhead_once)

    @classmethod
    def baseline(cls) -> "CostModel":
        return cls(gflops_overhead_per_frame=0.0)


def cost_of_frames(frames_used: int, model: CostModel) -> float:
    if frames_used < 0:
        raise ValueError("frames_used must be >= 0")
    if frames_used == 0:
        return 0.0
    per_frame = model.gflops_full_frame + model.gflops_agent_per_frame
    if model.overhead_once:
        return frames_used * per_frame + model.gflops_overhead_per_frame
    return frames_used * (per_frame + model.gflops_overhead_per_frame)


@dataclass
class InferenceResult:
    prediction: int
    scores: np.ndarray
    frames_used: int
    stop_step: int               # == frames_used; step the prediction came from
    visited: list[int] = field(default_factory=list)
    utilities: list[float] = field(default_factory=list)
    cost_gflops: float = 0.0


def cost_of(result: InferenceResult, model: CostModel) -> float:
    """GFLOPs spent on one video under the given accounting."""
    return cost_of_frames(result.frames_used, model)


def run_adaptive(params: AgentParameters, features: np.ndarray,
                 memory: GlobalMemory, stop: StopConfig, start_index: int = 0,
                 cost_model: CostModel | None = None,
                 raw_values: bool = False) -> InferenceResult:
    """Deterministic rollout with utility-driven early exit.

    The policy mean is used directly as the next location (no sampling).
    The running max is updated only after the current step is compared
    against it, and a tie at exactly the threshold is not a violation.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    num_frames = features.shape[0]
    if num_frames < 1:
        raise ValueError("sequence has no frames")
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    kern = _kernels.get()
    ptuple = params.kernel_tuple()
    model = cost_model if cost_model is not None else CostModel.adaframe()

    h = np.zeros(params.dims.hidden_dim)
    c = np.zeros(params.dims.hidden_dim)
    frame = int(start_index)
    visited: list[int] = []
    utilities: list[float] = []
    running_max = -math.inf
    violations = 0
    scores = None

    for t in range(1, stop.horizon + 1):
        visited.append(frame)
        h, c, scores, loc_mean, utility, _, _, _ = kern.step_forward(
            ptuple, enc, values, h, c, features[frame])
        utilities.append(utility)
        if running_max - utility > stop.threshold:
            violations += 1
        elif stop.consecutive:
            violations = 0
        if utility > running_max:
            running_max = utility
        if violations >= stop.patience or t == stop.horizon:
            break
        frame = location_to_index(loc_mean, num_frames)

    frames_used = len(visited)
    return InferenceResult(
        prediction=int(np.argmax(scores)), scores=scores, frames_used=frames_used,
        stop_step=frames_used, visited=visited, utilities=utilities,
        cost_gflops=cost_of_frames(frames_used, model))


def run_fixed(params: AgentParameters, features: np.ndarray, memory: GlobalMemory,
              horizon: int, start_index: int = 0,
              cost_model: CostModel | None = None,
              raw_values: bool = False) -> InferenceResult:
    """Deterministic rollout that always runs the full step budget."""
    stop = StopConfig(threshold=math.inf, horizon=horizon, patience=1)
    return run_adaptive(params, features, memory, stop, start_index,
                        cost_model, raw_values)


def entropy(scores: np.ndarray) -> float:
    """Shannon entropy in nats; zero probabilities contribute nothing."""
    scores = np.asarray(scores, dtype=np.float64)
    nz = scores[scores > 0]
    return float(-(nz * np.log(nz)).sum())


def stop_by_entropy(scores_seq, threshold: float) -> np.ndarray:
    """Per-step stop decisions: True once prediction entropy drops below threshold."""
    return np.array([entropy(s) < threshold for s in scores_seq], dtype=bool)


def run_entropy_stop(params: AgentParameters, features: np.ndarray,
                     memory: GlobalMemory, horizon: int, threshold: float,
                     start_index: int = 0, cost_model: CostModel | None = None,
                     raw_values: bool = False) -> InferenceResult:
    """Ablation: deterministic rollout exiting on low prediction entropy."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    num_frames = features.shape[0]
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    kern = _kernels.get()
    ptuple = params.kernel_tuple()
    model = cost_model if cost_model is not None else CostModel.adaframe()

    h = np.zeros(params.dims.hidden_dim)
    c = np.zeros(params.dims.hidden_dim)
    frame = int(start_index)
    visited: list[int] = []
    utilities: list[float] = []
    scores = None
    for t in range(1, horizon + 1):
        visited.append(frame)
        h, c, scores, loc_mean, utility, _, _, _ = kern.step_forward(
            ptuple, enc, values, h, c, features[frame])
        utilities.append(utility)
        if entropy(scores) < threshold or t == horizon:
            break
        frame = location_to_index(loc_mean, num_frames)

    frames_used = len(visited)
    return InferenceResult(
        prediction=int(np.argmax(scores)), scores=scores, frames_used=frames_used,
        stop_step=frames_used, visited=visited, utilities=utilities,
        cost_gflops=cost_of_frames(frames_used, model))
