"""Training machinery: the reward functions, discounted returns, the
three loss terms and their hand-derived gradients, rollout recording,
and SGD with momentum.

One rollout interacts with a sequence for a fixed number of steps. Per
step the agent emits class scores, the mean of the Gaussian location
policy, and a utility estimate. The combined objective is

    classification loss (last step)
    + loss_weight * utility regression loss
    - loss_weight * expected cumulative reward (policy term),

where the policy term is optimized with the score-function gradient
using the utility as baseline. The advantage and the regression target
are treated as constants: no gradient flows through rewards or returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .agent import AgentDims, AgentParameters, location_to_index
from .memory import GlobalMemory
from .numerics import Rng

__all__ = [
    "TrainConfig",
    "Trajectory",
    "EpochMetrics",
    "TrainingDivergedError",
    "METRICS_CSV_HEADER",
    "margin",
    "reward_margin_increase",
    "reward_prediction",
    "reward_prediction_transition",
    "discounted_returns",
    "loss_classification",
    "loss_utility",
    "policy_gradient_terms",
    "rollout",
    "complete_trajectory",
    "trajectory_gradients",
    "surrogate_loss",
    "SgdMomentum",
    "lr_for_epoch",
    "train_epoch",
    "fit",
]

LOG_PROB_EPS = 1e-12
REWARD_KINDS = ("margin_increase", "prediction", "prediction_transition")


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss shows up; aborts the epoch."""


@dataclass
class TrainConfig:
    horizon: int                     # steps per rollout (training and eval budget)
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    discount: float = 0.9
    policy_stddev: float = 0.1
    loss_weight: float = 1.0         # weight of utility + selection terms
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_every: int = 40
    lr_decay_factor: float = 0.1
    grad_clip: float = 5.0           # global-norm clip; <=0 disables
    seed: int = 0
    start: str = "first"             # first observed frame: "first" or "middle"
    reward: str = "margin_increase"
    first_reward_from_zero: bool = True   # r_1 = max(0, m_1); False gives r_1 = 0
    raw_attention_values: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if self.policy_stddev <= 0:
            raise ValueError("policy stddev must be positive")
        if self.loss_weight < 0:
            raise ValueError("loss_weight must be >= 0")
        if self.start not in ("first", "middle"):
            raise ValueError(f"start must be 'first' or 'middle', got {self.start!r}")
        if self.reward not in REWARD_KINDS:
            raise ValueError(f"reward must be one of {REWARD_KINDS}, got {self.reward!r}")

    def start_index(self, num_frames: int) -> int:
        return 0 if self.start == "first" else num_frames // 2


@dataclass
class Trajectory:
    """One completed rollout, step-indexed 1..horizon (arrays are 0-based)."""

    frames: np.ndarray        # visited frame indices, int
    loc_samples: np.ndarray   # sampled locations (raw, unclamped)
    loc_means: np.ndarray     # policy means a_t
    scores: np.ndarray        # (horizon, C) class probabilities
    margins: np.ndarray
    rewards: np.ndarray
    returns: np.ndarray
    values: np.ndarray        # utility estimates
    prediction: int           # argmax of last-step scores
    label: int


def margin(scores: np.ndarray, gt: int) -> float:
    """Ground-truth probability minus the largest other-class probability."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise ValueError("scores must be a distribution over >= 2 classes")
    if not 0 <= gt < scores.shape[0]:
        raise ValueError(f"class index {gt} outside [0, {scores.shape[0]})")
    others = np.delete(scores, gt)
    return float(scores[gt] - others.max())


def reward_margin_increase(margins: Sequence[float],
                           first_from_zero: bool = True) -> np.ndarray:
    """Positive part of each margin's improvement over the running max.

    The pre-observation running max is 0 (so r_1 = max(0, m_1));
    ``first_from_zero=False`` switches to the alternative r_1 = 0.
    """
    margins = np.asarray(margins, dtype=np.float64)
    if margins.size == 0:
        raise ValueError("empty margin history")
    rewards = np.empty_like(margins)
    hist_max = 0.0
    for t, m in enumerate(margins):
        if t == 0 and not first_from_zero:
            rewards[0] = 0.0
        else:
            rewards[t] = max(0.0, m - hist_max)
        hist_max = max(hist_max, m)
    return rewards


def reward_prediction(scores_t: np.ndarray, gt: int) -> float:
    """Ablation reward: the ground-truth class probability itself."""
    scores_t = np.asarray(scores_t, dtype=np.float64)
    if not 0 <= gt < scores_t.shape[0]:
        raise ValueError(f"class index {gt} outside [0, {scores_t.shape[0]})")
    return float(scores_t[gt])


def reward_prediction_transition(scores_t: np.ndarray,
                                 scores_prev: np.ndarray | None, gt: int) -> float:
    """Ablation reward: change of the ground-truth probability (p_0 := 0)."""
    p_t = reward_prediction(scores_t, gt)
    p_prev = 0.0 if scores_prev is None else reward_prediction(scores_prev, gt)
    return p_t - p_prev


def _reward_sequence(kind: str, scores_seq: np.ndarray, margins: np.ndarray,
                     gt: int, first_from_zero: bool) -> np.ndarray:
    if kind == "margin_increase":
        return reward_margin_increase(margins, first_from_zero)
    if kind == "prediction":
        return np.array([reward_prediction(s, gt) for s in scores_seq])
    if kind == "prediction_transition":
        out = np.empty(len(scores_seq))
        prev = None
        for t, s in enumerate(scores_seq):
            out[t] = reward_prediction_transition(s, prev, gt)
            prev = s
        return out
    raise ValueError(f"unknown reward kind {kind!r}")


def discounted_returns(rewards: Sequence[float], discount: float) -> np.ndarray:
    """R_t = sum_i discount^i * r_{t+i}, computed by the exact recursion."""
    if not 0.0 < discount <= 1.0:
        raise ValueError("discount must be in (0, 1]")
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + discount * acc
        returns[t] = acc
    return returns


def loss_classification(scores: np.ndarray, gt: int) -> float:
    """Cross-entropy of the final-step scores; probability floored at 1e-12."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= gt < scores.shape[0]:
        raise ValueError(f"class index {gt} outside [0, {scores.shape[0]})")
    return -math.log(max(float(scores[gt]), LOG_PROB_EPS))


def loss_utility(values: Sequence[float], returns: Sequence[float]) -> float:
    """0.5 * sum_t (V_t - R_t)^2 for one rollout."""
    values = np.asarray(values, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if values.shape != returns.shape:
        raise ValueError("values and returns must have equal length")
    diff = values - returns
    return 0.5 * float(diff @ diff)


def policy_gradient_terms(traj: Trajectory, stddev: float):
    """Per-step advantage coefficients and d log pi / d mean.

    Advantages (R_t - V_t) are constants; the log-density derivative of
    the Gaussian policy w.r.t. its mean is (sample - mean) / stddev^2.
    Ascending advantage * dlogpi is what the training loss descends.
    """
    if stddev <= 0:
        raise ValueError("policy stddev must be positive (degenerate density)")
    advantages = traj.returns - traj.values
    d_logpi_d_mean = (traj.loc_samples - traj.loc_means) / (stddev * stddev)
    return advantages, d_logpi_d_mean


@dataclass
class RolloutRecord:
    """Forward pass of one rollout plus the per-step kernel caches."""

    frames: np.ndarray
    loc_samples: np.ndarray
    loc_means: np.ndarray
    scores: np.ndarray
    values: np.ndarray
    caches: list = field(repr=False, default_factory=list)


def _as_memory_arrays(memory: GlobalMemory, raw_values: bool):
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    return enc, values


def rollout(params: AgentParameters, features: np.ndarray, memory: GlobalMemory,
            horizon: int, stddev: float, rng: Rng | None = None,
            start_index: int = 0, forced_frames: Sequence[int] | None = None,
            forced_samples: Sequence[float] | None = None,
            raw_values: bool = False, keep_caches: bool = True) -> RolloutRecord:
    """Unroll the agent for ``horizon`` steps over one sequence.

    The location sampled at step t picks the frame observed at step t+1.
    With ``rng`` None the policy mean is used directly (deterministic
    rollout). ``forced_frames``/``forced_samples`` replay a fixed
    trajectory structure — that is what the finite-difference oracles
    perturb parameters around.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    num_frames = features.shape[0]
    enc, values = _as_memory_arrays(memory, raw_values)
    kern = _kernels.get()
    ptuple = params.kernel_tuple()
    hidden = params.dims.hidden_dim

    noise = None
    if forced_samples is None and rng is not None:
        noise = rng.standard_normal(horizon)

    frames = np.empty(horizon, dtype=np.int64)
    loc_samples = np.empty(horizon)
    loc_means = np.empty(horizon)
    scores_seq = np.empty((horizon, params.dims.num_classes))
    values_seq = np.empty(horizon)
    caches = []

    h = np.zeros(hidden)
    c = np.zeros(hidden)
    frame = int(forced_frames[0]) if forced_frames is not None else int(start_index)
    for t in range(horizon):
        frames[t] = frame
        h, c, scores, loc_mean, utility, _, _, cache = kern.step_forward(
            ptuple, enc, values, h, c, features[frame])
        if forced_samples is not None:
            sample = float(forced_samples[t])
        elif noise is not None:
            sample = loc_mean + stddev * float(noise[t])
        else:
            sample = loc_mean
        loc_means[t] = loc_mean
        loc_samples[t] = sample
        scores_seq[t] = scores
        values_seq[t] = utility
        if keep_caches:
            caches.append(cache)
        if t + 1 < horizon:
            if forced_frames is not None:
                frame = int(forced_frames[t + 1])
            else:
                frame = location_to_index(sample, num_frames)

    return RolloutRecord(frames=frames, loc_samples=loc_samples, loc_means=loc_means,
                         scores=scores_seq, values=values_seq, caches=caches)


def complete_trajectory(record: RolloutRecord, label: int, discount: float,
                        reward_kind: str = "margin_increase",
                        first_reward_from_zero: bool = True) -> Trajectory:
    """Attach label-dependent quantities (margins, rewards, returns) to a rollout."""
    margins = np.array([margin(s, label) for s in record.scores])
    rewards = _reward_sequence(reward_kind, record.scores, margins, label,
                               first_reward_from_zero)
    returns = discounted_returns(rewards, discount)
    return Trajectory(
        frames=record.frames.copy(), loc_samples=record.loc_samples.copy(),
        loc_means=record.loc_means.copy(), scores=record.scores.copy(),
        margins=margins, rewards=rewards, returns=returns,
        values=record.values.copy(),
        prediction=int(np.argmax(record.scores[-1])), label=int(label))


def rollout_backward(params: AgentParameters, memory: GlobalMemory,
                     record: RolloutRecord, grads: AgentParameters,
                     d_scores_last: np.ndarray | None,
                     d_means: np.ndarray, d_values: np.ndarray,
                     raw_values: bool = False):
    """Backpropagate through a recorded rollout, accumulating into ``grads``.

    ``d_scores_last`` is the gradient w.r.t. the final-step probability
    vector (intermediate scores receive none); ``d_means``/``d_values``
    are per-step scalars for the selection and utility heads.
    """
    if not record.caches:
        raise ValueError("rollout was recorded without caches; backward impossible")
    enc, values = _as_memory_arrays(memory, raw_values)
    kern = _kernels.get()
    ptuple = params.kernel_tuple()
    gtuple = grads.kernel_tuple()
    horizon = len(record.caches)
    hidden = params.dims.hidden_dim

    dh = np.zeros(hidden)
    dc = np.zeros(hidden)
    for t in range(horizon - 1, -1, -1):
        d_scores = d_scores_last if t == horizon - 1 else None
        dh, dc = kern.step_backward(
            ptuple, enc, values, record.caches[t], dh, dc,
            d_scores, float(d_means[t]), float(d_values[t]), gtuple)


def trajectory_gradients(params: AgentParameters, memory: GlobalMemory,
                         record: RolloutRecord, traj: Trajectory,
                         stddev: float, loss_weight: float,
                         grads: AgentParameters, weight: float = 1.0,
                         raw_values: bool = False):
    """Accumulate the combined-objective gradient of one trajectory.

    ``weight`` is the minibatch averaging factor applied to every term.
    """
    num_classes = params.dims.num_classes
    gt_prob = max(float(traj.scores[-1, traj.label]), LOG_PROB_EPS)
    d_scores_last = np.zeros(num_classes)
    d_scores_last[traj.label] = -weight / gt_prob

    advantages, d_logpi = policy_gradient_terms(traj, stddev)
    d_means = -loss_weight * weight * advantages * d_logpi
    d_values = loss_weight * weight * (traj.values - traj.returns)
    rollout_backward(params, memory, record, grads, d_scores_last,
                     d_means, d_values, raw_values)


def surrogate_loss(params: AgentParameters, features: np.ndarray,
                   memory: GlobalMemory, label: int, frames: Sequence[int],
                   samples: Sequence[float], frozen_returns: np.ndarray,
                   frozen_advantages: np.ndarray, stddev: float,
                   loss_weight: float, terms: Sequence[str] = ("cls", "utl", "sel"),
                   raw_values: bool = False) -> float:
    """Scalar objective with the trajectory structure frozen.

    Re-runs the rollout on fixed frames, then combines cross-entropy,
    utility regression against the frozen returns, and the policy
    surrogate -sum_t advantage_t * log pi(sample_t | mean_t) with frozen
    advantages. Finite differences of this function are the oracle the
    analytic gradients are checked against.
    """
    horizon = len(frames)
    record = rollout(params, features, memory, horizon, stddev,
                     forced_frames=frames, forced_samples=samples,
                     raw_values=raw_values, keep_caches=False)
    total = 0.0
    if "cls" in terms:
        total += loss_classification(record.scores[-1], label)
    if "utl" in terms:
        total += loss_weight * loss_utility(record.values, frozen_returns)
    if "sel" in terms:
        log_pi = (-0.5 * ((np.asarray(samples) - record.loc_means) / stddev) ** 2
                  - math.log(stddev * math.sqrt(2.0 * math.pi)))
        total += -loss_weight * float(np.asarray(frozen_advantages) @ log_pi)
    return total


class SgdMomentum:
    """SGD with momentum and decoupled weight decay (biases exempt)."""

    def __init__(self, dims: AgentDims, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = AgentParameters.zeros(dims)

    def apply(self, params: AgentParameters, grads: AgentParameters, lr: float):
        for (name, w), (_, v), (_, g) in zip(params.blocks(), self.velocity.blocks(),
                                             grads.blocks()):
            v *= self.momentum
            v += g
            decay = 0.0 if AgentParameters.is_bias(name) else self.weight_decay
            w -= lr * v + (lr * decay) * w


def clip_gradients(grads: AgentParameters, max_norm: float) -> float:
    """Scale all blocks so the global L2 norm is at most ``max_norm``."""
    total = 0.0
    for _, g in grads.blocks():
        total += float(g.ravel() @ g.ravel())
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, g in grads.blocks():
            g *= scale
    return norm


def lr_for_epoch(config: TrainConfig, epoch: int) -> float:
    """Step schedule: multiply by the decay factor every decay interval."""
    return config.lr * config.lr_decay_factor ** (epoch // config.lr_decay_every)


METRICS_CSV_HEADER = "epoch,lr,loss_cls,loss_utl,J_sel_estimate,mean_reward,train_accuracy"


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    loss_cls: float
    loss_utl: float
    j_sel_estimate: float   # mean cumulative reward per rollout
    mean_reward: float      # mean per-step reward
    train_accuracy: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.lr:.10g},{self.loss_cls:.10g},"
                f"{self.loss_utl:.10g},{self.j_sel_estimate:.10g},"
                f"{self.mean_reward:.10g},{self.train_accuracy:.10g}")


def train_epoch(params: AgentParameters, videos: Sequence, config: TrainConfig,
                rng: Rng, optimizer: SgdMomentum, epoch: int) -> EpochMetrics:
    """One pass over the dataset: sampled rollouts, one combined backward
    per minibatch, SGD update. Mutates ``params`` in place.

    ``videos`` items need ``features`` (T, D) arrays, an integer
    ``label``, and ``memory`` (a GlobalMemory). Rollout gradient buffers
    are reduced sequentially in dataset order, so a run is reproducible
    bit-for-bit from (seed, dataset, config).
    """
    if len(videos) == 0:
        raise ValueError("dataset is empty")
    lr = lr_for_epoch(config, epoch)
    order = rng.permutation(len(videos))
    dims = params.dims

    sum_cls = sum_utl = sum_reward = 0.0
    n_steps = n_correct = 0

    for lo in range(0, len(order), config.batch_size):
        batch = order[lo:lo + config.batch_size]
        grads = AgentParameters.zeros(dims)
        weight = 1.0 / len(batch)
        batch_loss = 0.0
        for idx in batch:
            video = videos[int(idx)]
            record = rollout(params, video.features, video.memory, config.horizon,
                             config.policy_stddev, rng=rng,
                             start_index=config.start_index(video.features.shape[0]),
                             raw_values=config.raw_attention_values)
            traj = complete_trajectory(record, video.label, config.discount,
                                       config.reward, config.first_reward_from_zero)
            l_cls = loss_classification(traj.scores[-1], traj.label)
            l_utl = loss_utility(traj.values, traj.returns)
            batch_loss += l_cls + config.loss_weight * l_utl
            sum_cls += l_cls
            sum_utl += l_utl
            sum_reward += float(traj.rewards.sum())
            n_steps += traj.rewards.size
            n_correct += int(traj.prediction == traj.label)
            trajectory_gradients(params, video.memory, record, traj,
                                 config.policy_stddev, config.loss_weight, grads,
                                 weight=weight,
                                 raw_values=config.raw_attention_values)
        if not math.isfinite(batch_loss):
            raise TrainingDivergedError(
                f"non-finite loss in epoch {epoch} on minibatch starting at {lo} "
                f"(lr={lr}); aborting epoch")
        clip_gradients(grads, config.grad_clip)
        optimizer.apply(params, grads, lr)

    n = len(videos)
    return EpochMetrics(epoch=epoch, lr=lr, loss_cls=sum_cls / n, loss_utl=sum_utl / n,
                        j_sel_estimate=sum_reward / n, mean_reward=sum_reward / n_steps,
                        train_accuracy=n_correct / n)


def fit(params: AgentParameters, videos: Sequence, config: TrainConfig,
        on_epoch: Callable[[EpochMetrics], None] | None = None) -> list[EpochMetrics]:
    """Full training run; returns the per-epoch metrics trail."""
    rng = Rng(config.seed)
    optimizer = SgdMomentum(params.dims, config.momentum, config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        metrics = train_epoch(params, videos, config, rng, optimizer, epoch)
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    return history
