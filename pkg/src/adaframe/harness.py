"""CLI orchestration and comparison baselines.

Subcommands: ``gen-data``, ``train``, ``eval``, ``sweep``, ``baseline``.
Options resolve as flag > config file (``key = value`` lines, ``#``
comments) > built-in default; the seed additionally falls back to the
``ADAFRAME_SEED`` environment variable. Reports are CSV with a fixed
header and ``# key = value`` metadata lines, written atomically.

The baselines mirror the standard comparators: per-frame linear
classification with score averaging (AvgPooling) and a plain LSTM over
sampled frames, both trained with the same SGD-momentum rule as the
agent but independently per frame budget.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .agent import (
    AgentDims,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .data import (
    SyntheticSpec,
    generate,
    read_dataset,
    write_dataset,
    write_windows_json,
)
from .inference import CostModel, StopConfig, cost_of_frames, run_adaptive, run_fixed
from .learning import (
    METRICS_CSV_HEADER,
    TrainConfig,
    TrainingDivergedError,
    fit,
)
from ._binio import FormatError, atomic_write_bytes
from .numerics import Rng, mix_seed, sigmoid, softmax

__all__ = [
    "split_dataset",
    "uniform_frame_indices",
    "random_frame_indices",
    "BaselineConfig",
    "baseline_avgpool",
    "baseline_lstm",
    "SweepRow",
    "sweep",
    "evaluate_fixed",
    "window_hit_fraction",
    "train_agent",
    "write_report",
    "REPORT_CSV_HEADER",
    "cli_main",
    "main",
]

REPORT_CSV_HEADER = "method,setting,mean_frames,accuracy,mean_gflops"

_SPLIT_SALT = 0x53504C4954
_INIT_SALT = 0x494E4954
_SAMPLE_SALT = 0x53414D504C45
_BASELINE_SALT = 0x4241534531


def split_dataset(videos, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle split; returns (train, validation) lists."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    order = Rng(mix_seed(seed, _SPLIT_SALT)).permutation(len(videos))
    n_train = int(round(train_fraction * len(videos)))
    train = [videos[int(i)] for i in order[:n_train]]
    val = [videos[int(i)] for i in order[n_train:]]
    return train, val


def uniform_frame_indices(num_frames: int, n: int) -> np.ndarray:
    """Centered uniform sampling: index_i = floor((i + 0.5) * T / n)."""
    if not 1 <= n <= num_frames:
        raise ValueError(f"cannot sample {n} of {num_frames} frames")
    return np.array([(2 * i + 1) * num_frames // (2 * n) for i in range(n)],
                    dtype=np.int64)


def random_frame_indices(num_frames: int, n: int, rng: Rng) -> np.ndarray:
    """Seeded sampling without replacement, returned in temporal order."""
    if not 1 <= n <= num_frames:
        raise ValueError(f"cannot sample {n} of {num_frames} frames")
    return np.sort(rng.choice_without_replacement(num_frames, n))


def _sample_indices(video, n: int, mode: str, seed: int) -> np.ndarray:
    if mode == "uniform":
        return uniform_frame_indices(video.num_frames, n)
    if mode == "random":
        rng = Rng(mix_seed(mix_seed(seed, _SAMPLE_SALT), video.video_id))
        return random_frame_indices(video.num_frames, n, rng)
    raise ValueError(f"unknown sampling mode {mode!r}")


@dataclass
class BaselineConfig:
    epochs: int = 60
    lr: float = 0.05
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    hidden_dim: int = 32        # LSTM baseline only
    init_scale: float = 0.15
    seed: int = 0


def _momentum_update(weights, velocities, grads, decay_mask, lr, momentum, wd):
    for w, v, g, use_decay in zip(weights, velocities, grads, decay_mask):
        v *= momentum
        v += g
        w -= lr * v + (lr * wd if use_decay else 0.0) * w


def baseline_avgpool(train_videos, val_videos, num_classes: int, n_frames: int,
                     mode: str, config: BaselineConfig) -> "SweepRow":
    """Per-frame linear classifier; video score is the mean over sampled frames."""
    feature_dim = train_videos[0].feature_dim
    rows, labels = [], []
    for video in train_videos:
        idx = _sample_indices(video, n_frames, mode, config.seed)
        rows.append(video.features[idx])
        labels.append(np.full(len(idx), video.label, dtype=np.int64))
    x = np.concatenate(rows)
    y = np.concatenate(labels)

    weights = np.zeros((num_classes, feature_dim))
    bias = np.zeros(num_classes)
    vel_w = np.zeros_like(weights)
    vel_b = np.zeros_like(bias)
    rng = Rng(mix_seed(config.seed, _BASELINE_SALT))
    for _ in range(config.epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            xb, yb = x[batch], y[batch]
            logits = xb @ weights.T + bias
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[np.arange(len(yb)), yb] -= 1.0
            probs /= len(yb)
            _momentum_update(
                (weights, bias), (vel_w, vel_b),
                (probs.T @ xb, probs.sum(axis=0)),
                (True, False), config.lr, config.momentum, config.weight_decay)

    correct = 0
    for video in val_videos:
        idx = _sample_indices(video, n_frames, mode, config.seed)
        logits = video.features[idx] @ weights.T + bias
        pooled = np.mean([softmax(row) for row in logits], axis=0)
        correct += int(np.argmax(pooled) == video.label)
    accuracy = correct / len(val_videos)
    cost = cost_of_frames(n_frames, CostModel.baseline())
    return SweepRow(method=f"avgpool-{mode}", setting=str(n_frames),
                    mean_frames=float(n_frames), accuracy=accuracy, mean_gflops=cost)


class PlainLstmClassifier:
    """LSTM over sampled frames only: no memory, no selection, class head
    at the last step. Used by the ``lstm`` baseline."""

    _WEIGHTS = ("w_in", "w_forget", "w_out", "w_cand", "class_w")
    _BIASES = ("b_in", "b_forget", "b_out", "b_cand", "class_b")

    def __init__(self, feature_dim: int, hidden_dim: int, num_classes: int,
                 init_scale: float, rng: Rng):
        z = feature_dim + hidden_dim
        self.hidden_dim = hidden_dim
        self.blocks = {}
        for name in ("w_in", "w_forget", "w_out", "w_cand"):
            self.blocks[name] = rng.uniform(-init_scale, init_scale, (hidden_dim, z))
        for name in ("b_in", "b_forget", "b_out", "b_cand"):
            self.blocks[name] = np.zeros(hidden_dim)
        self.blocks["b_forget"] += 1.0
        self.blocks["class_w"] = rng.uniform(-init_scale, init_scale,
                                             (num_classes, hidden_dim))
        self.blocks["class_b"] = np.zeros(num_classes)

    def forward(self, frames: np.ndarray, keep_caches: bool = False):
        p = self.blocks
        h = np.zeros(self.hidden_dim)
        c = np.zeros(self.hidden_dim)
        caches = []
        for v in frames:
            x = np.concatenate([v, h])
            gi = sigmoid(p["w_in"] @ x + p["b_in"])
            gf = sigmoid(p["w_forget"] @ x + p["b_forget"])
            go = sigmoid(p["w_out"] @ x + p["b_out"])
            gc = np.tanh(p["w_cand"] @ x + p["b_cand"])
            c_new = gf * c + gi * gc
            tc = np.tanh(c_new)
            h_new = go * tc
            if keep_caches:
                caches.append((x, gi, gf, go, gc, c, tc))
            h, c = h_new, c_new
        scores = softmax(p["class_w"] @ h + p["class_b"])
        return (scores, h, caches) if keep_caches else (scores, h, None)

    def backward(self, frames, scores, h_last, caches, label: int, weight: float,
                 grads: dict):
        p = self.blocks
        d_logits = weight * scores.copy()
        d_logits[label] -= weight
        grads["class_w"] += np.outer(d_logits, h_last)
        grads["class_b"] += d_logits
        dh = p["class_w"].T @ d_logits
        dc = np.zeros(self.hidden_dim)
        feature_dim = frames.shape[1]
        for t in range(len(frames) - 1, -1, -1):
            x, gi, gf, go, gc, c_prev, tc = caches[t]
            dc = dc + dh * go * (1.0 - tc * tc)
            dz_out = (dh * tc) * go * (1.0 - go)
            dz_in = (dc * gc) * gi * (1.0 - gi)
            dz_cand = (dc * gi) * (1.0 - gc * gc)
            dz_forget = (dc * c_prev) * gf * (1.0 - gf)
            dc = dc * gf
            grads["w_in"] += np.outer(dz_in, x)
            grads["w_forget"] += np.outer(dz_forget, x)
            grads["w_out"] += np.outer(dz_out, x)
            grads["w_cand"] += np.outer(dz_cand, x)
            grads["b_in"] += dz_in
            grads["b_forget"] += dz_forget
            grads["b_out"] += dz_out
            grads["b_cand"] += dz_cand
            dx = (p["w_in"].T @ dz_in + p["w_forget"].T @ dz_forget
                  + p["w_out"].T @ dz_out + p["w_cand"].T @ dz_cand)
            dh = dx[feature_dim:]


def baseline_lstm(train_videos, val_videos, num_classes: int, n_frames: int,
                  mode: str, config: BaselineConfig) -> "SweepRow":
    """Plain LSTM fed the sampled frames in order, cross-entropy at the end."""
    feature_dim = train_videos[0].feature_dim
    rng = Rng(mix_seed(config.seed, _BASELINE_SALT))
    model = PlainLstmClassifier(feature_dim, config.hidden_dim, num_classes,
                                config.init_scale, rng)
    sampled = [video.features[_sample_indices(video, n_frames, mode, config.seed)]
               for video in train_videos]
    labels = [video.label for video in train_videos]

    names = list(model.blocks)
    velocity = {name: np.zeros_like(model.blocks[name]) for name in names}
    for _ in range(config.epochs):
        order = rng.permutation(len(sampled))
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            grads = {name: np.zeros_like(model.blocks[name]) for name in names}
            weight = 1.0 / len(batch)
            for idx in batch:
                frames = sampled[int(idx)]
                scores, h_last, caches = model.forward(frames, keep_caches=True)
                model.backward(frames, scores, h_last, caches, labels[int(idx)],
                               weight, grads)
            _momentum_update(
                [model.blocks[n] for n in names],
                [velocity[n] for n in names],
                [grads[n] for n in names],
                [n in model._WEIGHTS for n in names],
                config.lr, config.momentum, config.weight_decay)

    correct = 0
    for video in val_videos:
        idx = _sample_indices(video, n_frames, mode, config.seed)
        scores, _, _ = model.forward(video.features[idx])
        correct += int(np.argmax(scores) == video.label)
    accuracy = correct / len(val_videos)
    cost = cost_of_frames(n_frames, CostModel.baseline())
    return SweepRow(method=f"lstm-{mode}", setting=str(n_frames),
                    mean_frames=float(n_frames), accuracy=accuracy, mean_gflops=cost)


@dataclass
class SweepRow:
    method: str
    setting: str
    mean_frames: float
    accuracy: float
    mean_gflops: float

    def csv_row(self) -> str:
        return (f"{self.method},{self.setting},{self.mean_frames:.10g},"
                f"{self.accuracy:.10g},{self.mean_gflops:.10g}")


def evaluate_fixed(params, horizon: int, videos, start: str = "first",
                   cost_model: CostModel | None = None) -> SweepRow:
    """Fixed-budget evaluation: every video gets exactly ``horizon`` frames."""
    model = cost_model if cost_model is not None else CostModel.adaframe()
    correct = 0
    total_cost = 0.0
    for video in videos:
        start_index = 0 if start == "first" else video.num_frames // 2
        result = run_fixed(params, video.features, video.memory, horizon,
                           start_index=start_index, cost_model=model)
        correct += int(result.prediction == video.label)
        total_cost += result.cost_gflops
    n = len(videos)
    return SweepRow(method="adaframe-fixed", setting=str(horizon),
                    mean_frames=float(horizon), accuracy=correct / n,
                    mean_gflops=total_cost / n)


def sweep(params, horizon: int, videos, thresholds, patience: int | None = None,
          consecutive: bool = False, start: str = "first",
          cost_model: CostModel | None = None) -> list[SweepRow]:
    """Adaptive inference over a threshold grid; one report row per threshold."""
    if len(thresholds) == 0:
        raise ValueError("threshold grid is empty")
    model = cost_model if cost_model is not None else CostModel.adaframe()
    rows = []
    for mu in thresholds:
        stop = StopConfig(threshold=mu, horizon=horizon, patience=patience,
                          consecutive=consecutive)
        correct = 0
        total_frames = 0
        total_cost = 0.0
        for video in videos:
            start_index = 0 if start == "first" else video.num_frames // 2
            result = run_adaptive(params, video.features, video.memory, stop,
                                  start_index=start_index, cost_model=model)
            correct += int(result.prediction == video.label)
            total_frames += result.frames_used
            total_cost += result.cost_gflops
        n = len(videos)
        rows.append(SweepRow(method="adaframe", setting=f"{mu:g}",
                             mean_frames=total_frames / n, accuracy=correct / n,
                             mean_gflops=total_cost / n))
    return rows


def window_hit_fraction(params, horizon: int, videos, start: str = "first") -> float:
    """Fraction of visited frames landing inside the planted signal window."""
    hits = visits = 0
    for video in videos:
        if video.signal_window is None:
            raise ValueError(f"video {video.video_id} has no recorded signal window")
        lo, length = video.signal_window
        start_index = 0 if start == "first" else video.num_frames // 2
        result = run_fixed(params, video.features, video.memory, horizon,
                           start_index=start_index)
        for frame in result.visited:
            hits += int(lo <= frame < lo + length)
            visits += 1
    return hits / visits


def train_agent(train_videos, num_classes: int, hidden_dim: int,
                init_scale: float, config: TrainConfig, on_epoch=None):
    """Initialize from the config seed and run the full fit loop."""
    first = train_videos[0]
    dims = AgentDims(feature_dim=first.feature_dim,
                     memory_dim=first.memory.dim,
                     hidden_dim=hidden_dim, num_classes=num_classes)
    params = init_params(dims, init_scale, Rng(mix_seed(config.seed, _INIT_SALT)))
    history = fit(params, train_videos, config, on_epoch=on_epoch)
    return params, history


def write_report(path: str, rows, metadata: dict):
    lines = [f"# {key} = {value}" for key, value in metadata.items()]
    lines.append(REPORT_CSV_HEADER)
    lines.extend(row.csv_row() for row in rows)
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_mu_grid(text: str) -> list[float]:
    grid = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        grid.append(math.inf if part in ("inf", "infinity") else float(part))
    if not grid:
        raise ValueError("empty threshold grid")
    for mu in grid:
        if mu < 0:
            raise ValueError("thresholds must be >= 0")
    return grid


@dataclass
class _Opt:
    name: str
    type: object
    default: object
    help: str = ""


def load_config(path: str) -> dict[str, str]:
    """Parse a ``key = value`` config file; '#' starts a comment line."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve_opts(ns: argparse.Namespace, opts: list[_Opt]) -> dict:
    config_values = {}
    if getattr(ns, "config", None):
        config_values = load_config(ns.config)
    resolved = {}
    for opt in opts:
        value = getattr(ns, opt.name)
        if value is None and opt.name in config_values:
            value = opt.type(config_values[opt.name])
        if value is None and opt.name == "seed":
            env = os.environ.get("ADAFRAME_SEED")
            if env is not None:
                value = int(env)
        if value is None:
            value = opt.default
        resolved[opt.name] = value
    return resolved


def _add_opts(parser: argparse.ArgumentParser, opts: list[_Opt]):
    parser.add_argument("--config", type=str, default=None,
                        help="key = value config file; flags override it")
    for opt in opts:
        parser.add_argument(f"--{opt.name.replace('_', '-')}", dest=opt.name,
                            type=opt.type, default=None, help=opt.help)


_GEN_OPTS = [
    _Opt("out", str, None, "output dataset path (.afv)"),
    _Opt("videos", int, 2500, "number of videos"),
    _Opt("classes", int, 5, ""),
    _Opt("frames", int, 64, "sequence length T"),
    _Opt("feature_dim", int, 16, ""),
    _Opt("memory_dim", int, 8, ""),
    _Opt("memory_entries", int, 16, "global-memory length"),
    _Opt("signal_window", int, 4, "informative frames per video"),
    _Opt("signal_strength", float, 1.0, ""),
    _Opt("noise_stddev", float, 0.1, ""),
    _Opt("memory_noise_stddev", float, 0.1, ""),
    _Opt("seed", int, 0, ""),
]

_TRAIN_OPTS = [
    _Opt("data", str, None, "input dataset (.afv)"),
    _Opt("out", str, None, "checkpoint output path"),
    _Opt("metrics", str, None, "metrics CSV path (default: <out>.metrics.csv)"),
    _Opt("k", int, 10, "rollout horizon"),
    _Opt("epochs", int, 100, ""),
    _Opt("lr", float, 1e-3, ""),
    _Opt("batch_size", int, 64, ""),
    _Opt("hidden", int, 32, "LSTM hidden size"),
    _Opt("init_scale", float, 0.08, ""),
    _Opt("discount", float, 0.9, ""),
    _Opt("policy_stddev", float, 0.1, ""),
    _Opt("loss_weight", float, 1.0, ""),
    _Opt("momentum", float, 0.9, ""),
    _Opt("weight_decay", float, 1e-4, ""),
    _Opt("lr_decay_every", int, 40, ""),
    _Opt("grad_clip", float, 5.0, ""),
    _Opt("train_fraction", float, 0.8, ""),
    _Opt("start", str, "first", "first observed frame: first|middle"),
    _Opt("reward", str, "margin_increase",
         "margin_increase|prediction|prediction_transition"),
    _Opt("seed", int, 0, ""),
]

_EVAL_OPTS = [
    _Opt("checkpoint", str, None, ""),
    _Opt("data", str, None, ""),
    _Opt("report", str, None, "report CSV path"),
    _Opt("split", str, "val", "evaluate on train|val|all"),
    _Opt("train_fraction", float, 0.8, ""),
    _Opt("start", str, "first", ""),
    _Opt("seed", int, 0, "split seed; must match training"),
]

_SWEEP_OPTS = [
    _Opt("checkpoint", str, None, ""),
    _Opt("data", str, None, ""),
    _Opt("report", str, None, ""),
    _Opt("mu", _parse_mu_grid, None, "comma-separated thresholds, e.g. 0.1,0.3,inf"),
    _Opt("patience", int, None, "violations allowed (default: threshold rule)"),
    _Opt("consecutive", _parse_bool, False, "count only consecutive violations"),
    _Opt("split", str, "val", ""),
    _Opt("train_fraction", float, 0.8, ""),
    _Opt("start", str, "first", ""),
    _Opt("seed", int, 0, ""),
]

_BASELINE_OPTS = [
    _Opt("data", str, None, ""),
    _Opt("report", str, None, ""),
    _Opt("method", str, "avgpool", "avgpool|lstm"),
    _Opt("frames", int, 5, "frame budget"),
    _Opt("mode", str, "uniform", "uniform|random"),
    _Opt("epochs", int, 60, ""),
    _Opt("lr", float, 0.05, ""),
    _Opt("batch_size", int, 64, ""),
    _Opt("hidden", int, 32, "LSTM baseline hidden size"),
    _Opt("init_scale", float, 0.15, ""),
    _Opt("train_fraction", float, 0.8, ""),
    _Opt("seed", int, 0, ""),
]


def _require(resolved: dict, names: list[str], command: str):
    for name in names:
        if resolved[name] is None:
            raise UsageError(f"adaframe {command}: --{name.replace('_', '-')} is required")


def _split_videos(dataset, which: str, train_fraction: float, seed: int):
    train, val = split_dataset(dataset.videos, train_fraction, seed)
    if which == "train":
        return train
    if which == "val":
        return val
    if which == "all":
        return list(dataset.videos)
    raise ValueError(f"unknown split {which!r}")


def _cmd_gen_data(resolved: dict) -> int:
    _require(resolved, ["out"], "gen-data")
    spec = SyntheticSpec(
        num_classes=resolved["classes"], num_frames=resolved["frames"],
        feature_dim=resolved["feature_dim"], memory_dim=resolved["memory_dim"],
        memory_entries=resolved["memory_entries"],
        signal_window=resolved["signal_window"],
        signal_strength=resolved["signal_strength"],
        noise_stddev=resolved["noise_stddev"],
        memory_noise_stddev=resolved["memory_noise_stddev"],
        seed=resolved["seed"])
    dataset = generate(spec, resolved["videos"])
    write_dataset(resolved["out"], dataset)
    write_windows_json(resolved["out"] + ".windows.json", dataset)
    print(f"wrote {len(dataset)} videos to {resolved['out']}")
    return 0


def _cmd_train(resolved: dict) -> int:
    _require(resolved, ["data", "out"], "train")
    dataset = read_dataset(resolved["data"])
    train_videos, val_videos = split_dataset(dataset.videos,
                                             resolved["train_fraction"],
                                             resolved["seed"])
    config = TrainConfig(
        horizon=resolved["k"], lr=resolved["lr"], epochs=resolved["epochs"],
        batch_size=resolved["batch_size"], discount=resolved["discount"],
        policy_stddev=resolved["policy_stddev"], loss_weight=resolved["loss_weight"],
        momentum=resolved["momentum"], weight_decay=resolved["weight_decay"],
        lr_decay_every=resolved["lr_decay_every"], grad_clip=resolved["grad_clip"],
        seed=resolved["seed"], start=resolved["start"], reward=resolved["reward"])
    metrics_path = resolved["metrics"] or resolved["out"] + ".metrics.csv"

    rows = [METRICS_CSV_HEADER]
    params, history = train_agent(train_videos, dataset.num_classes,
                                  resolved["hidden"], resolved["init_scale"], config,
                                  on_epoch=lambda m: rows.append(m.csv_row()))
    atomic_write_bytes(metrics_path, ("\n".join(rows) + "\n").encode())
    save_checkpoint(params, config.horizon, resolved["out"])

    if val_videos:
        row = evaluate_fixed(params, config.horizon, val_videos, start=config.start)
        print(f"trained {config.epochs} epochs; fixed-{config.horizon} "
              f"val accuracy {row.accuracy:.4f}")
    else:
        print(f"trained {config.epochs} epochs")
    return 0


def _report_metadata(resolved: dict, extra: dict | None = None) -> dict:
    meta = {"backend": _kernels.active_name()}
    for key in ("data", "checkpoint", "seed", "split", "train_fraction", "start"):
        if key in resolved and resolved[key] is not None:
            meta[key] = resolved[key]
    if extra:
        meta.update(extra)
    return meta


def _cmd_eval(resolved: dict) -> int:
    _require(resolved, ["checkpoint", "data", "report"], "eval")
    params, horizon = load_checkpoint(resolved["checkpoint"])
    dataset = read_dataset(resolved["data"])
    videos = _split_videos(dataset, resolved["split"], resolved["train_fraction"],
                           resolved["seed"])
    row = evaluate_fixed(params, horizon, videos, start=resolved["start"])
    write_report(resolved["report"], [row],
                 _report_metadata(resolved, {"horizon": horizon}))
    print(row.csv_row())
    return 0


def _cmd_sweep(resolved: dict) -> int:
    _require(resolved, ["checkpoint", "data", "report", "mu"], "sweep")
    params, horizon = load_checkpoint(resolved["checkpoint"])
    dataset = read_dataset(resolved["data"])
    videos = _split_videos(dataset, resolved["split"], resolved["train_fraction"],
                           resolved["seed"])
    rows = sweep(params, horizon, videos, resolved["mu"],
                 patience=resolved["patience"], consecutive=resolved["consecutive"],
                 start=resolved["start"])
    write_report(resolved["report"], rows,
                 _report_metadata(resolved, {"horizon": horizon}))
    for row in rows:
        print(row.csv_row())
    return 0


def _cmd_baseline(resolved: dict) -> int:
    _require(resolved, ["data", "report"], "baseline")
    dataset = read_dataset(resolved["data"])
    train_videos, val_videos = split_dataset(dataset.videos,
                                             resolved["train_fraction"],
                                             resolved["seed"])
    config = BaselineConfig(
        epochs=resolved["epochs"], lr=resolved["lr"],
        batch_size=resolved["batch_size"], hidden_dim=resolved["hidden"],
        init_scale=resolved["init_scale"], seed=resolved["seed"])
    if resolved["method"] == "avgpool":
        row = baseline_avgpool(train_videos, val_videos, dataset.num_classes,
                               resolved["frames"], resolved["mode"], config)
    elif resolved["method"] == "lstm":
        row = baseline_lstm(train_videos, val_videos, dataset.num_classes,
                            resolved["frames"], resolved["mode"], config)
    else:
        raise UsageError(f"adaframe baseline: unknown method {resolved['method']!r}")
    write_report(resolved["report"], [row], _report_metadata(resolved))
    print(row.csv_row())
    return 0


_COMMANDS = {
    "gen-data": (_GEN_OPTS, _cmd_gen_data, "generate a synthetic dataset"),
    "train": (_TRAIN_OPTS, _cmd_train, "train the agent on a dataset"),
    "eval": (_EVAL_OPTS, _cmd_eval, "fixed-budget evaluation of a checkpoint"),
    "sweep": (_SWEEP_OPTS, _cmd_sweep, "adaptive inference over a threshold grid"),
    "baseline": (_BASELINE_OPTS, _cmd_baseline, "train and evaluate a baseline"),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="adaframe",
                     description="adaptive frame selection for sequence classification")
    sub = parser.add_subparsers(dest="command")
    for name, (opts, _, help_text) in _COMMANDS.items():
        _add_opts(sub.add_parser(name, help=help_text), opts)
    return parser


def cli_main(argv) -> int:
    """Entry point; returns 0 on success, 1 on usage error, 2 on runtime error."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("adaframe: a subcommand is required\n"
                             + parser.format_usage().rstrip())
        opts, handler, _ = _COMMANDS[ns.command]
        resolved = _resolve_opts(ns, opts)
        return handler(resolved)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except (OSError, ValueError, FormatError, TrainingDivergedError) as exc:
        print(f"adaframe: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
