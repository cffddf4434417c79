"""Synthetic sequence data and the on-disk feature format.

Each video is a sequence of noise frames with a class prototype injected
into one contiguous window, so "where to look" is learnable and the
planted window positions double as ground truth for diagnostics (the
agent never sees them). The per-video global memory holds temporally
uniform samples pushed through a fixed random projection plus noise,
mimicking a weaker, cheaper feature extractor: informative enough to
guide attention, too degraded to classify from directly.

Features are rounded through float32 at generation time: the AFV1 file
stores float32, so a write/read round trip is bitwise lossless.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ._binio import (
    DimensionMismatchError,
    Reader,
    VersionMismatchError,
    atomic_write_bytes,
)
from .memory import GlobalMemory
from .numerics import Rng, mix_seed

__all__ = [
    "FeatureSequence",
    "Dataset",
    "SyntheticSpec",
    "generate",
    "derive_memory",
    "write_dataset",
    "read_dataset",
    "write_windows_json",
    "read_windows_json",
    "DATASET_MAGIC",
]

DATASET_MAGIC = b"AFV1"
DATASET_VERSION = 1

# Salts keep derived streams (prototypes, projections, per-entry memory
# noise) disjoint from the per-video streams, which use seed XOR index.
_PROTO_SALT = 0x50524F544F31
_MEMORY_SALT = 0x4D454D4F5259
_NOISE_SALT = 0x4E4F495345


def _as_f32_f64(arr: np.ndarray) -> np.ndarray:
    """Round to float32 precision but keep float64 storage."""
    return np.ascontiguousarray(arr, dtype=np.float32).astype(np.float64)


@dataclass
class FeatureSequence:
    video_id: int
    features: np.ndarray              # (T, feature_dim) float64
    label: int
    memory: GlobalMemory | None = None
    signal_window: tuple[int, int] | None = None   # (start, length) diagnostics

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be (T >= 1, feature_dim)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.label < 0:
            raise ValueError("label must be a non-negative class index")
        if self.memory is not None and self.memory.num_entries >= self.num_frames:
            raise ValueError("memory bank must be shorter than the sequence")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Dataset:
    videos: list[FeatureSequence]
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        for v in self.videos:
            if v.label >= self.num_classes:
                raise ValueError(f"video {v.video_id}: label {v.label} out of range")

    def __len__(self):
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    def __getitem__(self, i):
        return self.videos[i]


@dataclass
class SyntheticSpec:
    num_classes: int
    num_frames: int                 # T
    feature_dim: int
    memory_dim: int
    memory_entries: int = 16        # T_d
    signal_window: int = 4          # informative frames per video
    signal_strength: float = 1.0
    noise_stddev: float = 0.1
    memory_noise_stddev: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.memory_entries >= self.num_frames:
            raise ValueError("memory_entries must be < num_frames")
        if not 1 <= self.signal_window <= self.num_frames:
            raise ValueError("signal_window must be in [1, num_frames]")
        if self.memory_dim % 2 != 0:
            raise ValueError("memory_dim must be even")
        if self.noise_stddev < 0 or self.memory_noise_stddev < 0:
            raise ValueError("noise levels must be non-negative")


def _memory_projection(feature_dim: int, memory_dim: int,
                       projection_seed: int) -> np.ndarray:
    """The dataset-wide random projection used to build memory entries."""
    rng = Rng(projection_seed)
    return rng.standard_normal((memory_dim, feature_dim)) / np.sqrt(feature_dim)


def class_prototypes(spec: SyntheticSpec) -> np.ndarray:
    """Unit-norm prototype per class, fixed by the dataset seed.

    Every prototype is a shared "salience" direction plus a class
    direction chosen inside the memory projection's nullspace. The
    shared part survives projection, so the memory bank reveals where
    informative frames sit; the class parts vanish under projection, so
    the memory alone cannot classify. Class identity is only observable
    by visiting a full-resolution frame, which is the point of the task.
    """
    if spec.num_classes > spec.feature_dim - spec.memory_dim:
        raise ValueError(
            f"need num_classes <= feature_dim - memory_dim "
            f"({spec.feature_dim - spec.memory_dim}) for separable prototypes")
    rng = Rng(mix_seed(spec.seed, _PROTO_SALT))
    common = rng.standard_normal(spec.feature_dim)
    common /= np.linalg.norm(common)

    projection = _memory_projection(spec.feature_dim, spec.memory_dim,
                                    mix_seed(spec.seed, _MEMORY_SALT))
    # orthonormal basis of the projection's nullspace
    _, singulars, vt = np.linalg.svd(projection)
    null_basis = vt[np.count_nonzero(singulars > 1e-12):]

    coords = rng.standard_normal((spec.num_classes, null_basis.shape[0]))
    coords, _ = np.linalg.qr(coords.T)
    class_dirs = coords.T[:spec.num_classes] @ null_basis

    protos = common + class_dirs
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def generate(spec: SyntheticSpec, n_videos: int) -> Dataset:
    """Balanced synthetic dataset; labels are assigned round-robin.

    Per-video randomness comes from seed XOR video index, so generation
    is order-independent and parallelizable.
    """
    protos = class_prototypes(spec)
    projection_seed = mix_seed(spec.seed, _MEMORY_SALT)
    videos = []
    for i in range(n_videos):
        vid_rng = Rng(mix_seed(spec.seed, i))
        label = i % spec.num_classes
        offset = int(vid_rng.integers(0, spec.num_frames - spec.signal_window + 1))
        feats = vid_rng.normal(0.0, spec.noise_stddev,
                               (spec.num_frames, spec.feature_dim))
        feats[offset:offset + spec.signal_window] += spec.signal_strength * protos[label]
        feats = _as_f32_f64(feats)
        memory = derive_memory(feats, spec.memory_entries, spec.memory_dim,
                               projection_seed, spec.memory_noise_stddev, video_id=i)
        videos.append(FeatureSequence(video_id=i, features=feats, label=label,
                                      memory=memory,
                                      signal_window=(offset, spec.signal_window)))
    return Dataset(videos=videos, num_classes=spec.num_classes)


def memory_frame_indices(num_frames: int, memory_entries: int) -> np.ndarray:
    """Temporally uniform source frames: index_j = floor(j * T / T_d)."""
    if memory_entries >= num_frames:
        raise ValueError("memory_entries must be < num_frames")
    return np.array([j * num_frames // memory_entries for j in range(memory_entries)],
                    dtype=np.int64)


def derive_memory(features, memory_entries: int, memory_dim: int,
                  projection_seed: int, noise_stddev: float = 0.1,
                  video_id: int | None = None) -> GlobalMemory:
    """Build the degraded memory bank for one sequence.

    Uniformly sampled frames go through a fixed random linear projection
    (set by ``projection_seed``, shared across a dataset) and get
    additive noise emulating a weaker feature extractor. Accepts a
    FeatureSequence or a raw (T, D) array plus ``video_id``.
    """
    if isinstance(features, FeatureSequence):
        if video_id is None:
            video_id = features.video_id
        features = features.features
    features = np.asarray(features, dtype=np.float64)
    if video_id is None:
        raise ValueError("video_id is required to derive the per-video noise")
    indices = memory_frame_indices(features.shape[0], memory_entries)
    projection = _memory_projection(features.shape[1], memory_dim, projection_seed)
    noise_rng = Rng(mix_seed(mix_seed(projection_seed, _NOISE_SALT), video_id))
    entries = features[indices] @ projection.T
    entries += noise_rng.normal(0.0, noise_stddev, entries.shape)
    return GlobalMemory(entries=_as_f32_f64(entries))


def write_dataset(path: str, dataset: Dataset):
    """Serialize to the AFV1 container (atomic write).

    Layout: magic "AFV1", u32 version, u32 n_videos, u32 num_classes,
    then per video: u32 id, label, T, feature_dim, T_d, memory_dim,
    followed by T*feature_dim then T_d*memory_dim little-endian float32
    values, row-major.
    """
    out = [DATASET_MAGIC,
           struct.pack("<3I", DATASET_VERSION, len(dataset.videos), dataset.num_classes)]
    for v in dataset.videos:
        if v.memory is None:
            raise ValueError(f"video {v.video_id} has no memory bank; cannot serialize")
        out.append(struct.pack(
            "<6I", v.video_id, v.label, v.num_frames, v.feature_dim,
            v.memory.num_entries, v.memory.dim))
        out.append(v.features.astype("<f4").tobytes())
        out.append(v.memory.entries.astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(out))


def read_dataset(path: str) -> Dataset:
    """Read an AFV1 file; features are widened to float64 in memory.

    Corruption raises the typed errors from ``_binio``: bad magic,
    version mismatch, truncation, or dimension inconsistencies.
    """
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), name=path)
    reader.expect_magic(DATASET_MAGIC)
    version = reader.read_u32()
    if version != DATASET_VERSION:
        raise VersionMismatchError(f"{path}: dataset version {version}, "
                                   f"expected {DATASET_VERSION}")
    n_videos = reader.read_u32()
    num_classes = reader.read_u32()
    if num_classes < 1:
        raise DimensionMismatchError(f"{path}: num_classes must be >= 1")

    videos = []
    feature_dim_seen = memory_dim_seen = None
    for _ in range(n_videos):
        video_id = reader.read_u32()
        label = reader.read_u32()
        num_frames = reader.read_u32()
        feature_dim = reader.read_u32()
        mem_entries = reader.read_u32()
        mem_dim = reader.read_u32()
        if label >= num_classes:
            raise DimensionMismatchError(
                f"{path}: video {video_id} label {label} >= num_classes {num_classes}")
        if num_frames < 1 or feature_dim < 1:
            raise DimensionMismatchError(f"{path}: video {video_id} has empty features")
        if mem_entries >= num_frames:
            raise DimensionMismatchError(
                f"{path}: video {video_id} memory length {mem_entries} "
                f">= sequence length {num_frames}")
        if mem_dim % 2 != 0:
            raise DimensionMismatchError(
                f"{path}: video {video_id} memory_dim {mem_dim} is odd")
        if feature_dim_seen is None:
            feature_dim_seen, memory_dim_seen = feature_dim, mem_dim
        elif (feature_dim, mem_dim) != (feature_dim_seen, memory_dim_seen):
            raise DimensionMismatchError(
                f"{path}: video {video_id} dims ({feature_dim}, {mem_dim}) differ "
                f"from earlier videos ({feature_dim_seen}, {memory_dim_seen})")
        feats = reader.read_f32_array(num_frames * feature_dim)
        feats = feats.astype(np.float64).reshape(num_frames, feature_dim)
        mem = reader.read_f32_array(mem_entries * mem_dim)
        mem = mem.astype(np.float64).reshape(mem_entries, mem_dim)
        videos.append(FeatureSequence(video_id=video_id, features=feats, label=label,
                                      memory=GlobalMemory(entries=mem)))
    if not reader.at_end():
        raise DimensionMismatchError(f"{path}: trailing bytes after last video")
    return Dataset(videos=videos, num_classes=num_classes)


def write_windows_json(path: str, dataset: Dataset):
    """Diagnostics sidecar: planted signal windows by video id."""
    windows = {str(v.video_id): list(v.signal_window)
               for v in dataset.videos if v.signal_window is not None}
    atomic_write_bytes(path, json.dumps(windows, indent=0).encode())


def read_windows_json(path: str) -> dict[int, tuple[int, int]]:
    with open(path, "rb") as fh:
        raw = json.loads(fh.read())
    return {int(k): (int(v[0]), int(v[1])) for k, v in raw.items()}
