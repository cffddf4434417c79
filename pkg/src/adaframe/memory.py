"""Global memory bank and the soft-attention query that produces the
context vector fed to the recurrent agent.

The bank holds cheap, degraded features for a handful of uniformly
spaced positions of the full sequence. Sinusoidal position information
is added lazily at query time, so stored entries stay reusable. The
same encoded vectors serve as attention keys and values by default;
``raw_values=True`` switches the values back to the stored entries and
must never be flipped silently (it changes the learned model).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import softmax

__all__ = [
    "GlobalMemory",
    "AttentionResult",
    "sinusoid_table",
    "positional_encode",
    "attend",
    "attend_backward",
]


def sinusoid_table(total: int, dim: int) -> np.ndarray:
    """Sinusoidal position encodings for positions 0..total-1, shape (total, dim).

    Even columns 2i hold sin(pos / 10000^(2i/dim)), odd columns 2i+1 the
    matching cos. ``dim`` must be even so the sin/cos pairs line up.
    """
    if dim % 2 != 0:
        raise ValueError(f"encoding dimension must be even, got {dim}")
    if total < 1:
        raise ValueError(f"total positions must be >= 1, got {total}")
    positions = np.arange(total, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * i / dim)
    table = np.empty((total, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def positional_encode(v: np.ndarray, position: int, total: int) -> np.ndarray:
    """Add the sinusoidal encoding of ``position`` to a feature vector."""
    v = np.asarray(v, dtype=np.float64)
    if not 0 <= position < total:
        raise ValueError(f"position {position} outside [0, {total})")
    if v.ndim != 1:
        raise ValueError("expected a 1-d feature vector")
    return v + sinusoid_table(total, v.shape[0])[position]


@dataclass
class GlobalMemory:
    """Read-only bank of downsampled feature vectors, one row per position.

    Must be strictly shorter than any sequence it summarizes; the data
    module enforces that at construction time.
    """

    entries: np.ndarray  # (num_entries, dim), float64

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] < 1:
            raise ValueError("memory needs at least one entry of uniform dimension")
        if self.entries.shape[1] % 2 != 0:
            raise ValueError("memory feature dimension must be even")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("memory entries must be finite")

    @property
    def num_entries(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def encoded(self) -> np.ndarray:
        """Entries with their position encodings added, shape like ``entries``."""
        return self.entries + sinusoid_table(self.num_entries, self.dim)


@dataclass
class AttentionResult:
    weights: np.ndarray  # (num_entries,), sums to 1
    context: np.ndarray  # (dim,), weighted average of the attended values


def attend(
    memory: GlobalMemory,
    h_prev: np.ndarray,
    query_proj: np.ndarray,
    raw_values: bool = False,
) -> AttentionResult:
    """Score each encoded entry against the projected hidden state.

    score_j = (query_proj @ h_prev) . encoded_j, weights = softmax(scores),
    context = weights-average of the values (encoded entries by default).
    """
    h_prev = np.asarray(h_prev, dtype=np.float64)
    query_proj = np.asarray(query_proj, dtype=np.float64)
    if query_proj.ndim != 2 or query_proj.shape[1] != h_prev.shape[0]:
        raise ValueError(
            f"query projection {query_proj.shape} does not accept hidden state "
            f"of length {h_prev.shape[0]}"
        )
    if query_proj.shape[0] != memory.dim:
        raise ValueError(
            f"projected query has dim {query_proj.shape[0]}, memory entries {memory.dim}"
        )
    enc = memory.encoded()
    query = query_proj @ h_prev
    scores = enc @ query
    weights = softmax(scores)
    values = memory.entries if raw_values else enc
    context = weights @ values
    return AttentionResult(weights=weights, context=context)


def attend_backward(
    memory: GlobalMemory,
    h_prev: np.ndarray,
    query_proj: np.ndarray,
    result: AttentionResult,
    d_weights: np.ndarray | None,
    d_context: np.ndarray | None,
    raw_values: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the attention step w.r.t. the hidden state and projection.

    ``result`` is the cached forward output; passing None is an error.
    Returns (d_h_prev, d_query_proj). Memory entries are constants.
    """
    if result is None:
        raise ValueError("attend_backward requires the cached forward result")
    h_prev = np.asarray(h_prev, dtype=np.float64)
    enc = memory.encoded()
    values = memory.entries if raw_values else enc
    weights = result.weights

    d_w = np.zeros_like(weights) if d_weights is None else np.asarray(d_weights, dtype=np.float64)
    if d_context is not None:
        d_context = np.asarray(d_context, dtype=np.float64)
        d_w = d_w + values @ d_context

    # softmax backward: d_scores = w * (d_w - <w, d_w>)
    d_scores = weights * (d_w - float(weights @ d_w))
    d_query = enc.T @ d_scores
    d_query_proj = np.outer(d_query, h_prev)
    d_h_prev = query_proj.T @ d_query
    return d_h_prev, d_query_proj
