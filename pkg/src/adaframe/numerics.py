"""Shared numerical primitives: stable nonlinearities, seeded sampling,
and the central-difference gradient checker every other module verifies
its hand-derived backward passes against.

All training-time arithmetic is float64. There is no global RNG: every
stochastic operation takes an explicit :class:`Rng` so rollouts can be
replayed exactly.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Rng",
    "mix_seed",
    "softmax",
    "sigmoid",
    "tanh",
    "gaussian_sample",
    "finite_diff_grad",
]

_MASK64 = (1 << 64) - 1


def mix_seed(seed: int, salt: int) -> int:
    """Derive a child seed from a parent seed and an integer salt (XOR mix)."""
    return (int(seed) ^ int(salt)) & _MASK64


class Rng:
    """Deterministic random source: identical seeds give identical streams.

    Thin wrapper over ``numpy.random.Generator`` (PCG64) that keeps the
    seed around so child generators can be derived reproducibly. Never
    share one instance across threads; derive children instead.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, salt: int) -> "Rng":
        """Independent child stream for e.g. per-video generation."""
        return Rng(mix_seed(self.seed, salt))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def normal(self, mean: float, stddev: float, size=None):
        return self._gen.normal(mean, stddev, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=False)


def softmax(x) -> np.ndarray:
    """Probability vector from real scores, stabilized by max subtraction."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


def sigmoid(x):
    """Logistic function, overflow-safe at both tails."""
    return expit(x)


def tanh(x):
    return np.tanh(x)


def gaussian_sample(mean: float, stddev: float, rng: Rng) -> float:
    """One draw from N(mean, stddev^2); stddev=0 returns mean exactly."""
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    return float(mean) + float(stddev) * float(rng.standard_normal())


def finite_diff_grad(
    f: Callable[[np.ndarray], float],
    theta: Sequence[float] | np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Independent oracle for the analytic backward passes; keep it free of
    any code path it is used to check.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + h
        f_plus = f(bumped)
        bumped[i] = theta[i] - h
        f_minus = f(bumped)
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
