"""Linear softmax policies over lab episodes.

A policy is a C x (d+1) weight matrix (last column bias) and a sampling
temperature: pi(y|x) = softmax(W [x;1] / tau).  Greedy evaluation uses the
argmax of the logits, so it is temperature-independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tasks import LabEpisode, episodes_to_arrays
from ..seeding import make_rng


@dataclass(frozen=True, slots=True, eq=False)
class SoftmaxPolicy:
    weights: np.ndarray
    sampling_temperature: float = 1.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] < 2:
            raise ValueError("weights must be a C x (d+1) matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.sampling_temperature <= 0:
            raise ValueError("sampling_temperature must be > 0")
        object.__setattr__(self, "weights", w)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1] - 1

    def with_temperature(self, temperature: float) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.weights, temperature)


def zero_policy(n_classes: int, feature_dim: int, temperature: float = 1.0) -> SoftmaxPolicy:
    """All-zero weights: the uniform policy, a symmetric starting point."""
    return SoftmaxPolicy(np.zeros((n_classes, feature_dim + 1)), temperature)


def augment(inputs: np.ndarray) -> np.ndarray:
    """Append the bias coordinate: (n, d) -> (n, d+1) with a trailing 1."""
    if inputs.ndim == 1:
        return np.concatenate([inputs, [1.0]])
    return np.concatenate([inputs, np.ones((inputs.shape[0], 1))], axis=1)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def policy_probs(policy: SoftmaxPolicy, x: np.ndarray) -> np.ndarray:
    """Class distribution softmax(W [x;1] / tau) for a single input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != policy.feature_dim:
        raise ValueError(f"expected a length-{policy.feature_dim} input, got shape {x.shape}")
    logits = policy.weights @ augment(x) / policy.sampling_temperature
    return _softmax_rows(logits)


def policy_probs_batch(policy: SoftmaxPolicy, inputs: np.ndarray) -> np.ndarray:
    """Row-wise policy_probs for an (n, d) input matrix."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != policy.feature_dim:
        raise ValueError(f"expected (n, {policy.feature_dim}) inputs, got shape {inputs.shape}")
    logits = augment(inputs) @ policy.weights.T / policy.sampling_temperature
    return _softmax_rows(logits)


def draw_class_rows(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF class draws.  probs is (n, C); uniforms is (n, g) in [0,1).
    Entry (i, k) is the class whose half-open CDF interval [cdf_{c-1}, cdf_c)
    contains uniforms[i, k], so zero-probability classes are never drawn."""
    cdf = np.cumsum(probs, axis=-1)
    classes = (uniforms[..., None] >= cdf[..., None, :]).sum(axis=-1)
    return np.minimum(classes, probs.shape[-1] - 1)


def sample_responses_lab(policy: SoftmaxPolicy, x: np.ndarray, g: int, seed: int) -> np.ndarray:
    """g independent class draws from the policy at its sampling temperature.
    Same (policy, x, g, seed) always yields the same draws."""
    if g < 2:
        raise ValueError("g must be >= 2")
    probs = policy_probs(policy, x)
    uniforms = make_rng(seed).random(g)
    return draw_class_rows(probs[None, :], uniforms[None, :])[0]


def evaluate(policy: SoftmaxPolicy, episodes: Sequence[LabEpisode]) -> float:
    """Greedy accuracy: fraction of episodes whose argmax class (ties to the
    lowest index) equals the gold class.  An empty set warns and scores 0."""
    if not episodes:
        warnings.warn("evaluate called on an empty episode set; returning 0.0", RuntimeWarning)
        return 0.0
    inputs, labels = episodes_to_arrays(list(episodes))
    logits = augment(inputs) @ policy.weights.T
    predictions = np.argmax(logits, axis=1)
    return float(np.mean(predictions == labels))
