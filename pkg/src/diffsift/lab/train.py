"""SFT and GRPO training steps for linear softmax policies.

Both trainers use closed-form gradients.  The GRPO step draws a group of g
classes per episode from the old policy, normalizes the binary rewards into
advantages (exactly the scalar group-advantage arithmetic, applied through a
lookup on the group's correct-count), differentiates the clipped surrogate
plus the KL penalty, and refreshes the old policy after the update.  Groups
with uniform rewards carry exactly zero advantage, so a batch of only such
groups (with zero KL weight) leaves the parameters bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .policy import SoftmaxPolicy, augment, draw_class_rows, policy_probs_batch
from .tasks import LabEpisode, episodes_to_arrays
from ..grpo import GrpoConfig, group_advantages
from ..seeding import make_rng

Batch = Sequence[LabEpisode] | tuple[np.ndarray, np.ndarray]


def _as_arrays(batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple):
        inputs, labels = batch
        return np.asarray(inputs, dtype=np.float64), np.asarray(labels, dtype=np.int64)
    return episodes_to_arrays(list(batch))


def sft_grad(policy: SoftmaxPolicy, batch: Batch) -> np.ndarray:
    """Gradient of the mean negative log-likelihood of the gold classes:
    average of (p - onehot(gold)) outer [x;1] / tau."""
    inputs, labels = _as_arrays(batch)
    if len(labels) == 0:
        raise ValueError("batch must be non-empty")
    probs = policy_probs_batch(policy, inputs)
    probs[np.arange(len(labels)), labels] -= 1.0
    aug = augment(inputs)
    return probs.T @ aug / (len(labels) * policy.sampling_temperature)


def sft_step(policy: SoftmaxPolicy, batch: Batch, lr: float = 0.1) -> tuple[SoftmaxPolicy, float]:
    """One full-batch gradient-descent step on the NLL.  Returns the updated
    policy and the Frobenius norm of the gradient.  An exactly-zero gradient
    leaves the weights bit-identical."""
    grad = sft_grad(policy, batch)
    if np.all(grad == 0.0):
        weights = policy.weights.copy()
    else:
        weights = policy.weights - lr * grad
    return SoftmaxPolicy(weights, policy.sampling_temperature), float(np.linalg.norm(grad))


@dataclass(frozen=True, slots=True, eq=False)
class PolicySnapshotPair:
    """The three policies GRPO tracks: the one being optimized, the sampling
    snapshot the ratios are measured against, and the KL reference."""

    current: SoftmaxPolicy
    old: SoftmaxPolicy
    reference: SoftmaxPolicy

    def __post_init__(self) -> None:
        shapes = {p.weights.shape for p in (self.current, self.old, self.reference)}
        if len(shapes) != 1:
            raise ValueError("current/old/reference policies must share dimensions")
        temps = {p.sampling_temperature for p in (self.current, self.old, self.reference)}
        if len(temps) != 1:
            raise ValueError("current/old/reference policies must share the sampling temperature")

    @classmethod
    def fresh(cls, policy: SoftmaxPolicy) -> "PolicySnapshotPair":
        return cls(current=policy, old=policy, reference=policy)


def binary_advantage_table(
    g: int, delta: float, sample_std: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Group advantages for binary rewards depend only on the count of ones.
    Entry s of the first (second) array is the advantage of a reward-1
    (reward-0) response in a group with s ones; rows 0 and g are zero."""
    pos = np.zeros(g + 1)
    neg = np.zeros(g + 1)
    for s in range(1, g):
        adv = group_advantages([1.0] * s + [0.0] * (g - s), delta, sample_std)
        pos[s] = adv[0]
        neg[s] = adv[-1]
    return pos, neg


def draw_class_matrix(
    policy: SoftmaxPolicy, inputs: np.ndarray, g: int, rng: np.random.Generator
) -> np.ndarray:
    """g class draws per input row from the policy, as an (n, g) matrix."""
    probs = policy_probs_batch(policy, inputs)
    return draw_class_rows(probs, rng.random((inputs.shape[0], g)))


@dataclass(frozen=True, slots=True)
class GrpoStepStats:
    """Per-step composition: how many reward groups were uniformly correct
    (easy) or uniformly wrong (hard), both contributing zero update, and how
    many were mixed (the only ones that move the policy)."""

    total_groups: int
    zero_update_easy: int
    zero_update_hard: int
    active_groups: int
    loss: float
    mean_kl: float


def _surrogate_pieces(
    p_cur: np.ndarray, p_old: np.ndarray, labels: np.ndarray, classes: np.ndarray, config: GrpoConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-draw ratios, advantages, and clipped-surrogate terms."""
    rows = np.arange(len(labels))[:, None]
    rewards = (classes == labels[:, None]).astype(np.float64)
    pos, neg = binary_advantage_table(config.g, config.delta, config.sample_std)
    ones = rewards.sum(axis=1).astype(np.int64)
    advantages = np.where(rewards == 1.0, pos[ones][:, None], neg[ones][:, None])
    ratios = p_cur[rows, classes] / p_old[rows, classes]
    clipped = np.clip(ratios, 1.0 - config.epsilon, 1.0 + config.epsilon)
    terms = np.minimum(ratios * advantages, clipped * advantages)
    return ratios, advantages, terms


def grpo_loss_given_draws(
    weights: np.ndarray,
    pair: PolicySnapshotPair,
    batch: Batch,
    classes: np.ndarray,
    config: GrpoConfig,
) -> float:
    """The scalar GRPO loss (negated surrogate plus KL penalty) as a function
    of the current weights, with the group draws held fixed.  This is the
    quantity the analytic gradient differentiates; finite differences on it
    are the oracle for grpo_grad_given_draws."""
    inputs, labels = _as_arrays(batch)
    current = SoftmaxPolicy(weights, pair.current.sampling_temperature)
    p_cur = policy_probs_batch(current, inputs)
    p_old = policy_probs_batch(pair.old, inputs)
    _, _, terms = _surrogate_pieces(p_cur, p_old, labels, classes, config)
    loss = -float(terms.sum()) / (len(labels) * config.g)
    if config.beta > 0:
        p_ref = policy_probs_batch(pair.reference, inputs)
        kl = (p_cur * np.log(p_cur / p_ref)).sum(axis=1)
        loss += config.beta * float(kl.mean())
    return loss


def grpo_grad_given_draws(
    pair: PolicySnapshotPair,
    batch: Batch,
    classes: np.ndarray,
    config: GrpoConfig,
) -> tuple[np.ndarray, GrpoStepStats]:
    """Analytic gradient of grpo_loss_given_draws with respect to the current
    weights, plus step statistics."""
    inputs, labels = _as_arrays(batch)
    n = len(labels)
    if n == 0:
        raise ValueError("batch must be non-empty")
    if classes.shape != (n, config.g):
        raise ValueError(f"expected draws of shape ({n}, {config.g}), got {classes.shape}")
    tau = pair.current.sampling_temperature
    aug = augment(inputs)
    p_cur = policy_probs_batch(pair.current, inputs)
    p_old = policy_probs_batch(pair.old, inputs)
    ratios, advantages, terms = _surrogate_pieces(p_cur, p_old, labels, classes, config)

    # Where the unclipped branch is active (ties included), d/dtheta of
    # ratio*A is A*ratio*grad(log pi); where the clipped branch is strictly
    # smaller the ratio sits beyond the clip boundary and the gradient is 0.
    clipped = np.clip(ratios, 1.0 - config.epsilon, 1.0 + config.epsilon)
    active = ratios * advantages <= clipped * advantages
    coef = np.where(active, advantages * ratios, 0.0)

    rows = np.arange(n)[:, None]
    scatter = np.zeros_like(p_cur)
    np.add.at(scatter, (rows, classes), coef)
    row_total = coef.sum(axis=1)
    d_logits = scatter - row_total[:, None] * p_cur
    grad = -(d_logits.T @ aug) / (n * config.g * tau)

    loss = -float(terms.sum()) / (n * config.g)
    mean_kl = 0.0
    if config.beta > 0:
        p_ref = policy_probs_batch(pair.reference, inputs)
        log_ratio = np.log(p_cur / p_ref)
        kl = (p_cur * log_ratio).sum(axis=1)
        d_kl_logits = p_cur * (log_ratio - kl[:, None])
        grad = grad + config.beta * (d_kl_logits.T @ aug) / (n * tau)
        mean_kl = float(kl.mean())
        loss += config.beta * mean_kl

    ones = (classes == labels[:, None]).sum(axis=1)
    easy = int(np.count_nonzero(ones == config.g))
    hard = int(np.count_nonzero(ones == 0))
    stats = GrpoStepStats(
        total_groups=n,
        zero_update_easy=easy,
        zero_update_hard=hard,
        active_groups=n - easy - hard,
        loss=loss,
        mean_kl=mean_kl,
    )
    return grad, stats


def grpo_step(
    pair: PolicySnapshotPair,
    batch: Batch,
    config: GrpoConfig,
    lr: float = 0.1,
    seed: int = 0,
) -> tuple[PolicySnapshotPair, float, GrpoStepStats]:
    """One GRPO step: draw g classes per episode from the old policy, take a
    gradient step on the clipped-surrogate-plus-KL loss, then refresh the old
    policy to the updated one.  An exactly-zero gradient (every group uniform
    and beta = 0) leaves the weights bit-identical."""
    inputs, labels = _as_arrays(batch)
    classes = draw_class_matrix(pair.old, inputs, config.g, make_rng(seed))
    grad, stats = grpo_grad_given_draws(pair, (inputs, labels), classes, config)
    if np.all(grad == 0.0):
        weights = pair.current.weights.copy()
    else:
        weights = pair.current.weights - lr * grad
    updated = SoftmaxPolicy(weights, pair.current.sampling_temperature)
    new_pair = PolicySnapshotPair(current=updated, old=updated, reference=pair.reference)
    return new_pair, float(np.linalg.norm(grad)), stats
