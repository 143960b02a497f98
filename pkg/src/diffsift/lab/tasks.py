"""Synthetic classification tasks with a controlled ID/OOD split.

Inputs are class prototypes on a sphere plus Gaussian noise.  The OOD test
set rotates the prototypes in a random 2-plane before adding noise, so the
shift is structured rather than plain extra noise.  Two seeded mechanisms
make training data hard: label noise (a fraction of episodes relabeled to a
wrong class) and ambiguous placement (inputs moved toward a different
class's prototype, keeping the correct label).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeding import make_rng


@dataclass(frozen=True, slots=True)
class SyntheticTaskSpec:
    """Generator knobs.  d is the feature dimension, n_classes the class
    count C; label_noise_rate is the mislabeled fraction of the train split,
    ambiguous_fraction the fraction relocated along the segment from their
    own prototype toward (depth < 1) or past (depth > 1) a wrong class's
    prototype while keeping their original label."""

    d: int = 16
    n_classes: int = 10
    n_train: int = 2000
    n_id_test: int = 2000
    n_ood_test: int = 2000
    proto_scale: float = 3.0
    noise_sigma: float = 1.0
    ood_rotation_angle: float = 0.5
    label_noise_rate: float = 0.15
    ambiguous_fraction: float = 0.2
    ambiguous_depth: float = 1.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("d must be >= 2 (the OOD rotation needs a 2-plane)")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_train < 1:
            raise ValueError("n_train must be >= 1")
        if min(self.n_id_test, self.n_ood_test) < 0:
            raise ValueError("test-set sizes must be non-negative")
        if self.proto_scale <= 0:
            raise ValueError("proto_scale must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0.0 <= self.label_noise_rate < 0.5):
            raise ValueError("label_noise_rate must lie in [0, 0.5): labels must stay majority-informative")
        if not (0.0 <= self.ambiguous_fraction <= 1.0):
            raise ValueError("ambiguous_fraction must lie in [0, 1]")
        if not (0.0 <= self.ambiguous_depth <= 2.0):
            raise ValueError("ambiguous_depth must lie in [0, 2]: 1 lands on the wrong prototype, above 1 extrapolates past it")


@dataclass(frozen=True, slots=True, eq=False)
class LabEpisode:
    """One (input, gold class) pair.  is_noised marks a label flipped at
    generation; is_ambiguous marks an input placed between prototypes."""

    x: np.ndarray
    gold_class: int
    is_noised: bool = False
    is_ambiguous: bool = False


@dataclass(frozen=True, slots=True, eq=False)
class LabTask:
    spec: SyntheticTaskSpec
    prototypes: np.ndarray
    rotation: np.ndarray
    train: list[LabEpisode]
    id_test: list[LabEpisode]
    ood_test: list[LabEpisode]


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    rows = rng.standard_normal((n, d))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    while np.any(norms < 1e-9):  # pragma: no cover - probability zero redraw
        bad = norms[:, 0] < 1e-9
        rows[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / norms


def rotation_in_random_plane(d: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by `angle` in a random 2-plane, identity elsewhere:
    R = I + (cos a - 1)(uu^T + vv^T) + sin a (uv^T - vu^T) for an orthonormal
    pair u, v.  angle = 0 yields the exact identity."""
    u = _unit_rows(rng, 1, d)[0]
    v = rng.standard_normal(d)
    v -= (v @ u) * u
    while np.linalg.norm(v) < 1e-9:  # pragma: no cover - probability zero redraw
        v = rng.standard_normal(d)
        v -= (v @ u) * u
    v /= np.linalg.norm(v)
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    return (
        np.eye(d)
        + (cos_a - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + sin_a * (np.outer(u, v) - np.outer(v, u))
    )


def _clean_split(
    prototypes: np.ndarray, n: int, sigma: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    n_classes, d = prototypes.shape
    labels = rng.integers(0, n_classes, n)
    inputs = prototypes[labels] + sigma * rng.standard_normal((n, d))
    return inputs, labels


def _episodes(inputs: np.ndarray, labels: np.ndarray) -> list[LabEpisode]:
    return [LabEpisode(x=x, gold_class=int(y)) for x, y in zip(inputs, labels)]


def gen_task(spec: SyntheticTaskSpec) -> LabTask:
    """Materialize train/ID-test/OOD-test splits.  Fully determined by the
    spec (every random stage runs on its own seed-derived stream)."""
    c, d = spec.n_classes, spec.d
    prototypes = _unit_rows(make_rng(spec.seed, "prototypes"), c, d) * spec.proto_scale

    rng_train = make_rng(spec.seed, "train")
    inputs, labels = _clean_split(prototypes, spec.n_train, spec.noise_sigma, rng_train)

    ambiguous = np.zeros(spec.n_train, dtype=bool)
    n_amb = round(spec.ambiguous_fraction * spec.n_train)
    if n_amb:
        rng_amb = make_rng(spec.seed, "ambiguous")
        picked = rng_amb.permutation(spec.n_train)[:n_amb]
        others = (labels[picked] + 1 + rng_amb.integers(0, c - 1, n_amb)) % c
        centers = prototypes[labels[picked]] + spec.ambiguous_depth * (
            prototypes[others] - prototypes[labels[picked]]
        )
        inputs[picked] = centers + spec.noise_sigma * rng_amb.standard_normal((n_amb, d))
        ambiguous[picked] = True

    noised = np.zeros(spec.n_train, dtype=bool)
    n_noise = round(spec.label_noise_rate * spec.n_train)
    if n_noise:
        rng_noise = make_rng(spec.seed, "label-noise")
        picked = rng_noise.permutation(spec.n_train)[:n_noise]
        labels[picked] = (labels[picked] + 1 + rng_noise.integers(0, c - 1, n_noise)) % c
        noised[picked] = True

    train = [
        LabEpisode(x=x, gold_class=int(y), is_noised=bool(fn), is_ambiguous=bool(fa))
        for x, y, fn, fa in zip(inputs, labels, noised, ambiguous)
    ]

    id_inputs, id_labels = _clean_split(
        prototypes, spec.n_id_test, spec.noise_sigma, make_rng(spec.seed, "id-test")
    )

    rotation = rotation_in_random_plane(d, spec.ood_rotation_angle, make_rng(spec.seed, "ood-plane"))
    rotated = prototypes @ rotation.T
    ood_inputs, ood_labels = _clean_split(
        rotated, spec.n_ood_test, spec.noise_sigma, make_rng(spec.seed, "ood-test")
    )

    return LabTask(
        spec=spec,
        prototypes=prototypes,
        rotation=rotation,
        train=train,
        id_test=_episodes(id_inputs, id_labels),
        ood_test=_episodes(ood_inputs, ood_labels),
    )


def episodes_to_arrays(episodes: list[LabEpisode]) -> tuple[np.ndarray, np.ndarray]:
    """Stack episodes into an (n, d) input matrix and an (n,) label vector."""
    if not episodes:
        raise ValueError("cannot stack an empty episode list")
    inputs = np.stack([e.x for e in episodes])
    labels = np.array([e.gold_class for e in episodes], dtype=np.int64)
    return inputs, labels
