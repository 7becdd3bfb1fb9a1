"""Shared domain types: stream samples, stream metadata, seeded randomness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


def make_rng(seed: int, *stream_key: int) -> np.random.Generator:
    """Deterministic generator keyed by (seed, *stream_key).

    Distinct keys give statistically independent streams, so the stream
    generator and each learner can draw from their own source without one
    consumer perturbing another.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in stream_key)]))


@dataclass(frozen=True)
class Sample:
    """One stream element: a fixed-width feature vector with finite entries."""

    features: np.ndarray

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise ValueError(f"features must be a 1-D vector, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite (no NaN/Inf)")
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class LabeledSample(Sample):
    """A sample paired with its integer class label."""

    label: int = 0

    def __post_init__(self) -> None:
        super().__post_init__()
        if int(self.label) != self.label or self.label < 0:
            raise ValueError(f"label must be a nonnegative integer, got {self.label!r}")
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class StreamSpec:
    """Stream metadata.

    Partition fields are evaluation-only ground truth (plot boundaries,
    per-partition accuracy); they are never shown to a learner.
    """

    name: str
    n_features: int
    n_classes: int
    partition_length: int
    partition_sequence: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n_features < 1 or self.n_classes < 2 or self.partition_length < 1:
            raise ValueError("StreamSpec dimensions must be positive (n_classes >= 2)")
        if not self.partition_sequence:
            raise ValueError("partition_sequence must be non-empty")
        object.__setattr__(self, "partition_sequence", tuple(int(c) for c in self.partition_sequence))

    @property
    def total_length(self) -> int:
        return self.partition_length * len(self.partition_sequence)

    def partition_of(self, step: int) -> int:
        """0-based partition ordinal containing stream position `step`."""
        if not 0 <= step < self.total_length:
            raise ValueError(f"step {step} outside stream of length {self.total_length}")
        return step // self.partition_length

    def concept_of(self, step: int) -> int:
        """Ground-truth concept ID active at stream position `step`."""
        return self.partition_sequence[self.partition_of(step)]


@dataclass(frozen=True)
class Stream:
    """A finite sample stream: features row-per-step plus labels and metadata."""

    features: np.ndarray
    labels: np.ndarray
    spec: StreamSpec

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[1] != self.spec.n_features:
            raise ValueError(f"features must have shape (n, {self.spec.n_features})")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must be one per feature row")
        if feats.shape[0] != self.spec.total_length:
            raise ValueError(
                f"stream length {feats.shape[0]} != spec total_length {self.spec.total_length}"
            )
        if not np.all(np.isfinite(feats)):
            raise ValueError("stream features must be finite")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.spec.n_classes:
            raise ValueError(f"labels must lie in [0, {self.spec.n_classes})")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]


def concat_label(features: np.ndarray, label: int, n_classes: int) -> np.ndarray:
    """Append a one-hot class encoding to a feature vector.

    The result is the joint instance the context autoencoders model; one-hot
    keeps binary and 10-class streams on the same code path without imposing
    ordinal structure on the label.
    """
    features = np.asarray(features, dtype=np.float64)
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    out = np.zeros(features.shape[0] + n_classes, dtype=np.float64)
    out[: features.shape[0]] = features
    out[features.shape[0] + int(label)] = 1.0
    return out


def concat_context(features: np.ndarray, context_id: int) -> np.ndarray:
    """Append a context ID as one real-valued feature.

    A single column (not one-hot) keeps the classifier input width fixed at
    d+1 no matter how many contexts get discovered; a tree can isolate any ID
    with threshold splits.
    """
    features = np.asarray(features, dtype=np.float64)
    if context_id < 1:
        raise ValueError(f"context_id must be >= 1, got {context_id}")
    return np.concatenate([features, [float(context_id)]])
