"""Context knowledge base: per-context autoencoders with reconstruction-error statistics.

Each discovered context owns an autoencoder trained on the labeled instances
verified to belong to it, plus running mean/std of that model's reconstruction
errors over those instances. A sample is out-of-context for an entry when its
error sits too far in the upper tail of the entry's error distribution; a
sample rejected by every statistically ready entry hypothesizes a new context.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Sequence

import numpy as np

from .autoencoder import (
    Autoencoder,
    TrainConfig,
    default_hidden_width,
    init_autoencoder,
    reconstruction_error,
    reconstruction_errors,
    train,
)

SIGMA_FLOOR = 1e-9  # keeps the z-score finite on near-perfectly reconstructed buffers


class InsufficientStatsError(ValueError):
    """Raised when an entry's error statistics are too thin to support the tail test."""


@dataclass
class ErrorStats:
    """Streaming mean/variance of reconstruction errors (Welford update)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise InsufficientStatsError(f"need >= 2 observations, have {self.count}")
        return max(self.m2 / (self.count - 1), 0.0)

    @property
    def std(self) -> float:
        return max(sqrt(self.variance), SIGMA_FLOOR)

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray) -> "ErrorStats":
        stats = cls()
        for v in np.asarray(values, dtype=np.float64):
            stats.update(float(v))
        return stats


@dataclass
class ContextEntry:
    """One stored context: its autoencoder, error statistics, and verified instances."""

    context_id: int
    model: Autoencoder
    stats: ErrorStats = field(default_factory=ErrorStats)
    buffer: list[np.ndarray] = field(default_factory=list)

    def is_ready(self, min_stats_count: int) -> bool:
        """Whether the out-of-context test can be trusted for this entry.

        An untrained model's errors carry no information about the context,
        so readiness requires at least one training pass in addition to the
        statistics floor.
        """
        return self.model.is_trained and self.stats.count >= max(min_stats_count, 2)


@dataclass(frozen=True)
class EntryDiagnostic:
    """Per-entry evidence computed during one matching attempt."""

    context_id: int
    error: float  # mean reconstruction error over the evidence
    z_score: float | None  # z of the mean error; None when the entry was not ready
    reject_fraction: float | None = None  # share of evidence instances individually rejected


@dataclass(frozen=True)
class MatchDecision:
    context_id: int
    is_new: bool
    diagnostics: tuple[EntryDiagnostic, ...]


def is_out_of_context(
    entry: ContextEntry, error: float, z_threshold: float, min_stats_count: int = 10
) -> tuple[bool, float]:
    """One-sided upper-tail test: out-of-context iff (error - mean)/std > z_threshold.

    Only unusually HIGH errors signal a foreign context; errors below the
    mean are always in-context. Raises InsufficientStatsError until the
    entry has enough verified observations, in which case the caller must
    treat the sample as in-context and keep collecting.
    """
    if not entry.is_ready(min_stats_count):
        raise InsufficientStatsError(
            f"context {entry.context_id}: {entry.stats.count} observations, "
            f"trained={entry.model.is_trained}; need >= {min_stats_count} from a trained model"
        )
    z = (error - entry.stats.mean) / entry.stats.std
    return z > z_threshold, z


class ContextKnowledgeBase:
    """Ordered store of per-context autoencoders with an active context pointer.

    Single-owner mutable structure: all operations assume exclusive access.
    Context IDs are 1-based, gapless, and never reused.
    """

    def __init__(
        self,
        instance_width: int,
        rng: np.random.Generator,
        z_threshold: float = 3.0,
        min_stats_count: int = 10,
        match_reject_tolerance: float = 0.35,
        hidden_width: int | None = None,
        init_scale: float = 0.3,
    ) -> None:
        if instance_width < 1:
            raise ValueError("instance_width must be positive")
        if z_threshold <= 0:
            raise ValueError("z_threshold must be positive")
        if min_stats_count < 1:
            raise ValueError("min_stats_count must be positive")
        if not 0.0 <= match_reject_tolerance < 1.0:
            raise ValueError("match_reject_tolerance must lie in [0, 1)")
        self.instance_width = instance_width
        self.rng = rng
        self.z_threshold = z_threshold
        self.min_stats_count = min_stats_count
        self.match_reject_tolerance = match_reject_tolerance
        self.hidden_width = hidden_width or default_hidden_width(instance_width)
        self.init_scale = init_scale
        self.entries: list[ContextEntry] = []
        self.current_id = self._add_entry().context_id

    def _add_entry(self) -> ContextEntry:
        entry = ContextEntry(
            context_id=len(self.entries) + 1,
            model=init_autoencoder(
                self.instance_width, self.hidden_width, self.rng, self.init_scale
            ),
        )
        self.entries.append(entry)
        return entry

    @property
    def current(self) -> ContextEntry:
        return self.entries[self.current_id - 1]

    def entry(self, context_id: int) -> ContextEntry:
        return self.entries[context_id - 1]

    def __len__(self) -> int:
        return len(self.entries)

    def _check_width(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1 or z.shape[0] != self.instance_width:
            raise ValueError(
                f"instance width mismatch: expected {self.instance_width}, got shape {z.shape}"
            )
        return z

    def record_in_context(self, z: np.ndarray) -> None:
        """Store z as verified evidence for the current context and fold in its error."""
        z = self._check_width(z)
        entry = self.current
        entry.buffer.append(z)
        entry.stats.update(reconstruction_error(entry.model, z))

    def refresh_current(self, window: Sequence[np.ndarray] | np.ndarray, cfg: TrainConfig) -> None:
        """Train the current entry on `window`, then rebuild its stats over its buffer.

        The statistics must describe the model that now exists, not the one
        the errors were first observed under, so they are recomputed from
        scratch after every training pass.
        """
        window = np.asarray(window, dtype=np.float64)
        if window.size == 0:
            raise ValueError("refresh window must be non-empty")
        entry = self.current
        train(entry.model, window, cfg)
        if entry.buffer:
            errors = reconstruction_errors(entry.model, np.stack(entry.buffer))
            entry.stats = ErrorStats.from_values(errors)

    def match_or_hypothesize(self, evidence: np.ndarray) -> MatchDecision:
        """Match evidence to a stored context, or create a new one if every entry rejects it.

        `evidence` is one instance vector or a batch of them. Each instance is
        put through the entry's out-of-context test individually, and the
        entry claims the batch only when at most match_reject_tolerance of the
        instances reject: reconstruction errors are right-skewed, so a mean
        test is brittle, while a vote isolates foreign evidence even when
        concepts overlap on part of the instance space. Entries without
        trustworthy statistics can neither claim nor veto. Among claimants the
        lowest mean error wins, ties to the lowest ID. The active context
        pointer moves to the decision's context.
        """
        evidence = np.asarray(evidence, dtype=np.float64)
        if evidence.ndim == 1:
            evidence = self._check_width(evidence)[None, :]
        elif evidence.ndim != 2 or evidence.shape[1] != self.instance_width or evidence.shape[0] == 0:
            raise ValueError(
                f"evidence must be (>=1, {self.instance_width}), got shape {evidence.shape}"
            )
        diagnostics: list[EntryDiagnostic] = []
        matched: list[tuple[float, int]] = []
        for entry in self.entries:
            errors = reconstruction_errors(entry.model, evidence)
            mean_error = float(np.mean(errors))
            if not entry.is_ready(self.min_stats_count):
                diagnostics.append(EntryDiagnostic(entry.context_id, mean_error, None))
                continue
            z_scores = (errors - entry.stats.mean) / entry.stats.std
            reject_fraction = float(np.mean(z_scores > self.z_threshold))
            mean_z = float((mean_error - entry.stats.mean) / entry.stats.std)
            diagnostics.append(
                EntryDiagnostic(entry.context_id, mean_error, mean_z, reject_fraction)
            )
            if reject_fraction <= self.match_reject_tolerance:
                matched.append((mean_error, entry.context_id))
        if matched:
            matched.sort()  # lowest mean error, then lowest id
            self.current_id = matched[0][1]
            return MatchDecision(self.current_id, is_new=False, diagnostics=tuple(diagnostics))
        entry = self._add_entry()
        self.current_id = entry.context_id
        return MatchDecision(self.current_id, is_new=True, diagnostics=tuple(diagnostics))

    def infer_context_batch(
        self,
        samples: Sequence[np.ndarray],
        placeholder_label: int,
        n_classes: int,
    ) -> int:
        """Label-free context estimate for a batch of unlabeled feature vectors.

        Builds instances with a placeholder label and returns the trained
        entry with the lowest mean reconstruction error. Never hypothesizes a
        new context and never moves the active pointer: a placeholder label
        cannot produce trustworthy evidence of novelty.
        """
        from .core import concat_label

        if len(samples) == 0:
            raise ValueError("batch must be non-empty")
        zs = np.stack([concat_label(x, placeholder_label, n_classes) for x in samples])
        if zs.shape[1] != self.instance_width:
            raise ValueError(
                f"instance width mismatch: expected {self.instance_width}, got {zs.shape[1]}"
            )
        candidates = [e for e in self.entries if e.model.is_trained]
        if not candidates:
            raise ValueError("no trained context entries to match against")
        means = [(float(np.mean(reconstruction_errors(e.model, zs))), e.context_id) for e in candidates]
        means.sort()
        return means[0][1]
