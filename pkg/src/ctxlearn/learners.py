"""The four compared online learners behind one prequential step interface.

Every learner predicts each arriving sample before seeing its label, then
learns from it. They differ in what the classifier is retrained on and in
how (or whether) they react to accuracy drops:

- full history, raw features, never reacts (``non-cal``)
- a short sliding window, raw features, forgets by aging out (``myopic``)
- full reset on any accuracy drop, raw features (``ical``)
- context discovery: an accuracy drop triggers matching against stored
  per-context autoencoders, and the classifier trains on all history with
  the context ID appended to each row (``ical-mem``)
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autoencoder import TrainConfig, reconstruction_error, train
from .context import ContextKnowledgeBase, is_out_of_context
from .core import LabeledSample, Stream, concat_context, concat_label
from .datasets import Normalizer
from .tree import TreeClassifier, fit_tree

LEARNER_NAMES = ("ical-mem", "ical", "non-cal", "myopic")

# seed-stream keys so each learner draws independent randomness from one run seed
_LEARNER_SEED_KEYS = {name: 101 + i for i, name in enumerate(LEARNER_NAMES)}
STREAM_SEED_KEY = 7


@dataclass(frozen=True)
class LearnerConfig:
    """Shared knobs for all learners; trigger and window defaults follow the
    streaming algorithm's published constants where it states any."""

    accuracy_threshold: float = 0.9  # t: trigger when windowed accuracy fails to exceed it
    accuracy_window: int = 20  # T: rolling window length and autoencoder window
    myopic_window: int = 125  # W: sliding-window learner's buffer
    retrain_period: int = 15  # R: classifier refit cadence in steps
    warmup_n: int = 20
    cooldown: int | None = None  # None: 3 * accuracy_window (see effective_cooldown)
    match_evidence_min: int = 10  # low-accuracy instances gathered before a match decision
    match_reject_tolerance: float = 0.35  # max share of evidence an entry may reject and still claim it
    z_threshold: float = 3.0
    min_stats_count: int = 10
    max_depth: int = 12
    min_samples_split: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.accuracy_threshold < 1.0:
            raise ValueError("accuracy_threshold must lie in (0, 1)")
        for name in ("accuracy_window", "myopic_window", "retrain_period", "warmup_n",
                     "match_evidence_min"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cooldown is not None and self.cooldown < 0:
            raise ValueError("cooldown must be >= 0")

    @property
    def effective_cooldown(self) -> int:
        """Trigger quiet period after a context event (and after warmup).

        Defaults to three accuracy windows: the classifier needs time to
        rebuild plus a full window of fresh flags, so the trigger only ever
        fires on steady-state evidence rather than on its own recovery.
        """
        return 3 * self.accuracy_window if self.cooldown is None else self.cooldown


@dataclass(frozen=True)
class ContextEvent:
    """What the context machinery decided at one step."""

    kind: str  # 'drift-suspected' | 'context-matched' | 'context-new'
    context_id: int

    def __str__(self) -> str:
        return f"{self.kind}:{self.context_id}"


@dataclass(frozen=True)
class StepResult:
    step: int
    prediction: int
    label: int
    correct: bool
    windowed_accuracy: float
    context_id: int
    event: ContextEvent | None = None
    match_diagnostics: tuple | None = None  # per-entry (id, error, z) when matching ran


class OnlineLearner:
    """Prequential base: predict, score, buffer, periodically refit.

    Subclasses choose the classifier's buffer view and may run context logic
    between scoring and buffering.
    """

    name = "base"
    uses_context_feature = False

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        config: LearnerConfig | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.config = config or LearnerConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.tree: TreeClassifier | None = None
        self.context_id = 1
        self._features: list[np.ndarray] = []
        self._labels: list[int] = []
        self._contexts: list[int] = []
        # last T correctness flags; cleared whenever the context changes
        self._flags: deque[bool] = deque(maxlen=self.config.accuracy_window)
        self._suppress = 0
        self._steps_since_fit = 0
        self._step_index = 0
        self._warmed = False

    # -- hooks -------------------------------------------------------------

    def _buffer_view(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _classifier_input(self, features: np.ndarray) -> np.ndarray:
        return features

    def _warmup_context(self, X: np.ndarray, y: np.ndarray) -> None:
        pass

    def _context_update(self, features: np.ndarray, label: int, windowed: float) -> ContextEvent | None:
        return None

    # -- shared machinery ----------------------------------------------------

    def _check_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 1 or features.shape[0] != self.n_features:
            raise ValueError(
                f"expected feature vector of length {self.n_features}, got shape {features.shape}"
            )
        return features

    def _append_history(self, features: np.ndarray, label: int) -> None:
        self._features.append(features)
        self._labels.append(int(label))
        self._contexts.append(self.context_id)

    def _refit(self) -> None:
        X, y = self._buffer_view()
        self.tree = fit_tree(
            X,
            y,
            self.n_classes,
            max_depth=self.config.max_depth,
            min_samples_split=self.config.min_samples_split,
        )
        self._steps_since_fit = 0

    def _windowed_accuracy(self) -> float:
        return sum(self._flags) / len(self._flags)

    def _trigger_ready(self) -> bool:
        """The drift trigger only fires on a full window of steady-state flags."""
        return self._suppress == 0 and len(self._flags) == self.config.accuracy_window

    def warmup(self, initial: Sequence[LabeledSample]) -> "OnlineLearner":
        """Fit the classifier (and any context state) on the first warmup_n samples."""
        if len(initial) != self.config.warmup_n:
            raise ValueError(
                f"warmup needs exactly {self.config.warmup_n} samples, got {len(initial)}"
            )
        for s in initial:
            if s.label >= self.n_classes:
                raise ValueError(f"label {s.label} out of range for {self.n_classes} classes")
            self._append_history(self._check_features(s.features), s.label)
        X = np.stack(self._features)
        y = np.asarray(self._labels)
        self._warmup_context(X, y)
        self._refit()
        # the empty accuracy window right after warmup looks exactly like the
        # window right after a context switch, so it gets the same grace period
        self._suppress = self.config.effective_cooldown
        self._step_index = self.config.warmup_n
        self._warmed = True
        return self

    def step(self, sample: LabeledSample) -> StepResult:
        """One prequential step: predict, score, run context logic, learn."""
        if not self._warmed:
            raise RuntimeError("learner must be warmed up before stepping")
        features = self._check_features(sample.features)
        prediction = self.tree.predict(self._classifier_input(features))
        correct = prediction == sample.label
        self._flags.append(correct)
        windowed = self._windowed_accuracy()
        event = self._context_update(features, sample.label, windowed)
        self._append_history(features, sample.label)
        self._steps_since_fit += 1
        context_changed = event is not None and event.kind in ("context-new", "context-matched")
        if context_changed or self._steps_since_fit >= self.config.retrain_period:
            self._refit()
        result = StepResult(
            step=self._step_index,
            prediction=int(prediction),
            label=int(sample.label),
            correct=bool(correct),
            windowed_accuracy=windowed,
            context_id=self.context_id,
            event=event,
            match_diagnostics=getattr(self, "_last_diagnostics", None),
        )
        if hasattr(self, "_last_diagnostics"):
            self._last_diagnostics = None
        self._step_index += 1
        return result

    def _reset_accuracy_window(self) -> None:
        self._flags.clear()
        self._suppress = self.config.effective_cooldown


class FullHistoryLearner(OnlineLearner):
    """No context awareness: trains on everything ever seen, raw features."""

    name = "non-cal"

    def _buffer_view(self) -> tuple[np.ndarray, np.ndarray]:
        return np.stack(self._features), np.asarray(self._labels)


class SlidingWindowLearner(OnlineLearner):
    """No context awareness: trains on the last W samples only."""

    name = "myopic"

    def _buffer_view(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.config.myopic_window
        return np.stack(self._features[-w:]), np.asarray(self._labels[-w:])


class _AutoencoderMixin:
    """Warmup-time normalizer + instance construction shared by the context learners."""

    def _warmup_autoencoder(self, X: np.ndarray, y: np.ndarray) -> None:
        self.normalizer = Normalizer.fit(X)
        zs = np.stack(
            [concat_label(self.normalizer.apply(x), int(lbl), self.n_classes) for x, lbl in zip(X, y)]
        )
        train(self.kb.current.model, zs, self.config.train)
        for z in zs:
            self.kb.record_in_context(z)

    def _instance(self, features: np.ndarray, label: int) -> np.ndarray:
        return concat_label(self.normalizer.apply(features), label, self.n_classes)


class DriftResetLearner(_AutoencoderMixin, OnlineLearner):
    """Context-aware without memory: an accuracy drop means a new context,
    and everything learned so far is thrown away."""

    name = "ical"

    def __init__(self, *args, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self._buffer_start = 0
        instance_width = self.n_features + self.n_classes
        self.kb = ContextKnowledgeBase(
            instance_width,
            self.rng,
            z_threshold=self.config.z_threshold,
            min_stats_count=self.config.min_stats_count,
            match_reject_tolerance=self.config.match_reject_tolerance,
            init_scale=self.config.train.init_scale,
        )

    def _buffer_view(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.stack(self._features[self._buffer_start :]),
            np.asarray(self._labels[self._buffer_start :]),
        )

    def _warmup_context(self, X: np.ndarray, y: np.ndarray) -> None:
        self._warmup_autoencoder(X, y)

    def _context_update(self, features: np.ndarray, label: int, windowed: float) -> ContextEvent | None:
        if self._suppress > 0:
            self._suppress -= 1
            return None
        if not self._trigger_ready() or windowed > self.config.accuracy_threshold:
            return None
        # drop in accuracy: forget all previous concepts and start over
        self.context_id += 1
        self._buffer_start = len(self._features)
        self.tree = None
        self.kb = ContextKnowledgeBase(
            self.n_features + self.n_classes,
            self.rng,
            z_threshold=self.config.z_threshold,
            min_stats_count=self.config.min_stats_count,
            match_reject_tolerance=self.config.match_reject_tolerance,
            init_scale=self.config.train.init_scale,
        )
        self._reset_accuracy_window()
        return ContextEvent("context-new", self.context_id)


class ContextMemoryLearner(_AutoencoderMixin, OnlineLearner):
    """Context-aware with memory: discovered contexts persist as autoencoders,
    re-encountered contexts are re-matched, and the classifier always sees
    the full history with each row's context-at-arrival appended."""

    name = "ical-mem"
    uses_context_feature = True

    def __init__(self, *args, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        instance_width = self.n_features + self.n_classes
        self.kb = ContextKnowledgeBase(
            instance_width,
            self.rng,
            z_threshold=self.config.z_threshold,
            min_stats_count=self.config.min_stats_count,
            match_reject_tolerance=self.config.match_reject_tolerance,
            init_scale=self.config.train.init_scale,
        )
        # instances seen on low-accuracy steps: the evidence a match decision uses
        self._suspects: deque[np.ndarray] = deque(maxlen=self.config.accuracy_window)
        self._last_diagnostics: tuple | None = None

    def _buffer_view(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack(self._features)
        ctx = np.asarray(self._contexts, dtype=np.float64)[:, None]
        return np.hstack([X, ctx]), np.asarray(self._labels)

    def _classifier_input(self, features: np.ndarray) -> np.ndarray:
        return concat_context(features, self.context_id)

    def _warmup_context(self, X: np.ndarray, y: np.ndarray) -> None:
        self._warmup_autoencoder(X, y)

    def _record(self, z: np.ndarray) -> None:
        """Record z for the active context; first-train a fresh entry once it
        has a full autoencoder window of evidence.

        Once the entry can run the out-of-context test, z must pass it to be
        stored: an entry's buffer and statistics describe verified samples
        only, so stray foreign instances arriving while windowed accuracy is
        still high cannot blur the context's error model.
        """
        entry = self.kb.current
        if entry.is_ready(self.config.min_stats_count):
            rejected, _ = is_out_of_context(
                entry, reconstruction_error(entry.model, z), self.config.z_threshold,
                self.config.min_stats_count,
            )
            if rejected:
                return
        self.kb.record_in_context(z)
        if not entry.model.is_trained and len(entry.buffer) >= self.config.accuracy_window:
            window = np.stack(entry.buffer[-self.config.accuracy_window :])
            self.kb.refresh_current(window, self.config.train)

    def _context_update(self, features: np.ndarray, label: int, windowed: float) -> ContextEvent | None:
        z = self._instance(features, label)
        if self._suppress > 0:
            # grace period after a context change: the sample is treated as
            # in-context evidence so a fresh entry can accumulate its buffer
            self._suppress -= 1
            self._record(z)
            return None
        if windowed > self.config.accuracy_threshold or not self._trigger_ready():
            self._suspects.clear()
            self._record(z)
            entry = self.kb.current
            if entry.buffer:
                window = np.stack(entry.buffer[-self.config.accuracy_window :])
                self.kb.refresh_current(window, self.config.train)
            return None
        # accuracy dropped: gather evidence, then match it against the stored
        # contexts. A single instance cannot separate overlapping concepts
        # (many instances carry the same label under both rules), so the
        # decision waits for a small batch and uses its mean error per entry.
        self._suspects.append(z)
        if len(self._suspects) < self.config.match_evidence_min:
            return ContextEvent("drift-suspected", self.context_id)
        previous = self.context_id
        decision = self.kb.match_or_hypothesize(np.stack(self._suspects))
        self._last_diagnostics = tuple(
            (d.context_id, d.error, d.z_score) for d in decision.diagnostics
        )
        self.context_id = decision.context_id
        if decision.is_new:
            self._suspects.clear()
            self._reset_accuracy_window()
            self._record(z)
            return ContextEvent("context-new", decision.context_id)
        if decision.context_id != previous:
            self._suspects.clear()
            self._reset_accuracy_window()
            self._record(z)
            return ContextEvent("context-matched", decision.context_id)
        return ContextEvent("drift-suspected", decision.context_id)


_LEARNER_CLASSES = {
    cls.name: cls
    for cls in (ContextMemoryLearner, DriftResetLearner, FullHistoryLearner, SlidingWindowLearner)
}


def make_learner(
    name: str,
    n_features: int,
    n_classes: int,
    config: LearnerConfig | None = None,
    seed: int = 0,
) -> OnlineLearner:
    """Build one learner by its public name with a seed-keyed private RNG."""
    if name not in _LEARNER_CLASSES:
        raise ValueError(f"unknown learner {name!r}; known: {sorted(_LEARNER_CLASSES)}")
    from .core import make_rng

    rng = make_rng(seed, _LEARNER_SEED_KEYS[name])
    return _LEARNER_CLASSES[name](n_features, n_classes, config=config, rng=rng)


def run_prequential(learner: OnlineLearner, stream: Stream) -> list[StepResult]:
    """Warm up on the stream's head, then step through the rest test-then-train."""
    warmup_n = learner.config.warmup_n
    if len(stream) <= warmup_n:
        raise ValueError(f"stream of length {len(stream)} too short for warmup_n={warmup_n}")
    learner.warmup([stream[i] for i in range(warmup_n)])
    return [learner.step(stream[i]) for i in range(warmup_n, len(stream))]
