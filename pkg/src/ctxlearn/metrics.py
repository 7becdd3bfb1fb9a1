"""Run evaluation: exact mean accuracy, smoothed traces, comparison tables.

The run-level number is always the exact arithmetic mean of per-step
correctness; the exponentially weighted trace exists for plots only and
never enters a comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import StreamSpec
from .learners import StepResult


def mean_accuracy(flags: Sequence[bool] | np.ndarray) -> float:
    """Exact arithmetic mean of correctness flags."""
    flags = np.asarray(flags)
    if flags.size == 0:
        raise ValueError("cannot average an empty trace")
    return int(np.count_nonzero(flags)) / flags.size


def ewma(flags: Sequence[float] | np.ndarray, alpha: float, init: float | None = None) -> np.ndarray:
    """Exponentially weighted moving average of a 0/1 sequence.

    value_t = alpha * flag_t + (1 - alpha) * value_{t-1}, seeded with the
    first flag (or with `init` to continue a previous chunk, which makes
    chunked evaluation bit-identical to one-shot).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    flags = np.asarray(flags, dtype=np.float64)
    if flags.size == 0:
        raise ValueError("flags must be non-empty")
    out = np.empty(flags.size)
    value = flags[0] if init is None else alpha * flags[0] + (1.0 - alpha) * init
    out[0] = value
    for i in range(1, flags.size):
        value = alpha * flags[i] + (1.0 - alpha) * value
        out[i] = value
    return out


@dataclass(frozen=True)
class EvaluationTrace:
    """Per-step record of one learner's run plus its run-level accuracy."""

    steps: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray
    correct: np.ndarray
    windowed: np.ndarray
    ewma: np.ndarray
    context_ids: np.ndarray
    events: tuple[str, ...]

    @classmethod
    def from_step_results(cls, results: Sequence[StepResult], ewma_alpha: float = 0.1) -> "EvaluationTrace":
        if not results:
            raise ValueError("cannot build a trace from zero steps")
        correct = np.array([r.correct for r in results], dtype=bool)
        return cls(
            steps=np.array([r.step for r in results], dtype=np.int64),
            predictions=np.array([r.prediction for r in results], dtype=np.int64),
            labels=np.array([r.label for r in results], dtype=np.int64),
            correct=correct,
            windowed=np.array([r.windowed_accuracy for r in results]),
            ewma=ewma(correct.astype(np.float64), ewma_alpha),
            context_ids=np.array([r.context_id for r in results], dtype=np.int64),
            events=tuple("" if r.event is None else str(r.event) for r in results),
        )

    def __len__(self) -> int:
        return self.correct.size

    @property
    def mean_accuracy(self) -> float:
        return mean_accuracy(self.correct)

    @property
    def n_contexts(self) -> int:
        return int(np.unique(self.context_ids).size)


def per_partition_accuracy(trace: EvaluationTrace, spec: StreamSpec) -> list[float | None]:
    """Mean accuracy per ground-truth partition over the evaluated steps.

    Partitions fully covered by warmup come back as None rather than a fake
    number.
    """
    partitions = np.array([spec.partition_of(int(s)) for s in trace.steps])
    out: list[float | None] = []
    for p in range(len(spec.partition_sequence)):
        mask = partitions == p
        out.append(mean_accuracy(trace.correct[mask]) if mask.any() else None)
    return out


def summarize(traces: dict[str, EvaluationTrace], spec: StreamSpec) -> dict:
    """Comparison summary across learners on one stream.

    All traces must cover the same steps. Mean accuracies exclude warmup
    steps by construction (the traces start after warmup), which the summary
    states explicitly.
    """
    if not traces:
        raise ValueError("no traces to summarize")
    lengths = {len(t) for t in traces.values()}
    if len(lengths) != 1:
        raise ValueError(f"traces must have equal length, got {sorted(lengths)}")
    learners = {}
    for name, trace in traces.items():
        learners[name] = {
            "mean_accuracy": trace.mean_accuracy,
            "per_partition_accuracy": per_partition_accuracy(trace, spec),
            "n_contexts": trace.n_contexts,
            "steps_evaluated": len(trace),
        }
    return {
        "stream": spec.name,
        "note": "mean accuracy over post-warmup steps only; warmup predictions are excluded",
        "learners": learners,
    }


def render_comparison(summaries: Iterable[dict]) -> str:
    """Text table of mean accuracies: one row per learner, one column per stream.

    Multiple summaries for the same (stream, learner) — e.g. a seed sweep —
    are aggregated as mean and standard deviation.
    """
    cells: dict[tuple[str, str], list[float]] = {}
    streams: list[str] = []
    names: list[str] = []
    for summary in summaries:
        stream = summary["stream"]
        if stream not in streams:
            streams.append(stream)
        for name, stats in summary["learners"].items():
            if name not in names:
                names.append(name)
            cells.setdefault((stream, name), []).append(stats["mean_accuracy"])
    if not cells:
        return "(no summaries found)\n"
    width = max(12, *(len(n) for n in names)) + 2
    col = 18
    lines = ["learner".ljust(width) + "".join(s.rjust(col) for s in streams)]
    for name in names:
        row = name.ljust(width)
        for stream in streams:
            accs = cells.get((stream, name))
            if not accs:
                row += "-".rjust(col)
            elif len(accs) == 1:
                row += f"{100 * accs[0]:.2f}%".rjust(col)
            else:
                mean = float(np.mean(accs))
                std = float(np.std(accs))
                row += f"{100 * mean:.2f}% ± {100 * std:.2f}".rjust(col)
        lines.append(row)
    return "\n".join(lines) + "\n"
