"""Experiment harness: fetch data, generate streams, run comparisons, report.

Commands
--------
fetch   download + cache a benchmark dataset
gen     materialize a stream as a canonical CSV
run     prequential comparison of learners on a stream; writes trace CSV,
        summary JSON, and SVG plots
report  render a comparison table from stored run summaries

Exit codes: 0 success, 2 usage, 3 ingestion failure, 4 config conflict,
5 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets
from .autoencoder import TrainConfig
from .core import Stream, make_rng
from .datasets import IngestionError
from .learners import LEARNER_NAMES, STREAM_SEED_KEY, LearnerConfig, make_learner, run_prequential
from .metrics import EvaluationTrace, render_comparison, summarize

EXIT_OK = 0
EXIT_INGESTION = 3
EXIT_CONFIG = 4
EXIT_RUNTIME = 5

STREAM_NAMES = ("stagger", "propulsion", "mnist-digits")

# every hyperparameter flag with its locked default; --paper-defaults refuses
# to run when any of these was set explicitly
HYPER_DEFAULTS = {
    "t": 0.9,
    "T": 20,
    "W": 125,
    "z_threshold": 3.0,
    "lr": 0.05,
    "epochs": 20,
    "alpha": 0.1,
    "retrain_period": 15,
    "warmup": 20,
    "cooldown": 60,
    "init_scale": 0.3,
    "match_evidence": 10,
    "match_tolerance": 0.35,
}


class ConfigConflictError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_fetch = sub.add_parser("fetch", help="download and cache a dataset")
    p_fetch.add_argument("--dataset", required=True)
    p_fetch.add_argument("--cache-dir", default=None)
    p_fetch.set_defaults(func=cmd_fetch)

    p_gen = sub.add_parser("gen", help="write a stream to a canonical CSV")
    p_gen.add_argument("--stream", required=True)
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--out", required=True)
    _add_data_flags(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run a prequential learner comparison")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--stream", help=f"one of {', '.join(STREAM_NAMES)}")
    src.add_argument("--stream-file", help="canonical stream CSV from `gen`")
    p_run.add_argument("--learners", default="all", help="comma list or 'all'")
    p_run.add_argument("--seed", type=int, default=1)
    p_run.add_argument("--out", default="runs")
    p_run.add_argument("--paper-defaults", action="store_true",
                       help="lock every hyperparameter at its published/ledger default")
    p_run.add_argument("--t", type=float, default=None, help="accuracy threshold")
    p_run.add_argument("--T", type=int, default=None, help="accuracy/autoencoder window")
    p_run.add_argument("--W", type=int, default=None, help="myopic sliding window")
    p_run.add_argument("--z-threshold", type=float, default=None)
    p_run.add_argument("--lr", type=float, default=None, help="autoencoder learning rate")
    p_run.add_argument("--epochs", type=int, default=None, help="autoencoder epochs per update")
    p_run.add_argument("--alpha", type=float, default=None, help="EWMA smoothing (plots only)")
    p_run.add_argument("--retrain-period", type=int, default=None)
    p_run.add_argument("--warmup", type=int, default=None)
    p_run.add_argument("--cooldown", type=int, default=None)
    p_run.add_argument("--init-scale", type=float, default=None)
    p_run.add_argument("--match-evidence", type=int, default=None,
                       help="low-accuracy instances gathered before a match decision")
    p_run.add_argument("--match-tolerance", type=float, default=None,
                       help="max share of evidence an entry may reject and still claim it")
    p_run.add_argument("--no-plots", action="store_true")
    _add_data_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="comparison table from stored summaries")
    p_report.add_argument("--dir", default="runs")
    p_report.set_defaults(func=cmd_report)
    return parser


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cache-dir", default=None)
    parser.add_argument("--mnist-images", default=None, help="IDX image file")
    parser.add_argument("--mnist-labels", default=None, help="IDX label file")
    parser.add_argument("--digits-csv", default=None, help="8x8 digits table (65 columns)")


def _resolve_hypers(args: argparse.Namespace) -> dict:
    explicit = {key: getattr(args, key) for key in HYPER_DEFAULTS if getattr(args, key) is not None}
    if args.paper_defaults and explicit:
        raise ConfigConflictError(
            f"--paper-defaults locks all hyperparameters; drop: {', '.join(sorted(explicit))}"
        )
    resolved = dict(HYPER_DEFAULTS)
    resolved.update(explicit)
    return resolved


def _learner_config(h: dict) -> LearnerConfig:
    return LearnerConfig(
        accuracy_threshold=h["t"],
        accuracy_window=h["T"],
        myopic_window=h["W"],
        retrain_period=h["retrain_period"],
        warmup_n=h["warmup"],
        cooldown=h["cooldown"],
        match_evidence_min=h["match_evidence"],
        match_reject_tolerance=h["match_tolerance"],
        z_threshold=h["z_threshold"],
        train=TrainConfig(
            learning_rate=h["lr"],
            epochs_per_update=h["epochs"],
            init_scale=h["init_scale"],
        ),
    )


def _load_stream(args: argparse.Namespace, seed: int) -> Stream:
    if getattr(args, "stream_file", None):
        return datasets.read_stream_csv(args.stream_file)
    name = args.stream
    rng = make_rng(seed, STREAM_SEED_KEY)
    if name == "stagger":
        return datasets.generate_stagger(rng)
    if name == "propulsion":
        cache = Path(args.cache_dir) if args.cache_dir else datasets.default_cache_dir()
        path = cache / datasets.UCI_DATASETS["propulsion"]["filename"]
        if not path.exists():
            raise IngestionError(
                f"propulsion data not cached at {path}; "
                "run `ctxlearn fetch --dataset propulsion` first"
            )
        return datasets.build_propulsion_stream(datasets.load_propulsion(path), rng)
    if name == "mnist-digits":
        missing = [f for f in ("mnist_images", "mnist_labels", "digits_csv") if not getattr(args, f)]
        if missing:
            raise IngestionError(
                "mnist-digits needs --mnist-images, --mnist-labels and --digits-csv"
            )
        return datasets.load_mnist_digits(
            args.mnist_images, args.mnist_labels, args.digits_csv, rng
        )
    raise ValueError(f"unknown stream {name!r}; known: {', '.join(STREAM_NAMES)}")


def _parse_learners(raw: str) -> list[str]:
    if raw == "all":
        return list(LEARNER_NAMES)
    names = [n.strip() for n in raw.split(",") if n.strip()]
    unknown = [n for n in names if n not in LEARNER_NAMES]
    if unknown or not names:
        raise ValueError(
            f"unknown learners {unknown}; choose from {', '.join(LEARNER_NAMES)} or 'all'"
        )
    return names


def _config_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def cmd_fetch(args: argparse.Namespace) -> int:
    path = datasets.fetch_uci(args.dataset, cache_dir=args.cache_dir)
    print(path)
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    if args.stream not in STREAM_NAMES:
        raise ValueError(f"unknown stream {args.stream!r}; known: {', '.join(STREAM_NAMES)}")
    stream = _load_stream(args, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datasets.write_stream_csv(stream, out)
    print(out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    hypers = _resolve_hypers(args)
    learner_names = _parse_learners(args.learners)
    if args.stream and args.stream not in STREAM_NAMES:
        raise ValueError(f"unknown stream {args.stream!r}; known: {', '.join(STREAM_NAMES)}")
    stream = _load_stream(args, args.seed)
    config = _learner_config(hypers)
    digest = _config_digest(
        {
            "stream": stream.spec.name,
            "seed": args.seed,
            "learners": learner_names,
            "hypers": hypers,
        }
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    traces: dict[str, EvaluationTrace] = {}
    results_by_learner = {}
    for name in learner_names:
        learner = make_learner(
            name, stream.spec.n_features, stream.spec.n_classes, config=config, seed=args.seed
        )
        results = run_prequential(learner, stream)
        results_by_learner[name] = results
        traces[name] = EvaluationTrace.from_step_results(results, ewma_alpha=hypers["alpha"])

    summary = summarize(traces, stream.spec)
    summary.update(
        {
            "seed": args.seed,
            "config_digest": digest,
            "config": hypers,
            "warmup_n": config.warmup_n,
        }
    )
    tag = f"{stream.spec.name}_seed{args.seed}"
    _write_trace_csv(out / f"trace_{tag}.csv", results_by_learner, traces)
    _write_context_trace_csv(out / f"context_trace_{tag}.csv", results_by_learner)
    (out / f"summary_{tag}.json").write_text(json.dumps(summary, indent=2) + "\n")
    if not args.no_plots:
        _save_plot(out / f"plot_{tag}.svg", traces, stream.spec, config.warmup_n)
    print(json.dumps(summary["learners"], indent=2))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    root = Path(args.dir)
    summaries = []
    for path in sorted(root.rglob("summary_*.json")):
        try:
            summaries.append(json.loads(path.read_text()))
        except json.JSONDecodeError:
            print(f"skipping unreadable {path}", file=sys.stderr)
    print(render_comparison(summaries), end="")
    return EXIT_OK


def _write_trace_csv(path: Path, results_by_learner: dict, traces: dict) -> None:
    with open(path, "w") as fh:
        fh.write("step,learner,y,yhat,correct,windowed_acc,ewma_acc,context_id,event\n")
        for name, results in results_by_learner.items():
            trace = traces[name]
            for i, r in enumerate(results):
                fh.write(
                    f"{r.step},{name},{r.label},{r.prediction},{int(r.correct)},"
                    f"{r.windowed_accuracy!r},{trace.ewma[i]!r},{r.context_id},"
                    f"{'' if r.event is None else r.event}\n"
                )


def _write_context_trace_csv(path: Path, results_by_learner: dict) -> None:
    """Per-step active context plus per-entry evidence on steps where matching ran."""
    with open(path, "w") as fh:
        fh.write("step,learner,context_id,entry_id,entry_error,entry_z\n")
        for name, results in results_by_learner.items():
            for r in results:
                if not r.match_diagnostics:
                    fh.write(f"{r.step},{name},{r.context_id},,,\n")
                    continue
                for entry_id, error, z in r.match_diagnostics:
                    z_text = "" if z is None else repr(z)
                    fh.write(f"{r.step},{name},{r.context_id},{entry_id},{error!r},{z_text}\n")


def _save_plot(path: Path, traces: dict, spec, warmup_n: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "ctxlearn"
    import matplotlib.pyplot as plt

    fig, (ax_acc, ax_ctx) = plt.subplots(
        2, 1, figsize=(9, 6), sharex=True, height_ratios=[2, 1]
    )
    boundaries = [p * spec.partition_length for p in range(1, len(spec.partition_sequence))]
    for ax in (ax_acc, ax_ctx):
        for b in boundaries:
            ax.axvline(b, color="0.8", linewidth=0.8)
    for name, trace in traces.items():
        ax_acc.plot(trace.steps, trace.ewma, label=name, linewidth=1.2)
    ax_acc.set_ylabel("EWMA accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_acc.legend(loc="lower right", fontsize=8)
    for name, trace in traces.items():
        if np.unique(trace.context_ids).size > 1 or name in ("ical", "ical-mem"):
            ax_ctx.step(trace.steps, trace.context_ids, where="post", label=name, linewidth=1.2)
    ax_ctx.set_ylabel("context ID")
    ax_ctx.set_xlabel("stream step")
    ax_ctx.yaxis.get_major_locator().set_params(integer=True)
    if ax_ctx.lines:
        ax_ctx.legend(loc="upper left", fontsize=8)
    fig.suptitle(f"{spec.name}: prequential comparison (warmup {warmup_n} excluded)")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        parser.error(str(exc))  # exits 2 with usage
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except ConfigConflictError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # structured failure for scripts/CI
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
