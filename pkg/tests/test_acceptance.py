"""Acceptance suite: one test per acceptance criterion, at the stated tolerances.

Criteria needing external data (the propulsion sensor table, the MNIST image
files) skip with instructions when the data is absent; everything else runs
self-contained. Each criterion prints a PASS line when it holds.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from ctxlearn.autoencoder import TrainConfig, init_autoencoder, reconstruction_errors, train
from ctxlearn.context import ErrorStats
from ctxlearn.core import make_rng
from ctxlearn.datasets import (
    UCI_DATASETS,
    build_propulsion_stream,
    default_cache_dir,
    generate_stagger,
    label_compressor_health,
    load_mnist_digits,
    load_propulsion,
    stagger_label,
    StaggerItem,
)
from ctxlearn.learners import LEARNER_NAMES, LearnerConfig, make_learner, run_prequential
from ctxlearn.metrics import EvaluationTrace, ewma, mean_accuracy, per_partition_accuracy

from conftest import all_items, rule_oracle, stagger_instances
from test_autoencoder import finite_difference_max_rel_error

SEEDS = (1, 2, 3, 4, 5)
TABLE_STAGGER = {"ical-mem": 93.94, "ical": 92.61, "non-cal": 68.23, "myopic": 82.61}
TABLE_MNIST = {"ical-mem": 93.17, "ical": 93.52, "non-cal": 92.29, "myopic": 72.33}
PROPULSION_TARGET_ICAL_MEM = 93.77


def paper_default_config():
    return LearnerConfig()


@pytest.fixture(scope="module")
def stagger_runs():
    """Per-seed results of all four learners with the locked defaults."""
    runs = {}
    for seed in SEEDS:
        stream = generate_stagger(make_rng(seed, 7))
        started = time.perf_counter()
        per_learner = {}
        for name in LEARNER_NAMES:
            learner = make_learner(name, 9, 2, config=paper_default_config(), seed=seed)
            results = run_prequential(learner, stream)
            per_learner[name] = (results, EvaluationTrace.from_step_results(results))
        runs[seed] = {
            "stream": stream,
            "learners": per_learner,
            "elapsed": time.perf_counter() - started,
        }
    return runs


def test_criterion_1_stagger_accuracy_and_ordering(stagger_runs):
    means = {}
    for name in LEARNER_NAMES:
        accs = [100 * stagger_runs[s]["learners"][name][1].mean_accuracy for s in SEEDS]
        means[name] = float(np.mean(accs))
        assert abs(means[name] - TABLE_STAGGER[name]) <= 5.0, (
            f"{name}: 5-seed mean {means[name]:.2f} outside "
            f"{TABLE_STAGGER[name]} +/- 5"
        )
    for seed in SEEDS:
        acc = {n: stagger_runs[seed]["learners"][n][1].mean_accuracy for n in LEARNER_NAMES}
        assert acc["ical-mem"] > acc["myopic"] > acc["non-cal"], f"ordering broken on seed {seed}"
        assert acc["ical"] > acc["myopic"], f"ical <= myopic on seed {seed}"
        assert stagger_runs[seed]["elapsed"] < 60.0, (
            f"seed {seed} took {stagger_runs[seed]['elapsed']:.1f}s (>60s)"
        )
    print(
        "\nACCEPTANCE C1 PASS: stagger 5-seed means "
        + ", ".join(f"{n}={means[n]:.2f}" for n in LEARNER_NAMES)
        + " all within +/-5 of the published table; orderings hold on every seed"
    )


def test_criterion_2_stagger_context_behavior(stagger_runs):
    clean = 0
    details = []
    for seed in SEEDS:
        results, _ = stagger_runs[seed]["learners"]["ical"]
        new_ids = [r.event.context_id for r in results if r.event and r.event.kind == "context-new"]
        ical_ok = new_ids == [2, 3, 4, 5, 6]
        _, trace = stagger_runs[seed]["learners"]["ical-mem"]
        first = set(trace.context_ids[trace.steps < 600])
        second = set(trace.context_ids[trace.steps >= 600])
        mem_ok = trace.n_contexts <= 4 and second <= first
        clean += ical_ok and mem_ok
        details.append(f"seed {seed}: ical={new_ids} mem={sorted(first)}->{sorted(second)}")
    assert clean >= 4, "context behavior clean on fewer than 4 of 5 seeds:\n" + "\n".join(details)
    print(f"\nACCEPTANCE C2 PASS: context behavior clean on {clean}/5 seeds")


def _propulsion_data_path():
    path = default_cache_dir() / UCI_DATASETS["propulsion"]["filename"]
    return path if path.exists() else None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_criterion_3_propulsion_end_to_end():
    path = _propulsion_data_path()
    if path is None:
        pytest.skip(
            "propulsion data not cached; run `ctxlearn fetch --dataset propulsion` "
            "(requires network) and re-run"
        )
    data = load_propulsion(path)
    accs = {}
    traces = {}
    for name in LEARNER_NAMES:
        stream = build_propulsion_stream(data, make_rng(1, 7))
        learner = make_learner(name, 16, 2, config=paper_default_config(), seed=1)
        trace = EvaluationTrace.from_step_results(run_prequential(learner, stream))
        accs[name] = 100 * trace.mean_accuracy
        traces[name] = (trace, stream)
    assert abs(accs["ical-mem"] - PROPULSION_TARGET_ICAL_MEM) <= 6.0
    assert accs["ical-mem"] > accs["ical"] > max(accs["non-cal"], accs["myopic"])
    trace, stream = traces["ical-mem"]
    per = per_partition_accuracy(trace, stream.spec)
    assert per[2] > per[1] and per[3] > per[1], "no fast re-convergence on revisited modes"
    print("\nACCEPTANCE C3 PASS: propulsion " + ", ".join(f"{n}={accs[n]:.2f}" for n in accs))


def test_criterion_4_mnist_digits_end_to_end():
    data_dir = os.environ.get("CTXLEARN_MNIST_DIR")
    if not data_dir:
        pytest.skip(
            "set CTXLEARN_MNIST_DIR to a directory holding train-images-idx3-ubyte[.gz], "
            "train-labels-idx1-ubyte[.gz] and digits.csv to run this criterion"
        )
    root = Path(data_dir)

    def find(stem):
        for candidate in (root / stem, root / (stem + ".gz")):
            if candidate.exists():
                return candidate
        pytest.skip(f"missing {stem} under {root}")

    images = find("train-images-idx3-ubyte")
    labels = find("train-labels-idx1-ubyte")
    digits = root / "digits.csv"
    if not digits.exists():
        pytest.skip(f"missing digits.csv under {root}")
    stream = load_mnist_digits(images, labels, digits, make_rng(1, 7))
    accs = {}
    for name in LEARNER_NAMES:
        learner = make_learner(name, 64, 10, config=paper_default_config(), seed=1)
        trace = EvaluationTrace.from_step_results(run_prequential(learner, stream))
        accs[name] = 100 * trace.mean_accuracy
    others = [accs[n] for n in ("ical-mem", "ical", "non-cal")]
    assert min(others) - accs["myopic"] >= 10.0, "myopic should trail by >= 10 points"
    assert max(others) - min(others) <= 5.0, "the other three should lie within 5 points"
    print("\nACCEPTANCE C4 PASS: mnist-digits " + ", ".join(f"{n}={accs[n]:.2f}" for n in accs))


def test_criterion_5_numerical_properties():
    # gradient vs central finite differences on both stated shapes
    for m, h, key in ((4, 2, 51), (11, 6, 52)):
        rng = make_rng(key, 0)
        model = init_autoencoder(m, h, rng)
        batch = rng.uniform(0, 1, size=(6, m))
        worst = finite_difference_max_rel_error(model, batch)
        assert worst < 1e-4, f"gradcheck {m}-{h}-{m}: {worst}"

    # streaming error stats vs a two-pass oracle
    rng = make_rng(53, 0)
    values = rng.uniform(0.001, 3.0, size=500)
    stats = ErrorStats.from_values(values)
    assert abs(stats.mean - np.mean(values)) / np.mean(values) < 1e-9
    assert abs(stats.std - np.std(values, ddof=1)) / np.std(values, ddof=1) < 1e-9

    # exact mean accuracy vs an independent summation order
    flags = make_rng(54, 0).integers(0, 2, size=1200).astype(bool)
    oracle = math.fsum(reversed([float(f) for f in flags])) / flags.size
    assert abs(mean_accuracy(flags) - oracle) < 1e-12

    # chunked EWMA identical to one-shot
    series = make_rng(55, 0).integers(0, 2, size=333).astype(float)
    head = ewma(series[:100], 0.1)
    tail = ewma(series[100:], 0.1, init=head[-1])
    assert np.array_equal(np.concatenate([head, tail]), ewma(series, 0.1))
    print("\nACCEPTANCE C5 PASS: gradcheck<1e-4, stats<1e-9, mean<1e-12, ewma exact")


def test_criterion_6_discrimination_property():
    ratios = []
    for seed in SEEDS:
        rng = make_rng(seed, 3)
        _, _, train_z = stagger_instances(rng, 200, concept=1)
        _, _, held_in = stagger_instances(rng, 100, concept=1)
        _, _, held_out = stagger_instances(rng, 100, concept=2)
        model = init_autoencoder(11, 6, make_rng(seed, 4))
        cfg = TrainConfig()  # the streaming defaults
        for i in range(20, 200):
            train(model, train_z[i - 20 : i], cfg)
        e_in = float(np.mean(reconstruction_errors(model, held_in)))
        e_out = float(np.mean(reconstruction_errors(model, held_out)))
        ratios.append(e_out / e_in)
        assert e_out >= 2.0 * e_in, f"seed {seed}: out/in ratio {e_out / e_in:.2f} < 2"
    print(
        "\nACCEPTANCE C6 PASS: out-of-concept error >= 2x in-concept on all seeds "
        f"(ratios {', '.join(f'{r:.1f}' for r in ratios)})"
    )


def test_criterion_7_oracle_equivalence():
    # labeling rules vs the 27-cell truth table, all three concepts, exact
    for concept in (1, 2, 3):
        for s, c, p in all_items():
            assert stagger_label(StaggerItem(s, c, p), concept) == rule_oracle(s, c, p, concept)

    # percentile labeler vs a sort-based oracle, exact on every record
    rng = make_rng(56, 0)
    decays = np.round(rng.uniform(0.95, 1.0, size=400), 3)  # ties included
    ordered = np.sort(decays)
    for mode, cutoff in ((1, 0.1), (2, 0.9)):
        labels = label_compressor_health(decays, mode)
        for i, v in enumerate(decays):
            rank = float(np.searchsorted(ordered, v, side="right")) / decays.size
            assert labels[i] == int(rank > cutoff)

    path = _propulsion_data_path()
    extra = ""
    if path is not None:
        decay = load_propulsion(path).compressor_decay
        ordered = np.sort(decay)
        for mode, cutoff in ((1, 0.1), (2, 0.9)):
            labels = label_compressor_health(decay, mode)
            ranks = np.searchsorted(ordered, decay, side="right") / decay.size
            assert np.array_equal(labels, (ranks > cutoff).astype(labels.dtype))
        extra = f"; verified on all {decay.size} real records"
    print("\nACCEPTANCE C7 PASS: label rules match brute-force oracles exactly" + extra)
