import numpy as np
import pytest

from ctxlearn.core import LabeledSample, Stream, StreamSpec, concat_label, make_rng
from ctxlearn.datasets import COLORS, SHAPES, SIZES, StaggerItem


def rule_oracle(size: str, color: str, shape: str, concept: int) -> int:
    """Independent re-statement of the three hidden labeling rules."""
    if concept == 1:
        return 1 if (size == "small" and color == "red") else 0
    if concept == 2:
        return 1 if (color == "green" or shape == "circular") else 0
    return 1 if size != "small" else 0


def all_items():
    return [(s, c, p) for s in SIZES for c in COLORS for p in SHAPES]


def stagger_instances(rng, n, concept, n_classes=2):
    """n labeled one-hot instances (x + one-hot y) drawn uniformly under `concept`."""
    rows = rng.integers(0, 3, size=(n, 3))
    zs, xs, ys = [], [], []
    for si, ci, pi in rows:
        item = StaggerItem(SIZES[si], COLORS[ci], SHAPES[pi])
        y = rule_oracle(item.size, item.color, item.shape, concept)
        x = item.one_hot()
        xs.append(x)
        ys.append(y)
        zs.append(concat_label(x, y, n_classes))
    return np.stack(xs), np.asarray(ys), np.stack(zs)


def constant_rule_stream(n_steps=120, partition_length=None, seed=0):
    """A trivially learnable stream: label follows one feature, no drift."""
    rng = make_rng(seed, 55)
    x0 = rng.integers(0, 2, size=n_steps).astype(float)
    features = np.stack([x0, 1.0 - x0], axis=1)
    labels = x0.astype(np.int64)
    spec = StreamSpec(
        name="toy-constant",
        n_features=2,
        n_classes=2,
        partition_length=partition_length or n_steps,
        partition_sequence=(1,) if partition_length is None else tuple(
            1 for _ in range(n_steps // partition_length)
        ),
    )
    return Stream(features, labels, spec)


@pytest.fixture
def rng():
    return make_rng(1234, 1)


def labeled(features, label):
    return LabeledSample(np.asarray(features, dtype=float), label)
