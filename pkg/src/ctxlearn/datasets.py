"""Benchmark stream construction, feature normalization, and data ingestion.

Three streams: a synthetic block-world stream whose labeling rule switches
every partition, a naval-propulsion condition-monitoring stream whose decay
percentile cutoff flips between modes, and a handwritten-digit stream that
alternates between two image sources in a shared 8x8 space.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
import tempfile
import urllib.error
import urllib.request
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Stream, StreamSpec

SIZES = ("small", "medium", "large")
COLORS = ("red", "green", "blue")
SHAPES = ("square", "circular", "triangular")

CACHE_ENV_VAR = "CTXLEARN_CACHE_DIR"


class IngestionError(Exception):
    """A data file could not be obtained or parsed."""


class DownloadError(IngestionError):
    """The network fetch itself failed."""


class ChecksumError(IngestionError):
    """Downloaded or cached content does not match its expected checksum."""


# ---------------------------------------------------------------------------
# Block-world stream (three nominal attributes, rule switches per partition)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StaggerItem:
    """A block-world object: one value per nominal attribute."""

    size: str
    color: str
    shape: str

    def __post_init__(self) -> None:
        if self.size not in SIZES or self.color not in COLORS or self.shape not in SHAPES:
            raise ValueError(f"invalid attribute combination: {self}")

    def one_hot(self) -> np.ndarray:
        """9-dim encoding: size block, color block, shape block; exactly three 1s."""
        vec = np.zeros(9)
        vec[SIZES.index(self.size)] = 1.0
        vec[3 + COLORS.index(self.color)] = 1.0
        vec[6 + SHAPES.index(self.shape)] = 1.0
        return vec


def enumerate_stagger_items() -> list[StaggerItem]:
    """All 27 attribute combinations, in (size, color, shape) nested order."""
    return [
        StaggerItem(s, c, p) for s in SIZES for c in COLORS for p in SHAPES
    ]


def stagger_label(item: StaggerItem, concept: int) -> int:
    """Class of an item under one of the three hidden labeling rules."""
    if concept == 1:
        return int(item.size == "small" and item.color == "red")
    if concept == 2:
        return int(item.color == "green" or item.shape == "circular")
    if concept == 3:
        return int(item.size in ("medium", "large"))
    raise ValueError(f"concept must be 1, 2 or 3, got {concept}")


def generate_stagger(
    rng: np.random.Generator,
    partition_length: int = 200,
    partition_sequence: Sequence[int] = (1, 2, 3, 1, 2, 3),
) -> Stream:
    """Uniform draws over the 27 items, labeled by the active partition's rule."""
    spec = StreamSpec(
        name="stagger",
        n_features=9,
        n_classes=2,
        partition_length=partition_length,
        partition_sequence=tuple(partition_sequence),
    )
    draws = rng.integers(0, 3, size=(spec.total_length, 3))
    features = np.zeros((spec.total_length, 9))
    labels = np.zeros(spec.total_length, dtype=np.int64)
    for i, (si, ci, pi) in enumerate(draws):
        item = StaggerItem(SIZES[si], COLORS[ci], SHAPES[pi])
        features[i] = item.one_hot()
        labels[i] = stagger_label(item, spec.concept_of(i))
    return Stream(features, labels, spec)


# ---------------------------------------------------------------------------
# Propulsion stream (16 sensor features, decay-percentile labeling)
# ---------------------------------------------------------------------------

PROPULSION_N_FEATURES = 16


@dataclass(frozen=True)
class PropulsionData:
    """Parsed sensor table: 16 features plus the two decay state coefficients."""

    features: np.ndarray  # (n, 16)
    compressor_decay: np.ndarray  # (n,)
    turbine_decay: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.features.shape[0]


def load_propulsion(path: str | Path) -> PropulsionData:
    """Parse the plant data file: 18 numeric columns, whitespace or comma separated."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(
            f"{path} not found; run `ctxlearn fetch --dataset propulsion` first"
        )
    rows: list[list[float]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
            if len(row) != PROPULSION_N_FEATURES + 2:
                raise IngestionError(
                    f"{path}:{lineno}: expected {PROPULSION_N_FEATURES + 2} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    table = np.asarray(rows)
    return PropulsionData(
        features=table[:, :PROPULSION_N_FEATURES],
        compressor_decay=table[:, PROPULSION_N_FEATURES],
        turbine_decay=table[:, PROPULSION_N_FEATURES + 1],
    )


def percentile_rank(values: np.ndarray) -> np.ndarray:
    """Empirical percentile rank of each value within the whole array.

    rank(v) = fraction of values <= v, so the maximum ranks 1.0 and the
    minimum ranks at its tie count over n.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("values must be non-empty")
    ordered = np.sort(values)
    return np.searchsorted(ordered, values, side="right") / values.size


def label_compressor_health(
    compressor_decay: np.ndarray, mode: int, method: str = "rank"
) -> np.ndarray:
    """Binary health labels: 1 where decay sits above the mode's percentile cutoff.

    Mode 1 uses cutoff 0.1 (about 90% positive), mode 2 uses 0.9 (about 10%
    positive); the flip between them is the stream's label-relationship
    shift. `method` selects between the percentile-rank reading (default)
    and the quantile-cutoff reading of the labeling rule.
    """
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    cutoff = 0.1 if mode == 1 else 0.9
    decay = np.asarray(compressor_decay, dtype=np.float64)
    if method == "rank":
        return (percentile_rank(decay) > cutoff).astype(np.int64)
    if method == "quantile":
        return (decay > np.quantile(decay, cutoff)).astype(np.int64)
    raise ValueError(f"unknown labeling method {method!r}")


def build_propulsion_stream(
    data: PropulsionData,
    rng: np.random.Generator,
    partition_length: int = 300,
    partition_sequence: Sequence[int] = (1, 2, 1, 2),
    label_method: str = "rank",
) -> Stream:
    """Sample records uniformly with replacement, labeling by the active mode."""
    spec = StreamSpec(
        name="propulsion",
        n_features=PROPULSION_N_FEATURES,
        n_classes=2,
        partition_length=partition_length,
        partition_sequence=tuple(partition_sequence),
    )
    mode_labels = {
        mode: label_compressor_health(data.compressor_decay, mode, label_method)
        for mode in sorted(set(spec.partition_sequence))
    }
    features = np.zeros((spec.total_length, PROPULSION_N_FEATURES))
    labels = np.zeros(spec.total_length, dtype=np.int64)
    for p, mode in enumerate(spec.partition_sequence):
        idx = rng.integers(0, len(data), size=partition_length)
        sl = slice(p * partition_length, (p + 1) * partition_length)
        features[sl] = data.features[idx]
        labels[sl] = mode_labels[mode][idx]
    return Stream(features, labels, spec)


# ---------------------------------------------------------------------------
# Handwritten-digit stream (two image sources alternating in 8x8 space)
# ---------------------------------------------------------------------------


def read_idx(path: str | Path) -> np.ndarray:
    """Read an IDX-format array file (optionally gzipped)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path} not found")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    opener = gzip.open if magic == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        header = fh.read(4)
        if len(header) != 4 or header[:2] != b"\x00\x00" or header[2] != 0x08:
            raise IngestionError(f"{path}: not an unsigned-byte IDX file")
        ndim = header[3]
        dims = [struct.unpack(">I", fh.read(4))[0] for _ in range(ndim)]
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    expected = int(np.prod(dims))
    if data.size != expected:
        raise IngestionError(f"{path}: expected {expected} bytes of data, got {data.size}")
    return data.reshape(dims)


def resize_bilinear(images: np.ndarray, out_h: int = 8, out_w: int = 8) -> np.ndarray:
    """Pixel-center-aligned bilinear resize of a stack of grayscale images."""
    images = np.asarray(images, dtype=np.float64)
    n, h, w = images.shape

    def axis_weights(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst) + 0.5) * src / dst - 0.5
        lo = np.clip(np.floor(pos).astype(int), 0, src - 1)
        hi = np.clip(lo + 1, 0, src - 1)
        frac = np.clip(pos - lo, 0.0, 1.0)
        return lo, hi, frac

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    top = images[:, y0][:, :, x0] * (1 - fx) + images[:, y0][:, :, x1] * fx
    bot = images[:, y1][:, :, x0] * (1 - fx) + images[:, y1][:, :, x1] * fx
    return top * (1 - fy[None, :, None]) + bot * fy[None, :, None]


def resize_blockmean(images: np.ndarray, out_h: int = 8, out_w: int = 8) -> np.ndarray:
    """Center-crop to a multiple of the target size, then average square blocks."""
    images = np.asarray(images, dtype=np.float64)
    n, h, w = images.shape
    bh, bw = h // out_h, w // out_w
    if bh < 1 or bw < 1:
        raise ValueError("image smaller than target grid")
    oy, ox = (h - bh * out_h) // 2, (w - bw * out_w) // 2
    crop = images[:, oy : oy + bh * out_h, ox : ox + bw * out_w]
    return crop.reshape(n, out_h, bh, out_w, bw).mean(axis=(2, 4))


RESIZE_METHODS = {"bilinear": resize_bilinear, "blockmean": resize_blockmean}


def read_digits_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read the 8x8 digits table (n rows x 65 columns, last column label).

    Returns features scaled to [0, 1] (raw values are 0..16) and integer labels.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path} not found")
    try:
        table = np.loadtxt(path, delimiter=",")
    except ValueError as exc:
        raise IngestionError(f"{path}: unparseable CSV ({exc})") from exc
    if table.ndim != 2 or table.shape[1] != 65:
        raise IngestionError(f"{path}: expected 65 columns, got shape {table.shape}")
    return table[:, :64] / 16.0, table[:, 64].astype(np.int64)


def build_mnist_digits_stream(
    mnist_features: np.ndarray,
    mnist_labels: np.ndarray,
    digits_features: np.ndarray,
    digits_labels: np.ndarray,
    rng: np.random.Generator,
    partition_length: int = 1000,
    partition_sequence: Sequence[int] = (1, 2, 1, 2, 1, 2),
) -> Stream:
    """Alternate partitions sampled with replacement from the two 64-dim sources.

    Concept 1 is the large source, concept 2 the small one; both must already
    live in the shared 8x8 space with values in [0, 1].
    """
    sources = {1: (np.asarray(mnist_features), np.asarray(mnist_labels)),
               2: (np.asarray(digits_features), np.asarray(digits_labels))}
    for key, (feats, labs) in sources.items():
        if feats.ndim != 2 or feats.shape[1] != 64:
            raise ValueError(f"source {key} must be (n, 64), got {feats.shape}")
        if feats.shape[0] != labs.shape[0] or feats.shape[0] == 0:
            raise ValueError(f"source {key} features/labels mismatch")
    spec = StreamSpec(
        name="mnist-digits",
        n_features=64,
        n_classes=10,
        partition_length=partition_length,
        partition_sequence=tuple(partition_sequence),
    )
    features = np.zeros((spec.total_length, 64))
    labels = np.zeros(spec.total_length, dtype=np.int64)
    for p, concept in enumerate(spec.partition_sequence):
        feats, labs = sources[concept]
        idx = rng.integers(0, feats.shape[0], size=partition_length)
        sl = slice(p * partition_length, (p + 1) * partition_length)
        features[sl] = feats[idx]
        labels[sl] = labs[idx]
    return Stream(features, labels, spec)


def load_mnist_digits(
    mnist_images_path: str | Path,
    mnist_labels_path: str | Path,
    digits_csv_path: str | Path,
    rng: np.random.Generator,
    resize_method: str = "bilinear",
    mnist_subset: int = 50000,
) -> Stream:
    """Assemble the alternating digit stream from files on disk.

    The large source's images are scaled to [0, 1] and resized to 8x8; only
    the first `mnist_subset` images are used.
    """
    if resize_method not in RESIZE_METHODS:
        raise ValueError(f"resize_method must be one of {sorted(RESIZE_METHODS)}")
    images = read_idx(mnist_images_path)
    labels = read_idx(mnist_labels_path)
    if images.ndim != 3:
        raise IngestionError(f"{mnist_images_path}: expected a 3-D image tensor")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise IngestionError("image and label files disagree on sample count")
    images = images[:mnist_subset].astype(np.float64) / 255.0
    labels = labels[:mnist_subset].astype(np.int64)
    small = RESIZE_METHODS[resize_method](images).reshape(images.shape[0], 64)
    small = np.clip(small, 0.0, 1.0)
    digits_X, digits_y = read_digits_csv(digits_csv_path)
    return build_mnist_digits_stream(small, labels, digits_X, digits_y, rng)


# ---------------------------------------------------------------------------
# Feature normalization for autoencoder inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Frozen per-feature min-max map fitted on a reference set.

    Constant reference features map to 0.5; values beyond the reference
    range clamp to [0, 1]. Fit once on the warmup buffer and never updated,
    so no future stream statistics leak backwards.
    """

    mins: np.ndarray
    maxs: np.ndarray

    @classmethod
    def fit(cls, reference: np.ndarray) -> "Normalizer":
        reference = np.asarray(reference, dtype=np.float64)
        if reference.ndim != 2 or reference.shape[0] == 0:
            raise ValueError("reference must be a non-empty (n, d) matrix")
        return cls(mins=reference.min(axis=0), maxs=reference.max(axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.maxs - self.mins
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (x - self.mins) / span
        out = np.where(span == 0, 0.5, out)
        return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Dataset fetching (download, checksum, cache)
# ---------------------------------------------------------------------------

UCI_DATASETS: dict[str, dict] = {
    "propulsion": {
        "url": (
            "https://archive.ics.uci.edu/static/public/316/"
            "condition+based+maintenance+of+naval+propulsion+plants.zip"
        ),
        "member_suffix": "data.txt",
        "filename": "propulsion-data.txt",
        # No pinned digest is shipped: the first successful fetch records one
        # (trust-on-first-use) and later reads verify against it. Pass
        # sha256= to pin explicitly.
        "sha256": None,
    }
}


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "ctxlearn"


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_uci(
    dataset: str,
    cache_dir: str | Path | None = None,
    url: str | None = None,
    sha256: str | None = None,
) -> Path:
    """Download, checksum, extract, and cache a dataset's data file.

    Idempotent: a warm cache performs no network access, only checksum
    verification against the recorded digest. A corrupted download never
    reaches the cache.
    """
    if dataset not in UCI_DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; known: {sorted(UCI_DATASETS)}")
    entry = UCI_DATASETS[dataset]
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / entry["filename"]
    sidecar = target.with_suffix(target.suffix + ".sha256")
    expected = sha256 or entry["sha256"]

    if target.exists():
        digest = _sha256_file(target)
        recorded = sidecar.read_text().strip() if sidecar.exists() else None
        for reference in (expected, recorded):
            if reference and digest != reference:
                raise ChecksumError(
                    f"{target}: sha256 {digest} does not match expected {reference}"
                )
        if not sidecar.exists():
            sidecar.write_text(digest + "\n")
        return target

    source = url or entry["url"]
    try:
        with urllib.request.urlopen(source) as response:
            payload = response.read()
    except (urllib.error.URLError, OSError) as exc:
        raise DownloadError(f"failed to download {source}: {exc}") from exc

    with tempfile.TemporaryDirectory(dir=cache) as tmp:
        archive = Path(tmp) / "archive.zip"
        archive.write_bytes(payload)
        try:
            with zipfile.ZipFile(archive) as zf:
                members = [n for n in zf.namelist() if n.endswith(entry["member_suffix"])]
                if not members:
                    raise IngestionError(
                        f"{source}: no member ending with {entry['member_suffix']!r}"
                    )
                data = zf.read(members[0])
        except zipfile.BadZipFile as exc:
            raise IngestionError(f"{source}: not a zip archive ({exc})") from exc
        staged = Path(tmp) / entry["filename"]
        staged.write_bytes(data)
        digest = _sha256_file(staged)
        if expected and digest != expected:
            raise ChecksumError(
                f"{source}: extracted sha256 {digest} does not match expected {expected}"
            )
        staged.replace(target)
    sidecar.write_text(digest + "\n")
    return target


# ---------------------------------------------------------------------------
# Canonical stream files
# ---------------------------------------------------------------------------


def write_stream_csv(stream: Stream, path: str | Path) -> None:
    """Write the canonical archivable stream format.

    Header row f0..f{d-1},label,gt_partition after one commented metadata
    line; gt_partition is the 0-based partition ordinal (evaluation-only).
    """
    path = Path(path)
    spec = stream.spec
    meta = {
        "name": spec.name,
        "n_classes": spec.n_classes,
        "partition_length": spec.partition_length,
        "partition_sequence": list(spec.partition_sequence),
    }
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join([f"f{j}" for j in range(spec.n_features)] + ["label", "gt_partition"]))
        fh.write("\n")
        for i in range(len(stream)):
            cells = [repr(float(v)) for v in stream.features[i]]
            cells.append(str(int(stream.labels[i])))
            cells.append(str(spec.partition_of(i)))
            fh.write(",".join(cells) + "\n")


def read_stream_csv(path: str | Path) -> Stream:
    """Read a canonical stream file back into a Stream."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path} not found")
    meta: dict | None = None
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#"):
            try:
                meta = json.loads(first[1:].strip())
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}: bad metadata line ({exc})") from exc
            header = fh.readline()
        else:
            header = first
        columns = header.strip().split(",")
        if len(columns) < 3 or columns[-2] != "label" or columns[-1] != "gt_partition":
            raise IngestionError(f"{path}: expected header f0..fD,label,gt_partition")
        d = len(columns) - 2
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.shape[0] == 0 or rows.shape[1] != d + 2:
        raise IngestionError(f"{path}: data does not match header width")
    features = rows[:, :d]
    labels = rows[:, d].astype(np.int64)
    partitions = rows[:, d + 1].astype(np.int64)
    lengths = np.bincount(partitions)
    if lengths.size == 0 or not np.all(lengths == lengths[0]):
        raise IngestionError(f"{path}: partitions must be equal-length runs")
    if meta is not None:
        spec = StreamSpec(
            name=str(meta["name"]),
            n_features=d,
            n_classes=int(meta["n_classes"]),
            partition_length=int(meta["partition_length"]),
            partition_sequence=tuple(meta["partition_sequence"]),
        )
    else:
        spec = StreamSpec(
            name=path.stem,
            n_features=d,
            n_classes=int(labels.max()) + 1,
            partition_length=int(lengths[0]),
            partition_sequence=tuple(range(1, lengths.size + 1)),
        )
    return Stream(features, labels, spec)
