"""Datasets, synthetic generation, non-iid partitioning, splits, batching.

Everything here is a pure function of its inputs and a seed. Partitioning
draws one Dirichlet mixture per client and allocates samples from shared
per-class pools without replacement, so client index lists are disjoint and
cover the parent dataset up to a recorded remainder.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError, PartitionError
from .rng import TAG_BATCH, TAG_BLOBS, TAG_DIGITS, TAG_PARTITION, TAG_SPLIT, substream


@dataclass
class Dataset:
    """Inputs of shape (K, H, W, C) with values in [0, 1] plus K class labels."""

    x: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 4:
            raise ValueError(f"inputs must be (K, H, W, C), got {self.x.shape}")
        if len(self.x) != len(self.y):
            raise ValueError("inputs and labels disagree on sample count")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.x[idx], self.y[idx], self.n_classes)


@dataclass
class PartitionPlan:
    alpha: float
    seed: int
    clients: list  # list[list[int]] ordered index lists into the parent dataset
    discarded: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "seed": self.seed,
            "clients": [list(map(int, c)) for c in self.clients],
            "discarded": list(map(int, self.discarded)),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "PartitionPlan":
        doc = json.loads(text)
        return PartitionPlan(
            alpha=float(doc["alpha"]),
            seed=int(doc["seed"]),
            clients=[[int(i) for i in c] for c in doc["clients"]],
            discarded=[int(i) for i in doc.get("discarded", [])],
        )


@dataclass
class ClientSplit:
    train: Dataset
    test: Dataset


def synth_blobs(classes: int, per_class: int, dims: int, separation: float, seed: int) -> Dataset:
    """Gaussian clusters on a (sqrt(dims), sqrt(dims), 1) grid, min-max scaled to [0, 1].

    Class centers sit at (separation / sqrt(2)) along distinct coordinate
    axes, giving exact pairwise center distance `separation` before scaling.
    """
    if classes < 1 or per_class < 1 or dims < 1 or separation < 0:
        raise ValueError("blob parameters must be positive")
    side = int(round(np.sqrt(dims)))
    if side * side != dims:
        raise ValueError(f"dims must be a perfect square, got {dims}")
    if classes > dims:
        raise ValueError("need dims >= classes to place distinct centers")
    rng = substream(seed, TAG_BLOBS)
    centers = np.zeros((classes, dims))
    for j in range(classes):
        centers[j, j] = separation / np.sqrt(2.0)
    feats = rng.normal(size=(classes * per_class, dims))
    labels = np.repeat(np.arange(classes), per_class)
    feats += centers[labels]
    lo, hi = feats.min(), feats.max()
    feats = (feats - lo) / (hi - lo) if hi > lo else np.zeros_like(feats)
    return Dataset(feats.reshape(-1, side, side, 1), labels, classes)


# 5x7 pixel-font bitmaps for 0..9, row strings top to bottom.
_DIGIT_ROWS = (
    ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
)


def synth_digits(per_class: int, noise: float, seed: int) -> Dataset:
    """Ten-class 8x8 digit images from 5x7 glyphs with jitter and pixel noise.

    Each sample places its glyph at one of six offsets (rows 0-1, columns
    0-2), scales stroke intensity by a factor in [0.75, 1.0], and adds
    Gaussian pixel noise before clipping to [0, 1]. Spatial structure is
    real: class identity lives in stroke geometry, not in pixel position.
    """
    if per_class < 1:
        raise ValueError(f"per_class must be positive, got {per_class}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    rng = substream(seed, TAG_DIGITS)
    glyphs = [
        np.array([[float(ch == "1") for ch in row] for row in rows])
        for rows in _DIGIT_ROWS
    ]
    n = 10 * per_class
    labels = np.repeat(np.arange(10), per_class)
    rows0 = rng.integers(0, 2, size=n)
    cols0 = rng.integers(0, 3, size=n)
    amps = rng.uniform(0.75, 1.0, size=n)
    x = np.zeros((n, 8, 8, 1))
    for i in range(n):
        r0, c0 = int(rows0[i]), int(cols0[i])
        x[i, r0 : r0 + 7, c0 : c0 + 5, 0] = amps[i] * glyphs[labels[i]]
    x += rng.normal(scale=noise, size=x.shape)
    return Dataset(np.clip(x, 0.0, 1.0), labels, 10)


def _read_exact(f, n: int, path: str):
    buf = f.read(n)
    if len(buf) != n:
        raise IngestError(f"{path}: truncated at byte {f.tell() - len(buf)}")
    return buf


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Big-endian IDX image/label file pair; pixel bytes scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, images_path))
        if magic != 0x00000803:
            raise IngestError(f"{images_path}: bad image magic {magic:#010x} at byte 0")
        k, h, w = struct.unpack(">III", _read_exact(f, 12, images_path))
        pixels = np.frombuffer(_read_exact(f, k * h * w, images_path), dtype=np.uint8)
    with open(labels_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        if magic != 0x00000801:
            raise IngestError(f"{labels_path}: bad label magic {magic:#010x} at byte 0")
        (kl,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        labels = np.frombuffer(_read_exact(f, kl, labels_path), dtype=np.uint8)
    if k != kl:
        raise IngestError(f"{labels_path}: {kl} labels for {k} images")
    x = pixels.reshape(k, h, w, 1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(x, y, int(y.max()) + 1 if k else 1)


def load_csv(path: str) -> Dataset:
    """Rows of `label,p0,p1,...`; pixels in 0..255 or 0..1, auto-detected.

    Pixel count per row must be a perfect square; images come out (side, side, 1).
    """
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "label" or len(cols) < 2:
            raise IngestError(f"{path}: header must be 'label,p0,p1,...', got {header!r}")
        width = len(cols)
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != width:
                raise IngestError(f"{path}: row {lineno} has {len(cells)} cells, expected {width}")
            try:
                labels.append(int(cells[0]))
            except ValueError:
                raise IngestError(f"{path}: row {lineno}, column 1: non-numeric label {cells[0]!r}")
            vals = []
            for ci, cell in enumerate(cells[1:], start=2):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IngestError(f"{path}: row {lineno}, column {ci}: non-numeric cell {cell!r}")
            rows.append(vals)
    if not rows:
        raise IngestError(f"{path}: no data rows")
    feats = np.asarray(rows, dtype=np.float64)
    dims = feats.shape[1]
    side = int(round(np.sqrt(dims)))
    if side * side != dims:
        raise IngestError(f"{path}: {dims} pixels per row is not a perfect square")
    if feats.max() > 1.5:
        feats = feats / 255.0
    feats = np.clip(feats, 0.0, 1.0)
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0:
        raise IngestError(f"{path}: negative class label")
    return Dataset(feats.reshape(-1, side, side, 1), y, int(y.max()) + 1)


def dirichlet_partition(ds: Dataset, n_clients: int, alpha: float, seed: int) -> PartitionPlan:
    """Give each client an equal-size, Dirichlet(alpha)-mixed slice of ds.

    Each client draws class proportions d ~ Dir(alpha * 1_C) and receives
    round(d_j * K) samples of class j, K = len(ds) // n_clients, taken
    without replacement from shared class pools. Rounding overshoot is
    trimmed from the largest takes; shortfall is backfilled from the largest
    remaining pools. The leftover (< n_clients samples) is recorded.
    """
    if n_clients < 1:
        raise ValueError(f"need at least one client, got {n_clients}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    quota = len(ds) // n_clients
    if quota < 1:
        raise PartitionError(f"{len(ds)} samples cannot feed {n_clients} clients")
    rng = substream(seed, TAG_PARTITION)
    n_classes = ds.n_classes
    pools = []
    for j in range(n_classes):
        idx = np.flatnonzero(ds.y == j)
        pools.append(list(rng.permutation(idx)))
    clients: list[list[int]] = []
    for _ in range(n_clients):
        mix = rng.dirichlet(np.full(n_classes, alpha))
        take = [min(int(np.floor(mix[j] * quota + 0.5)), len(pools[j])) for j in range(n_classes)]
        excess = sum(take) - quota
        while excess > 0:
            j = int(np.argmax(take))
            take[j] -= 1
            excess -= 1
        shortfall = quota - sum(take)
        while shortfall > 0:
            room = [len(pools[j]) - take[j] for j in range(n_classes)]
            j = int(np.argmax(room))
            if room[j] <= 0:
                raise PartitionError("class pools exhausted before quota was met")
            take[j] += 1
            shortfall -= 1
        picked: list[int] = []
        for j in range(n_classes):
            picked.extend(int(i) for i in pools[j][: take[j]])
            del pools[j][: take[j]]
        clients.append(picked)
    discarded = [int(i) for pool in pools for i in pool]
    return PartitionPlan(alpha=float(alpha), seed=int(seed), clients=clients, discarded=discarded)


def train_test_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> ClientSplit:
    """Disjoint train/test split, stratified when every class allows it."""
    n = len(ds)
    if n < 5:
        raise ValueError(f"need at least 5 samples to split, got {n}")
    if not 0 < test_fraction < 1:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = substream(seed, TAG_SPLIT)
    n_test = max(1, int(np.floor(n * test_fraction)))
    present = np.unique(ds.y)
    counts = {int(c): int((ds.y == c).sum()) for c in present}
    test_idx: list[int] = []
    if all(v >= 2 for v in counts.values()):
        # stratified: floor per class, then top up from largest remainders
        rema = []
        per_class = {}
        for c in present:
            exact = counts[int(c)] * test_fraction
            per_class[int(c)] = int(np.floor(exact))
            rema.append((exact - np.floor(exact), -counts[int(c)], int(c)))
        short = n_test - sum(per_class.values())
        for _, _, c in sorted(rema, reverse=True):
            if short <= 0:
                break
            if per_class[c] < counts[c] - 1:  # keep at least one train sample per class
                per_class[c] += 1
                short -= 1
        for c in present:
            idx = rng.permutation(np.flatnonzero(ds.y == c))
            test_idx.extend(int(i) for i in idx[: per_class[int(c)]])
    else:
        perm = rng.permutation(n)
        test_idx = [int(i) for i in perm[:n_test]]
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    if not mask.any() or mask.all():
        raise ValueError("split produced an empty side")
    return ClientSplit(train=ds.subset(np.flatnonzero(~mask)), test=ds.subset(np.flatnonzero(mask)))


def batches(n_samples: int, batch_size: int, seed: int, epoch: int) -> list:
    """Seeded permutation of range(n_samples), chunked; the partial tail is kept."""
    if batch_size < 1:
        raise ValueError(f"batch size must be positive, got {batch_size}")
    if n_samples < 1:
        return []
    perm = substream(seed, TAG_BATCH, epoch).permutation(n_samples)
    return [perm[i : i + batch_size] for i in range(0, n_samples, batch_size)]
