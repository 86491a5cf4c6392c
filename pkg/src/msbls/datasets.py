"""Dataset ingestion (IDX images), normalization, one-hot labels, and the
two client split regimes: quantity imbalance and non-IID by class.

When no real IDX files are available, a deterministic synthetic image set
with the same shape as MNIST (28x28 grayscale, 10 classes) stands in so
experiments stay runnable offline.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Conventional IDX file names, tried under a data directory.
_IDX_NAMES = {
    ("train", "images"): "train-images-idx3-ubyte",
    ("train", "labels"): "train-labels-idx1-ubyte",
    ("test", "images"): "t10k-images-idx3-ubyte",
    ("test", "labels"): "t10k-labels-idx1-ubyte",
}


@dataclass
class LabeledDataset:
    """Features normalized to [0, 1], one integer class label per row."""

    x: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.x.shape}")
        if len(self.labels) != self.x.shape[0]:
            raise ValueError(
                f"{self.x.shape[0]} rows but {len(self.labels)} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, indices, name: str | None = None) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(
            x=self.x[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            name=name or self.name,
        )


@dataclass(frozen=True)
class SplitPlan:
    """How the training rows are divided between the two clients."""

    mode: str = "quantity"  # "quantity" or "non_iid"
    ratio_a: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("quantity", "non_iid"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "quantity" and not 0.0 < self.ratio_a < 1.0:
            raise ValueError(f"ratio_a must be in (0, 1), got {self.ratio_a}")

    def describe(self) -> str:
        if self.mode == "quantity":
            return f"quantity:{self.ratio_a:g}"
        return "noniid"

    @staticmethod
    def parse(text: str) -> "SplitPlan":
        text = text.strip().lower()
        if text in ("noniid", "non_iid", "non-iid"):
            return SplitPlan(mode="non_iid")
        if text.startswith("quantity:"):
            return SplitPlan(mode="quantity", ratio_a=float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse split plan {text!r}")


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"truncated IDX file: expected {n} bytes of {what}")
    return data


def load_idx(images_path, labels_path, name: str | None = None) -> LabeledDataset:
    """Load an IDX image/label file pair, gzip-compressed or raw.

    Pixels are flattened row-major and scaled into [0, 1] by dividing by 255.
    """
    with _open_maybe_gzip(images_path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x} in {images_path}")
        pixels = np.frombuffer(
            _read_exact(f, count * rows * cols, "pixels"), dtype=np.uint8
        )
    with _open_maybe_gzip(labels_path) as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x} in {labels_path}")
        labels = np.frombuffer(_read_exact(f, label_count, "labels"), dtype=np.uint8)
    if count != label_count:
        raise ValueError(f"count mismatch: {count} images vs {label_count} labels")
    x = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    return LabeledDataset(
        x=x,
        labels=labels,
        num_classes=int(labels.max()) + 1 if labels.size else 0,
        name=name or Path(images_path).stem,
    )


def write_idx(ds: LabeledDataset, images_path, labels_path, side: int | None = None):
    """Write a dataset back out as a raw IDX pair (pixels rounded to uint8)."""
    n, d = ds.x.shape
    if side is None:
        side = int(round(d ** 0.5))
    if side * side != d:
        raise ValueError(f"feature count {d} is not a square image")
    pixels = np.clip(np.rint(ds.x * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, side, side))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def split_quantity(ds: LabeledDataset, ratio_a: float, seed: int):
    """Uniform random partition without replacement; |A| = round(ratio_a * N)."""
    if not 0.0 < ratio_a < 1.0:
        raise ValueError(f"ratio_a must be in (0, 1), got {ratio_a}")
    n = len(ds)
    n_a = int(round(ratio_a * n))
    if n_a == 0 or n_a == n:
        raise ValueError(f"split {ratio_a} of {n} rows leaves one part empty")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    idx_a = np.sort(perm[:n_a])
    idx_b = np.sort(perm[n_a:])
    return ds.take(idx_a, f"{ds.name}/A"), ds.take(idx_b, f"{ds.name}/B")


def split_non_iid(ds: LabeledDataset):
    """Class-disjoint partition: order samples by ascending class size (class
    index, then original position, break ties), give the first half to A.

    The two parts share at most the single class straddling the midpoint.
    """
    if ds.num_classes < 2:
        raise ValueError("non-IID split needs at least two classes")
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    rank = {
        cls: r
        for r, cls in enumerate(sorted(range(ds.num_classes), key=lambda c: (counts[c], c)))
    }
    order = np.array(
        sorted(range(len(ds)), key=lambda i: (rank[int(ds.labels[i])], i)), dtype=np.int64
    )
    n_a = int(np.ceil(len(ds) / 2))
    return ds.take(order[:n_a], f"{ds.name}/A"), ds.take(order[n_a:], f"{ds.name}/B")


def split_dataset(ds: LabeledDataset, plan: SplitPlan):
    if plan.mode == "quantity":
        return split_quantity(ds, plan.ratio_a, plan.seed)
    return split_non_iid(ds)


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Rows of the identity selected by label; exactly one 1 per row."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label out of range")
    return np.eye(num_classes, dtype=np.float64)[labels]


def _bilinear_shift(image: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Sample `image` at a subpixel offset with bilinear interpolation,
    zero-padded outside."""
    side = image.shape[0]
    padded = np.zeros((side + 2, side + 2))
    padded[1:-1, 1:-1] = image
    ys = np.arange(side) - dy + 1.0
    xs = np.arange(side) - dx + 1.0
    ys = np.clip(ys, 0.0, side + 1.0 - 1e-9)
    xs = np.clip(xs, 0.0, side + 1.0 - 1e-9)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    tl = padded[np.ix_(y0, x0)]
    tr = padded[np.ix_(y0, x0 + 1)]
    bl = padded[np.ix_(y0 + 1, x0)]
    br = padded[np.ix_(y0 + 1, x0 + 1)]
    return (1 - wy) * ((1 - wx) * tl + wx * tr) + wy * ((1 - wx) * bl + wx * br)


def synthetic_image_dataset(
    n_samples: int,
    n_classes: int = 10,
    side: int = 28,
    seed: int = 0,
    max_shift: float = 4.0,
    noise: float = 0.18,
    name: str = "synthetic",
) -> LabeledDataset:
    """Deterministic MNIST-shaped stand-in with a genuine learning curve.

    Each class is a smooth random prototype image; samples are subpixel
    translations with random amplitude plus pixel noise, so small training
    sets generalize measurably worse than large ones.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    protos = []
    for _ in range(n_classes):
        field = gaussian_filter(rng.standard_normal((side, side)), sigma=3.0)
        field -= field.min()
        field /= field.max()
        protos.append(field)
    labels = rng.integers(0, n_classes, size=n_samples)
    offsets = rng.uniform(-max_shift, max_shift, size=(n_samples, 2))
    amplitudes = rng.uniform(0.6, 1.0, size=n_samples)
    pixel_noise = rng.standard_normal((n_samples, side * side)) * noise
    x = np.empty((n_samples, side * side))
    for i in range(n_samples):
        img = _bilinear_shift(protos[labels[i]], offsets[i, 0], offsets[i, 1])
        x[i] = amplitudes[i] * img.ravel()
    x = np.clip(x + pixel_noise, 0.0, 1.0)
    return LabeledDataset(x=x, labels=labels, num_classes=n_classes, name=name)


def find_idx_pair(data_dir, split: str):
    """Locate conventional IDX files (raw or .gz) under a directory."""
    data_dir = Path(data_dir)
    images = data_dir / _IDX_NAMES[(split, "images")]
    labels = data_dir / _IDX_NAMES[(split, "labels")]
    for suffix in ("", ".gz"):
        ip, lp = Path(str(images) + suffix), Path(str(labels) + suffix)
        if ip.exists() and lp.exists():
            return ip, lp
    return None


def desk_dataset(
    train_n: int = 10000,
    test_n: int = 2000,
    data_dir=None,
    dataset_seed: int = 20240601,
    subset_seed: int = 13,
):
    """Desk-scale train/test pair: a real IDX subset when files are present
    (``data_dir`` argument or ``MSBLS_DATA_DIR``), otherwise the synthetic
    stand-in. Returns (train, test).
    """
    data_dir = data_dir or os.environ.get("MSBLS_DATA_DIR")
    if data_dir:
        train_pair = find_idx_pair(data_dir, "train")
        test_pair = find_idx_pair(data_dir, "test")
        if train_pair and test_pair:
            train = load_idx(*train_pair, name="idx-train")
            test = load_idx(*test_pair, name="idx-test")
            rng = np.random.Generator(np.random.PCG64(subset_seed))
            train = train.take(np.sort(rng.choice(len(train), train_n, replace=False)))
            test = test.take(np.sort(rng.choice(len(test), test_n, replace=False)))
            return train, test
    pool = synthetic_image_dataset(train_n + test_n, seed=dataset_seed)
    train = pool.take(np.arange(train_n), "synthetic-train")
    test = pool.take(np.arange(train_n, train_n + test_n), "synthetic-test")
    return train, test
