"""MNIST ingestion and the rotated-MNIST splits.

Train (10000) and validation (2000) digits are drawn without replacement from
the 60k MNIST training file; the 50000 test samples are five independently
rotated passes over the 10k MNIST test file.  Every sample gets one angle drawn
uniformly from [-pi/2, pi/2], stored as ground truth.  Rotation is
counterclockwise by the stored angle, so warping with that angle rectifies.
"""

from __future__ import annotations

import gzip
import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .warp import rotate_image

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SPLIT_SIZES = {"train": 10000, "validation": 2000, "test": 50000}
TEST_COPIES = 5
FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    def __init__(self, path, offset: int, message: str):
        self.path, self.offset = str(path), offset
        super().__init__(f"{path}: {message} (offset {offset})")


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (raw or gzipped).

    Image files (magic 0x803) come back as float arrays scaled to [0, 1];
    label files (magic 0x801) as uint8 vectors.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 8:
        raise IdxFormatError(path, len(raw), f"truncated header: expected at least 8 bytes, got {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise IdxFormatError(path, len(raw), f"truncated header: expected 16 bytes, got {len(raw)}")
        n, rows, cols = struct.unpack(">III", raw[4:16])
        shape, header = (n, rows, cols), 16
    elif magic == LABEL_MAGIC:
        (n,) = struct.unpack(">I", raw[4:8])
        shape, header = (n,), 8
    else:
        raise IdxFormatError(path, 0, f"bad magic 0x{magic:08x}")
    expected = header + int(np.prod(shape))
    if len(raw) < expected:
        raise IdxFormatError(path, len(raw), f"truncated data: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8, count=expected - header, offset=header).reshape(shape)
    if magic == IMAGE_MAGIC:
        return data.astype(np.float32) / np.float32(255.0)
    return data.copy()


def find_file(root, stem: str) -> Path:
    root = Path(root)
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"missing MNIST file: {root / stem}[.gz]")


@dataclass
class Mnist:
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray

    @classmethod
    def load(cls, root) -> "Mnist":
        paths = {k: find_file(root, v) for k, v in FILES.items()}
        return cls(**{k: read_idx(p) for k, p in paths.items()})

    def pool(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        if split == "test":
            return self.test_images, self.test_labels
        return self.train_images, self.train_labels


@dataclass(frozen=True)
class RotatedSample:
    image: np.ndarray  # 28 x 28, values in [0, 1]
    theta_gt: float
    digit: int


@dataclass
class Split:
    """One split as parallel arrays; ``images`` is filled by :func:`materialize`."""

    name: str
    source: np.ndarray
    theta: np.ndarray
    digits: np.ndarray
    images: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.source)

    def sample(self, i: int) -> RotatedSample:
        return RotatedSample(self.images[i, 0], float(self.theta[i]), int(self.digits[i]))

    def subset(self, idx) -> "Split":
        idx = np.asarray(idx)
        images = None if self.images is None else self.images[idx]
        return Split(self.name, self.source[idx], self.theta[idx], self.digits[idx], images)

    def upright(self) -> "Split":
        """Same source digits with no rotation."""
        return Split(self.name, self.source, np.zeros_like(self.theta), self.digits)


@dataclass
class SplitSet:
    train: Split
    validation: Split
    test: Split
    seed: int

    def splits(self) -> list[Split]:
        return [self.train, self.validation, self.test]

    def __getitem__(self, name: str) -> Split:
        return {"train": self.train, "validation": self.validation, "val": self.validation,
                "test": self.test}[name]


def draw_splits(seed: int, n_train_pool: int = 60000, n_test_pool: int = 10000,
                digits_train=None, digits_test=None) -> SplitSet:
    """Choose source indices and angles; pure function of the seed."""
    rng = np.random.default_rng(seed)
    half = math.pi / 2
    perm = rng.permutation(n_train_pool)
    n_tr, n_va = SPLIT_SIZES["train"], SPLIT_SIZES["validation"]
    tr_idx, va_idx = perm[:n_tr], perm[n_tr:n_tr + n_va]
    tr_theta = rng.uniform(-half, half, n_tr)
    va_theta = rng.uniform(-half, half, n_va)
    te_idx = np.concatenate([rng.permutation(n_test_pool) for _ in range(TEST_COPIES)])
    te_theta = rng.uniform(-half, half, len(te_idx))

    def lab(labels, idx):
        return np.zeros(len(idx), np.int64) if labels is None else np.asarray(labels)[idx].astype(np.int64)

    return SplitSet(
        Split("train", tr_idx, tr_theta, lab(digits_train, tr_idx)),
        Split("validation", va_idx, va_theta, lab(digits_train, va_idx)),
        Split("test", te_idx, te_theta, lab(digits_test, te_idx)),
        seed,
    )


def materialize(split: Split, mnist: Mnist, chunk: int = 4096) -> Split:
    """Render the split's rotated images (N x 1 x 28 x 28, float32)."""
    pool, _ = mnist.pool(split.name)
    out = np.empty((len(split), 1) + pool.shape[1:], dtype=np.float32)
    for lo in range(0, len(split), chunk):
        hi = min(lo + chunk, len(split))
        src = pool[split.source[lo:hi]][:, None].astype(np.float64)
        theta = split.theta[lo:hi]
        if np.any(theta):
            src = rotate_image(src, theta)
        out[lo:hi] = src
    split.images = out
    return split


def build_rotated_mnist(mnist_root, seed: int, materialize_images: bool = True) -> SplitSet:
    mnist = Mnist.load(mnist_root)
    splits = draw_splits(seed, len(mnist.train_labels), len(mnist.test_labels),
                         mnist.train_labels, mnist.test_labels)
    if materialize_images:
        for s in splits.splits():
            materialize(s, mnist)
    return splits


def write_manifest(splits: SplitSet, path) -> str:
    """Write ``split,source_index,theta_radians,digit`` lines; returns the sha256."""
    lines = []
    for s in splits.splits():
        for idx, theta, digit in zip(s.source, s.theta, s.digits):
            lines.append(f"{s.name},{int(idx)},{float(theta)!r},{int(digit)}\n")
    data = "".join(lines).encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_manifest(path, seed: int = -1) -> SplitSet:
    cols: dict[str, list] = {k: [] for k in SPLIT_SIZES}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.strip().split(",")
            if len(parts) != 4 or parts[0] not in cols:
                raise ValueError(f"{path}:{lineno}: malformed manifest record {line.strip()!r}")
            cols[parts[0]].append((int(parts[1]), float(parts[2]), int(parts[3])))

    def make(name):
        rows = cols[name]
        arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
        return Split(name, arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2].astype(np.int64))

    return SplitSet(make("train"), make("validation"), make("test"), seed)
