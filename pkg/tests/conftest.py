import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from r2n import tensor_core

REAL_MNIST = Path(os.environ.get("R2N_MNIST_ROOT", "/root/data/mnist"))

# lines printed by the acceptance suite at the end of the session
ACCEPTANCE_LINES: list[str] = []


def write_idx(path, array, gz=False):
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x803 if array.ndim == 3 else 0x801
    raw = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    if gz:
        raw = gzip.compress(raw, mtime=0)
    Path(path).write_bytes(raw)


def synthetic_digits(n, seed):
    """28x28 uint8 images: an off-centre bar whose length depends on the label."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    images = np.zeros((n, 28, 28), np.uint8)
    for i, lab in enumerate(labels):
        top = 6 + int(rng.integers(0, 3))
        images[i, top:top + 8 + lab, 12:15] = 255
        images[i, top:top + 3, 15:19] = 180
    return images, labels


@pytest.fixture(scope="session")
def fake_mnist(tmp_path_factory):
    """A directory of synthetic IDX files big enough for the split sizes (12000 train, 20 test)."""
    root = tmp_path_factory.mktemp("mnist")
    tr_x, tr_y = synthetic_digits(12000, 0)
    te_x, te_y = synthetic_digits(20, 1)
    write_idx(root / "train-images-idx3-ubyte.gz", tr_x, gz=True)
    write_idx(root / "train-labels-idx1-ubyte.gz", tr_y, gz=True)
    write_idx(root / "t10k-images-idx3-ubyte", te_x)
    write_idx(root / "t10k-labels-idx1-ubyte", te_y)
    return root


@pytest.fixture
def mnist_root():
    if not (REAL_MNIST / "t10k-labels-idx1-ubyte.gz").exists() and not (REAL_MNIST / "t10k-labels-idx1-ubyte").exists():
        pytest.skip(f"MNIST not found under {REAL_MNIST} (set R2N_MNIST_ROOT)")
    return REAL_MNIST


@pytest.fixture
def float64():
    previous = tensor_core.precision()
    tensor_core.set_precision("float64")
    yield
    tensor_core.set_precision(previous)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
