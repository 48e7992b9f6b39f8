"""IDX (MNIST) reader/writer and the dataset handle."""

from dataclasses import dataclass
import os
import struct

import numpy as np

from ..errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DEFAULT_DATA_DIR = "/root/data/mnist"

SPLIT_FILES = {
    "train": ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
    "test": ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
}


@dataclass
class DatasetHandle:
    images: np.ndarray   # [N, 1, 28, 28] float64 in [0, 1]
    labels: np.ndarray   # [N] int64 in 0..9
    split: str = ""

    def __len__(self):
        return len(self.labels)

    def subset(self, n, offset=0):
        return DatasetHandle(self.images[offset:offset + n], self.labels[offset:offset + n], self.split)


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def _header(buf, magic, ndims, what):
    need = 4 + 4 * ndims
    if len(buf) < 4:
        raise FormatError(f"{what}: file too short for a magic number", 0)
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise FormatError(f"{what}: bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    if len(buf) < need:
        raise FormatError(f"{what}: truncated header", len(buf))
    return struct.unpack(">" + "I" * ndims, buf[4:need]), need


def parse_idx_images(buf):
    (n, rows, cols), off = _header(buf, IMAGE_MAGIC, 3, "images")
    size = n * rows * cols
    if len(buf) - off != size:
        raise FormatError(f"images: header says {n}x{rows}x{cols} = {size} bytes, payload has {len(buf) - off}",
                          off + min(size, len(buf) - off))
    px = np.frombuffer(buf, dtype=np.uint8, count=size, offset=off)
    return px.reshape(n, 1, rows, cols).astype(np.float64) / 255.0


def parse_idx_labels(buf):
    (n,), off = _header(buf, LABEL_MAGIC, 1, "labels")
    if len(buf) - off != n:
        raise FormatError(f"labels: header says {n} labels, payload has {len(buf) - off}",
                          off + min(n, len(buf) - off))
    lab = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).astype(np.int64)
    bad = np.nonzero(lab > 9)[0]
    if bad.size:
        raise FormatError(f"labels: value {lab[bad[0]]} outside 0..9", off + int(bad[0]))
    return lab


def load_mnist(image_path, label_path, split=""):
    images = parse_idx_images(_read(image_path))
    labels = parse_idx_labels(_read(label_path))
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels", 4)
    return DatasetHandle(images, labels, split)


def data_dir(override=None):
    return override or os.environ.get("OSNN_MNIST_DIR", DEFAULT_DATA_DIR)


def load_split(split, directory=None):
    img, lab = SPLIT_FILES[split]
    d = data_dir(directory)
    return load_mnist(os.path.join(d, img), os.path.join(d, lab), split)


def write_idx_images(path, images):
    """images: uint8 array [N, rows, cols]."""
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, r, c))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())
