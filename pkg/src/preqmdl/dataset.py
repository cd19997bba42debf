"""Labelled sequences: in-memory container, binary container format, sources.

The on-disk container ("PQDS") is a fixed little-endian layout:

    bytes 0..3    magic b"PQDS"
    u32           version (currently 1)
    u64           number of examples n
    u32           feature dimension
    u32           number of classes
    then n records of (dim float32 features, u32 label)

Features are stored as float32; all model arithmetic upstream converts to
float64.  Labels are validated against the declared class count both when
writing and when reading.
"""

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"PQDS"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(Exception):
    """A file does not conform to the container layout it claims."""


class StreamExhausted(Exception):
    """read_next was called after the last example of a stream."""


@dataclass(frozen=True)
class Example:
    """A single (features, label) pair; features are a 1-D float32 array."""

    features: np.ndarray
    label: int


class SequenceDataset:
    """An ordered, immutable sequence of labelled examples.

    ``order_seed`` records the seed of the shuffle that produced this
    ordering, or None for source order.
    """

    def __init__(self, features, labels, num_classes, order_seed=None):
        features = np.array(features, dtype=np.float32, order="C")
        labels = np.array(labels, dtype=np.int64, order="C")
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be 1-D and match features length")
        if num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        # The prequential contract forbids rewriting history; runs read these
        # arrays directly, so they are frozen here.
        features.flags.writeable = False
        labels.flags.writeable = False
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)
        self.order_seed = order_seed

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def __getitem__(self, index):
        return Example(self.features[index], int(self.labels[index]))


def _record_dtype(dim):
    return np.dtype([("features", "<f4", (dim,)), ("label", "<u4")])


def write_sequence(dataset, path):
    """Serialize a dataset to ``path`` in the container format.

    The file is written to a temporary sibling and renamed into place, so a
    crash never leaves a truncated file behind.
    """
    n = len(dataset)
    records = np.empty(n, dtype=_record_dtype(dataset.dim))
    records["features"] = dataset.features
    records["label"] = dataset.labels.astype(np.uint32)
    header = _HEADER.pack(MAGIC, VERSION, n, dataset.dim, dataset.num_classes)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pqds-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            records.tofile(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_sequence(path):
    """Load a whole container file into a SequenceDataset."""
    with open_stream(path) as reader:
        features = np.empty((reader.count, reader.dim), dtype=np.float32)
        labels = np.empty(reader.count, dtype=np.int64)
        for i in range(reader.count):
            ex = reader.read_next()
            features[i] = ex.features
            labels[i] = ex.label
    return SequenceDataset(features, labels, reader.num_classes)


class SequentialReader:
    """Strictly forward reader over a container file.

    ``position`` is 1-based: it names the next example to be read and runs
    from 1 to count+1 (exhausted).  There is no random access; ``reset``
    rewinds to the first example.
    """

    def __init__(self, path):
        self._fh = open(path, "rb")
        try:
            raw = self._fh.read(_HEADER.size)
            if len(raw) != _HEADER.size:
                raise FormatError(f"{path}: truncated header")
            magic, version, count, dim, num_classes = _HEADER.unpack(raw)
            if magic != MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}")
            if version != VERSION:
                raise FormatError(f"{path}: unsupported version {version}")
            if dim < 1 or num_classes < 2:
                raise FormatError(f"{path}: invalid header fields")
            expected = _HEADER.size + count * (4 * dim + 4)
            actual = os.fstat(self._fh.fileno()).st_size
            if actual != expected:
                raise FormatError(
                    f"{path}: size {actual} != expected {expected}"
                )
        except BaseException:
            self._fh.close()
            raise
        self.path = path
        self.count = count
        self.dim = dim
        self.num_classes = num_classes
        self._record = _record_dtype(dim)
        self.position = 1

    def read_next(self):
        if self.position > self.count:
            raise StreamExhausted(
                f"{self.path}: no example at position {self.position}"
            )
        rec = np.fromfile(self._fh, dtype=self._record, count=1)[0]
        label = int(rec["label"])
        if label >= self.num_classes:
            raise FormatError(
                f"{self.path}: label {label} out of range at position "
                f"{self.position}"
            )
        self.position += 1
        return Example(rec["features"].copy(), label)

    def reset(self):
        self._fh.seek(_HEADER.size)
        self.position = 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def open_stream(path):
    return SequentialReader(path)


def generate_channel_task(n, channels, classes, dim_per_channel, noise_std,
                          seed, condition_on=None):
    """Synthetic task whose label is carried by channel 0 only.

    Every channel holds ``classes`` Gaussian cluster means drawn as
    2 * N(0, I).  Channel 0's cluster is the label; each other channel's
    cluster is drawn independently of the label, so those channels carry
    structure but no label information.  ``condition_on`` selects the
    channels a model is allowed to see; the rest are zeroed.  The draw order
    is fixed (means per channel, then labels, then distractor assignments,
    then noise) and independent of ``condition_on``, so datasets generated
    from the same seed differ only in the mask.
    """
    ds, _ = generate_channel_task_with_clusters(
        n, channels, classes, dim_per_channel, noise_std, seed, condition_on
    )
    return ds


def generate_channel_task_with_clusters(n, channels, classes, dim_per_channel,
                                        noise_std, seed, condition_on=None):
    """Like generate_channel_task, also returning the (n, channels) matrix of
    cluster assignments (column 0 equals the labels)."""
    if n < 1 or channels < 1 or dim_per_channel < 1:
        raise ValueError("n, channels and dim_per_channel must be positive")
    if classes < 2:
        raise ValueError("classes must be at least 2")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if condition_on is None:
        condition_on = range(channels)
    condition_on = sorted(set(int(c) for c in condition_on))
    if not condition_on:
        raise ValueError("condition_on must not be empty")
    if condition_on[0] < 0 or condition_on[-1] >= channels:
        raise ValueError("condition_on must be a subset of the channels")

    rng = np.random.Generator(np.random.PCG64(seed))
    d = dim_per_channel
    means = [2.0 * rng.standard_normal((classes, d)) for _ in range(channels)]
    labels = rng.integers(0, classes, size=n)
    assign = np.empty((n, channels), dtype=np.int64)
    assign[:, 0] = labels
    for ch in range(1, channels):
        assign[:, ch] = rng.integers(0, classes, size=n)
    noise = noise_std * rng.standard_normal((n, channels * d))

    features = np.zeros((n, channels * d), dtype=np.float64)
    keep = set(condition_on)
    for ch in range(channels):
        if ch in keep:
            block = means[ch][assign[:, ch]] + noise[:, ch * d:(ch + 1) * d]
            features[:, ch * d:(ch + 1) * d] = block
    ds = SequenceDataset(features, labels, classes)
    return ds, assign


def shuffle_sequence(dataset, seed):
    """Return a reordered copy of ``dataset`` with ``order_seed`` recorded.

    The permutation is a Fisher-Yates pass over indices i = n-1 .. 1, each
    time swapping with j drawn by ``rng.integers(0, i + 1)`` on a PCG64
    generator seeded with ``seed``.  Spelling the algorithm out pins the
    permutation across numpy versions.
    """
    n = len(dataset)
    idx = np.arange(n)
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return SequenceDataset(
        dataset.features[idx],
        dataset.labels[idx],
        dataset.num_classes,
        order_seed=seed,
    )


def import_idx(images_path, labels_path):
    """Convert a big-endian IDX image/label pair into a SequenceDataset.

    Pixels are scaled to [0, 1]; the class count is taken as max label + 1.
    """
    with open(images_path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16:
            raise FormatError(f"{images_path}: truncated header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(f"{images_path}: bad magic 0x{magic:08x}")
        pixels = np.fromfile(fh, dtype=np.uint8)
    if pixels.size != count * rows * cols:
        raise FormatError(f"{images_path}: pixel payload size mismatch")

    with open(labels_path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise FormatError(f"{labels_path}: truncated header")
        magic, label_count = struct.unpack(">II", head)
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(f"{labels_path}: bad magic 0x{magic:08x}")
        labels = np.fromfile(fh, dtype=np.uint8)
    if labels.size != label_count:
        raise FormatError(f"{labels_path}: label payload size mismatch")
    if count != label_count:
        raise FormatError(
            f"image count {count} != label count {label_count}"
        )

    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    num_classes = int(labels.max()) + 1 if labels.size else 2
    return SequenceDataset(features, labels.astype(np.int64),
                           max(num_classes, 2))
