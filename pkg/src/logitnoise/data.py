"""Datasets and label-noise injection.

Synthetic generators (two moons, concentric circles, Gaussian blobs) are pure
functions of their parameters and a seed.  ``load_mnist_idx`` reads the
big-endian IDX image/label files.  ``inject_noise`` corrupts labels after
generation and records exactly which examples changed, so experiments can
score corrupted and clean training examples separately; validation splits
keep the noisy labels (model selection never sees clean labels).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

NOISE_KINDS = ("none", "symmetric", "asymmetric")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; the message carries the byte offset."""


@dataclass(frozen=True)
class NoisyDataset:
    """Inputs plus clean and (possibly) corrupted labels.

    corrupted[i] is True exactly where noisy_labels[i] != clean_labels[i].
    """

    inputs: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    corrupted: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        x = np.array(self.inputs, dtype=np.float64)
        clean = np.array(self.clean_labels, dtype=np.int64)
        noisy = np.array(self.noisy_labels, dtype=np.int64)
        flags = np.array(self.corrupted, dtype=bool)
        n = x.shape[0]
        if x.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {x.shape}")
        if clean.shape != (n,) or noisy.shape != (n,) or flags.shape != (n,):
            raise ValueError("labels/flags must be 1-D and match the number of inputs")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        for name, lab in (("clean", clean), ("noisy", noisy)):
            if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
                raise ValueError(f"{name} labels outside [0, {self.num_classes})")
        if not np.array_equal(flags, clean != noisy):
            raise ValueError("corrupted flags must equal (clean_labels != noisy_labels)")
        for arr, field in ((x, "inputs"), (clean, "clean_labels"), (noisy, "noisy_labels"), (flags, "corrupted")):
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def take(self, index: np.ndarray) -> "NoisyDataset":
        """Subset by index array, preserving all label views."""
        return NoisyDataset(
            self.inputs[index],
            self.clean_labels[index],
            self.noisy_labels[index],
            self.corrupted[index],
            self.num_classes,
        )


def _clean(inputs: np.ndarray, labels: np.ndarray, num_classes: int) -> NoisyDataset:
    labels = np.asarray(labels, dtype=np.int64)
    return NoisyDataset(inputs, labels, labels.copy(), np.zeros(labels.size, dtype=bool), num_classes)


def two_moons(n: int, noise_std: float = 0.0, seed: int = 0) -> NoisyDataset:
    """Interlocking half circles; ceil(n/2) points in class 0.

    Class 0 traces (cos t, sin t) and class 1 traces (1 - cos t, 0.5 - sin t)
    for t evenly spaced on [0, pi]; with noise_std = 0 the points sit exactly
    on the two unit circles (centers (0, 0) and (1, 0.5)).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    pts = np.concatenate(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
        ]
    )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts = pts + noise_std * rng.standard_normal(pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return _clean(pts, labels, 2)


def circles(n: int, radius_ratio: float = 0.5, noise_std: float = 0.0, seed: int = 0) -> NoisyDataset:
    """Two concentric circles: class 0 at radius 1, class 1 at radius_ratio."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 < radius_ratio < 1.0:
        raise ValueError(f"radius_ratio must lie in (0, 1), got {radius_ratio!r}")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, 2.0 * np.pi, n0, endpoint=False)
    t1 = np.linspace(0.0, 2.0 * np.pi, n1, endpoint=False)
    pts = np.concatenate(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            radius_ratio * np.column_stack([np.cos(t1), np.sin(t1)]),
        ]
    )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts = pts + noise_std * rng.standard_normal(pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return _clean(pts, labels, 2)


def gaussian_blobs(n: int, num_classes: int, cluster_std: float = 1.0, radius: float = 10.0,
                   seed: int = 0) -> NoisyDataset:
    """Isotropic 2-D Gaussian clusters, centers evenly spaced on a circle.

    Class counts are balanced (the first n mod K classes get one extra
    point).
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if n < num_classes:
        raise ValueError(f"need at least one point per class, got n={n} for {num_classes} classes")
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    counts = np.full(num_classes, n // num_classes)
    counts[: n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), counts)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts = centers[labels] + cluster_std * rng.standard_normal((n, 2))
    return _clean(pts, labels, num_classes)


def _read_be_uint32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError(f"{path}: truncated header at byte offset {offset}")
    return int.from_bytes(buf[offset : offset + 4], "big")


def load_mnist_idx(images_path, labels_path, max_n: int | None = None) -> NoisyDataset:
    """Read IDX image/label files into a flat float64 dataset.

    Pixels are scaled to [0, 1]; images come out flattened to (n, rows*cols).
    Raises :class:`IdxFormatError` with the offending byte offset on a bad
    magic number, truncated payload, or image/label count mismatch.
    """
    with open(images_path, "rb") as fh:
        raw = fh.read()
    magic = _read_be_uint32(raw, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic 0x{magic:08x} at byte offset 0 (expected 0x{IDX_IMAGES_MAGIC:08x})"
        )
    n = _read_be_uint32(raw, 4, images_path)
    rows = _read_be_uint32(raw, 8, images_path)
    cols = _read_be_uint32(raw, 12, images_path)
    need = 16 + n * rows * cols
    if len(raw) < need:
        raise IdxFormatError(f"{images_path}: truncated image payload at byte offset {len(raw)} (need {need})")
    images = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    images = images.reshape(n, rows * cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        raw = fh.read()
    magic = _read_be_uint32(raw, 0, labels_path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic 0x{magic:08x} at byte offset 0 (expected 0x{IDX_LABELS_MAGIC:08x})"
        )
    n_lab = _read_be_uint32(raw, 4, labels_path)
    if len(raw) < 8 + n_lab:
        raise IdxFormatError(f"{labels_path}: truncated label payload at byte offset {len(raw)} (need {8 + n_lab})")
    labels = np.frombuffer(raw, dtype=np.uint8, count=n_lab, offset=8).astype(np.int64)
    if n_lab != n:
        raise IdxFormatError(f"{labels_path}: {n_lab} labels for {n} images")
    if max_n is not None:
        images = images[:max_n]
        labels = labels[:max_n]
    return _clean(images, labels, 10)


@dataclass(frozen=True)
class NoiseSpec:
    """Label-corruption recipe.

    kind "symmetric": with probability ``rate`` the label is resampled
    uniformly over all K classes (so the effective flip rate is
    rate * (K-1)/K); set ``exclude_own_class`` to resample over the other
    K-1 classes instead.  kind "asymmetric": with probability ``rate`` the
    label is sent through ``mapping`` (classes absent from the mapping stay
    put).  kind "none": labels untouched.
    """

    kind: str = "none"
    rate: float = 0.0
    mapping: dict | None = None
    seed: int = 0
    exclude_own_class: bool = False

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"noise rate must lie in [0, 1], got {self.rate!r}")
        if self.kind == "asymmetric" and not self.mapping:
            raise ValueError("asymmetric noise needs a class mapping")


def mnist_asymmetric_mapping() -> dict[int, int]:
    """Visually-confusable digit flips: 7->1, 2->7, 5<->6, 3->8."""
    return {7: 1, 2: 7, 5: 6, 6: 5, 3: 8}


def cyclic_mapping(num_classes: int) -> dict[int, int]:
    """i -> (i + 1) mod K."""
    return {i: (i + 1) % num_classes for i in range(num_classes)}


def inject_noise(ds: NoisyDataset, spec: NoiseSpec) -> NoisyDataset:
    """Corrupt labels per ``spec``; the clean labels and inputs are untouched.

    Corruption starts from the clean labels (re-injecting replaces, not
    stacks).  The corrupted flags are recomputed as noisy != clean, so a
    symmetric resample that lands on the original class counts as clean.
    """
    clean = ds.clean_labels
    noisy = clean.copy()
    if spec.kind != "none" and spec.rate > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        hit = rng.random(ds.n) < spec.rate
        k = ds.num_classes
        if spec.kind == "symmetric":
            if spec.exclude_own_class:
                draw = rng.integers(0, k - 1, size=int(hit.sum()))
                draw = draw + (draw >= clean[hit])
            else:
                draw = rng.integers(0, k, size=int(hit.sum()))
            noisy[hit] = draw
        else:
            mapping = dict(spec.mapping)
            for src, dst in mapping.items():
                if not (0 <= int(src) < k and 0 <= int(dst) < k):
                    raise ValueError(f"mapping entry {src}->{dst} outside [0, {k})")
            lut = np.arange(k, dtype=np.int64)
            for src, dst in mapping.items():
                lut[int(src)] = int(dst)
            noisy[hit] = lut[clean[hit]]
    return NoisyDataset(ds.inputs, clean, noisy, noisy != clean, ds.num_classes)


def split_dataset(ds: NoisyDataset, fraction: float, seed: int) -> tuple[NoisyDataset, NoisyDataset]:
    """Disjoint shuffled (train, validation) split; validation gets ceil(fraction*n)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction!r}")
    n_val = int(np.ceil(fraction * ds.n))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(ds.n)
    return ds.take(perm[n_val:]), ds.take(perm[:n_val])


def export_csv(ds: NoisyDataset, path) -> None:
    """Write index, input columns, both label views, and the corruption flag."""
    dim = ds.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"x{j}" for j in range(dim)] + ["clean_label", "noisy_label", "corrupted"])
        for i in range(ds.n):
            writer.writerow(
                [i]
                + [repr(float(v)) for v in ds.inputs[i]]
                + [int(ds.clean_labels[i]), int(ds.noisy_labels[i]), int(ds.corrupted[i])]
            )
