"""EEG dataset model: containers, repetition averaging, splits, synthetic data.

Datasets are immutable after construction and safe to share across
threads; every operation here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rng
from .containers import read_array_container, read_npy, write_array_container
from .errors import ConfigurationError, DataError, ParameterError

PAPER_CHANNELS = 63
PAPER_TIMEPOINTS = 250

SPLIT_TAGS = ("train", "val", "test")


@dataclass(frozen=True)
class EegDataset:
    """EEG segments with labels.

    ``segments`` is [n, n_reps, channels, timepoints] while the repetition
    axis is present, [n, channels, timepoints] once averaged.
    """

    segments: np.ndarray
    labels: np.ndarray
    class_count: int
    split_tag: str
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        seg = self.segments
        if seg.ndim not in (3, 4):
            raise DataError(f"segments must be 3-D or 4-D, got ndim={seg.ndim}")
        if self.split_tag not in SPLIT_TAGS:
            raise ParameterError(f"split_tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}")
        labels = np.asarray(self.labels)
        if labels.shape != (seg.shape[0],):
            raise DataError(f"labels shape {labels.shape} does not match {seg.shape[0]} samples")
        if seg.shape[0] and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError("labels must lie in [0, class_count)")
        if seg.ndim == 4 and seg.shape[1] < 1:
            raise DataError("n_reps must be >= 1")

    @property
    def n_samples(self) -> int:
        return self.segments.shape[0]

    @property
    def n_reps(self) -> int:
        return self.segments.shape[1] if self.segments.ndim == 4 else 1

    @property
    def n_channels(self) -> int:
        return self.segments.shape[-2]

    @property
    def n_timepoints(self) -> int:
        return self.segments.shape[-1]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    strategy: str = "by-sample"
    stratified: bool = False  # the source protocol does not say; off by default

    def __post_init__(self):
        if not (0.0 < self.train_fraction <= 1.0):
            raise ParameterError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if self.strategy != "by-sample":
            raise ParameterError(f"unknown split strategy {self.strategy!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale synthetic benchmark parameters.

    Each class owns a unit-norm latent vector; EEG segments and image
    features are fixed seeded linear maps of that latent, so EEG/feature
    mutual information exists by construction and InfoNCE training can
    demonstrably succeed or fail as a function of ``noise_sigma``.
    """

    class_count: int
    samples_per_class: int
    latent_dim: int = 64
    noise_sigma: float = 0.1
    seed: int = 0
    n_reps: int = 1
    n_channels: int = PAPER_CHANNELS
    n_timepoints: int = PAPER_TIMEPOINTS
    feature_dim: int = 1024
    streams: tuple[str, ...] = (
        "blur_k1", "blur_k3", "blur_k15", "blur_k21",
        "blur_k33", "blur_k45", "blur_k57", "blur_k63", "evnet",
    )

    def __post_init__(self):
        if self.class_count < 2:
            raise ParameterError("class_count must be >= 2")
        if self.latent_dim < 2:
            raise ParameterError("latent_dim must be >= 2")
        if self.samples_per_class < 1:
            raise ParameterError("samples_per_class must be >= 1")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")


def load_dataset(path) -> EegDataset:
    """Read a dataset container (see containers.py for the format)."""
    arr, meta = read_array_container(path)
    if np.isnan(arr).any():
        raise DataError(f"{path}: payload contains NaN")
    labels = np.asarray(meta.get("labels", []), dtype=np.int64)
    classes = meta.get("classes")
    if "class_count" in meta:
        class_count = int(meta["class_count"])
    elif classes:
        class_count = len(classes)
    else:
        class_count = int(labels.max()) + 1 if labels.size else 0
    return EegDataset(
        segments=arr,
        labels=labels,
        class_count=class_count,
        split_tag=meta.get("split", "train"),
        class_names=tuple(classes) if classes else None,
    )


def write_dataset(path, d: EegDataset, dtype_tag: str | None = None) -> None:
    if dtype_tag is None:
        dtype_tag = "f64le" if d.segments.dtype == np.float64 else "f32le"
    write_array_container(
        path, d.segments, dtype_tag,
        labels=[int(x) for x in d.labels],
        classes=list(d.class_names) if d.class_names else None,
        class_count=int(d.class_count),
        split=d.split_tag,
    )


def import_npy_dataset(npy_path, labels, class_count: int,
                       split_tag: str = "train") -> EegDataset:
    """Build a dataset from an NPY v1.0 tensor plus an external label list."""
    arr = read_npy(npy_path)
    if np.isnan(arr).any():
        raise DataError(f"{npy_path}: payload contains NaN")
    return EegDataset(
        segments=arr,
        labels=np.asarray(labels, dtype=np.int64),
        class_count=class_count,
        split_tag=split_tag,
    )


def average_repetitions(d: EegDataset) -> EegDataset:
    """Mean over the repetition axis; removes that axis."""
    if d.segments.ndim == 3:
        return d
    averaged = d.segments.mean(axis=1, dtype=np.float64).astype(d.segments.dtype)
    return replace(d, segments=averaged)


def split_train_val(d: EegDataset, s: SplitSpec) -> tuple[EegDataset, EegDataset]:
    """Disjoint exhaustive train/val partition, deterministic in the seed."""
    if d.split_tag != "train":
        raise ConfigurationError(f"can only split a train dataset, got {d.split_tag!r}")
    n = d.n_samples
    n_train = int(round(s.train_fraction * n))
    n_train = min(max(n_train, 1), n)
    if n - n_train == 0:
        raise ConfigurationError(
            f"split leaves an empty val set ({n} samples at fraction {s.train_fraction})")
    gen = rng.stream(s.seed, "split", s.strategy)
    if s.stratified:
        train_idx = []
        for c in range(d.class_count):
            members = np.flatnonzero(d.labels == c)
            perm = members[gen.permutation(members.size)]
            take = int(round(s.train_fraction * members.size))
            train_idx.append(perm[:take])
        train_mask = np.zeros(n, dtype=bool)
        train_mask[np.concatenate(train_idx)] = True
        idx_train = np.flatnonzero(train_mask)
        idx_val = np.flatnonzero(~train_mask)
    else:
        perm = gen.permutation(n)
        idx_train = np.sort(perm[:n_train])
        idx_val = np.sort(perm[n_train:])
    if idx_train.size == 0 or idx_val.size == 0:
        raise ConfigurationError("split produced an empty partition")
    mk = lambda idx, tag: EegDataset(
        segments=d.segments[idx], labels=d.labels[idx],
        class_count=d.class_count, split_tag=tag, class_names=d.class_names)
    return mk(idx_train, "train"), mk(idx_val, "val")


def class_latents(seed: int, class_count: int, latent_dim: int,
                  max_cosine: float = 0.9, max_tries: int = 64) -> np.ndarray:
    """Unit-norm class latents with pairwise cosine below ``max_cosine``.

    Offending rows are redrawn; the post-hoc pairwise scan is the
    guarantee, not the draw distribution.
    """
    gen = rng.stream(seed, "class-latents")
    z = gen.standard_normal((class_count, latent_dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    for _ in range(max_tries):
        cos = z @ z.T
        np.fill_diagonal(cos, 0.0)
        bad = np.flatnonzero((np.abs(cos) >= max_cosine).any(axis=1))
        if bad.size == 0:
            return z
        redraw = gen.standard_normal((bad.size, latent_dim))
        z[bad] = redraw / np.linalg.norm(redraw, axis=1, keepdims=True)
    raise DataError(
        f"could not draw {class_count} latents of dim {latent_dim} "
        f"with pairwise cosine < {max_cosine}")


def synthetic_stream_features(spec: SyntheticSpec, latents: np.ndarray) -> np.ndarray:
    """Per-class features for every stream: [class_count, n_streams, feature_dim].

    Each stream applies its own seeded linear map to the class latent and
    adds a small seeded perturbation, so streams are correlated but
    complementary.  Rows are unit-normalized.
    """
    n_classes = latents.shape[0]
    out = np.empty((n_classes, len(spec.streams), spec.feature_dim), dtype=np.float64)
    for si, name in enumerate(spec.streams):
        gen = rng.stream(spec.seed, "stream-map", name)
        basis = gen.standard_normal((spec.feature_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)
        feats = latents @ basis.T
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        noise = rng.stream(spec.seed, "stream-perturb", name).standard_normal(feats.shape)
        noise /= np.linalg.norm(noise, axis=1, keepdims=True)
        feats = feats + 0.05 * noise
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        out[:, si, :] = feats
    return out


def _eeg_basis(spec: SyntheticSpec) -> np.ndarray:
    gen = rng.stream(spec.seed, "eeg-map")
    flat = spec.n_channels * spec.n_timepoints
    return gen.standard_normal((flat, spec.latent_dim))


def _synthetic_eeg(spec: SyntheticSpec, latents: np.ndarray, labels: np.ndarray,
                   noise_stream: str) -> np.ndarray:
    basis = _eeg_basis(spec)
    clean = (latents[labels] @ basis.T).reshape(
        labels.size, 1, spec.n_channels, spec.n_timepoints)
    clean = np.repeat(clean, spec.n_reps, axis=1)
    if spec.noise_sigma > 0:
        gen = rng.stream(spec.seed, noise_stream)
        clean = clean + spec.noise_sigma * gen.standard_normal(clean.shape)
    return clean.astype(np.float32)


def generate_synthetic(spec: SyntheticSpec):
    """Synthetic training world: (EegDataset, FeatureBank, class latents).

    Bit-identical for identical specs.  The feature bank holds one row per
    class; dataset labels index into it directly.
    """
    from .features import FeatureBank  # local import to avoid a cycle

    latents = class_latents(spec.seed, spec.class_count, spec.latent_dim)
    labels = np.repeat(np.arange(spec.class_count, dtype=np.int64), spec.samples_per_class)
    segments = _synthetic_eeg(spec, latents, labels, "train-noise")
    dataset = EegDataset(segments=segments, labels=labels,
                         class_count=spec.class_count, split_tag="train")
    bank = FeatureBank(
        features=synthetic_stream_features(spec, latents),
        stream_names=spec.streams,
        image_ids=tuple(f"img{c:05d}" for c in range(spec.class_count)),
        provider_tag=f"synthetic(seed={spec.seed})",
    )
    return dataset, bank, latents


def synthetic_eval_set(spec: SyntheticSpec, queries_per_class: int = 1) -> EegDataset:
    """Held-out EEG queries (fresh noise draws) for the same synthetic world."""
    latents = class_latents(spec.seed, spec.class_count, spec.latent_dim)
    labels = np.repeat(np.arange(spec.class_count, dtype=np.int64), queries_per_class)
    segments = _synthetic_eeg(spec, latents, labels, "test-noise")
    return EegDataset(segments=segments, labels=labels,
                      class_count=spec.class_count, split_tag="test")
