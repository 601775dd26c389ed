"""Feature banks and providers.

The frozen visual backbones of the original pipeline are, from this
package's perspective, pure dictionaries from image id to feature vector.
Two providers implement that contract: ``precomputed`` reads a bank
container produced by any external tool, ``synthetic`` derives vectors
deterministically from (seed, image id, stream name).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .containers import read_array_container, write_array_container
from .errors import ConfigurationError, DataError, MissingIdError, ParameterError

EVNET_STREAM = "evnet"


@dataclass(frozen=True)
class FeatureBank:
    """Per-image, per-stream feature vectors with provenance."""

    features: np.ndarray          # [n_images, n_streams, feature_dim]
    stream_names: tuple[str, ...]
    image_ids: tuple[str, ...]
    provider_tag: str = ""

    def __post_init__(self):
        f = self.features
        if f.ndim != 3:
            raise DataError(f"features must be [images, streams, dim], got ndim={f.ndim}")
        if f.shape[1] != len(self.stream_names):
            raise DataError(f"{f.shape[1]} feature streams vs {len(self.stream_names)} names")
        if f.shape[0] != len(self.image_ids):
            raise DataError(f"{f.shape[0]} feature rows vs {len(self.image_ids)} image ids")
        if len(set(self.stream_names)) != len(self.stream_names):
            raise DataError("stream names must be unique")
        if f.size:
            if not np.isfinite(f).all():
                raise DataError("feature bank contains NaN/Inf")
            norms = np.linalg.norm(f, axis=2)
            if (norms == 0).any():
                raise DataError("feature bank contains an all-zero vector")

    @property
    def n_images(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    def stream_index(self, name: str) -> int:
        try:
            return self.stream_names.index(name)
        except ValueError:
            raise ConfigurationError(
                f"stream {name!r} not in bank (has {list(self.stream_names)})")

    def select(self, stream_names, image_ids=None) -> "FeatureBank":
        """Sub-bank with the given streams (and optionally rows), in query order."""
        cols = [self.stream_index(s) for s in stream_names]
        feats = self.features[:, cols, :]
        ids = self.image_ids
        if image_ids is not None:
            index = {iid: i for i, iid in enumerate(self.image_ids)}
            try:
                rows = [index[i] for i in image_ids]
            except KeyError as exc:
                raise MissingIdError(f"image id {exc.args[0]!r} not in bank")
            feats = feats[rows]
            ids = tuple(image_ids)
        return FeatureBank(features=feats, stream_names=tuple(stream_names),
                           image_ids=ids, provider_tag=self.provider_tag)


@dataclass(frozen=True)
class ProviderSpec:
    kind: str                       # "precomputed" | "synthetic"
    source: str | int               # container path, or integer seed
    streams: tuple[str, ...]
    feature_dim: int = 1024
    latent_dim: int = 64            # synthetic only
    class_count: int = 0            # synthetic only

    def __post_init__(self):
        if self.kind not in ("precomputed", "synthetic"):
            raise ParameterError(f"unknown provider kind {self.kind!r}")
        if not self.streams:
            raise ConfigurationError("provider needs at least one stream")
        if self.kind == "synthetic" and self.class_count < 2:
            raise ConfigurationError("synthetic provider needs class_count >= 2")


def _id_to_class(image_id) -> int:
    if isinstance(image_id, (int, np.integer)):
        return int(image_id)
    digits = "".join(ch for ch in str(image_id) if ch.isdigit())
    if not digits:
        raise MissingIdError(f"cannot derive a class index from id {image_id!r}")
    return int(digits)


def provide_features(spec: ProviderSpec, images_or_ids) -> FeatureBank:
    """Feature rows for the requested ids, aligned to the query order."""
    ids = list(images_or_ids)
    if spec.kind == "precomputed":
        bank = load_bank(spec.source)
        return bank.select(spec.streams, [str(i) for i in ids])

    from .data import SyntheticSpec, class_latents, synthetic_stream_features

    classes = [_id_to_class(i) for i in ids]
    for c in classes:
        if not (0 <= c < spec.class_count):
            raise MissingIdError(f"class index {c} outside [0, {spec.class_count})")
    synth = SyntheticSpec(class_count=spec.class_count, samples_per_class=1,
                          latent_dim=spec.latent_dim, seed=int(spec.source),
                          feature_dim=spec.feature_dim, streams=tuple(spec.streams))
    latents = class_latents(synth.seed, synth.class_count, synth.latent_dim)
    table = synthetic_stream_features(synth, latents)
    return FeatureBank(
        features=table[classes],
        stream_names=tuple(spec.streams),
        image_ids=tuple(str(i) for i in ids),
        provider_tag=f"synthetic(seed={spec.source})",
    )


def cache_features(bank: FeatureBank, path, dtype_tag: str = "f64le") -> None:
    """Persist a bank; the write is atomic (temp file then rename)."""
    if not bank.stream_names:
        raise ConfigurationError("refusing to cache a bank with no streams")
    write_array_container(
        path, bank.features, dtype_tag,
        streams=list(bank.stream_names),
        image_ids=list(bank.image_ids),
        provider=bank.provider_tag,
    )


def load_bank(path) -> FeatureBank:
    arr, meta = read_array_container(path)
    if "streams" not in meta:
        raise ConfigurationError(f"{path}: container has no 'streams' header; not a feature bank")
    return FeatureBank(
        features=arr,
        stream_names=tuple(meta["streams"]),
        image_ids=tuple(meta.get("image_ids", [str(i) for i in range(arr.shape[0])])),
        provider_tag=meta.get("provider", ""),
    )


def split_streams(bank: FeatureBank):
    """Partition bank arrays for the encoder: (attention streams, second stream).

    All non-``evnet`` streams feed the blur-attention aggregation, in bank
    order.  If ``evnet`` is the only stream it is promoted to a single
    attention stream (the gate needs two sides to exist).
    """
    names = bank.stream_names
    feats = np.asarray(bank.features, dtype=np.float64)
    if EVNET_STREAM in names and len(names) > 1:
        ev = bank.stream_index(EVNET_STREAM)
        attn_cols = [i for i in range(len(names)) if i != ev]
        return feats[:, attn_cols, :], feats[:, ev, :]
    return feats, None
