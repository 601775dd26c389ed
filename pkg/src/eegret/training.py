"""Symmetric InfoNCE training: loss, AdamW, the schedule, selection policies.

A run is a pure function of (data, bank, config, seed): shuffling, init
and dropout all derive from the seed through named streams, so identical
inputs give bit-identical records and checkpoints.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .containers import canonical_json
from .data import EegDataset, average_repetitions
from .encoder import (EncoderConfig, EncoderParams, ForwardMode, eeg_backward,
                      eeg_forward, init_params, visual_backward, visual_forward)
from .errors import ConfigurationError, DataError, ParameterError
from .features import FeatureBank, split_streams

SELECTION_POLICIES = ("final_epoch", "val_selected", "best_test_diagnostic")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1024
    lr: float = 1e-3
    weight_decay: float = 0.01
    seeds: tuple[int, ...] = tuple(range(21, 31))
    logit_scale: float = 1.0
    selection: str = "final_epoch"
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    normalize_in_loss: bool = False  # experimentation flag; the protocol keeps raw logits

    def __post_init__(self):
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2")
        if self.logit_scale <= 0:
            raise ParameterError("logit_scale must be positive")
        if self.selection not in SELECTION_POLICIES:
            raise ParameterError(f"selection must be one of {SELECTION_POLICIES}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    top1: float | None
    top5: float | None
    val_acc: float | None


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    epochs: list[EpochStats] = field(default_factory=list)
    selected_checkpoint: int = -1
    wall_time_s: float = 0.0  # volatile; never written into deterministic artifacts


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def infonce_loss(z: np.ndarray, v: np.ndarray, logit_scale: float = 1.0,
                 normalize: bool = False):
    """Symmetric InfoNCE over in-batch pairs.

    Returns (loss, d loss/d z, d loss/d v).  Logits are raw scaled dot
    products; log-sum-exp uses max subtraction.  Loss is an average of
    cross-entropies, hence always >= 0, and exactly 0 for N == 1.
    """
    z = np.asarray(z, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if z.shape != v.shape or z.ndim != 2 or z.shape[0] < 1:
        raise ParameterError(f"embedding shapes {z.shape} vs {v.shape} unusable")
    if not (np.isfinite(z).all() and np.isfinite(v).all()):
        raise DataError("non-finite embeddings in loss")
    n = z.shape[0]

    if normalize:
        nz = np.linalg.norm(z, axis=1, keepdims=True)
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        if (nz == 0).any() or (nv == 0).any():
            raise DataError("zero-norm row cannot be normalized")
        zu, vu = z / nz, v / nv
    else:
        zu, vu = z, v

    logits = logit_scale * (zu @ vu.T)
    row_max = logits.max(axis=1, keepdims=True)
    row_lse = row_max + np.log(np.exp(logits - row_max).sum(axis=1, keepdims=True))
    col_max = logits.max(axis=0, keepdims=True)
    col_lse = col_max + np.log(np.exp(logits - col_max).sum(axis=0, keepdims=True))
    diag = np.diagonal(logits)
    loss = -(float((diag - row_lse[:, 0]).sum()) + float((diag - col_lse[0, :]).sum())) / (2 * n)

    p_row = np.exp(logits - row_lse)
    p_col = np.exp(logits - col_lse)
    dlogits = (p_row + p_col - 2.0 * np.eye(n)) / (2 * n)
    dzu = logit_scale * (dlogits @ vu)
    dvu = logit_scale * (dlogits.T @ zu)

    if normalize:
        dz = (dzu - zu * (dzu * zu).sum(axis=1, keepdims=True)) / nz
        dv = (dvu - vu * (dvu * vu).sum(axis=1, keepdims=True)) / nv
    else:
        dz, dv = dzu, dvu
    return loss, dz, dv


class AdamW:
    """Decoupled-weight-decay Adam over a flat parameter vector.

    State spans the whole vector; non-trainable coordinates receive zero
    gradient so their moments stay zero, and the decay factor is 1 there,
    making the step an exact no-op on them (and on everything when both
    gradient and weight decay vanish).  All updates run in place through
    preallocated buffers; one step is a handful of full-vector passes.
    """

    def __init__(self, trainable_mask: np.ndarray, lr: float, weight_decay: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        n = trainable_mask.size
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n, dtype=np.float64)
        self.v = np.zeros(n, dtype=np.float64)
        self.decay = np.where(trainable_mask, 1.0 - lr * weight_decay, 1.0)
        self._buf = np.empty(n, dtype=np.float64)
        self._buf2 = np.empty(n, dtype=np.float64)

    def step(self, vec: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        buf, buf2 = self._buf, self._buf2
        self.m *= self.b1
        np.multiply(grad, 1.0 - self.b1, out=buf)
        self.m += buf
        self.v *= self.b2
        np.multiply(grad, grad, out=buf)
        buf *= 1.0 - self.b2
        self.v += buf
        np.divide(self.v, 1.0 - self.b2 ** self.t, out=buf)
        np.sqrt(buf, out=buf)
        buf += self.eps
        np.divide(self.m, 1.0 - self.b1 ** self.t, out=buf2)
        buf2 /= buf
        vec *= self.decay
        buf2 *= self.lr
        vec -= buf2


def _batches(order: np.ndarray, batch_size: int):
    """Contiguous chunks; a trailing singleton is merged into the previous
    batch so train-mode batch statistics always see >= 2 samples."""
    chunks = [order[i:i + batch_size] for i in range(0, order.size, batch_size)]
    if len(chunks) > 1 and chunks[-1].size == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _aligned_features(data: EegDataset, bank: FeatureBank):
    if data.n_samples and int(data.labels.max()) >= bank.n_images:
        raise ConfigurationError(
            f"dataset labels reach {int(data.labels.max())} but bank has "
            f"{bank.n_images} image rows")
    return split_streams(bank)


def embed_dataset(params: EncoderParams, data: EegDataset) -> np.ndarray:
    """Eval-mode EEG embeddings for a (rep-averaged) dataset."""
    d = average_repetitions(data)
    z, _ = eeg_forward(params, d.segments, ForwardMode(train=False))
    return z


def embed_bank(params: EncoderParams, bank: FeatureBank) -> np.ndarray:
    """Eval-mode visual embeddings for every bank row."""
    blur, evnet = split_streams(bank)
    v, _ = visual_forward(params, blur, evnet, ForwardMode(train=False))
    return v


@dataclass
class TrainResult:
    record: RunRecord
    params: EncoderParams
    snapshots: dict[str, EncoderParams]


def default_encoder_config(data: EegDataset, bank: FeatureBank, **overrides) -> EncoderConfig:
    blur, evnet = split_streams(bank)
    base = dict(n_channels=data.n_channels, n_timepoints=data.n_timepoints,
                embed_dim=bank.feature_dim, n_blur=blur.shape[1])
    base.update(overrides)
    return EncoderConfig(**base)


def train_one(data: EegDataset, bank: FeatureBank, cfg: TrainConfig, seed: int,
              test_data: EegDataset | None = None,
              test_bank: FeatureBank | None = None,
              val_data: EegDataset | None = None,
              encoder_cfg: EncoderConfig | None = None,
              progress=None) -> TrainResult:
    """One seeded training run; returns the policy-selected parameters.

    ``test_bank`` defaults to ``bank`` (shared candidate features);
    validation accuracy ranks each val query against the val samples' own
    feature rows, mirroring the test protocol at val scale.
    """
    from .retrieval import cosine_matrix, top_k_accuracy

    t_start = time.monotonic()
    data = average_repetitions(data)
    blur, evnet = _aligned_features(data, bank)
    if encoder_cfg is None:
        encoder_cfg = default_encoder_config(data, bank)

    params = init_params(encoder_cfg, rng.stream(seed, "init"))
    opt = AdamW(params.trainable_mask(), cfg.lr, cfg.weight_decay, cfg.betas, cfg.adam_eps)
    grad = np.zeros(params.total, dtype=np.float64)

    cand_bank = test_bank if test_bank is not None else bank
    val = average_repetitions(val_data) if val_data is not None else None
    if val is not None:
        _aligned_features(val, bank)

    from dataclasses import asdict
    record = RunRecord(seed=seed, config_hash=config_hash(
        {"train": asdict(cfg), "encoder": asdict(encoder_cfg)}))
    best_val, best_test = -np.inf, -np.inf
    snapshots: dict[str, EncoderParams] = {}
    labels = data.labels
    segments = data.segments

    for epoch in range(cfg.epochs):
        order = rng.stream(seed, "shuffle", epoch).permutation(data.n_samples)
        total_loss, total_n = 0.0, 0
        for step, idx in enumerate(_batches(order, cfg.batch_size)):
            xb = segments[idx]
            lb = labels[idx]
            mode = ForwardMode(train=True,
                               dropout_seed=rng.derive_seed(seed, "dropout", epoch, step))
            z, ec = eeg_forward(params, xb, mode, want_cache=True)
            vv, vc = visual_forward(params, blur[lb],
                                    evnet[lb] if evnet is not None else None,
                                    mode, want_cache=True)
            loss, dz, dv = infonce_loss(z, vv, cfg.logit_scale, cfg.normalize_in_loss)
            grad[:] = 0.0
            eeg_backward(params, ec, dz, grad)
            visual_backward(params, vc, dv, grad)
            opt.step(params.vec, grad)
            total_loss += loss * idx.size
            total_n += idx.size

        top1 = top5 = val_acc = None
        if test_data is not None:
            qz = embed_dataset(params, test_data)
            cv = embed_bank(params, cand_bank)
            sim = cosine_matrix(qz, cv, test_data.labels,
                                np.arange(cand_bank.n_images, dtype=np.int64))
            top1 = top_k_accuracy(sim, 1)
            top5 = top_k_accuracy(sim, min(5, cand_bank.n_images))
        if val is not None:
            qz = embed_dataset(params, val)
            vrows = FeatureBank(features=bank.features[val.labels],
                                stream_names=bank.stream_names,
                                image_ids=tuple(str(i) for i in range(val.n_samples)),
                                provider_tag=bank.provider_tag)
            cv = embed_bank(params, vrows)
            sim = cosine_matrix(qz, cv, val.labels, val.labels)
            val_acc = top_k_accuracy(sim, 1)

        record.epochs.append(EpochStats(epoch=epoch, train_loss=total_loss / max(total_n, 1),
                                        top1=top1, top5=top5, val_acc=val_acc))
        if val_acc is not None and val_acc > best_val:
            best_val = val_acc
            snapshots["val_selected"] = params.copy()
        if top1 is not None and top1 > best_test:
            best_test = top1
            snapshots["best_test_diagnostic"] = params.copy()

    snapshots["final_epoch"] = params.copy()
    record.selected_checkpoint = select_checkpoint(record, cfg.selection)
    record.wall_time_s = time.monotonic() - t_start
    if cfg.selection not in snapshots:
        raise ConfigurationError(f"selection {cfg.selection!r} needs metrics that were not recorded")
    return TrainResult(record=record, params=snapshots[cfg.selection], snapshots=snapshots)


def select_checkpoint(record: RunRecord, policy: str) -> int:
    """Epoch index selected by the reporting policy (earliest on ties)."""
    if not record.epochs:
        raise ParameterError("cannot select from an empty record")
    if policy == "final_epoch":
        return record.epochs[-1].epoch
    if policy == "val_selected":
        vals = [e.val_acc for e in record.epochs]
        if any(v is None for v in vals):
            raise ConfigurationError("val_selected needs val_acc for every epoch")
        return record.epochs[int(np.argmax(vals))].epoch
    if policy == "best_test_diagnostic":
        tops = [e.top1 for e in record.epochs]
        if any(t is None for t in tops):
            raise ConfigurationError("best_test_diagnostic needs test top1 for every epoch")
        return record.epochs[int(np.argmax(tops))].epoch
    raise ParameterError(f"unknown selection policy {policy!r}")


def record_to_csv(record: RunRecord) -> str:
    """Deterministic CSV text for a run record (volatile fields excluded)."""
    lines = ["epoch,train_loss,top1,top5,val_acc"]
    fmt = lambda x: "" if x is None else repr(float(x))
    for e in record.epochs:
        lines.append(f"{e.epoch},{fmt(e.train_loss)},{fmt(e.top1)},{fmt(e.top5)},{fmt(e.val_acc)}")
    return "\n".join(lines) + "\n"


def record_from_csv(text: str, seed: int = -1, cfg_hash: str = "") -> RunRecord:
    rec = RunRecord(seed=seed, config_hash=cfg_hash)
    rows = text.strip().splitlines()
    if not rows or rows[0] != "epoch,train_loss,top1,top5,val_acc":
        raise ParameterError("not a run-record CSV")
    for row in rows[1:]:
        cells = row.split(",")
        parse = lambda s: None if s == "" else float(s)
        rec.epochs.append(EpochStats(epoch=int(cells[0]), train_loss=float(cells[1]),
                                     top1=parse(cells[2]), top5=parse(cells[3]),
                                     val_acc=parse(cells[4])))
    if rec.epochs:
        rec.selected_checkpoint = rec.epochs[-1].epoch
    return rec
