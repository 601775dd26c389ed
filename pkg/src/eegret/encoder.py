"""The trainable network: EEG encoder and visual fusion head.

Parameters live in one flat float64 vector addressed through a fixed
layout table, which is what makes dense finite-difference gradient checks
and bit-exact checkpointing straightforward.  Forward passes cache the
intermediates the analytic backward pass needs; there is no general
autodiff here, every gradient is written out by hand.

Architecture (all dimensions configurable, defaults follow the reference
protocol):

* EEG side: full-height 2-D conv (1 -> F channels, kernel C x 1) with
  absolute-value activation, batch-norm over the channel axis, a shared
  per-map MLP (T -> H, ELU, dropout p1; H -> H, ELU, dropout p2), flatten
  to F*H, linear projection to the shared embedding dimension D.
* Visual side: softmax attention over the blur streams, optional two-way
  softmax gate mixing in the second stream, then a two-layer adapter
  (D -> A, ELU, dropout, A -> D).  A parallel blur-only adapter of the
  same shape serves configurations without the second stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng
from .containers import atomic_write_bytes
from .errors import DataError, FormatError, IntegrityError, ModeError, ShapeError

CHECKPOINT_FORMAT = "eegret-checkpoint"


@dataclass(frozen=True)
class EncoderConfig:
    n_channels: int = 63
    n_timepoints: int = 250
    conv_filters: int = 25
    mlp_hidden: int = 200
    embed_dim: int = 1024
    adapter_hidden: int = 768
    n_blur: int = 8
    dropout1: float = 0.25
    dropout2: float = 0.65
    adapter_dropout: float = 0.85
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    @property
    def flat_dim(self) -> int:
        return self.conv_filters * self.mlp_hidden


@dataclass(frozen=True)
class ForwardMode:
    train: bool
    dropout_seed: int = 0


@dataclass(frozen=True)
class ParamBlock:
    name: str
    offset: int
    shape: tuple[int, ...]
    trainable: bool

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


def build_layout(cfg: EncoderConfig) -> tuple[ParamBlock, ...]:
    F, C, T = cfg.conv_filters, cfg.n_channels, cfg.n_timepoints
    H, D, A = cfg.mlp_hidden, cfg.embed_dim, cfg.adapter_hidden
    specs = [
        ("conv_w", (F, 1, C, 1), True),
        ("conv_b", (F,), True),
        ("bn_gamma", (F,), True),
        ("bn_beta", (F,), True),
        ("bn_running_mean", (F,), False),
        ("bn_running_var", (F,), False),
        ("mlp1_w", (H, T), True),
        ("mlp1_b", (H,), True),
        ("mlp2_w", (H, H), True),
        ("mlp2_b", (H,), True),
        ("proj_w", (D, F * H), True),
        ("proj_b", (D,), True),
        ("blur_attn_logits", (cfg.n_blur,), True),
        ("gate_logits", (2,), True),
        ("adapter1_w", (A, D), True),
        ("adapter1_b", (A,), True),
        ("adapter2_w", (D, A), True),
        ("adapter2_b", (D,), True),
        ("blur_adapter1_w", (A, D), True),
        ("blur_adapter1_b", (A,), True),
        ("blur_adapter2_w", (D, A), True),
        ("blur_adapter2_b", (D,), True),
    ]
    blocks, offset = [], 0
    for name, shape, trainable in specs:
        blocks.append(ParamBlock(name, offset, shape, trainable))
        offset += int(np.prod(shape, dtype=np.int64))
    return tuple(blocks)


class EncoderParams:
    """Flat parameter vector plus named views into it."""

    def __init__(self, config: EncoderConfig, vec: np.ndarray | None = None):
        self.config = config
        self.layout = build_layout(config)
        self.total = self.layout[-1].offset + self.layout[-1].size
        if vec is None:
            vec = np.zeros(self.total, dtype=np.float64)
        elif vec.shape != (self.total,):
            raise ShapeError(f"parameter vector has {vec.shape}, layout needs ({self.total},)")
        self.vec = np.ascontiguousarray(vec, dtype=np.float64)
        self._blocks = {b.name: b for b in self.layout}

    def __getitem__(self, name: str) -> np.ndarray:
        b = self._blocks[name]
        return self.vec[b.offset:b.offset + b.size].reshape(b.shape)

    def block(self, name: str) -> ParamBlock:
        return self._blocks[name]

    def trainable_mask(self) -> np.ndarray:
        mask = np.zeros(self.total, dtype=bool)
        for b in self.layout:
            if b.trainable:
                mask[b.offset:b.offset + b.size] = True
        return mask

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, self.vec.copy())


def init_params(cfg: EncoderConfig, gen: np.random.Generator) -> EncoderParams:
    """Kaiming-uniform fan-in weights, zero biases and logits, unit BN scale."""
    p = EncoderParams(cfg)
    fan_in = {
        "conv_w": cfg.n_channels,
        "mlp1_w": cfg.n_timepoints,
        "mlp2_w": cfg.mlp_hidden,
        "proj_w": cfg.flat_dim,
        "adapter1_w": cfg.embed_dim,
        "adapter2_w": cfg.adapter_hidden,
        "blur_adapter1_w": cfg.embed_dim,
        "blur_adapter2_w": cfg.adapter_hidden,
    }
    for b in p.layout:
        if b.name in fan_in:
            bound = np.sqrt(6.0 / fan_in[b.name])
            p[b.name][...] = gen.uniform(-bound, bound, size=b.shape)
    p["bn_gamma"][...] = 1.0
    p["bn_running_var"][...] = 1.0
    return p


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _elu(x: np.ndarray) -> np.ndarray:
    # elu(x) = x for x > 0 else expm1(x); expm1(min(x,0)) + max(x,0) fuses both
    out = np.expm1(np.minimum(x, 0.0))
    out += np.maximum(x, 0.0)
    return out


def _elu_backward(dh: np.ndarray, h: np.ndarray) -> np.ndarray:
    # elu'(s) = 1 for s > 0 else elu(s) + 1; the output determines the branch
    return np.where(h > 0, dh, dh * (h + 1.0))


def _dropout_mask(gen: np.random.Generator, shape, p: float) -> np.ndarray:
    """Inverted-dropout multiplier: 1/(1-p) on kept units, 0 on dropped."""
    return (gen.random(shape) >= p).astype(np.float64) / (1.0 - p)


@dataclass
class EegCache:
    mode: ForwardMode
    x: np.ndarray
    sign_a0: np.ndarray
    xhat: np.ndarray
    ivar: np.ndarray
    y: np.ndarray
    h1: np.ndarray
    mask1: np.ndarray | None
    h1d: np.ndarray
    h2: np.ndarray
    mask2: np.ndarray | None
    flat: np.ndarray


def eeg_forward(params: EncoderParams, batch: np.ndarray, mode: ForwardMode,
                want_cache: bool = False):
    """Embed EEG segments [B, C, T] -> [B, D]."""
    cfg = params.config
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != cfg.n_channels or x.shape[2] != cfg.n_timepoints:
        raise ShapeError(
            f"batch {x.shape} does not match [B, {cfg.n_channels}, {cfg.n_timepoints}]")
    if not np.isfinite(x).all():
        raise DataError("batch contains non-finite values")
    B = x.shape[0]
    if mode.train and B < 2:
        raise ModeError("train mode needs batch size >= 2 for batch statistics")

    F, H = cfg.conv_filters, cfg.mlp_hidden
    conv_w = params["conv_w"].reshape(F, cfg.n_channels)
    a0 = np.matmul(conv_w, x) + params["conv_b"][None, :, None]
    a1 = np.abs(a0)

    gamma, beta = params["bn_gamma"], params["bn_beta"]
    if mode.train:
        mu = a1.mean(axis=(0, 2))
        var = a1.var(axis=(0, 2))
        m = cfg.bn_momentum
        params["bn_running_mean"][...] = (1 - m) * params["bn_running_mean"] + m * mu
        params["bn_running_var"][...] = (1 - m) * params["bn_running_var"] + m * var
    else:
        mu = params["bn_running_mean"].copy()
        var = params["bn_running_var"].copy()
    ivar = 1.0 / np.sqrt(var + cfg.bn_eps)
    xhat = (a1 - mu[None, :, None]) * ivar[None, :, None]
    y = gamma[None, :, None] * xhat + beta[None, :, None]

    s1 = (y.reshape(B * F, cfg.n_timepoints) @ params["mlp1_w"].T).reshape(B, F, H)
    s1 += params["mlp1_b"]
    h1 = _elu(s1)
    mask1 = None
    h1d = h1
    if mode.train:
        gen = rng.stream(mode.dropout_seed, "eeg-dropout")
        mask1 = _dropout_mask(gen, h1.shape, cfg.dropout1)
        h1d = h1 * mask1
        mask2_gen = gen
    s2 = (h1d.reshape(B * F, H) @ params["mlp2_w"].T).reshape(B, F, H)
    s2 += params["mlp2_b"]
    h2 = _elu(s2)
    mask2 = None
    h2d = h2
    if mode.train:
        mask2 = _dropout_mask(mask2_gen, h2.shape, cfg.dropout2)
        h2d = h2 * mask2

    flat = h2d.reshape(B, cfg.flat_dim)
    z = flat @ params["proj_w"].T + params["proj_b"]

    if not want_cache:
        return z, None
    cache = EegCache(mode=mode, x=x, sign_a0=np.sign(a0).astype(np.int8),
                     xhat=xhat, ivar=ivar, y=y, h1=h1, mask1=mask1, h1d=h1d,
                     h2=h2, mask2=mask2, flat=flat)
    return z, cache


def eeg_backward(params: EncoderParams, cache: EegCache, dz: np.ndarray,
                 grad: np.ndarray) -> None:
    """Accumulate d(loss)/d(params) for the EEG side into ``grad``."""
    if not cache.mode.train:
        raise ModeError("backward needs a train-mode cache")
    cfg = params.config
    g = EncoderParams(cfg, grad)  # view helper over the caller's grad vector
    B = cache.x.shape[0]
    F, H, T = cfg.conv_filters, cfg.mlp_hidden, cfg.n_timepoints

    g["proj_w"][...] += dz.T @ cache.flat
    g["proj_b"][...] += dz.sum(axis=0)
    dh2d = (dz @ params["proj_w"]).reshape(B, F, H)

    dh2 = dh2d * cache.mask2
    ds2 = _elu_backward(dh2, cache.h2).reshape(B * F, H)
    g["mlp2_w"][...] += ds2.T @ cache.h1d.reshape(B * F, H)
    g["mlp2_b"][...] += ds2.sum(axis=0)
    dh1d = (ds2 @ params["mlp2_w"]).reshape(B, F, H)

    dh1 = dh1d * cache.mask1
    ds1 = _elu_backward(dh1, cache.h1).reshape(B * F, H)
    g["mlp1_w"][...] += ds1.T @ cache.y.reshape(B * F, T)
    g["mlp1_b"][...] += ds1.sum(axis=0)
    dy = (ds1 @ params["mlp1_w"]).reshape(B, F, T)

    g["bn_gamma"][...] += (dy * cache.xhat).sum(axis=(0, 2))
    g["bn_beta"][...] += dy.sum(axis=(0, 2))
    dxhat = dy * params["bn_gamma"][None, :, None]
    n = B * cfg.n_timepoints
    sum_dxhat = dxhat.sum(axis=(0, 2))
    sum_dxhat_xhat = (dxhat * cache.xhat).sum(axis=(0, 2))
    da1 = (cache.ivar[None, :, None] / n) * (
        n * dxhat - sum_dxhat[None, :, None] - cache.xhat * sum_dxhat_xhat[None, :, None])

    da0 = da1 * cache.sign_a0
    g["conv_w"][...] += np.einsum(
        "bft,bct->fc", da0, cache.x, optimize=True).reshape(g["conv_w"].shape)
    g["conv_b"][...] += da0.sum(axis=(0, 2))


@dataclass
class VisualCache:
    mode: ForwardMode
    blur: np.ndarray
    evnet: np.ndarray | None
    attn: np.ndarray
    gate: np.ndarray | None
    v_blur: np.ndarray
    v_mix: np.ndarray
    h1: np.ndarray
    mask: np.ndarray | None
    h1d: np.ndarray


def visual_forward(params: EncoderParams, blur_feats: np.ndarray,
                   evnet_feats: np.ndarray | None, mode: ForwardMode,
                   want_cache: bool = False):
    """Aggregate blur streams, optionally fuse the second stream, adapt.

    blur_feats: [B, n_blur, D]; evnet_feats: [B, D] or None.
    """
    cfg = params.config
    blur = np.ascontiguousarray(blur_feats, dtype=np.float64)
    if blur.ndim != 3 or blur.shape[2] != cfg.embed_dim:
        raise ShapeError(f"blur features {blur.shape} != [B, n_blur, {cfg.embed_dim}]")
    if blur.shape[1] != cfg.n_blur:
        raise ShapeError(f"{blur.shape[1]} blur streams but {cfg.n_blur} attention logits")
    evnet = None
    if evnet_feats is not None:
        evnet = np.ascontiguousarray(evnet_feats, dtype=np.float64)
        if evnet.shape != (blur.shape[0], cfg.embed_dim):
            raise ShapeError(f"second-stream features {evnet.shape} != "
                             f"[{blur.shape[0]}, {cfg.embed_dim}]")

    attn = _softmax(params["blur_attn_logits"])
    v_blur = np.einsum("l,bld->bd", attn, blur, optimize=True)
    gate = None
    if evnet is not None:
        gate = _softmax(params["gate_logits"])
        v_mix = gate[0] * v_blur + gate[1] * evnet
        w1, b1 = params["adapter1_w"], params["adapter1_b"]
        w2, b2 = params["adapter2_w"], params["adapter2_b"]
    else:
        v_mix = v_blur
        w1, b1 = params["blur_adapter1_w"], params["blur_adapter1_b"]
        w2, b2 = params["blur_adapter2_w"], params["blur_adapter2_b"]

    s1 = v_mix @ w1.T + b1
    h1 = _elu(s1)
    mask = None
    h1d = h1
    if mode.train:
        gen = rng.stream(mode.dropout_seed, "visual-dropout")
        mask = _dropout_mask(gen, h1.shape, cfg.adapter_dropout)
        h1d = h1 * mask
    v = h1d @ w2.T + b2

    if not want_cache:
        return v, None
    return v, VisualCache(mode=mode, blur=blur, evnet=evnet, attn=attn, gate=gate,
                          v_blur=v_blur, v_mix=v_mix, h1=h1, mask=mask, h1d=h1d)


def visual_backward(params: EncoderParams, cache: VisualCache, dv: np.ndarray,
                    grad: np.ndarray) -> None:
    """Accumulate d(loss)/d(params) for the visual side into ``grad``."""
    if not cache.mode.train:
        raise ModeError("backward needs a train-mode cache")
    g = EncoderParams(params.config, grad)
    fused = cache.evnet is not None
    pre = "" if fused else "blur_"

    g[pre + "adapter2_w"][...] += dv.T @ cache.h1d
    g[pre + "adapter2_b"][...] += dv.sum(axis=0)
    dh1d = dv @ params[pre + "adapter2_w"]
    dh1 = dh1d * cache.mask
    ds1 = _elu_backward(dh1, cache.h1)
    g[pre + "adapter1_w"][...] += ds1.T @ cache.v_mix
    g[pre + "adapter1_b"][...] += ds1.sum(axis=0)
    dv_mix = ds1 @ params[pre + "adapter1_w"]

    if fused:
        dw = np.array([(dv_mix * cache.v_blur).sum(), (dv_mix * cache.evnet).sum()])
        w = cache.gate
        g["gate_logits"][...] += w * (dw - float(w @ dw))
        dv_blur = w[0] * dv_mix
    else:
        dv_blur = dv_mix

    dattn = np.einsum("bd,bld->l", dv_blur, cache.blur, optimize=True)
    a = cache.attn
    g["blur_attn_logits"][...] += a * (dattn - float(a @ dattn))


def save_checkpoint(path, params: EncoderParams, meta: dict | None = None) -> None:
    """Single file: one-line JSON header (layout table) + raw f32le blob."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "dtype": "f32le",
        "total": params.total,
        "config": asdict(params.config),
        "layout": [[b.name, b.offset, list(b.shape), b.trainable] for b in params.layout],
        "meta": meta or {},
    }
    blob = params.vec.astype("<f4").tobytes()
    atomic_write_bytes(Path(path), json.dumps(header, sort_keys=True).encode() + b"\n" + blob)


def load_checkpoint(path) -> tuple[EncoderParams, dict]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: no header line")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad checkpoint header ({exc})")
    if header.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not an encoder checkpoint")
    cfg = EncoderConfig(**header["config"])
    blob = raw[nl + 1:]
    expected = header["total"] * 4
    if len(blob) != expected:
        raise IntegrityError(f"{path}: blob holds {len(blob)} bytes, header needs {expected}")
    vec = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    params = EncoderParams(cfg, vec)
    declared = [[b.name, b.offset, list(b.shape), b.trainable] for b in params.layout]
    if header["layout"] != declared:
        raise IntegrityError(f"{path}: layout table does not match the declared config")
    return params, header.get("meta", {})
