"""Reconstruction-quality metrics computable without pretrained networks.

SSIM and PixCorr operate on image pairs; two-way identification and
correlation distance operate on externally supplied feature banks (the
metric math is the same whichever extractor produced them).  Window
parameters, the resize target, and tie handling follow the common
evaluation-script conventions and are configurable; reports echo them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError
from .images import resize_bilinear, validate_image
from .kernels import corr1d_valid

REC601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SsimSpec:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0


@dataclass
class MetricReport:
    """Per-metric summary (mean/std across seeds or pairs) plus raw values."""

    values: dict[str, list[float]] = field(default_factory=dict)
    direction: dict[str, str] = field(default_factory=dict)  # "higher" | "lower"

    def add(self, name: str, value: float, direction: str) -> None:
        self.values.setdefault(name, []).append(float(value))
        self.direction[name] = direction

    def summary(self) -> dict:
        out = {}
        for name, vals in self.values.items():
            arr = np.asarray(vals, dtype=np.float64)
            out[name] = {
                "mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "n": int(arr.size),
                "direction": self.direction[name],
            }
        return out


def _luminance(img: np.ndarray) -> np.ndarray:
    return img @ REC601


def _gaussian_window(spec: SsimSpec) -> np.ndarray:
    t = np.arange(spec.window, dtype=np.float64) - (spec.window - 1) / 2.0
    w = np.exp(-(t * t) / (2.0 * spec.sigma * spec.sigma))
    return w / w.sum()


def _windowed_mean(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return corr1d_valid(corr1d_valid(x, w, axis=1), w, axis=0)


def ssim(a: np.ndarray, b: np.ndarray, spec: SsimSpec = SsimSpec()) -> float:
    """Mean structural similarity over Gaussian-weighted sliding windows.

    Luminance only (Rec. 601), windows fully inside the image.
    """
    a = validate_image(a)
    b = validate_image(b)
    if a.shape != b.shape:
        raise ParameterError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < spec.window:
        raise ParameterError(
            f"images smaller than the {spec.window}x{spec.window} SSIM window")
    x = _luminance(a)
    y = _luminance(b)
    w = _gaussian_window(spec)
    mu_x = _windowed_mean(x, w)
    mu_y = _windowed_mean(y, w)
    sxx = _windowed_mean(x * x, w) - mu_x * mu_x
    syy = _windowed_mean(y * y, w) - mu_y * mu_y
    sxy = _windowed_mean(x * y, w) - mu_x * mu_y
    c1 = (spec.k1 * spec.data_range) ** 2
    c2 = (spec.k2 * spec.data_range) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) \
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2))
    return float(ssim_map.mean())


def pixcorr(a: np.ndarray, b: np.ndarray, resize_to: int = 256) -> float:
    """Pearson correlation of flattened RGB after bilinear resize to a
    common grid."""
    a = resize_bilinear(validate_image(a), resize_to, resize_to).ravel()
    b = resize_bilinear(validate_image(b), resize_to, resize_to).ravel()
    return _pearson(a, b)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.sqrt((xc * xc).sum())
    ny = np.sqrt((yc * yc).sum())
    if nx == 0.0 or ny == 0.0:
        raise DataError("constant input has undefined correlation")
    return float((xc * yc).sum() / (nx * ny))


def _row_standardize(feats: np.ndarray, tag: str) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] < 2:
        raise ParameterError(f"{tag} features must be [n, d>=2], got {feats.shape}")
    centered = feats - feats.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    if (norms == 0.0).any():
        raise DataError(f"{tag} features contain a constant row")
    return centered / norms[:, None]


def two_way_identification(gen_feats: np.ndarray, gt_feats: np.ndarray) -> float:
    """Mean over ordered pairs (i, j != i) of [corr(gen_i, gt_i) > corr(gen_i, gt_j)].

    Exact correlation ties count one half.
    """
    g = _row_standardize(gen_feats, "generated")
    t = _row_standardize(gt_feats, "ground-truth")
    if g.shape != t.shape:
        raise ParameterError(f"feature shapes differ: {g.shape} vs {t.shape}")
    n = g.shape[0]
    if n < 2:
        raise ParameterError("two-way identification needs at least two rows")
    corr = g @ t.T                      # corr[i, j] = Pearson(gen_i, gt_j)
    own = np.diagonal(corr)[:, None]
    wins = (own > corr).astype(np.float64) + 0.5 * (own == corr)
    np.fill_diagonal(wins, 0.0)
    return float(wins.sum() / (n * (n - 1)))


def correlation_distance(gen_feats: np.ndarray, gt_feats: np.ndarray) -> float:
    """Mean over rows of (1 - Pearson(gen_i, gt_i)); lower is better."""
    g = _row_standardize(gen_feats, "generated")
    t = _row_standardize(gt_feats, "ground-truth")
    if g.shape != t.shape:
        raise ParameterError(f"feature shapes differ: {g.shape} vs {t.shape}")
    r = (g * t).sum(axis=1)
    return float((1.0 - r).mean())


def score_image_pairs(gen_images, gt_images, feature_banks: dict | None = None,
                      ssim_spec: SsimSpec = SsimSpec()) -> dict:
    """Full metric battery over aligned image lists (plus optional banks).

    ``feature_banks`` maps a display name to a (gen_feats, gt_feats) pair;
    each contributes a two-way identification score and a correlation
    distance.  Returns per-pair raw values and a summary.
    """
    if len(gen_images) != len(gt_images):
        raise ParameterError("generated/ground-truth image counts differ")
    if not gen_images:
        raise ParameterError("no image pairs to score")
    report = MetricReport()
    for g_img, t_img in zip(gen_images, gt_images):
        report.add("ssim", ssim(g_img, t_img, ssim_spec), "higher")
        report.add("pixcorr", pixcorr(g_img, t_img), "higher")
    result = {
        "per_pair": {k: list(v) for k, v in report.values.items()},
        "ssim_spec": {"window": ssim_spec.window, "sigma": ssim_spec.sigma,
                      "k1": ssim_spec.k1, "k2": ssim_spec.k2},
    }
    for name, (gen_f, gt_f) in (feature_banks or {}).items():
        report.add(f"{name}_two_way", two_way_identification(gen_f, gt_f), "higher")
        report.add(f"{name}_corr_dist", correlation_distance(gen_f, gt_f), "lower")
    result["summary"] = report.summary()
    return result
