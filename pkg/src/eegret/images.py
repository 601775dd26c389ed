"""Image-domain preprocessing: blur pyramid and RSVP scene recreation.

Images are float arrays [height, width, 3] in [0, 1] (sRGB).  Everything
here is a pure function; blurring goes through the kernels backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .kernels import corr1d_valid

DEFAULT_BLUR_KERNELS = (1, 3, 15, 21, 33, 45, 57, 63)


@dataclass(frozen=True)
class BlurSpec:
    kernel_sizes: tuple[int, ...] = DEFAULT_BLUR_KERNELS

    def __post_init__(self):
        for k in self.kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise ParameterError(f"blur kernel sizes must be odd positive, got {k}")


@dataclass(frozen=True)
class RsvpSpec:
    """Acquisition-display recreation: grey canvas, centered stimulus, red dot.

    The original display's exact grey/red values are not published, so all
    of this is configurable; defaults below are the working guess.
    """

    canvas_size: int = 224
    background_gray: float = 0.5
    dot_radius: float = 4.0
    dot_color: tuple[float, float, float] = (0.8, 0.1, 0.1)
    image_area_fraction: float = 0.25


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"image must be [h, w, 3], got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError("image must have positive dimensions")
    if not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0:
        raise DataError("image values must be finite and in [0, 1]")
    return img


def sigma_for_kernel(k: int) -> float:
    """Kernel-size to sigma mapping (the usual computer-vision convention)."""
    return 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8


def gaussian_kernel_1d(k: int) -> np.ndarray:
    sigma = sigma_for_kernel(k)
    t = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(img: np.ndarray, k: int, clip: bool = True) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; k == 1 is the identity."""
    img = validate_image(img)
    if k % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {k}")
    if k < 1:
        raise ParameterError(f"kernel size must be >= 1, got {k}")
    if k == 1:
        return img.copy()
    w = gaussian_kernel_1d(k)
    r = (k - 1) // 2
    out = np.empty_like(img)
    for c in range(3):
        padded = np.pad(img[:, :, c], r, mode="reflect")
        rows = corr1d_valid(padded, w, axis=1)
        out[:, :, c] = corr1d_valid(rows, w, axis=0)
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def build_blur_pyramid(img: np.ndarray, spec: BlurSpec = BlurSpec()) -> list[np.ndarray]:
    """One blurred copy per kernel size, each computed from the original."""
    return [gaussian_blur(img, k) for k in spec.kernel_sizes]


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center sampling."""
    img = validate_image(img)
    if out_h < 1 or out_w < 1:
        raise ParameterError("target size must be positive")
    h, w = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def compose_rsvp(img: np.ndarray, spec: RsvpSpec = RsvpSpec()) -> np.ndarray:
    """Grey canvas with the resized stimulus centered and a central dot on top."""
    img = validate_image(img)
    size = spec.canvas_size
    h, w = img.shape[:2]
    scale = np.sqrt(spec.image_area_fraction * size * size / (h * w))
    new_h, new_w = int(round(h * scale)), int(round(w * scale))
    if new_h > size or new_w > size:
        raise ParameterError(
            f"scaled stimulus {new_h}x{new_w} exceeds the {size}x{size} canvas")
    if new_h < 1 or new_w < 1:
        raise ParameterError("image_area_fraction scales the stimulus to nothing")
    canvas = np.full((size, size, 3), spec.background_gray, dtype=np.float64)
    y0 = (size - new_h) // 2
    x0 = (size - new_w) // 2
    canvas[y0:y0 + new_h, x0:x0 + new_w] = resize_bilinear(img, new_h, new_w)
    if spec.dot_radius > 0:
        cy = cx = (size - 1) / 2.0
        yy, xx = np.mgrid[0:size, 0:size]
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= spec.dot_radius ** 2
        canvas[mask] = np.asarray(spec.dot_color, dtype=np.float64)
    return canvas


def read_png(path) -> np.ndarray:
    from PIL import Image as PilImage

    with PilImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image as PilImage

    img = validate_image(img)
    as8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PilImage.fromarray(as8, mode="RGB").save(path, format="PNG")
