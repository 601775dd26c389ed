import numpy as np
import pytest


def smooth_image(seed: int, h: int = 48, w: int = 48) -> np.ndarray:
    """Natural-ish test image: seeded gradient plus a few Gaussian blobs."""
    gen = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3))
    for c in range(3):
        plane = 0.3 * (xx / w) + 0.2 * (yy / h)
        for _ in range(4):
            cy, cx = gen.uniform(0, h), gen.uniform(0, w)
            s = gen.uniform(h / 10, h / 3)
            amp = gen.uniform(0.1, 0.5)
            plane = plane + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        img[:, :, c] = plane
    img -= img.min()
    img /= img.max()
    return img


@pytest.fixture
def image_corpus():
    return [smooth_image(seed) for seed in range(8)]
