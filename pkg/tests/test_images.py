import numpy as np
import pytest

from eegret.errors import DataError, ParameterError
from eegret.images import (BlurSpec, RsvpSpec, build_blur_pyramid, compose_rsvp,
                           gaussian_blur, gaussian_kernel_1d, read_png,
                           resize_bilinear, sigma_for_kernel, write_png)

from conftest import smooth_image


def dense_blur_oracle(img, k):
    """Direct 2-D dense convolution with reflect-101 indexing.

    Independent of the separable/kernels path that gaussian_blur uses.
    """
    w1 = gaussian_kernel_1d(k)
    w2 = np.outer(w1, w1)
    r = (k - 1) // 2
    h, wdt, _ = img.shape

    def reflect(i, n):
        # reflect-101: period 2(n-1), no edge repeat
        period = 2 * (n - 1)
        i = np.abs(i) % period
        return np.where(i >= n, period - i, i)

    out = np.zeros_like(img)
    for y in range(h):
        for x in range(wdt):
            acc = np.zeros(3)
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = int(reflect(np.array(y + dy), h))
                    xx = int(reflect(np.array(x + dx), wdt))
                    acc += w2[dy + r, dx + r] * img[yy, xx]
            out[y, x] = acc
    return out


class TestGaussianBlur:
    def test_k1_identity(self):
        img = smooth_image(0, 16, 16)
        np.testing.assert_array_equal(gaussian_blur(img, 1), img)

    def test_even_kernel_rejected(self):
        with pytest.raises(ParameterError):
            gaussian_blur(smooth_image(0, 8, 8), 4)

    def test_constant_image_unchanged(self):
        img = np.full((10, 12, 3), 0.37)
        for k in (3, 15):
            np.testing.assert_allclose(gaussian_blur(img, k), img, atol=1e-12)

    def test_impulse_response_is_kernel_outer_product(self):
        img = np.zeros((31, 31, 3))
        img[15, 15, :] = 1.0
        out = gaussian_blur(img, 15)
        w = gaussian_kernel_1d(15)
        expected = np.outer(w, w)
        patch = out[8:23, 8:23, 0]
        np.testing.assert_allclose(patch, expected, atol=1e-12)
        assert out[:8].max() == 0.0 and out[23:].max() == 0.0

    def test_blur_matches_dense_oracle(self):
        img = smooth_image(4, 14, 17)
        for k in (3, 7):
            np.testing.assert_allclose(gaussian_blur(img, k),
                                       dense_blur_oracle(img, k), atol=1e-10)

    def test_interior_impulse_conserves_energy(self):
        img = np.zeros((80, 80, 3))
        img[40, 40, :] = 1.0
        for k in BlurSpec().kernel_sizes:
            out = gaussian_blur(img, k)
            np.testing.assert_allclose(out.sum(), img.sum(), rtol=1e-6)

    def test_linearity_pre_clamp(self):
        a = smooth_image(1, 20, 20)
        b = smooth_image(2, 20, 20)
        lhs = gaussian_blur(0.3 * a + 0.7 * b, 21, clip=False)
        rhs = 0.3 * gaussian_blur(a, 21, clip=False) + 0.7 * gaussian_blur(b, 21, clip=False)
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    def test_sigma_convention(self):
        assert sigma_for_kernel(3) == pytest.approx(0.8)
        assert sigma_for_kernel(15) == pytest.approx(2.6)

    def test_variance_monotone_on_corpus(self, image_corpus):
        for img in image_corpus:
            variances = [build.var() for build in build_blur_pyramid(img)]
            assert all(v1 >= v2 - 1e-12 for v1, v2 in zip(variances, variances[1:]))


class TestPyramid:
    def test_default_spec_shape(self):
        img = smooth_image(3, 70, 70)
        pyr = build_blur_pyramid(img)
        assert len(pyr) == 8
        np.testing.assert_array_equal(pyr[0], img)

    def test_singleton_identity(self):
        img = smooth_image(5, 9, 9)
        pyr = build_blur_pyramid(img, BlurSpec(kernel_sizes=(1,)))
        assert len(pyr) == 1
        np.testing.assert_array_equal(pyr[0], img)

    def test_invalid_spec(self):
        with pytest.raises(ParameterError):
            BlurSpec(kernel_sizes=(1, 2, 3))


class TestRsvp:
    def test_quarter_area_on_square(self):
        img = smooth_image(0, 64, 64)
        out = compose_rsvp(img, RsvpSpec(canvas_size=224, image_area_fraction=0.25,
                                         dot_radius=0.0))
        assert out.shape == (224, 224, 3)
        inner = out[56:168, 56:168]
        assert not np.allclose(inner, 0.5)          # stimulus occupies 112x112
        assert (out[:56] == 0.5).all() and (out[168:] == 0.5).all()
        assert (out[:, :56] == 0.5).all() and (out[:, 168:] == 0.5).all()

    def test_no_dot_when_radius_zero(self):
        out = compose_rsvp(smooth_image(1, 16, 16), RsvpSpec(dot_radius=0.0))
        assert tuple(out[0, 0]) == (0.5, 0.5, 0.5)
        assert not (out == np.array([0.8, 0.1, 0.1])).all(axis=2).any()

    def test_center_pixel_is_dot_color(self):
        spec = RsvpSpec()
        out = compose_rsvp(smooth_image(1, 16, 16), spec)
        h = spec.canvas_size // 2
        np.testing.assert_array_equal(out[h, h], np.array(spec.dot_color))

    def test_pure_function(self):
        img = smooth_image(2, 10, 20)
        np.testing.assert_array_equal(compose_rsvp(img), compose_rsvp(img))

    def test_oversized_stimulus_rejected(self):
        with pytest.raises(ParameterError):
            compose_rsvp(smooth_image(0, 8, 8),
                         RsvpSpec(canvas_size=16, image_area_fraction=2.0))


class TestIo:
    def test_png_round_trip_quantized(self, tmp_path):
        img = smooth_image(6, 12, 18)
        write_png(tmp_path / "x.png", img)
        back = read_png(tmp_path / "x.png")
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9

    def test_resize_preserves_constant(self):
        img = np.full((7, 5, 3), 0.25)
        out = resize_bilinear(img, 13, 11)
        np.testing.assert_allclose(out, 0.25, atol=1e-12)

    def test_validate_rejects_bad_range(self):
        with pytest.raises(DataError):
            gaussian_blur(np.full((4, 4, 3), 1.5), 3)
