import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasguide.gradcheck import finite_difference, relative_error
from pasguide.image_core import InvalidInputError, gaussian_blur
from pasguide.photometric import (
    EXPOSURE_AMPLITUDE,
    EXPOSURE_BASE,
    build_exposure_map,
    exposure_grad,
    exposure_loss,
    phy_loss,
    reflectance_grad,
    reflectance_loss,
    reflectance_surrogate_loss,
    retinex_decompose,
)


def smooth_image(rng, shape=(32, 32, 3), lo=0.1, hi=0.5):
    img = gaussian_blur(rng.uniform(size=shape), 2.0)
    img = (img - img.min()) / (img.max() - img.min())
    return lo + (hi - lo) * img


def test_exposure_constants():
    m = build_exposure_map(np.random.default_rng(0).uniform(size=(4, 4, 3)))
    assert (m.base, m.amplitude) == (0.55, 0.15)
    assert (EXPOSURE_BASE, EXPOSURE_AMPLITUDE) == (0.55, 0.15)


def test_exposure_map_examples():
    assert np.all(build_exposure_map(np.full((4, 4, 3), 0.3)).values == 0.55)
    img = np.full((4, 4, 3), 0.8)
    img[:, :2] = 0.2
    m = build_exposure_map(img).values
    assert np.allclose(m[:, :2], 0.70) and np.allclose(m[:, 2:], 0.55)


@settings(max_examples=40)
@given(st.integers(0, 2**31))
def test_exposure_map_range_and_antimonotone(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(size=(6, 7, 3))
    m = build_exposure_map(img).values
    assert m.min() == 0.55 and m.max() == 0.55 + 0.15
    order = np.argsort(img.mean(axis=2).ravel(), kind="stable")
    assert np.all(np.diff(m.ravel()[order]) <= 1e-15)


def test_exposure_loss_examples(rng):
    m = build_exposure_map(rng.uniform(size=(5, 5, 3)))
    x = np.repeat(m.values[:, :, None], 3, axis=2)
    assert exposure_loss(x, m) < 1e-30
    assert np.abs(exposure_grad(x, m)).max() < 1e-15

    one = np.array([[[0.3, 0.6, 0.9]]])
    m1 = build_exposure_map(np.full((1, 1, 3), 0.5))
    assert exposure_loss(one, m1) == pytest.approx(0.0025)
    assert np.allclose(exposure_grad(one, m1), 2 * 0.05 / 3)

    img = rng.uniform(size=(4, 4, 3))
    m2 = build_exposure_map(rng.uniform(size=(4, 4, 3)))
    tiled_m = type(m2)(np.tile(m2.values, (2, 1)))
    assert exposure_loss(np.tile(img, (2, 1, 1)), tiled_m) == pytest.approx(exposure_loss(img, m2), rel=1e-12)


def test_exposure_dim_mismatch():
    m = build_exposure_map(np.zeros((3, 3, 3)))
    with pytest.raises(InvalidInputError):
        exposure_loss(np.zeros((4, 3, 3)), m)


@pytest.mark.parametrize("seed", range(5))
def test_exposure_grad_finite_difference(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(8, 8, 3))
    m = build_exposure_map(rng.uniform(size=(8, 8, 3)))
    fd = finite_difference(lambda z: exposure_loss(z, m), x)
    assert relative_error(exposure_grad(x, m), fd) < 1e-4


def test_exposure_loss_zero_iff_match(rng):
    m = build_exposure_map(rng.uniform(size=(4, 4, 3)))
    x = rng.uniform(size=(4, 4, 3))
    assert exposure_loss(x, m) > 0


def test_retinex_constant_gray():
    pair = retinex_decompose(np.full((16, 16, 3), 0.4))
    assert np.allclose(pair.illumination, 0.4)
    assert np.allclose(pair.reflectance, 1.0)


def test_retinex_reconstructs(rng):
    img = smooth_image(rng)
    pair = retinex_decompose(img)
    raw = img / pair.illumination[:, :, None]
    free = (pair.illumination > 0.01) & np.all(raw < 3.0, axis=2)
    recon = pair.reflectance * pair.illumination[:, :, None]
    assert np.abs(recon - img)[free].max() <= 1e-3
    assert np.all((pair.illumination >= 0.01) & (pair.illumination <= 1.0))


def test_retinex_scale_invariance(rng):
    img = smooth_image(rng, lo=0.2, hi=0.9)
    r1 = retinex_decompose(img)
    r2 = retinex_decompose(0.5 * img)
    free = (r2.illumination > 0.01) & np.all(r1.reflectance < 3.0, axis=2)
    assert np.abs(r1.reflectance - r2.reflectance)[free].max() <= 0.02


def test_reflectance_loss_examples(rng):
    y0 = smooth_image(rng)
    r_ref = retinex_decompose(y0).reflectance
    assert reflectance_loss(y0, r_ref) == 0.0
    assert np.all(reflectance_grad(y0, r_ref) == 0.0)
    assert reflectance_loss(2 * y0, r_ref) <= 5e-3
    swapped = y0[:, :, ::-1].copy()
    swapped[:, :, 0] += 0.2
    assert reflectance_loss(swapped, r_ref) > 0


def test_reflectance_shape_mismatch():
    with pytest.raises(InvalidInputError):
        reflectance_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_reflectance_grad_frozen_surrogate(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 1, (8, 8, 3))
    r_ref = retinex_decompose(rng.uniform(0.05, 1, (8, 8, 3))).reflectance
    L = retinex_decompose(x).illumination
    fd = finite_difference(lambda z: reflectance_surrogate_loss(z, r_ref, L), x)
    assert relative_error(reflectance_grad(x, r_ref), fd) < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_reflectance_grad_full_mode(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.8, (8, 8, 3))
    # separate the top channel so the max-RGB selection is stable under the FD step
    top = rng.integers(0, 3, (8, 8))
    np.put_along_axis(x, top[:, :, None], np.take_along_axis(x, top[:, :, None], 2) + 0.15, axis=2)
    r_ref = retinex_decompose(rng.uniform(0.05, 1, (8, 8, 3))).reflectance
    fd = finite_difference(lambda z: reflectance_loss(z, r_ref), x)
    assert relative_error(reflectance_grad(x, r_ref, mode="full"), fd) < 1e-3


def test_reflectance_clamped_pixels_have_zero_grad():
    # a bright spike on black drives x / L above the reflectance cap
    spike = np.zeros((16, 16, 3))
    spike[8, 8] = 1.0
    L = retinex_decompose(spike).illumination
    raw = spike / L[:, :, None]
    g = reflectance_grad(spike, np.zeros_like(spike))
    assert np.any(raw > 3.0)
    assert np.all(g[raw > 3.0] == 0.0)


def test_reflectance_grad_mode_validation():
    with pytest.raises(InvalidInputError):
        reflectance_grad(np.full((4, 4, 3), 0.5), np.ones((4, 4, 3)), mode="other")


def test_phy_loss_ablations(rng):
    x = rng.uniform(size=(8, 8, 3))
    y0 = rng.uniform(size=(8, 8, 3))
    m = build_exposure_map(y0)
    r_ref = retinex_decompose(y0).reflectance

    loss, grad = phy_loss(x, m, r_ref, 1200.0, 0.0)
    assert loss == 1200.0 * exposure_loss(x, m)
    assert np.array_equal(grad, 1200.0 * exposure_grad(x, m))

    loss, grad = phy_loss(x, m, r_ref, 0.0, 0.03)
    assert loss == 0.03 * reflectance_loss(x, r_ref)
    assert np.array_equal(grad, 0.03 * reflectance_grad(x, r_ref))

    loss, grad = phy_loss(x, m, r_ref, 1200.0, 0.03)
    assert loss == pytest.approx(1200.0 * exposure_loss(x, m) + 0.03 * reflectance_loss(x, r_ref))
