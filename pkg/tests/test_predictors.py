import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasguide.diffusion import NoiseSchedule, SingularityError, forward_sample, make_schedule, predict_x0, schedule_from_betas
from pasguide.image_core import InvalidInputError, save_image
from pasguide.predictors import (
    CountingPredictor,
    ExactPredictor,
    ExternalPredictor,
    GalleryPrior,
    MixturePredictor,
    exact_eps,
    mixture_posterior_mean,
    mixture_predict,
    mixture_weights,
)

QUARTER = schedule_from_betas([0.75])  # alpha_bar = 0.25


def px(v):
    return np.full((1, 1, 1), float(v))


def test_exact_eps_examples(rng):
    s = make_schedule(10)
    x0, eps = rng.normal(size=(3, 4, 3)), rng.normal(size=(3, 4, 3))
    assert np.allclose(exact_eps(forward_sample(x0, 4, eps, s), x0, 4, s), eps, atol=1e-6)
    assert np.allclose(exact_eps(np.sqrt(s.alpha_bar_at(4)) * x0, x0, 4, s), 0, atol=1e-12)
    assert exact_eps(px(0.3366025), px(0.5), 1, QUARTER)[0, 0, 0] == pytest.approx(0.1, abs=1e-6)


def test_exact_eps_singular():
    ab = np.array([1.0])
    with pytest.raises(SingularityError):
        exact_eps(px(0), px(0), 1, NoiseSchedule(ab * 0, ab, ab, ab * 0))


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(1, 10))
def test_exact_eps_left_inverse(seed, t):
    rng = np.random.default_rng(seed)
    s = make_schedule(10)
    x0, eps = rng.uniform(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))
    assert np.allclose(exact_eps(forward_sample(x0, t, eps, s), x0, t, s), eps, atol=1e-6)


def test_single_image_gallery_recovers_image(rng):
    y = rng.uniform(size=(4, 4, 3))
    prior = GalleryPrior([y])
    s = make_schedule(10)
    for t in (1, 5, 10):
        x_t = rng.normal(size=y.shape) * 3
        assert np.allclose(predict_x0(x_t, mixture_predict(x_t, t, s, prior), t, s), y, atol=1e-10)


def test_symmetric_pair_ties():
    prior = GalleryPrior([px(0), px(1)])
    x_t = px(0.5 * np.sqrt(0.25))  # equidistant from sqrt(ab)*0 and sqrt(ab)*1
    assert mixture_posterior_mean(x_t, 1, QUARTER, prior)[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


def test_two_point_example_brute_force():
    prior = GalleryPrior([px(0), px(1)])
    ab, x = 0.25, 0.4
    # direct evaluation of the two-component posterior
    w0 = math.exp(-((x - math.sqrt(ab) * 0) ** 2) / (2 * (1 - ab)))
    w1 = math.exp(-((x - math.sqrt(ab) * 1) ** 2) / (2 * (1 - ab)))
    mean = w1 / (w0 + w1)
    eps = (x - math.sqrt(ab) * mean) / math.sqrt(1 - ab)
    assert mean == pytest.approx(0.52497, abs=1e-5)
    assert eps == pytest.approx(0.15877, abs=2e-5)
    assert mixture_posterior_mean(px(x), 1, QUARTER, prior)[0, 0, 0] == pytest.approx(mean, abs=1e-12)
    assert mixture_predict(px(x), 1, QUARTER, prior)[0, 0, 0] == pytest.approx(eps, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 10), st.floats(0.1, 50))
def test_weights_are_a_distribution(seed, t, scale):
    rng = np.random.default_rng(seed)
    prior = GalleryPrior([rng.uniform(size=(6, 6, 3)) for _ in range(5)])
    w = mixture_weights(rng.normal(size=(6, 6, 3)) * scale, t, make_schedule(10), prior)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) < 1e-12


def test_weights_do_not_overflow(rng):
    prior = GalleryPrior([rng.uniform(size=(64, 64, 3)) for _ in range(4)])
    w = mixture_weights(rng.normal(size=(64, 64, 3)) * 100, 1, make_schedule(10), prior)
    assert np.all(np.isfinite(w)) and abs(w.sum() - 1) < 1e-12


def test_converges_to_nearest_component(rng):
    gallery = [rng.uniform(size=(5, 5, 3)) for _ in range(6)]
    prior = GalleryPrior(gallery)
    k = 2
    sched = schedule_from_betas([1e-6])
    ab = sched.alpha_bar_at(1)
    x_t = np.sqrt(ab) * gallery[k] + 1e-5 * rng.normal(size=gallery[k].shape)
    x0 = predict_x0(x_t, mixture_predict(x_t, 1, sched, prior), 1, sched)
    d_k = np.linalg.norm(x0 - gallery[k])
    others = min(np.linalg.norm(x0 - g) for i, g in enumerate(gallery) if i != k)
    assert others >= 10 * d_k


def test_mixture_degenerate_alpha_bar():
    ab = np.array([1.0])
    with pytest.raises(SingularityError):
        mixture_predict(px(0), 1, NoiseSchedule(ab * 0, ab, ab, ab * 0), GalleryPrior([px(0)]))


def test_gallery_validation(rng):
    with pytest.raises(InvalidInputError):
        GalleryPrior([])
    with pytest.raises(InvalidInputError):
        GalleryPrior([np.zeros((2, 2, 3)), np.zeros((3, 2, 3))])


def test_gallery_from_dir(tmp_path, rng):
    for i in range(3):
        save_image(rng.uniform(size=(4, 5, 3)), tmp_path / f"{i}.png")
    prior = GalleryPrior.from_dir(tmp_path)
    assert len(prior) == 3 and prior.shape == (4, 5, 3)


def test_predictor_wrappers(rng):
    s = make_schedule(10)
    x0 = rng.uniform(size=(3, 3, 3))
    x_t = forward_sample(x0, 3, rng.normal(size=x0.shape), s)
    counted = CountingPredictor(ExactPredictor(x0))
    counted.predict(x_t, 3, s)
    counted.predict(x_t, 2, s)
    assert counted.calls == 2
    m = MixturePredictor(GalleryPrior([x0]))
    assert m.predict(x_t, 3, s).shape == x0.shape
    with pytest.raises(NotImplementedError):
        ExternalPredictor(["model"]).predict(x_t, 3, s)
