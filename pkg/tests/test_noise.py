import math

import numpy as np
import pytest
from scipy import stats

from specden.noise import (NoiseModel, add_gaussian, add_poisson, apply_noise, derive_seed,
                           poisson_counts, sample_level)


def test_gaussian_zero_sigma_is_identity():
    img = np.random.default_rng(0).random((16, 16))
    np.testing.assert_array_equal(add_gaussian(img, 0, seed=3), img)


def test_gaussian_moments():
    n = add_gaussian(np.zeros((256, 256)), 25, seed=11)
    sd = 25 / 255
    assert sd * 0.98 <= n.std() <= sd * 1.02
    assert abs(n.mean()) < 3 * sd / math.sqrt(n.size)


@pytest.mark.parametrize("seed", range(5))
def test_gaussian_mean_z_bound(seed):
    n = add_gaussian(np.full((128, 128), 0.5), 50, seed=seed) - 0.5
    assert abs(n.mean()) < 3 * (50 / 255) / math.sqrt(n.size)


def test_gaussian_not_clipped():
    out = add_gaussian(np.zeros((64, 64)), 25, seed=0)
    assert out.min() < 0


def test_gaussian_determinism_and_seed_sensitivity():
    img = np.zeros((32, 32))
    a = add_gaussian(img, 25, seed=5)
    assert np.array_equal(a, add_gaussian(img, 25, seed=5))
    assert np.count_nonzero(a != add_gaussian(img, 25, seed=6)) > 0


def test_gaussian_rejects_negative_sigma():
    with pytest.raises(ValueError):
        add_gaussian(np.zeros((4, 4)), -1, seed=0)


def test_poisson_zero_image():
    assert not np.any(add_poisson(np.zeros((32, 32)), 30, seed=1))


def test_poisson_moments_inversion_branch():
    y = add_poisson(np.full((256, 256), 0.5), 30, seed=2)
    assert 0.5 * 0.98 <= y.mean() <= 0.5 * 1.02
    assert (0.5 / 30) * 0.95 <= y.var() <= (0.5 / 30) * 1.05


def test_poisson_moments_normal_branch():
    lam = 100.0  # mean 50 per pixel uses the normal approximation
    y = add_poisson(np.full((256, 256), 0.5), lam, seed=3)
    assert 0.5 * 0.98 <= y.mean() <= 0.5 * 1.02
    assert (0.5 / lam) * 0.95 <= y.var() <= (0.5 / lam) * 1.05


@pytest.mark.parametrize("lam", [30.0, 7.5, 100.0])
def test_poisson_output_times_lambda_is_integer(lam):
    # y * lam is an integer count up to the rounding of one division:
    # no double y has fl(y * 30) == 31, so exact float equality is unattainable
    img = np.random.default_rng(0).random((64, 64))
    y = add_poisson(img, lam, seed=4)
    k = np.rint(y * lam)
    np.testing.assert_array_equal(y, k / lam)
    assert np.all(np.abs(y * lam - k) <= np.spacing(np.maximum(k, 1.0)))


def test_poisson_counts_are_integers():
    k = poisson_counts(np.random.default_rng(0).random(5000) * 60, seed=1)
    assert k.dtype.kind == "i" and k.min() >= 0


@pytest.mark.parametrize("mu", [0.3, 3.0, 12.0, 29.0])
def test_poisson_inversion_distribution(mu):
    k = poisson_counts(np.full(40000, mu), seed=9)
    top = int(stats.poisson.ppf(0.999, mu))
    observed = np.bincount(np.minimum(k, top), minlength=top + 1)
    expected = stats.poisson.pmf(np.arange(top + 1), mu) * k.size
    expected[-1] += stats.poisson.sf(top, mu) * k.size
    keep = expected > 5
    chi2 = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-4


def test_poisson_determinism_and_errors():
    img = np.full((16, 16), 0.4)
    assert np.array_equal(add_poisson(img, 30, 1), add_poisson(img, 30, 1))
    assert np.count_nonzero(add_poisson(img, 30, 1) != add_poisson(img, 30, 2)) > 0
    for lam in (0, -3):
        with pytest.raises(ValueError):
            add_poisson(img, lam, 0)


def test_sample_level_fixed():
    assert sample_level(NoiseModel("gaussian_fixed", sigma=25), 0) == 25
    assert sample_level(NoiseModel("poisson_fixed", lam=30), 0) == 30


def test_sample_level_range_moments():
    m = NoiseModel("gaussian_range", sigma=(5, 50))
    draws = np.array([sample_level(m, derive_seed(0, i)) for i in range(10_000)])
    assert draws.min() >= 5 and draws.max() <= 50
    assert abs(draws.mean() - 27.5) < 0.5


def test_apply_noise_range_uses_per_image_level():
    m = NoiseModel("gaussian_range", sigma=(5, 50), seed=1)
    img = np.zeros((128, 128))
    sds = [apply_noise(m, img, seed=s).std() * 255 for s in range(4)]
    assert len({round(s, 3) for s in sds}) == 4
    assert all(4 < s < 51 for s in sds)


@pytest.mark.parametrize("bad", [
    dict(kind="gaussian_fixed", sigma=-1),
    dict(kind="gaussian_range", sigma=(9, 3)),
    dict(kind="poisson_fixed", lam=0),
    dict(kind="poisson_range", lam=5),
    dict(kind="gaussian_fixed"),
    dict(kind="speckle", sigma=3),
])
def test_noise_model_validation(bad):
    with pytest.raises(ValueError):
        NoiseModel(**bad)


def test_noise_model_dict_round_trip():
    d = {"kind": "poisson_range", "lambda": [5, 50], "seed": 7}
    m = NoiseModel.from_dict(d)
    assert m.lam == (5.0, 50.0)
    assert NoiseModel.from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        NoiseModel.from_dict({"kind": "gaussian_fixed", "sigma": 25, "mean": 0})


def test_derive_seed_independent_keys():
    seeds = {derive_seed(0, e, i) for e in range(5) for i in range(5)}
    assert len(seeds) == 25
    assert derive_seed(3, 1) == derive_seed(3, 1)
