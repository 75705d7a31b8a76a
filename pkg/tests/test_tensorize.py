import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fctnfuse.fctn import contract_full, random_init, rank_matrix
from fctnfuse.tensor import reshape
from fctnfuse.tensorize import (
    DegradationModel,
    TensorizationPlan,
    add_noise,
    box_srf,
    detensorize,
    downsample_first_factor,
    load_srf,
    normalize_srf,
    save_srf,
    spatial_downsample,
    spectral_downsample,
    tensorize,
)


def stochastic(rng, shape):
    r = rng.random(shape)
    return r / r.sum(axis=1, keepdims=True)


def test_plan_parse_and_shapes():
    plan = TensorizationPlan.parse("8x8,5x5,2x2,3x3", 128)
    assert plan.image_shape == (240, 240, 128)
    assert plan.tensor_shape == (64, 25, 4, 9, 128)
    assert str(plan) == "8x8,5x5,2x2,3x3"
    assert plan.downsampled(8).tensor_shape == (1, 25, 4, 9, 128)
    with pytest.raises(ValueError):
        TensorizationPlan.parse("8by8", 3)
    with pytest.raises(ValueError):
        plan.downsampled(3)


def test_tensorize_index_map_exhaustive():
    plan = TensorizationPlan((2, 2), (2, 2), 1)
    x = np.arange(16, dtype=float).reshape(4, 4, 1)
    t = tensorize(x, plan)
    assert t.shape == (4, 4, 1)
    for r in range(4):
        for c in range(4):
            m1, m2 = r % 2, r // 2
            n1, n2 = c % 2, c // 2
            assert t[m1 + 2 * n1, m2 + 2 * n2, 0] == x[r, c, 0]
    # pixel (row 2, col 1) 1-based -> mode-1 index 2, mode-2 index 1
    assert t[1, 0, 0] == x[1, 0, 0]


def test_tensorize_single_scale_is_reshape(rng):
    plan = TensorizationPlan((3,), (4,), 2)
    x = rng.standard_normal((3, 4, 2))
    assert np.array_equal(tensorize(x, plan), reshape(x, (12, 2)))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_tensorize_roundtrip(d, seed):
    rng = np.random.default_rng(seed)
    plan = TensorizationPlan(tuple(rng.integers(1, 4, d)), tuple(rng.integers(1, 4, d)),
                             int(rng.integers(1, 4)))
    x = rng.standard_normal(plan.image_shape)
    t = tensorize(x, plan)
    assert np.array_equal(detensorize(t, plan), x)
    assert np.array_equal(np.sort(t.ravel()), np.sort(x.ravel()))


def test_tensorize_shape_errors(rng):
    plan = TensorizationPlan((2, 2), (2, 2), 3)
    with pytest.raises(ValueError):
        tensorize(rng.standard_normal((4, 5, 3)), plan)
    with pytest.raises(ValueError):
        detensorize(rng.standard_normal((4, 4, 2)), plan)


def test_spatial_downsample_examples(rng):
    c = np.full((4, 6, 2), 0.7)
    assert np.allclose(spatial_downsample(c, 2), 0.7)
    x = rng.standard_normal((4, 6, 2))
    assert np.array_equal(spatial_downsample(x, 1), x)
    ramp = np.arange(1, 17, dtype=float).reshape((4, 4, 1), order="F")
    out = spatial_downsample(ramp, 2)[:, :, 0]
    # block means by hand: {1,2,5,6}, {3,4,7,8}, {9,10,13,14}, {11,12,15,16}
    assert np.array_equal(out.ravel(order="F"), [3.5, 5.5, 11.5, 13.5])
    with pytest.raises(ValueError):
        spatial_downsample(x, 4)


def test_spectral_downsample(rng):
    x = rng.standard_normal((2, 2, 4))
    assert np.allclose(spectral_downsample(x, np.eye(4)), x)
    mean = spectral_downsample(x, np.full((1, 4), 0.25))
    assert np.allclose(mean[:, :, 0], x.mean(axis=2))
    r = stochastic(rng, (2, 4))
    out = spectral_downsample(x, r)
    for i in range(2):
        for j in range(2):
            assert np.allclose(out[i, j], r @ x[i, j])
    with pytest.raises(ValueError):
        spectral_downsample(x, np.ones((2, 3)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_downsample_commutes_with_tensorize(seed):
    rng = np.random.default_rng(seed)
    plan = TensorizationPlan((4, 3), (6, 2), 3)
    x = rng.standard_normal(plan.image_shape)
    tx = tensorize(x, plan)
    lr = tensorize(spatial_downsample(x, 2), plan.downsampled(2))
    within = downsample_first_factor(tx, 2, plan)
    assert np.max(np.abs(within - lr)) <= 1e-12


def test_spectral_commutes_with_tensorize(rng):
    plan = TensorizationPlan((2, 2), (3, 2), 5)
    x = rng.standard_normal(plan.image_shape)
    r = stochastic(rng, (2, 5))
    a = tensorize(spectral_downsample(x, r), plan.with_bands(2))
    from fctnfuse.tensor import mode_n_product
    b = mode_n_product(tensorize(x, plan), r, 2)
    assert np.allclose(a, b, atol=1e-14)


def test_downsample_first_factor_cases(rng):
    plan = TensorizationPlan((4, 2), (4, 2), 3)
    u1 = rng.standard_normal((16, 2, 3))
    full = downsample_first_factor(u1, 4, plan)
    assert full.shape == (1, 2, 3)
    assert np.allclose(full[0], u1.mean(axis=0))
    assert np.array_equal(downsample_first_factor(u1, 1, plan), u1)
    with pytest.raises(ValueError):
        downsample_first_factor(u1, 3, plan)


def test_downsample_first_factor_matches_image_space():
    plan = TensorizationPlan((4, 2), (4, 3), 3)
    f = random_init(rank_matrix(3, 2), plan.tensor_shape, seed=3)
    x = detensorize(contract_full(f), plan)
    lr = tensorize(spatial_downsample(x, 2), plan.downsampled(2))
    q = downsample_first_factor(f[0], 2, plan)
    assert np.allclose(contract_full(f.replace(0, q)), lr, atol=1e-12)


def test_noise_limits_and_determinism(rng):
    x = rng.random((8, 8, 4))
    assert np.allclose(add_noise(x, 300, seed=1), x, atol=1e-10)
    assert np.array_equal(add_noise(x, 20, seed=5), add_noise(x, 20, seed=5))
    assert not np.array_equal(add_noise(x, 20, seed=5), add_noise(x, 20, seed=6))
    assert np.array_equal(add_noise(x, None, seed=1), x)
    with pytest.raises(ValueError):
        add_noise(x, float("inf"), 0)


def empirical_snr(x, y):
    return 10 * np.log10(np.sum(x**2) / np.sum((y - x) ** 2))


def test_noise_snr_large_tensor():
    x = np.random.default_rng(0).random((256, 256, 256))
    y = add_noise(x, 25.0, seed=7)
    assert abs(empirical_snr(x, y) - 25.0) <= 0.2


@settings(max_examples=10, deadline=None)
@given(snr=st.floats(0, 40), seed=st.integers(0, 2**32 - 1))
def test_noise_snr_property(snr, seed):
    x = np.random.default_rng(seed).random((30, 30, 12)) + 0.1
    y = add_noise(x, snr, seed)
    assert abs(empirical_snr(x, y) - snr) <= 0.5


def test_srf_io_and_normalization(tmp_path):
    srf = box_srf(3, 8)
    assert np.allclose(srf.sum(axis=1), 1) and np.all(srf >= 0)
    save_srf(tmp_path / "srf.csv", 2 * srf)
    with pytest.warns(UserWarning):
        back = load_srf(tmp_path / "srf.csv")
    assert np.allclose(back, srf, atol=1e-15)
    with pytest.raises(ValueError):
        normalize_srf([[1.0, -0.5]])


def test_degradation_model(rng):
    plan = TensorizationPlan((4, 2), (4, 2), 6)
    x = rng.random(plan.image_shape)
    model = DegradationModel(box_srf(2, 6), 4)
    model.check_plan(plan)
    y, z = model.observe(x)
    assert y.shape == (2, 2, 6) and z.shape == (8, 8, 2)
    assert np.allclose(y, spatial_downsample(x, 4))
    with pytest.raises(ValueError):
        DegradationModel(box_srf(2, 6), 3).check_plan(plan)
