import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fctnfuse.metrics import (
    CSV_FIELDS,
    PSNR_CAP,
    append_csv,
    ergas,
    evaluate,
    psnr,
    read_csv,
    sam,
    uiqi,
)


def test_psnr_identical_is_capped(rng):
    x = rng.random((4, 4, 3))
    per_band, mean = psnr(x, x)
    assert mean == PSNR_CAP and np.all(per_band == PSNR_CAP)


def test_psnr_hand_value():
    ref = np.ones((4, 4, 1))
    assert psnr(ref, ref + 0.1)[1] == pytest.approx(20.0, abs=1e-9)


def test_psnr_decreases_with_error(rng):
    ref = rng.random((6, 6, 2))
    noise = rng.standard_normal(ref.shape)
    values = [psnr(ref, ref + a * noise)[1] for a in (0.01, 0.05, 0.2)]
    assert values[0] > values[1] > values[2]


def test_psnr_peak_is_per_band():
    ref = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 10.0)], axis=2)
    per_band, _ = psnr(ref, ref + 0.1)
    assert per_band == pytest.approx([20.0, 40.0])


def test_sam_examples():
    ref = np.array([[[1.0, 0.0]]])
    assert sam(ref, np.array([[[1.0, 1.0]]])) == pytest.approx(45.0)
    assert sam(ref, np.array([[[0.0, 2.0]]])) == pytest.approx(90.0)
    assert sam(ref, 3 * ref) == pytest.approx(0.0, abs=1e-6)


def test_sam_skips_zero_pixels():
    ref = np.array([[[1.0, 0.0], [0.0, 0.0]]])
    est = np.array([[[1.0, 1.0], [1.0, 1.0]]])
    value, skipped = sam(ref, est, return_skipped=True)
    assert value == pytest.approx(45.0) and skipped == 1


@settings(max_examples=50, deadline=None)
@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 2**32 - 1))
def test_sam_scale_invariance(c, seed):
    ref = np.random.default_rng(seed).random((5, 4, 6)) + 0.01
    assert sam(ref, c * ref) <= 1e-5


def test_ergas_examples(rng):
    x = rng.random((4, 4, 3)) + 0.5
    assert ergas(x, x, 4) == 0
    noisy = x + 0.1 * rng.standard_normal(x.shape)
    assert ergas(x, noisy, 8) == pytest.approx(ergas(x, noisy, 4) / 2)
    ref = np.full((10, 10, 1), 2.0)
    est = ref + 0.2 * np.where(np.arange(100).reshape(10, 10, 1) % 2, 1, -1)  # MSE 0.04
    assert ergas(ref, est, 8) == pytest.approx(1.25)


def two_pass_ergas(ref, est, p):
    total = 0.0
    s = ref.shape[2]
    for b in range(s):
        mu = ref[:, :, b].sum() / ref[:, :, b].size
        mse = ((ref[:, :, b] - est[:, :, b]) ** 2).sum() / ref[:, :, b].size
        total += mse / mu**2
    return 100 / p * math.sqrt(total / s)


def test_ergas_two_pass_oracle(rng):
    for _ in range(10):
        ref = rng.random((5, 6, 4)) + 0.2
        est = ref + 0.05 * rng.standard_normal(ref.shape)
        assert ergas(ref, est, 3) == pytest.approx(two_pass_ergas(ref, est, 3), rel=1e-12)


def test_ergas_zero_mean_band_skipped(rng):
    ref = rng.random((4, 4, 2))
    ref[:, :, 1] = 0
    with pytest.warns(UserWarning):
        value = ergas(ref, ref + 0.01, 2)
    assert np.isfinite(value)


def direct_uiqi(x, y):
    mx, my = x.mean(), y.mean()
    vx = ((x - mx) ** 2).mean()
    vy = ((y - my) ** 2).mean()
    c = ((x - mx) * (y - my)).mean()
    return 4 * c * mx * my / ((vx + vy) * (mx**2 + my**2))


def test_uiqi_identity_and_single_block(rng):
    x = rng.random((8, 8, 2)) + 0.1
    assert uiqi(x, x) == pytest.approx(1.0)
    y = x + 0.1 * rng.standard_normal(x.shape)
    want = np.mean([direct_uiqi(x[:, :, b], y[:, :, b]) for b in range(2)])
    assert uiqi(x, y, window=8) == pytest.approx(want)


def test_uiqi_anticorrelated_block():
    x = np.arange(16, dtype=float).reshape(4, 4, 1) + 1
    mirrored = 2 * x.mean() - x  # same mean, covariance -var
    assert uiqi(x, mirrored, window=4) == pytest.approx(-1.0)
    # plain negation flips both the covariance and the mean product
    assert uiqi(x, -x, window=4) == pytest.approx(1.0)


def test_uiqi_skips_degenerate_blocks():
    zero = np.zeros((4, 4, 1))
    assert math.isnan(uiqi(zero, zero, window=2))
    x = np.zeros((4, 4, 1))
    x[:2, :2, 0] = [[1.0, 2.0], [3.0, 4.0]]
    # only the top-left 2x2 block is nondegenerate
    assert uiqi(x, x, window=2) == pytest.approx(1.0)


def test_uiqi_window_validation(rng):
    with pytest.raises(ValueError):
        uiqi(rng.random((4, 4, 1)), rng.random((4, 4, 1)), window=5)


def test_shape_mismatch_errors(rng):
    for fn in (lambda a, b: psnr(a, b), sam, lambda a, b: ergas(a, b, 2), uiqi):
        with pytest.raises(ValueError):
            fn(rng.random((2, 2, 2)), rng.random((2, 2, 3)))


def test_metrics_permutation_equivariant(rng):
    ref = rng.random((6, 6, 4)) + 0.1
    est = ref + 0.05 * rng.standard_normal(ref.shape)
    perm = rng.permutation(36)
    pr = ref.reshape(36, 4)[perm].reshape(6, 6, 4)
    pe = est.reshape(36, 4)[perm].reshape(6, 6, 4)
    assert psnr(ref, est)[1] == pytest.approx(psnr(pr, pe)[1])
    assert sam(ref, est) == pytest.approx(sam(pr, pe))
    assert ergas(ref, est, 4) == pytest.approx(ergas(pr, pe, 4))


def test_csv_roundtrip(tmp_path, rng):
    ref = rng.random((8, 8, 3)) + 0.1
    report = evaluate(ref, ref * 1.01, 4)
    path = tmp_path / "m.csv"
    append_csv(path, [report.row("a", 3, 0.5)])
    append_csv(path, [report.row("b", 4, 0.6)])
    rows = read_csv(path)
    assert [r["run_id"] for r in rows] == ["a", "b"]
    assert tuple(rows[0]) == CSV_FIELDS
    assert float(rows[0]["psnr_db"]) == report.psnr_db
