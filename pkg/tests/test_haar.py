import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdfm import precision
from fdfm.errors import DimensionError
from fdfm.haar import FreqState, analysis_matrix, dwt2, idwt2

pixel_shapes = st.tuples(
    st.integers(1, 3), st.sampled_from([2, 4, 6, 8]), st.sampled_from([2, 4, 6, 8])
)


def random_pixels(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def test_constant_image_low_band():
    # each 2x2 block of value v sums to 4v, scaled by the 1/2 tap
    for v in (0.5, -1.0, 3.25):
        s = dwt2(np.full((2, 4, 6), v))
        assert np.allclose(s.low, 2.0 * v, atol=0)
        assert np.all(s.high == 0.0)


def test_unit_impulse_energy():
    x = np.zeros((1, 4, 4))
    x[0, 1, 2] = 1.0
    s = dwt2(x)
    assert abs(s.energy() - 1.0) < 1e-14


def test_single_block_matches_dense_matrix():
    # the per-block transform is an orthonormal 4x4 map; fix its sign convention
    m = analysis_matrix(1, 2, 2)
    assert np.allclose(m @ m.T, np.eye(4), atol=1e-14)
    assert np.allclose(m.T @ m, np.eye(4), atol=1e-14)
    a, b, c, d = 0.3, -1.2, 2.0, 0.7
    s = dwt2(np.array([[[a, b], [c, d]]]))
    assert s.low[0, 0, 0] == pytest.approx((a + b + c + d) / 2, abs=1e-15)
    coords = m @ np.array([a, b, c, d])
    assert np.allclose(s.ravel(), coords, atol=1e-15)
    # and the dense matrix inverts exactly
    assert np.allclose(m.T @ coords, [a, b, c, d], atol=1e-15)


def test_subband_order_lh_hl_hh():
    # vertical difference excites only the LH block (first C channels of high)
    c = 2
    rows = np.zeros((c, 4, 4))
    rows[:, 0::2, :] = 1.0  # varies down rows within each block
    s = dwt2(rows)
    lh, hl, hh = s.high[:c], s.high[c : 2 * c], s.high[2 * c :]
    assert np.all(lh == 1.0) and np.all(hl == 0.0) and np.all(hh == 0.0)
    cols = np.zeros((c, 4, 4))
    cols[:, :, 0::2] = 1.0
    s = dwt2(cols)
    lh, hl, hh = s.high[:c], s.high[c : 2 * c], s.high[2 * c :]
    assert np.all(hl == 1.0) and np.all(lh == 0.0) and np.all(hh == 0.0)


@settings(max_examples=80, deadline=None)
@given(shape=pixel_shapes, seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(shape, seed):
    x = random_pixels(shape, seed)
    assert np.max(np.abs(idwt2(dwt2(x)) - x)) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(shape=pixel_shapes, seed=st.integers(0, 2**32 - 1))
def test_parseval_property(shape, seed):
    x = random_pixels(shape, seed)
    ex = float(np.sum(x * x))
    assert abs(ex - dwt2(x).energy()) <= 1e-10 * ex


@settings(max_examples=40, deadline=None)
@given(
    shape=pixel_shapes,
    seed=st.integers(0, 2**32 - 1),
    alpha=st.floats(-3, 3),
    beta=st.floats(-3, 3),
)
def test_linearity(shape, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(shape), rng.standard_normal(shape)
    s = dwt2(alpha * x + beta * y)
    sx, sy = dwt2(x), dwt2(y)
    assert np.max(np.abs(s.low - (alpha * sx.low + beta * sy.low))) <= 1e-12
    assert np.max(np.abs(s.high - (alpha * sx.high + beta * sy.high))) <= 1e-12


def test_reverse_roundtrip_from_bands():
    rng = np.random.default_rng(5)
    s = FreqState(low=rng.standard_normal((2, 3, 4)), high=rng.standard_normal((6, 3, 4)))
    back = dwt2(idwt2(s))
    assert np.max(np.abs(back.low - s.low)) <= 1e-12
    assert np.max(np.abs(back.high - s.high)) <= 1e-12


def test_zero_state_roundtrip():
    s = FreqState(low=np.zeros((1, 2, 2)), high=np.zeros((3, 2, 2)))
    assert np.all(idwt2(s) == 0.0)


def test_batched_matches_loop():
    rng = np.random.default_rng(9)
    batch = rng.standard_normal((5, 2, 4, 4))
    s = dwt2(batch)
    for i in range(5):
        si = dwt2(batch[i])
        assert np.array_equal(s.low[i], si.low)
        assert np.array_equal(s.high[i], si.high)
    assert np.array_equal(idwt2(s), np.stack([idwt2(dwt2(b)) for b in batch]))


def test_ravel_unravel():
    rng = np.random.default_rng(3)
    s = dwt2(rng.standard_normal((4, 2, 4, 6)))
    coords = s.ravel()
    back = FreqState.unravel(coords, s.low.shape[-3:])
    assert np.array_equal(back.low, s.low)
    assert np.array_equal(back.high, s.high)


def test_odd_dims_rejected():
    with pytest.raises(DimensionError):
        dwt2(np.zeros((1, 3, 4)))
    with pytest.raises(DimensionError):
        dwt2(np.zeros((1, 4, 5)))


def test_nonfinite_rejected():
    x = np.zeros((1, 2, 2))
    x[0, 0, 0] = np.inf
    with pytest.raises(DimensionError):
        dwt2(x)


def test_inconsistent_bands_rejected():
    with pytest.raises(DimensionError):
        FreqState(low=np.zeros((1, 2, 2)), high=np.zeros((4, 2, 2)))
    with pytest.raises(DimensionError):
        FreqState(low=np.zeros((1, 2, 2)), high=np.zeros((3, 2, 3)))


def test_float32_coercion_and_flag():
    x32 = np.ones((1, 2, 2), dtype=np.float32)
    assert dwt2(x32).low.dtype == np.float64
    precision.allow_float32(True)
    try:
        assert dwt2(x32).low.dtype == np.float32
    finally:
        precision.allow_float32(False)
