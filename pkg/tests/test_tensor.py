import numpy as np
import pytest
from hypothesis import given, strategies as st

from tunet.errors import ShapeError
from tunet.tensor import concat_channels, flat_offset, split_channels_grad, zeros


def test_paper_skip_concat_doubles_channels():
    a = np.zeros((1, 128, 96))
    assert concat_channels(a, a).shape == (1, 256, 96)


def test_concat_zeros_ones():
    out = concat_channels(np.zeros((1, 1, 4)), np.ones((1, 1, 4)))
    assert out.shape == (1, 2, 4)
    assert np.all(out[0, 0] == 0) and np.all(out[0, 1] == 1)
    left, right = split_channels_grad(out, 1)
    assert np.all(left == 0) and np.all(right == 1)


def test_concat_index_sweep(rng):
    a = rng.standard_normal((2, 3, 5))
    b = rng.standard_normal((2, 4, 5))
    out = concat_channels(a, b)
    assert out.shape == (2, 7, 5)
    for i in range(2):
        for c in range(7):
            for t in range(5):
                expected = a[i, c, t] if c < 3 else b[i, c - 3, t]
                assert out[i, c, t] == expected


def test_split_shapes():
    left, right = split_channels_grad(np.zeros((1, 7, 5)), 3)
    assert left.shape == (1, 3, 5) and right.shape == (1, 4, 5)


@pytest.mark.parametrize("split_at", [0, 7, -1])
def test_split_out_of_range(split_at):
    with pytest.raises(ShapeError):
        split_channels_grad(np.zeros((1, 7, 5)), split_at)


@pytest.mark.parametrize("sa,sb", [((1, 2, 4), (2, 2, 4)), ((1, 2, 4), (1, 2, 5))])
def test_concat_mismatch(sa, sb):
    with pytest.raises(ShapeError):
        concat_channels(np.zeros(sa), np.zeros(sb))


@given(
    st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1)
)
def test_concat_split_roundtrip(batch, ca, cb, length, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((batch, ca, length))
    b = r.standard_normal((batch, cb, length))
    left, right = split_channels_grad(concat_channels(a, b), ca)
    np.testing.assert_array_equal(left, a)
    np.testing.assert_array_equal(right, b)
    np.testing.assert_array_equal(concat_channels(left, right), concat_channels(a, b))


def test_flat_offset_counter_pattern():
    shape = (2, 3, 5)
    arr = np.arange(np.prod(shape), dtype=np.float64).reshape(shape)
    flat = arr.ravel()
    for b in range(2):
        for c in range(3):
            for t in range(5):
                assert flat[flat_offset(shape, b, c, t)] == arr[b, c, t]


def test_precision_selection():
    assert zeros(1, 2, 3, 32).dtype == np.float32
    assert zeros(1, 2, 3, 64).dtype == np.float64
    with pytest.raises(ShapeError):
        zeros(1, 1, 1, 16)
