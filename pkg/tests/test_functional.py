import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import correlate

from photobnn.errors import ValidationError
from photobnn.functional import (BinaryVector, BipolarVector, BitcountResult, activation_compare,
                                 binary_to_bipolar, bipolar_dot_from_bitcount, bipolar_to_binary,
                                 conv_reference, im2col, output_extent, quantize_sign, xnor_bit,
                                 xnor_dot)


def bits(n):
    return st.lists(st.integers(0, 1), min_size=n, max_size=n)


@st.composite
def vector_pair(draw, max_s=256):
    s = draw(st.integers(1, max_s))
    return BinaryVector(draw(bits(s))), BinaryVector(draw(bits(s)))


def correlate_oracle(x, w, stride, padding):
    """Bitcount via two cross-correlations: matching ones plus matching zeros."""
    x = np.pad(x.astype(np.int64), ((padding, padding), (padding, padding), (0, 0)))
    out = []
    for k in range(w.shape[0]):
        f = w[k].astype(np.int64)
        ones = correlate(x, f, mode="valid")[..., 0]
        zeros = correlate(1 - x, 1 - f, mode="valid")[..., 0]
        out.append((ones + zeros)[::stride, ::stride])
    return np.stack(out, axis=-1)


class TestVectors:
    def test_binary_vector_rejects_non_bits(self):
        with pytest.raises(ValidationError):
            BinaryVector([0, 2, 1])

    def test_bipolar_vector_rejects_zero(self):
        with pytest.raises(ValidationError):
            BipolarVector([1, 0, -1])

    def test_equality_and_hash(self):
        a, b = BinaryVector([1, 0, 1]), BinaryVector(np.array([1, 0, 1]))
        assert a == b and hash(a) == hash(b)
        assert a != BinaryVector([1, 1, 1])

    def test_bits_are_read_only(self):
        v = BinaryVector([1, 0])
        with pytest.raises(ValueError):
            v.bits[0] = 0

    def test_slice_and_complement(self):
        v = BinaryVector([1, 0, 0, 1, 1])
        assert v.slice(1, 3) == BinaryVector([0, 0, 1])
        assert v.complement() == BinaryVector([0, 1, 1, 0, 0])

    def test_bitcount_range_checked(self):
        with pytest.raises(ValidationError):
            BitcountResult(5, 4)
        with pytest.raises(ValidationError):
            BitcountResult(0, 0)


class TestXnor:
    @pytest.mark.parametrize("a,b,expected", [(0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)])
    def test_truth_table(self, a, b, expected):
        assert xnor_bit(a, b) == expected

    def test_xnor_bit_rejects_non_bits(self):
        with pytest.raises(ValidationError):
            xnor_bit(2, 1)

    def test_worked_example(self):
        r = xnor_dot(BinaryVector([1, 0, 1, 1]), BinaryVector([1, 1, 0, 1]))
        assert (r.z, r.z_max) == (2, 4)
        assert bipolar_dot_from_bitcount(r) == 0

    def test_size_mismatch(self):
        with pytest.raises(ValidationError):
            xnor_dot(BinaryVector([1, 0]), BinaryVector([1]))

    @given(vector_pair())
    def test_matches_elementwise_definition(self, pair):
        a, b = pair
        z = sum(xnor_bit(int(x), int(y)) for x, y in zip(a.bits, b.bits))
        assert xnor_dot(a, b).z == z

    @given(vector_pair())
    def test_bipolar_identity(self, pair):
        a, b = pair
        dot = int(np.dot(binary_to_bipolar(a).values.astype(int), binary_to_bipolar(b).values.astype(int)))
        assert dot == bipolar_dot_from_bitcount(xnor_dot(a, b))

    @given(vector_pair())
    def test_symmetric_and_complement_invariant(self, pair):
        a, b = pair
        assert xnor_dot(a, b) == xnor_dot(b, a)
        assert xnor_dot(a.complement(), b.complement()) == xnor_dot(a, b)
        assert xnor_dot(a, b.complement()).z == a.size - xnor_dot(a, b).z

    @given(vector_pair(), st.data())
    def test_split_additivity(self, pair, data):
        a, b = pair
        cut = data.draw(st.integers(0, a.size))
        left = xnor_dot(a.slice(0, cut), b.slice(0, cut)).z if cut else 0
        right = xnor_dot(a.slice(cut, a.size), b.slice(cut, a.size)).z if cut < a.size else 0
        assert left + right == xnor_dot(a, b).z


class TestBinarization:
    @pytest.mark.parametrize("x,expected", [(0.0, 1), (-0.0, 1), (2.5, 1), (-1e-12, -1)])
    def test_quantize_sign(self, x, expected):
        assert quantize_sign(x) == expected

    def test_quantize_rejects_nan(self):
        with pytest.raises(ValidationError):
            quantize_sign(float("nan"))

    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=64))
    def test_domain_round_trip(self, values):
        v = BipolarVector(values)
        assert np.array_equal(binary_to_bipolar(bipolar_to_binary(v)).values, v.values)


class TestActivation:
    @pytest.mark.parametrize("z,z_max,expected", [(3, 4, 1), (2, 4, 0), (1, 4, 0), (5, 9, 1), (4, 9, 0)])
    def test_threshold_is_strict(self, z, z_max, expected):
        assert activation_compare(BitcountResult(z, z_max)) == expected

    @given(st.integers(1, 500), st.data())
    def test_agrees_with_sign_of_bipolar_dot(self, z_max, data):
        z = data.draw(st.integers(0, z_max))
        r = BitcountResult(z, z_max)
        assert activation_compare(r) == (1 if bipolar_dot_from_bitcount(r) > 0 else 0)


class TestConvolution:
    @pytest.mark.parametrize("size,kernel,stride,padding,expected",
                             [(5, 3, 1, 0, 3), (5, 3, 2, 0, 2), (5, 3, 1, 1, 5), (1, 1, 1, 0, 1)])
    def test_output_extent(self, size, kernel, stride, padding, expected):
        assert output_extent(size, kernel, stride, padding) == expected

    def test_kernel_larger_than_input(self):
        with pytest.raises(ValidationError):
            output_extent(2, 3, 1, 0)

    def test_im2col_ordering(self):
        x = np.arange(2 * 2 * 2).reshape(2, 2, 2) % 2
        cols = im2col(x, (2, 2))
        assert cols.shape == (1, 8)
        assert cols[0].tolist() == x.reshape(-1).tolist()

    def test_im2col_zero_padding(self):
        cols = im2col(np.ones((1, 1, 1), dtype=np.int8), (3, 3), padding=1)
        assert cols.tolist() == [[0, 0, 0, 0, 1, 0, 0, 0, 0]]

    def test_shape(self):
        out = conv_reference(np.zeros((5, 5, 1)), np.zeros((1, 3, 3, 1)), stride=2)
        assert out.shape == (2, 2, 1)
        assert out.tolist() == [[[9], [9]], [[9], [9]]]

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_matches_correlation_oracle(self, data):
        kh, kw = data.draw(st.integers(1, 3)), data.draw(st.integers(1, 3))
        c, k = data.draw(st.integers(1, 4)), data.draw(st.integers(1, 3))
        stride, padding = data.draw(st.integers(1, 2)), data.draw(st.integers(0, 1))
        h = data.draw(st.integers(max(1, kh - 2 * padding), 7))
        w = data.draw(st.integers(max(1, kw - 2 * padding), 7))
        seed = data.draw(st.integers(0, 2**31))
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=(h, w, c))
        wt = rng.integers(0, 2, size=(k, kh, kw, c))
        assert np.array_equal(conv_reference(x, wt, stride, padding),
                              correlate_oracle(x, wt, stride, padding))

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            conv_reference(np.zeros((3, 3, 2)), np.zeros((1, 3, 3, 1)))
