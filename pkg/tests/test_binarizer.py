"""Binarization scheme, tensor scan coding, and matrix conversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcnb.bacore import ArithDecoder, ArithEncoder
from dcnb.binarizer import (Bin, BinarizationParams, QuantIndexTensor,
                            binarize_index, decode_tensor, encode_tensor,
                            matrixify, min_remainder_bits)
from dcnb.ctxmodel import ContextSet

from reference import ref_bin_string


def code_roundtrip(indices, rows, cols, n, remainder_bits, shift=4):
    params = BinarizationParams(n, remainder_bits)
    q = QuantIndexTensor(rows, cols, np.asarray(indices, dtype=np.int32))
    enc = ArithEncoder()
    encode_tensor(q, params, ContextSet(n, shift), enc)
    payload = enc.terminate()
    out = decode_tensor((rows, cols), params, ContextSet(n, shift),
                        ArithDecoder(payload))
    return payload, out


class TestBinarizeIndex:
    def test_zero_is_single_sig_bin(self):
        for params in (BinarizationParams(0, 0), BinarizationParams(4, 7)):
            assert binarize_index(0, params) == [Bin("sig", 0)]

    def test_positive_three_with_remainder(self):
        got = binarize_index(3, BinarizationParams(2, 4))
        assert got == [Bin("sig", 1), Bin("sign", 0), Bin("gr1", 1),
                       Bin("gr2", 1), Bin("rem", 0), Bin("rem", 0),
                       Bin("rem", 0), Bin("rem", 0)]

    def test_negative_two_truncates_at_first_zero_flag(self):
        got = binarize_index(-2, BinarizationParams(4, 4))
        assert got == [Bin("sig", 1), Bin("sign", 1), Bin("gr1", 1),
                       Bin("gr2", 0)]

    def test_remainder_is_msb_first(self):
        # |v| = n + 1 + 0b101
        got = binarize_index(4 + 1 + 5, BinarizationParams(4, 3))
        assert [b.bit for b in got if b.channel == "rem"] == [1, 0, 1]

    def test_overflow_names_the_value(self):
        with pytest.raises(ValueError, match="17"):
            binarize_index(17, BinarizationParams(4, 2))  # max is 4 + 4 = 8

    @pytest.mark.parametrize("n", range(0, 9))
    def test_matches_reference_scheme(self, n):
        rb = 5
        params = BinarizationParams(n, rb)
        for v in range(-(params.max_magnitude), params.max_magnitude + 1):
            assert [(b.channel, b.bit) for b in binarize_index(v, params)] \
                == ref_bin_string(v, n, rb)

    @pytest.mark.parametrize("n", [0, 1, 4, 8])
    def test_bin_count_formula(self, n):
        rb = 6
        params = BinarizationParams(n, rb)
        for v in range(-params.max_magnitude, params.max_magnitude + 1):
            count = len(binarize_index(v, params))
            if v == 0:
                assert count == 1
            else:
                expected = 2 + min(abs(v), n) + (rb if abs(v) > n else 0)
                assert count == expected


class TestMinRemainderBits:
    def test_values(self):
        assert min_remainder_bits(0, 4) == 0
        assert min_remainder_bits(4, 4) == 0
        assert min_remainder_bits(5, 4) == 0   # remainder always 0
        assert min_remainder_bits(6, 4) == 1
        assert min_remainder_bits(20, 4) == 4
        assert min_remainder_bits(1, 0) == 0
        assert min_remainder_bits(8, 0) == 3
        assert min_remainder_bits(9, 0) == 4

    @pytest.mark.parametrize("n", [0, 2, 5])
    def test_width_always_covers(self, n):
        for max_abs in range(0, 200):
            rb = min_remainder_bits(max_abs, n)
            assert max_abs <= BinarizationParams(n, rb).max_magnitude


class TestTensorCoding:
    def test_all_zero_tensor_payload_bound(self):
        payload, out = code_roundtrip(np.zeros(10_000, np.int32), 100, 100,
                                      n=4, remainder_bits=0)
        assert len(payload) <= 130
        assert not out.indices.any()

    def test_single_one(self):
        payload, out = code_roundtrip([1], 1, 1, n=1, remainder_bits=0)
        # Three bins against fresh models plus termination.
        assert len(payload) <= 3
        assert out.indices.tolist() == [1]

    def test_sparse_random_roundtrip(self):
        rng = np.random.default_rng(12)
        idx = rng.integers(-30, 31, size=40 * 25).astype(np.int32)
        idx[rng.random(idx.size) < 0.8] = 0
        payload, out = code_roundtrip(idx, 40, 25, n=4,
                                      remainder_bits=min_remainder_bits(30, 4))
        assert np.array_equal(out.indices, idx)

    def test_scan_order_sensitivity(self):
        # The same multiset of values in a different row order may code to a
        # different payload; decode still restores each ordering exactly.
        rng = np.random.default_rng(3)
        mat = rng.integers(-4, 5, size=(16, 16)).astype(np.int32)
        mat[rng.random(mat.shape) < 0.6] = 0
        rb = min_remainder_bits(4, 2)
        pay_a, out_a = code_roundtrip(mat.ravel(), 16, 16, 2, rb)
        flipped = mat[::-1].copy()
        pay_b, out_b = code_roundtrip(flipped.ravel(), 16, 16, 2, rb)
        assert np.array_equal(out_a.as_matrix(), mat)
        assert np.array_equal(out_b.as_matrix(), flipped)
        assert pay_a != pay_b

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            QuantIndexTensor(3, 3, np.zeros(8, np.int32))

    def test_overflowing_index_propagates(self):
        q = QuantIndexTensor(1, 2, np.array([0, 99], np.int32))
        with pytest.raises(ValueError, match="99"):
            encode_tensor(q, BinarizationParams(2, 3), ContextSet(2),
                          ArithEncoder())

    def test_decode_truncated_payload_errors(self):
        from dcnb.bacore import PayloadTruncatedError
        rng = np.random.default_rng(6)
        idx = rng.integers(-6, 7, size=30 * 30).astype(np.int32)
        params = BinarizationParams(3, 3)
        enc = ArithEncoder()
        encode_tensor(QuantIndexTensor(30, 30, idx), params, ContextSet(3), enc)
        payload = enc.terminate()
        with pytest.raises(PayloadTruncatedError):
            decode_tensor((30, 30), params, ContextSet(3),
                          ArithDecoder(payload[:len(payload) // 2]))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(0, 8),
    rows=st.integers(1, 12),
    cols=st.integers(1, 12),
    zero_bias=st.floats(0.0, 1.0),
    data=st.data(),
)
def test_bijection_property(n, rows, cols, zero_bias, data):
    size = rows * cols
    max_mag = n + (1 << 4)
    vals = data.draw(st.lists(
        st.integers(-max_mag, max_mag), min_size=size, max_size=size))
    mask = data.draw(st.lists(st.booleans(), min_size=size, max_size=size))
    idx = np.array([0 if (m and zero_bias > 0.3) else v
                    for v, m in zip(vals, mask)], dtype=np.int32)
    _, out = code_roundtrip(idx, rows, cols, n, remainder_bits=4)
    assert np.array_equal(out.indices, idx)


class TestMatrixify:
    def test_conv_shape(self):
        arr = np.zeros((8, 3, 2, 2), np.float32)
        assert matrixify(arr).shape == (8, 12)

    def test_rank2_identity(self):
        arr = np.arange(300 * 100, dtype=np.float32).reshape(300, 100)
        out = matrixify(arr)
        assert out.shape == (300, 100)
        assert np.array_equal(out, arr)

    def test_element_position(self):
        arr = np.zeros((4, 3, 2, 2), np.float32)
        arr[1, 2, 1, 0] = 7.0
        out = matrixify(arr)
        assert out[1, 2 * 4 + 1 * 2 + 0] == 7.0

    def test_unsupported_rank(self):
        with pytest.raises(ValueError):
            matrixify(np.zeros((2, 2, 2), np.float32))
