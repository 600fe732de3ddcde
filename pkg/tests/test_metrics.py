import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advmark.metrics import (
    PSNR_CAP_DB,
    RGB_TO_YUV,
    YUV_OFFSET,
    bit_accuracy,
    psnr,
    rgb_to_yuv,
    threshold_bits,
    yuv_to_rgb,
)
from advmark.types import BitMessage, ContractViolation, SoftMessage


def const_image(value, size=8):
    return np.full((size, size, 3), value, dtype=np.float64)


class TestBitAccuracy:
    def test_exact_match_is_one(self, rng):
        truth = BitMessage.random(120, rng)
        assert bit_accuracy(SoftMessage(truth.bits.astype(float)), truth) == 1.0

    def test_complement_is_zero(self, rng):
        truth = BitMessage.random(120, rng)
        est = SoftMessage(1.0 - truth.bits)
        assert bit_accuracy(est, truth) == 0.0

    def test_half_correct(self, rng):
        truth = BitMessage.random(120, rng)
        values = truth.bits.astype(float)
        values[:60] = 1.0 - values[:60]
        assert bit_accuracy(SoftMessage(values), truth) == 0.5

    def test_length_mismatch_raises(self, rng):
        with pytest.raises(ContractViolation):
            bit_accuracy(SoftMessage(np.zeros(10)), BitMessage.random(12, rng))

    def test_tie_rounds_to_one(self):
        assert threshold_bits([0.5]).tolist() == [1]

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=64))
    def test_binarized_soft_message_scores_one_when_away_from_half(self, values):
        vals = np.asarray(values)
        vals = np.where(np.abs(vals - 0.5) < 0.05, 0.9, vals)
        assert bit_accuracy(SoftMessage(vals), BitMessage(threshold_bits(vals))) == 1.0


class TestPsnr:
    def test_identical_images_hit_cap(self):
        img = const_image(0.25)
        assert psnr(img, img) == PSNR_CAP_DB

    def test_uniform_offset_of_point_one_is_twenty_db(self):
        a = const_image(0.4)
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ContractViolation):
            psnr(const_image(0.1, 8), const_image(0.1, 9))

    def test_unknown_channel_rejected(self):
        with pytest.raises(ContractViolation):
            psnr(const_image(0.1), const_image(0.2), channels="q")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.random((8, 8, 3)), r.random((8, 8, 3))
        for chan in ("rgb", "y", "u", "v"):
            assert psnr(a, b, chan) == pytest.approx(psnr(b, a, chan), rel=1e-12)

    def test_monotone_in_perturbation_size(self, rng):
        base = rng.random((16, 16, 3)) * 0.5
        values = [psnr(base, np.clip(base + eps, 0, 1)) for eps in (0.01, 0.05, 0.1, 0.2)]
        assert all(x > y for x, y in zip(values, values[1:]))


class TestYuv:
    def test_black_maps_to_centered_chroma(self):
        out = rgb_to_yuv(const_image(0.0))
        assert np.allclose(out[0, 0], [0.0, 0.5, 0.5], atol=1e-12)

    def test_white_maps_to_unit_luma(self):
        out = rgb_to_yuv(const_image(1.0))
        assert np.allclose(out[0, 0], [1.0, 0.5, 0.5], atol=1e-12)

    def test_round_trip_within_1e6(self, rng):
        img = rng.random((16, 16, 3))
        # oracle: analytic inverse of the published forward matrix
        inverse = np.linalg.inv(
            np.array(
                [
                    [0.299, 0.587, 0.114],
                    [-0.168736, -0.331264, 0.5],
                    [0.5, -0.418688, -0.081312],
                ]
            )
        )
        yuv = rgb_to_yuv(img)
        by_oracle = (yuv - YUV_OFFSET) @ inverse.T
        assert np.abs(by_oracle - img).max() < 1e-6
        assert np.abs(yuv_to_rgb(yuv) - img).max() < 1e-6

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_linearity_up_to_chroma_offset(self, seed, alpha):
        r = np.random.default_rng(seed)
        a, b = r.random((8, 8, 3)), r.random((8, 8, 3))
        mixed = rgb_to_yuv(alpha * a + (1 - alpha) * b)
        combo = alpha * rgb_to_yuv(a) + (1 - alpha) * rgb_to_yuv(b)
        assert np.abs(mixed - combo).max() < 1e-9  # offset cancels in the convex mix

    def test_forward_matrix_rows_sum_as_documented(self):
        sums = RGB_TO_YUV.sum(axis=1)
        assert sums[0] == pytest.approx(1.0)
        assert sums[1] == pytest.approx(0.0, abs=1e-12)
        assert sums[2] == pytest.approx(0.0, abs=1e-12)


class TestMessageTypes:
    def test_bits_validated(self):
        with pytest.raises(ContractViolation):
            BitMessage(np.array([0, 1, 2]))

    def test_bits_immutable(self, rng):
        msg = BitMessage.random(16, rng)
        with pytest.raises(ValueError):
            msg.bits[0] = 1

    def test_string_round_trip(self, rng):
        msg = BitMessage.random(30, rng)
        assert BitMessage.from_string(msg.to_string()) == msg

    def test_hex_round_trip(self, rng):
        msg = BitMessage.random(32, rng)
        assert BitMessage.from_hex(msg.to_hex(), 32) == msg

    def test_hex_requires_multiple_of_four(self, rng):
        with pytest.raises(ContractViolation):
            BitMessage.random(30, rng).to_hex()
