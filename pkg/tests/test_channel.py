import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advmark.channel import (
    ChannelCoder,
    ChannelConfig,
    bsc_corrupt,
    channel_decode,
    channel_encode,
    load_channel,
    robustness_curve,
    save_channel,
    train_channel,
    write_curve_csv,
)
from advmark.types import BitMessage, ContractViolation, SoftMessage

TINY = dict(source_len=12, code_len=36, hidden_widths=(128, 128), batch_size=128)


@pytest.fixture(scope="module")
def noiseless_codec():
    cfg = ChannelConfig(train_noise_max=0.0, train_steps=400, **TINY)
    return train_channel(cfg, np.random.default_rng(7))


@pytest.fixture(scope="module")
def noisy_codec():
    cfg = ChannelConfig(train_noise_max=0.3, train_steps=1200, **TINY)
    return train_channel(cfg, np.random.default_rng(8))


class TestConfig:
    def test_code_must_be_longer_than_source(self):
        with pytest.raises(ContractViolation):
            ChannelConfig(source_len=30, code_len=30)

    def test_noise_range(self):
        with pytest.raises(ContractViolation):
            ChannelConfig(train_noise_max=0.6)


class TestBscCorrupt:
    def test_zero_noise_is_identity(self, rng):
        msg = BitMessage.random(120, rng)
        assert bsc_corrupt(msg, 0.0, rng) == msg

    def test_certain_flip_is_complement(self, rng):
        msg = BitMessage.random(120, rng)
        assert bsc_corrupt(msg, 1.0, rng) == msg.complement()

    def test_p_out_of_range_rejected(self, rng):
        with pytest.raises(ContractViolation):
            bsc_corrupt(BitMessage.random(8, rng), 1.5, rng)

    def test_mean_flip_count_matches_binomial(self, rng):
        msg = BitMessage.random(120, rng)
        flips = [
            int(np.sum(bsc_corrupt(msg, 0.1, rng).bits != msg.bits)) for _ in range(10_000)
        ]
        assert abs(np.mean(flips) - 12.0) < 1.0

    @pytest.mark.parametrize("p", [0.05, 0.1, 0.3])
    def test_flip_rate_within_three_sigma(self, p):
        # oracle: Binomial(N, p) sample-mean statistics
        rng = np.random.default_rng(123)
        n, trials = 120, 10_000
        msg = BitMessage(np.zeros(n, dtype=np.uint8))
        counts = np.array(
            [int(bsc_corrupt(msg, p, rng).bits.sum()) for _ in range(trials)], dtype=float
        )
        three_sigma = 3.0 * np.sqrt(n * p * (1 - p) / trials)
        assert abs(counts.mean() - n * p) <= three_sigma

    @given(
        st.integers(0, 2**32 - 1),
        st.floats(0.0, 1.0),
        st.integers(min_value=1, max_value=256),
    )
    @settings(max_examples=40, deadline=None)
    def test_preserves_length_and_binarity(self, seed, p, length):
        rng = np.random.default_rng(seed)
        msg = BitMessage.random(length, rng)
        out = bsc_corrupt(msg, p, rng)
        assert len(out) == length
        assert np.isin(out.bits, (0, 1)).all()


class TestCodecOps:
    def test_encode_output_length(self, rng):
        model = ChannelCoder(ChannelConfig())  # untrained is fine for shape contracts
        code = channel_encode(model, BitMessage.random(30, rng))
        assert len(code) == 120

    def test_encode_is_deterministic_at_inference(self, rng):
        model = ChannelCoder(ChannelConfig())
        msg = BitMessage.random(30, rng)
        assert channel_encode(model, msg) == channel_encode(model, msg)

    def test_encode_length_mismatch(self, rng):
        model = ChannelCoder(ChannelConfig())
        with pytest.raises(ContractViolation):
            channel_encode(model, BitMessage.random(29, rng))

    def test_decode_wrong_length_rejected(self):
        model = ChannelCoder(ChannelConfig())
        with pytest.raises(ContractViolation):
            channel_decode(model, SoftMessage(np.zeros(64)))

    def test_decode_accepts_soft_input(self, noiseless_codec, rng):
        msg = BitMessage.random(12, rng)
        code = channel_encode(noiseless_codec, msg)
        soft = SoftMessage(code.bits * 0.8 + 0.1)  # 0.1/0.9 instead of hard bits
        assert channel_decode(noiseless_codec, soft) == msg

    def test_noiseless_round_trip(self, noiseless_codec, rng):
        wrong = 0
        total = 3000
        msgs = rng.integers(0, 2, size=(total, 12)).astype(np.uint8)
        for row in msgs:
            msg = BitMessage(row)
            back = channel_decode(noiseless_codec, channel_encode(noiseless_codec, msg))
            wrong += int(np.sum(back.bits != msg.bits))
        assert wrong / (total * 12) <= 0.001

    def test_single_bit_change_alters_code(self, noisy_codec, rng):
        for _ in range(1000):
            msg = BitMessage.random(12, rng)
            pos = int(rng.integers(0, 12))
            other = msg.bits.copy()
            other[pos] ^= 1
            a = channel_encode(noisy_codec, msg)
            b = channel_encode(noisy_codec, BitMessage(other))
            assert np.sum(a.bits != b.bits) >= 1


class TestRobustnessCurve:
    def test_zero_noise_point(self, noisy_codec, rng):
        points = robustness_curve(noisy_codec, [0.0], 3000, rng)
        assert points[0][1] >= 0.999

    def test_statistically_non_increasing(self, noisy_codec, rng):
        points = robustness_curve(noisy_codec, [0.0, 0.1, 0.2, 0.3, 0.4], 3000, rng)
        accs = [acc for _, acc in points]
        assert all(b <= a + 0.01 for a, b in zip(accs, accs[1:]))

    def test_half_noise_carries_no_information(self, noisy_codec, rng):
        points = robustness_curve(noisy_codec, [0.5], 3000, rng)
        assert abs(points[0][1] - 0.5) <= 0.03

    def test_empty_grid_rejected(self, noisy_codec, rng):
        with pytest.raises(ContractViolation):
            robustness_curve(noisy_codec, [], 100, rng)

    def test_grid_domain_enforced(self, noisy_codec, rng):
        with pytest.raises(ContractViolation):
            robustness_curve(noisy_codec, [0.7], 100, rng)

    def test_csv_columns(self, noisy_codec, rng, tmp_path):
        points = robustness_curve(noisy_codec, [0.0, 0.2], 100, rng)
        path = tmp_path / "curve.csv"
        write_curve_csv(points, path, noisy_codec, 100)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["noise", "accuracy", "trials", "N", "D"]
        assert len(rows) == 3
        assert rows[1][3] == "36" and rows[1][4] == "12"


class TestTraining:
    def test_noisy_model_degrades_with_noise(self, noisy_codec, rng):
        points = dict(robustness_curve(noisy_codec, [0.1, 0.3], 2000, rng))
        assert points[0.1] >= points[0.3]

    def test_checkpoint_round_trip(self, noisy_codec, tmp_path, rng):
        path = tmp_path / "codec.pt"
        save_channel(noisy_codec, path)
        loaded = load_channel(path)
        msg = BitMessage.random(12, rng)
        assert channel_encode(loaded, msg) == channel_encode(noisy_codec, msg)

    def test_training_is_seed_deterministic(self):
        cfg = ChannelConfig(train_noise_max=0.2, train_steps=30, **TINY)
        a = train_channel(cfg, np.random.default_rng(3))
        b = train_channel(cfg, np.random.default_rng(3))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert (pa == pb).all()
