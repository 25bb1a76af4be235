import numpy as np
import pytest

from deeplms.channel_model import (CableConfig, ToneChannel, dominance_ratio, generate_cable,
                                   load_channels, make_near_far, save_channels, stack_channels)
from deeplms.errors import ChannelFileError


def _random_H(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


class TestToneChannel:
    def test_rejects_single_user(self):
        with pytest.raises(ValueError):
            ToneChannel(H=np.ones((1, 1)), noise_variance=1.0)

    def test_rejects_zero_direct_gain(self):
        with pytest.raises(ValueError):
            ToneChannel(H=np.array([[0, 1], [1, 1]]), noise_variance=1.0)

    def test_rejects_nonfinite_and_bad_noise(self):
        with pytest.raises(ValueError):
            ToneChannel(H=np.array([[1, np.nan], [0, 1]]), noise_variance=1.0)
        with pytest.raises(ValueError):
            ToneChannel(H=np.eye(2), noise_variance=0.0)

    def test_stack_and_index(self):
        chans = generate_cable(CableConfig(n_users=3, n_tones=4, tone_start_hz=25e6), seed=1)
        batch = stack_channels(chans)
        assert batch.batch_shape == (4,)
        assert len(batch) == 4
        one = batch[2]
        np.testing.assert_array_equal(one.H, chans[2].H)
        assert one.noise_variance == chans[2].noise_variance
        assert one.tone_index == 2


class TestDominanceRatio:
    def test_identity_is_infinite(self):
        assert np.all(np.isinf(dominance_ratio(ToneChannel(H=np.eye(4), noise_variance=1.0))))

    def test_two_by_two(self):
        ch = ToneChannel(H=np.array([[2.0, 1.0], [1.0, 2.0]]), noise_variance=1.0)
        np.testing.assert_allclose(dominance_ratio(ch), [2.0, 2.0])

    def test_upper_row(self):
        H = np.array([[1.0, 1, 1], [0, 1, 0], [0, 0, 1]])
        r = dominance_ratio(ToneChannel(H=H, noise_variance=1.0))
        assert r[0] == 0.5
        assert np.isinf(r[1]) and np.isinf(r[2])

    def test_row_wise_not_column_wise(self):
        H = np.array([[1.0, 3.0], [0.0, 1.0]])
        np.testing.assert_allclose(dominance_ratio(ToneChannel(H=H, noise_variance=1.0)), [1 / 3, np.inf])


class TestGenerateCable:
    def test_zero_coupling_is_diagonal(self):
        cfg = CableConfig(fext_scale=0.0)
        for ch in generate_cable(cfg, seed=3):
            off = ch.H - np.diag(np.diag(ch.H))
            assert np.all(off == 0)
            assert np.all(np.isinf(dominance_ratio(ch)))

    def test_high_tone_not_dominant(self):
        cfg = CableConfig(n_users=10, crossover_hz=30e6)
        chans = generate_cable(cfg, seed=0)
        k = int(np.argmin(np.abs(cfg.frequencies - 100e6)))
        assert cfg.frequencies[k] == 100e6
        assert np.min(dominance_ratio(chans[k])) < 1

    def test_deterministic(self):
        a = generate_cable(CableConfig(), seed=7)
        b = generate_cable(CableConfig(), seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x.H, y.H)
            assert x.noise_variance == y.noise_variance
        c = generate_cable(CableConfig(), seed=8)
        assert not np.array_equal(a[0].H, c[0].H)

    def test_direct_gain_decays(self):
        cfg = CableConfig()
        chans = generate_cable(cfg, seed=0)
        mags = [np.abs(np.diag(c.H)) for c in chans]
        assert np.all(np.diff(np.stack(mags), axis=0) < 0)
        # |h_ii| is deterministic: phases only are random
        np.testing.assert_allclose(mags[0], cfg.direct_gain(cfg.frequencies[0]))
        longer = CableConfig(length_m=200.0)
        assert longer.direct_gain(50e6) < cfg.direct_gain(50e6)

    def test_median_dominance_monotone_over_seeds(self):
        cfg = CableConfig()
        per_seed = np.array([[np.median(dominance_ratio(c)) for c in generate_cable(cfg, s)]
                             for s in range(32)])
        med = np.median(per_seed, axis=0)
        assert np.all(np.diff(med) <= 0)
        f = cfg.frequencies
        assert np.all(med[f < cfg.crossover_hz] > 1)
        assert np.all(med[f > cfg.crossover_hz] < 1)

    def test_expected_dominance_profile(self):
        # E|h_ii| / sum_j E|h_ij| = (f_c / f)^p / fext_scale
        cfg = CableConfig(n_users=6, fext_growth=1.5, fext_scale=0.8)
        f = cfg.frequencies
        expected = (cfg.crossover_hz / f) ** 1.5 / 0.8
        ratio = cfg.direct_gain(f) / ((cfg.n_users - 1) * cfg.fext_level(f) * np.sqrt(np.pi) / 2)
        np.testing.assert_allclose(ratio, expected, rtol=1e-12)

    def test_above_crossover(self):
        cfg = CableConfig()
        idx = cfg.above_crossover()
        assert len(idx) == 32
        assert np.all(cfg.frequencies[idx] > cfg.crossover_hz)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CableConfig(n_users=1)
        with pytest.raises(ValueError):
            CableConfig(n_tones=0)
        with pytest.raises(ValueError):
            CableConfig(tone_start_hz=40e6, crossover_hz=30e6)
        CableConfig(tone_start_hz=40e6, crossover_hz=30e6, fext_scale=0.0)


class TestNearFar:
    def test_identity_unchanged(self):
        ch = ToneChannel(H=np.eye(4, dtype=complex), noise_variance=0.1)
        for k in (1, 2, 3):
            np.testing.assert_array_equal(make_near_far([ch], k)[0].H, np.eye(4))

    def test_block_product(self):
        rng = np.random.default_rng(0)
        H = _random_H(rng, 10)
        ch = ToneChannel(H=H, noise_variance=0.1)
        out = make_near_far([ch], 5)[0].H
        np.testing.assert_array_equal(out[:5], H[:5])
        H22 = H[5:, 5:]
        np.testing.assert_allclose(out[5:], H22 @ H[5:], rtol=1e-13)
        np.testing.assert_array_equal(ch.H, H)

    def test_scalar_block(self):
        H = np.array([[1.0, 0.2 + 0.1j], [0.3 - 0.2j, 0.7 + 0.4j]])
        out = make_near_far([ToneChannel(H=H, noise_variance=0.1)], 1)[0].H
        np.testing.assert_allclose(out[1], H[1, 1] * H[1])
        np.testing.assert_array_equal(out[0], H[0])

    def test_idempotent_when_far_block_identity(self):
        rng = np.random.default_rng(1)
        H = _random_H(rng, 4)
        H[2:, 2:] = np.eye(2)
        ch = ToneChannel(H=H, noise_variance=0.1)
        once = make_near_far([ch], 2)[0]
        twice = make_near_far([once], 2)[0]
        np.testing.assert_allclose(twice.H, once.H)
        np.testing.assert_allclose(once.H, H)

    @pytest.mark.parametrize("k", [0, 4, -1])
    def test_out_of_range(self, k):
        with pytest.raises(ValueError):
            make_near_far([ToneChannel(H=np.eye(4), noise_variance=0.1)], k)


class TestChannelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        chans = generate_cable(CableConfig(n_users=4, n_tones=6, tone_start_hz=25e6), seed=5)
        path = tmp_path / "cable.txt"
        save_channels(path, chans)
        back = load_channels(path)
        assert len(back) == len(chans)
        for a, b in zip(chans, back):
            assert np.array_equal(a.H, b.H)
            assert a.noise_variance == b.noise_variance
            assert a.frequency == b.frequency
            assert a.tone_index == b.tone_index

    def test_record_layout(self, tmp_path):
        ch = ToneChannel(H=np.array([[1, 0.5j], [-0.25, 2]]), noise_variance=0.125,
                         tone_index=3, frequency=1e6)
        path = tmp_path / "one.txt"
        save_channels(path, [ch])
        fields = path.read_text().split()
        assert fields == ["3", "1000000", "2", "1,0", "0,0.5", "-0.25,0", "2,0", "0.125"]

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 1 2 1,0 0,0 0,0\n")
        with pytest.raises(ChannelFileError):
            load_channels(path)
        path.write_text("0 1 2 0,0 0,0 0,0 1,0 0.1\n")
        with pytest.raises(ChannelFileError):
            load_channels(path)
        path.write_text("\n")
        with pytest.raises(ChannelFileError):
            load_channels(path)
