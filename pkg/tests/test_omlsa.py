import numpy as np
import pytest
from conftest import crandn
from hypothesis import given, settings
from hypothesis import strategies as st

from mcenhance import Waveform, istft, omlsa_denoise, snr_db, stft
from mcenhance.omlsa import OmlsaConfig, omlsa_gains
from mcenhance.stft import MultichannelSpectrogram, StftConfig

SR = 16000


def tone_in_noise(seed, seconds=4.0, tone_db=10.0):
    rng = np.random.default_rng(seed)
    n = int(seconds * SR)
    t = np.arange(n) / SR
    gate = (t > 1.5) & (t < 3.0)
    tone = np.sqrt(2 * 10 ** (tone_db / 10)) * np.sin(2 * np.pi * 1000 * t) * gate
    noise = rng.standard_normal(n)
    return tone, noise, gate


class TestConfig:
    def test_defaults(self):
        cfg = OmlsaConfig()
        assert 20 * np.log10(cfg.gain_floor) == pytest.approx(-25.0)
        assert cfg.xi_min == pytest.approx(cfg.gain_floor**2)
        assert cfg.min_window_frames(16000, 256) == 94

    @pytest.mark.parametrize("kw", [{"gain_floor": 0.0}, {"gain_floor": 1.0}, {"dd_alpha": 1.0},
                                    {"noise_alpha": -0.1}, {"presence_threshold": 0.0},
                                    {"min_window_s": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            OmlsaConfig(**kw)


class TestGains:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), floor_db=st.floats(-40, -5), T=st.integers(1, 80))
    def test_bounds(self, seed, floor_db, T):
        rng = np.random.default_rng(seed)
        data = crandn(rng, 1, T, 33) * rng.lognormal(0, 2, (1, T, 33))
        cfg = OmlsaConfig(gain_floor=10 ** (floor_db / 20))
        g = omlsa_gains(MultichannelSpectrogram(data, StftConfig(64, 16)), cfg)
        assert g.shape == (T, 33)
        assert np.all(g >= cfg.gain_floor) and np.all(g <= 1.0)

    def test_stationary_noise_settles_at_floor(self):
        rng = np.random.default_rng(0)
        spec = stft(Waveform(rng.standard_normal(6 * SR), SR))
        cfg = OmlsaConfig()
        g = omlsa_gains(spec, cfg)
        late = g[200:]
        assert np.median(late) < 1.5 * cfg.gain_floor
        assert np.mean(late**2) < 10 ** (-15 / 10)

    def test_passes_tone_and_suppresses_noise(self):
        tone, noise, gate = tone_in_noise(1)
        spec = stft(Waveform(tone + noise, SR))
        g = omlsa_gains(spec)
        k = int(round(1000 * spec.config.fft_size / SR))
        frames = np.arange(spec.num_frames) * spec.config.hop - spec.config.pad
        on = (frames > 1.7 * SR) & (frames < 2.8 * SR)
        assert np.median(g[on, k]) > 0.8
        assert np.median(g[on][:, k + 20 :]) < 0.1

    def test_improves_snr_of_gated_tone(self):
        tone, noise, _ = tone_in_noise(2)
        y = istft(omlsa_denoise(stft(Waveform(tone + noise, SR))))
        assert snr_db(y.samples[0], tone) > snr_db(tone + noise, tone) + 10

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        spec = stft(Waveform(rng.standard_normal(2 * SR), SR))
        np.testing.assert_allclose(omlsa_gains(spec.replace(spec.data * 1e-3)), omlsa_gains(spec), rtol=1e-9)


class TestDenoise:
    def test_phase_preserved(self):
        rng = np.random.default_rng(4)
        spec = stft(Waveform(rng.standard_normal(SR), SR))
        out = omlsa_denoise(spec)
        ratio = out.data / spec.data
        np.testing.assert_allclose(ratio.imag, 0, atol=1e-12)
        assert np.all(ratio.real > 0)

    def test_zero_input(self):
        spec = stft(Waveform(np.zeros(SR), SR))
        out = omlsa_denoise(spec)
        assert np.all(np.isfinite(out.data)) and not np.any(out.data)

    def test_errors(self, rng):
        multi = stft(Waveform(rng.standard_normal((2, 4000)), SR))
        with pytest.raises(ValueError, match="single-channel"):
            omlsa_denoise(multi)
        bad = multi.channel(0)
        bad = bad.replace(np.where(np.arange(bad.num_bins) == 3, np.nan, bad.data))
        with pytest.raises(ValueError, match="non-finite"):
            omlsa_gains(bad)
