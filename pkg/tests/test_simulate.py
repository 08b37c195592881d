import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcenhance import Waveform, energy_vad, mix, rescale_to_level, snr_db
from mcenhance.simulate import (
    SNR_CAP_DB,
    MixSpec,
    derive_seed,
    energy,
    fit_length,
    level_db,
    spatialize,
)

SR = 16000


def noise(rng, m, n):
    return Waveform(rng.standard_normal((m, n)), SR)


class TestLevels:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), target_db=st.floats(-60, 60))
    def test_rescale_hits_level(self, seed, target_db):
        rng = np.random.default_rng(seed)
        a, b = noise(rng, 2, 300), noise(rng, 2, 300)
        scaled = rescale_to_level(a, b, target_db)
        assert level_db(b, scaled) == pytest.approx(target_db, abs=1e-9)
        # shape of the signal is untouched
        ratio = scaled.samples / a.samples
        np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-12)

    def test_rescale_silent(self, rng):
        with pytest.raises(ValueError):
            rescale_to_level(Waveform(np.zeros(5), SR), noise(rng, 1, 5), 0.0)
        with pytest.raises(ValueError):
            rescale_to_level(noise(rng, 1, 5), Waveform(np.zeros(5), SR), 0.0)

    def test_snr_db(self):
        ref = np.array([3.0, 4.0])
        assert snr_db(ref + np.array([0.3, 0.4]), ref) == pytest.approx(20.0)
        assert snr_db(ref, ref) == SNR_CAP_DB
        assert snr_db(Waveform(ref, SR), Waveform(ref * (1 + 1e-200), SR)) == SNR_CAP_DB
        with pytest.raises(ValueError):
            snr_db(ref, ref[:1])
        with pytest.raises(ValueError):
            snr_db(ref, np.zeros(2))


class TestMix:
    def test_components_sum_and_levels(self, rng):
        t = noise(rng, 3, 1000)
        rec = mix(t, [noise(rng, 3, 1000)], noise(rng, 3, 1000), MixSpec(seed=4))
        np.testing.assert_allclose(rec.mixture.samples,
                                   rec.target.samples + rec.interference_sum.samples + rec.noise.samples)
        assert level_db(rec.target, rec.interference_sum) == pytest.approx(rec.applied_sdr, abs=1e-9)
        assert level_db(rec.target, rec.noise) == pytest.approx(rec.applied_snr, abs=1e-9)
        assert rec.seed == 4
        np.testing.assert_array_equal(rec.target.samples, t.samples)

    def test_fixed_ranges(self, rng):
        rec = mix(noise(rng, 1, 500), [noise(rng, 1, 500)], noise(rng, 1, 500),
                  MixSpec(sdr_range=(3, 3), snr_range=(-2, -2)))
        assert (rec.applied_sdr, rec.applied_snr) == (3.0, -2.0)

    def test_two_interferers_within_spread(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            rec = mix(noise(rng, 1, 400), [noise(rng, 1, 400), noise(rng, 1, 400)], noise(rng, 1, 400),
                      MixSpec(n_interferers=2, seed=seed))
            assert -3.0 <= rec.extra["interferer_relative_db"] <= 3.0

    def test_seeds(self, rng):
        args = (noise(rng, 2, 600), [noise(rng, 2, 900)], noise(rng, 2, 300))
        a = mix(*args, MixSpec(seed=10))
        b = mix(*args, MixSpec(seed=10))
        c = mix(*args, MixSpec(seed=11))
        assert a.mixture.samples.tobytes() == b.mixture.samples.tobytes()
        assert a.applied_sdr != c.applied_sdr

    def test_length_and_channel_checks(self, rng):
        with pytest.raises(ValueError, match="channel"):
            mix(noise(rng, 2, 100), [noise(rng, 1, 100)], noise(rng, 2, 100))
        with pytest.raises(ValueError, match="silent"):
            mix(noise(rng, 1, 100), [Waveform(np.zeros(100), SR)], noise(rng, 1, 100))
        with pytest.raises(ValueError):
            mix(noise(rng, 1, 100), [], noise(rng, 1, 100))
        with pytest.raises(ValueError):
            MixSpec(sdr_range=(5, 1))
        with pytest.raises(ValueError):
            MixSpec(n_interferers=3)

    def test_fit_length(self, rng):
        w = Waveform(np.arange(10.0), SR)
        looped = fit_length(w, 25, rng)
        assert looped.num_samples == 25
        start = int(looped.samples[0, 0])
        np.testing.assert_array_equal(looped.samples[0], (np.arange(25) + start) % 10)
        crop = fit_length(Waveform(np.arange(100.0), SR), 30, rng).samples[0]
        np.testing.assert_array_equal(np.diff(crop), 1.0)
        with pytest.raises(ValueError):
            fit_length(Waveform(np.zeros((1, 0)), SR), 5, rng)


class TestVad:
    def test_segments(self, rng):
        x = np.concatenate([
            np.zeros(SR), rng.standard_normal(int(2.5 * SR)),
            np.zeros(SR), rng.standard_normal(SR),  # too short, dropped
            np.zeros(SR // 2), rng.standard_normal(3 * SR), np.zeros(SR // 4),
        ])
        segs = energy_vad(Waveform(x, SR))
        assert len(segs) == 2
        expected = [(1.0, 3.5), (6.0, 9.0)]
        for seg, (a, b) in zip(segs, expected):
            assert seg.start_s == pytest.approx(a, abs=0.03)
            assert seg.end_s == pytest.approx(b, abs=0.03)
            assert seg.duration >= 2.0

    def test_quiet_floor_counts_as_silence(self, rng):
        x = 1e-4 * rng.standard_normal(5 * SR)
        x[SR : 4 * SR] = rng.standard_normal(3 * SR)
        (seg,) = energy_vad(Waveform(x, SR))
        assert seg.start_s == pytest.approx(1.0, abs=0.03)
        assert energy_vad(Waveform(x, SR), threshold_db=100) [0].duration == pytest.approx(5.0, abs=0.03)

    def test_silent_and_empty(self):
        assert energy_vad(Waveform(np.zeros(SR), SR)) == []
        assert energy_vad(Waveform(np.zeros((1, 0)), SR)) == []
        with pytest.raises(ValueError):
            energy_vad(Waveform(np.ones(10), SR), frame_ms=0)


class TestMisc:
    def test_spatialize_delays(self, rng):
        x = Waveform(rng.standard_normal(200), SR)
        h = np.zeros((3, 5))
        h[0, 0], h[1, 2], h[2, 4] = 1.0, 0.5, -1.0
        out = spatialize(x, h).samples
        np.testing.assert_allclose(out[0], x.samples[0])
        np.testing.assert_allclose(out[1, 2:], 0.5 * x.samples[0, :-2])
        np.testing.assert_allclose(out[2, 4:], -x.samples[0, :-4])

    def test_derive_seed(self):
        seeds = [derive_seed(7, i) for i in range(1000)]
        assert len(set(seeds)) == 1000
        assert seeds == [derive_seed(7, i) for i in range(1000)]
        assert derive_seed(8, 0) != seeds[0]

    def test_energy(self):
        assert energy(np.array([3.0, 4.0])) == 25.0
        assert energy(Waveform(np.ones((2, 3)), SR)) == 6.0
