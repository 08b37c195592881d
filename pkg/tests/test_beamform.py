import numpy as np
import pytest
import scipy.linalg
from conftest import crandn, random_hpd
from hypothesis import given, settings
from hypothesis import strategies as st

from mcenhance import (
    apply_beamformer,
    ban_postfilter,
    gev_weights,
    mvdr_weights,
    pmwf_weights,
    select_reference,
    steering_vector,
)
from mcenhance.beamform import BeamformerError, BeamformerWeights, rayleigh_quotient
from mcenhance.linalg import condition, logdet_hpd, solve_hpd
from mcenhance.masks import CovarianceSet
from mcenhance.stft import MultichannelSpectrogram, StftConfig


def rank_one_set(rng, F=20, M=4):
    d = crandn(rng, F, M)
    sigma = rng.uniform(0.5, 5, F)
    phi_s = sigma[:, None, None] * np.einsum("fm,fn->fmn", d, d.conj())
    phi_n = np.stack([random_hpd(rng, M) for _ in range(F)])
    return d, CovarianceSet(phi_s, phi_n)


def full_rank_set(rng, F=20, M=4):
    return CovarianceSet(np.stack([random_hpd(rng, M) for _ in range(F)]),
                         np.stack([random_hpd(rng, M) for _ in range(F)]))


class TestLinalg:
    def test_condition_leaves_well_conditioned_alone(self, rng):
        R = np.stack([random_hpd(rng, 4) for _ in range(10)])
        np.testing.assert_array_equal(condition(R), 0.5 * (R + R.conj().swapaxes(-1, -2)))

    def test_condition_lifts_singular(self, rng):
        v = crandn(rng, 4)
        R = np.outer(v, v.conj())[None]
        out = condition(R)
        floor = 1e-6 * np.trace(R[0]).real / 4
        assert np.linalg.eigvalsh(out[0])[0] == pytest.approx(floor, rel=1e-6)
        np.testing.assert_allclose(out[0] - R[0], (out[0] - R[0])[0, 0].real * np.eye(4), atol=1e-15)

    def test_condition_zero_matrix(self):
        out = condition(np.zeros((1, 3, 3)))
        assert np.all(np.linalg.eigvalsh(out) > 0)

    def test_solve_and_logdet(self, rng):
        R = np.stack([random_hpd(rng, 5) for _ in range(6)])
        B = crandn(rng, 6, 5, 2)
        np.testing.assert_allclose(solve_hpd(R, B), np.linalg.solve(R, B), rtol=1e-10)
        b = crandn(rng, 6, 5)
        np.testing.assert_allclose(solve_hpd(R, b), np.linalg.solve(R, b[..., None])[..., 0], rtol=1e-10)
        np.testing.assert_allclose(logdet_hpd(R), np.log(np.linalg.det(R).real), rtol=1e-10)


class TestSteering:
    def test_rank_one_recovery(self, rng):
        d, cov = rank_one_set(rng)
        sv = steering_vector(cov, reference=2)
        np.testing.assert_allclose(np.linalg.norm(sv.d, axis=1), 1.0)
        assert np.all(sv.d[:, 2].imag == 0) and np.all(sv.d[:, 2].real >= 0)
        cos = np.abs(np.einsum("fm,fm->f", sv.d.conj(), d)) / np.linalg.norm(d, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-12)

    def test_non_finite(self, rng):
        _, cov = rank_one_set(rng, F=3)
        bad = cov.speech.copy()
        bad[1, 0, 0] = np.nan
        with pytest.raises(ValueError):
            steering_vector(CovarianceSet(bad, cov.noise))


class TestMvdr:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), M=st.integers(1, 8))
    def test_distortionless(self, seed, M):
        rng = np.random.default_rng(seed)
        d, cov = rank_one_set(rng, F=5, M=M)
        w = mvdr_weights(cov, d).w
        np.testing.assert_allclose(np.einsum("fm,fm->f", w.conj(), d), 1.0, atol=1e-10)

    def test_minimum_variance(self, rng):
        d, cov = rank_one_set(rng, F=10)
        w = mvdr_weights(cov, d).w
        var = np.einsum("fm,fmn,fn->f", w.conj(), cov.noise, w).real
        for _ in range(200):
            v = crandn(rng, 10, 4)
            # project onto the constraint v^H d = 1
            v = v + d * ((1 - np.einsum("fm,fm->f", v.conj(), d)).conj() / np.sum(np.abs(d) ** 2, 1))[:, None]
            other = np.einsum("fm,fmn,fn->f", v.conj(), cov.noise, v).real
            assert np.all(var <= other * (1 + 1e-12))

    def test_reference_rescaling_reproduces_target_image(self, rng):
        d, cov = rank_one_set(rng, F=9)
        s = crandn(rng, 30, 9)
        target = (s[..., None] * d[None]).transpose(2, 0, 1)  # (M, T, F)
        w = mvdr_weights(cov, d, reference=1)
        out = apply_beamformer(w, MultichannelSpectrogram(target, StftConfig(16, 4)))
        np.testing.assert_allclose(out.data[0], target[1], atol=1e-10)
        assert w.reference == 1

    def test_accepts_steering_object(self, rng):
        d, cov = rank_one_set(rng)
        sv = steering_vector(cov)
        np.testing.assert_array_equal(mvdr_weights(cov, sv).w, mvdr_weights(cov, sv.d).w)

    def test_zero_steering_raises(self, rng):
        _, cov = rank_one_set(rng, F=3)
        d = crandn(rng, 3, 4)
        d[1] = 0
        with pytest.raises(BeamformerError) as info:
            mvdr_weights(cov, d)
        assert list(info.value.bins) == [1]

    def test_singular_noise_is_conditioned(self, rng):
        d, cov = rank_one_set(rng, F=4)
        v = crandn(rng, 4, 4)
        singular = np.einsum("fm,fn->fmn", v, v.conj())
        w = mvdr_weights(CovarianceSet(cov.speech, singular), d).w
        assert np.all(np.isfinite(w))
        np.testing.assert_allclose(np.einsum("fm,fm->f", w.conj(), d), 1.0, atol=1e-8)


class TestPmwf:
    def test_beta_zero_rank_one_is_referenced_mvdr(self, rng):
        d, cov = rank_one_set(rng)
        np.testing.assert_allclose(pmwf_weights(cov, 0.0, reference=3).w,
                                   mvdr_weights(cov, d, reference=3).w, rtol=1e-9, atol=1e-12)

    def test_beta_one_rank_one_is_multichannel_wiener(self, rng):
        _, cov = rank_one_set(rng)
        mwf = np.linalg.solve(cov.speech + cov.noise, cov.speech)[..., 0]
        np.testing.assert_allclose(pmwf_weights(cov, 1.0, 0).w, mwf, rtol=1e-9, atol=1e-12)

    def test_larger_beta_suppresses_more(self, rng):
        cov = full_rank_set(rng)
        norms = [np.linalg.norm(pmwf_weights(cov, b).w) for b in (0.0, 1.0, 5.0, 50.0)]
        assert norms == sorted(norms, reverse=True)

    def test_metadata_and_errors(self, rng):
        _, cov = rank_one_set(rng, F=2)
        w = pmwf_weights(cov, 2.5, 1)
        assert (w.kind, w.beta, w.reference) == ("pmwf", 2.5, 1)
        with pytest.raises(ValueError, match="beta"):
            pmwf_weights(cov, -0.1)
        with pytest.raises(ValueError, match="reference"):
            pmwf_weights(cov, 1.0, 4)


class TestGev:
    def test_matches_scipy_eigenvector(self, rng):
        cov = full_rank_set(rng)
        w = gev_weights(cov).w
        for f in range(cov.num_bins):
            _, V = scipy.linalg.eigh(cov.speech[f], cov.noise[f])
            v = V[:, -1] / np.linalg.norm(V[:, -1])
            assert abs(np.vdot(v, w[f])) == pytest.approx(1.0, abs=1e-10)

    def test_unit_norm_and_phase(self, rng):
        cov = full_rank_set(rng)
        w = gev_weights(cov, reference=2).w
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0)
        assert np.all(w[:, 2].imag == 0) and np.all(w[:, 2].real >= 0)

    def test_invariant_to_noise_scale(self, rng):
        cov = full_rank_set(rng)
        scaled = CovarianceSet(cov.speech, 7.0 * cov.noise)
        np.testing.assert_allclose(gev_weights(scaled).w, gev_weights(cov).w, atol=1e-10)

    def test_beats_mvdr_quotient(self, rng):
        d, cov = rank_one_set(rng)
        q_gev = rayleigh_quotient(gev_weights(cov), cov.speech, cov.noise)
        q_mvdr = rayleigh_quotient(mvdr_weights(cov, d), cov.speech, cov.noise)
        # rank-one: both reach the same maximum SNR
        np.testing.assert_allclose(q_gev, q_mvdr, rtol=1e-9)
        cov2 = full_rank_set(rng)
        q_g = rayleigh_quotient(gev_weights(cov2), cov2.speech, cov2.noise)
        q_m = rayleigh_quotient(mvdr_weights(cov2, steering_vector(cov2)), cov2.speech, cov2.noise)
        assert np.all(q_g >= q_m * (1 - 1e-12))


class TestBan:
    def test_gain_formula(self, rng):
        cov = full_rank_set(rng)
        w = gev_weights(cov)
        out = ban_postfilter(w, cov)
        for f in range(cov.num_bins):
            v, N = w.w[f], cov.noise[f]
            g = np.sqrt((v.conj() @ N @ N @ v).real / 4) / (v.conj() @ N @ v).real
            np.testing.assert_allclose(out.w[f], g * v, rtol=1e-12)
        assert out.kind == "gev_ban"

    def test_quotient_unchanged(self, rng):
        cov = full_rank_set(rng)
        w = gev_weights(cov)
        np.testing.assert_allclose(rayleigh_quotient(ban_postfilter(w, cov), cov.speech, cov.noise),
                                   rayleigh_quotient(w, cov.speech, cov.noise), rtol=1e-12)

    def test_requires_gev(self, rng):
        d, cov = rank_one_set(rng, F=2)
        with pytest.raises(ValueError):
            ban_postfilter(mvdr_weights(cov, d), cov)


class TestMisc:
    def test_select_reference_tie_goes_low(self):
        ds = np.array([[1.0, 4.0, 2.0], [1.0, 1.0, 3.0]])  # per-channel sums 2, 5, 5
        cov = CovarianceSet(np.stack([np.diag(r) for r in ds]), np.stack([np.eye(3)] * 2))
        assert select_reference(cov) == 1

    def test_select_reference_clear_winner(self, rng):
        s = np.stack([np.diag([1.0, 1.0, 9.0])] * 4)
        n = np.stack([np.diag([1.0, 0.5, 1.0])] * 4)
        assert select_reference(CovarianceSet(s, n)) == 2

    def test_apply_matches_loop(self, rng):
        w = BeamformerWeights(crandn(rng, 9, 3), "mvdr")
        y = crandn(rng, 3, 7, 9)
        out = apply_beamformer(w, MultichannelSpectrogram(y, StftConfig(16, 4), 24))
        for t in range(7):
            for f in range(9):
                assert out.data[0, t, f] == pytest.approx(np.vdot(w.w[f], y[:, t, f]))
        assert out.num_channels == 1 and out.length == 24

    def test_apply_shape_mismatch(self, rng):
        w = BeamformerWeights(crandn(rng, 9, 2), "gev")
        with pytest.raises(ValueError):
            apply_beamformer(w, MultichannelSpectrogram(crandn(rng, 3, 7, 9), StftConfig(16, 4)))

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            BeamformerWeights(np.ones((2, 2)), "delay-and-sum")
        with pytest.raises(ValueError):
            BeamformerWeights(np.ones(2), "mvdr")
        with pytest.raises(BeamformerError):
            BeamformerWeights(np.array([[np.nan, 1.0]]), "mvdr")
