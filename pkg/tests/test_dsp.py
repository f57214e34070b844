import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drumsynth.dsp import (
    AudioClip,
    MelConfig,
    analytic_signal,
    dft,
    idft,
    mel_band_edges,
    mel_log_energies,
    mel_filterbank,
)

SR = 16000


def tone(freq, n=1024, sr=SR, amp=1.0, phase=0.0):
    return AudioClip(amp * np.cos(2 * np.pi * freq * np.arange(n) / sr + phase), sr)


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return (x[None, :] * np.exp(-2j * np.pi * np.outer(k, k) / n)).sum(axis=1)


class TestAudioClip:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([]), SR)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]), SR)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(4), 0)


class TestDft:
    def test_unit_impulse_flat_spectrum(self):
        clip = AudioClip(np.array([1.0, 0.0, 0.0, 0.0]), SR)
        spec = dft(clip)
        assert np.allclose(spec.bins, np.ones(4), atol=1e-12)

    def test_single_tone_bins(self):
        n, k0 = 64, 4
        clip = AudioClip(np.cos(2 * np.pi * k0 * np.arange(n) / n), SR)
        mags = np.abs(dft(clip).bins)
        assert mags[k0] == pytest.approx(n / 2, rel=1e-9)
        assert mags[n - k0] == pytest.approx(n / 2, rel=1e-9)
        others = np.delete(mags, [k0, n - k0])
        assert np.all(others < 1e-9 * n)

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(128)
        got = dft(AudioClip(x, SR)).bins
        want = naive_dft(x)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-9

    @given(st.integers(min_value=2, max_value=200), st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=30, deadline=None)
    def test_roundtrip_and_parseval(self, n, seed):
        x = np.random.default_rng(seed).standard_normal(n)
        clip = AudioClip(x, SR)
        spec = dft(clip)
        back = idft(spec)
        assert np.max(np.abs(back.samples - x)) < 1e-9 * max(1.0, np.max(np.abs(x)))
        time_energy = np.sum(x**2)
        freq_energy = np.sum(np.abs(spec.bins) ** 2) / n
        assert freq_energy == pytest.approx(time_energy, rel=1e-9)


class TestAnalyticSignal:
    def test_pure_tone_constant_envelope(self):
        clip = tone(SR * 8 / 256, n=256)  # exactly 8 cycles
        env = np.abs(analytic_signal(clip))
        assert np.max(np.abs(env - 1.0)) < 1e-6

    def test_amplitude_linearity(self):
        clip = tone(SR * 8 / 256, n=256, amp=0.5)
        env = np.abs(analytic_signal(clip))
        assert np.max(np.abs(env - 0.5)) < 1e-6

    def test_linear_operator(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(200)
        y = rng.standard_normal(200)
        a, b = 1.7, -0.4
        lhs = analytic_signal(AudioClip(a * x + b * y, SR))
        rhs = a * analytic_signal(AudioClip(x, SR)) + b * analytic_signal(AudioClip(y, SR))
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_real_part_is_input(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(333)
        z = analytic_signal(AudioClip(x, SR))
        assert np.max(np.abs(z.real - x)) < 1e-9

    def test_am_tone_envelope_tracking(self):
        n = 4096
        t = np.arange(n)
        f_mod, f_car = 40.0, 2000.0
        modulation = 1.0 + 0.5 * np.cos(2 * np.pi * f_mod * t / SR)
        x = modulation * np.cos(2 * np.pi * f_car * t / SR)
        env = np.abs(analytic_signal(AudioClip(x, SR)))
        interior = slice(n // 20, n - n // 20)  # edges excluded
        rel = np.abs(env[interior] - modulation[interior]) / modulation[interior]
        assert np.max(rel) < 0.02

    def test_too_short_errors(self):
        with pytest.raises(ValueError):
            analytic_signal(AudioClip(np.ones(3), SR))


class TestMel:
    def test_silence_hits_log_floor(self):
        clip = AudioClip(np.zeros(4096), SR)
        frames = mel_log_energies(clip)
        assert np.allclose(frames, np.log(1e-10))

    def test_frame_count(self):
        cfg = MelConfig(n_bands=8, frame_len=256, hop=128)
        clip = AudioClip(np.zeros(1000), SR)
        frames = mel_log_energies(clip, cfg)
        assert frames.shape == ((1000 - 256) // 128 + 1, 8)

    def test_tone_peaks_in_containing_band(self):
        cfg = MelConfig(n_bands=32, frame_len=1024, hop=512)
        clip = tone(1000.0, n=4096)
        frames = mel_log_energies(clip, cfg)
        band = int(np.argmax(frames.mean(axis=0)))
        edges = mel_band_edges(cfg, SR)
        assert edges[band] <= 1000.0 <= edges[band + 2]

    def test_white_noise_flat_within_6db(self):
        cfg = MelConfig(n_bands=32, frame_len=1024, hop=512)
        rng = np.random.default_rng(11)
        clip = AudioClip(rng.standard_normal(1024 + 120 * 512), SR)
        frames = mel_log_energies(clip, cfg)
        assert frames.shape[0] >= 100
        mean_power = np.exp(frames).mean(axis=0)
        spread_db = 10.0 * np.log10(mean_power.max() / mean_power.min())
        assert spread_db < 6.0

    def test_shift_covariance_over_one_hop(self):
        cfg = MelConfig(n_bands=16, frame_len=512, hop=256)
        rng = np.random.default_rng(3)
        x = rng.standard_normal(6000)
        ref = mel_log_energies(AudioClip(x, SR), cfg)
        shifted = mel_log_energies(AudioClip(x[cfg.hop :], SR), cfg)
        n = shifted.shape[0]
        assert np.max(np.abs(shifted - ref[1 : n + 1])) < 1e-9

    def test_too_short_errors(self):
        with pytest.raises(ValueError):
            mel_log_energies(AudioClip(np.zeros(100), SR), MelConfig(frame_len=256))

    def test_filterbank_rows_unit_sum(self):
        bank = mel_filterbank(24, 1024, SR)
        assert np.allclose(bank.sum(axis=1), 1.0, atol=1e-9)
