"""Deterministic signal primitives: DFT, analytic signal, mel-band log energies.

All functions are pure and operate on mono float waveforms carried by
:class:`AudioClip`. No windowing is applied anywhere; drum material is short
and onset-aligned, so whole-clip and rectangular-frame spectra are used
throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEL_LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1]; values
    outside that range are legal (intermediate processing) but every
    sample must be finite.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("AudioClip requires a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrum:
    """Full complex DFT of a clip (bin count equals the source length)."""

    bins: np.ndarray
    sample_rate: int
    source_length: int

    def __post_init__(self):
        if self.bins.size != self.source_length:
            raise ValueError("spectrum length must equal source_length")


@dataclass(frozen=True)
class MelConfig:
    """Mel filterbank settings: 2595*log10(1+f/700) scale, triangular filters
    spanning 0 Hz to Nyquist, each filter normalized to unit weight sum so a
    flat power spectrum yields flat band energies."""

    n_bands: int = 32
    frame_len: int = 1024
    hop: int = 512


def dft(clip: AudioClip) -> ComplexSpectrum:
    """Full complex DFT, X[k] = sum_n x[n] exp(-2i*pi*k*n/N)."""
    return ComplexSpectrum(
        bins=np.fft.fft(clip.samples),
        sample_rate=clip.sample_rate,
        source_length=len(clip),
    )


def idft(spectrum: ComplexSpectrum) -> AudioClip:
    """Inverse of :func:`dft`; imaginary residue is discarded."""
    x = np.fft.ifft(spectrum.bins)
    return AudioClip(np.real(x), spectrum.sample_rate)


def analytic_signal(clip: AudioClip) -> np.ndarray:
    """DFT-based analytic signal of a real waveform.

    Negative-frequency bins are zeroed, positive bins doubled, DC and
    Nyquist kept at unit weight, so the real part reproduces the input
    and the magnitude is the amplitude envelope.

    Parameters
    ----------
    clip : AudioClip
        Input waveform, length >= 4.

    Returns
    -------
    ndarray of complex
        Analytic signal, same length as the input.
    """
    n = len(clip)
    if n < 4:
        raise ValueError("analytic_signal requires length >= 4")
    spectrum = np.fft.fft(clip.samples)
    weights = np.zeros(n)
    if n % 2 == 0:
        weights[0] = 1.0
        weights[n // 2] = 1.0
        weights[1 : n // 2] = 2.0
    else:
        weights[0] = 1.0
        weights[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(spectrum * weights)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_bands: int, frame_len: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank matrix of shape (n_bands, frame_len//2 + 1).

    Band edges are spaced uniformly on the mel scale from 0 Hz to Nyquist.
    Each filter is normalized to unit weight sum, so band energy is a
    weighted mean of bin powers (flat for white noise).
    """
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    n_bins = frame_len // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / frame_len
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_bands + 2))
    bank = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        total = tri.sum()
        if total > 0:
            bank[i] = tri / total
    return bank


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Rectangular framing; frame count = floor((len - frame_len)/hop) + 1."""
    if x.size < frame_len:
        raise ValueError("signal shorter than frame length")
    n_frames = (x.size - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def mel_log_energies(clip: AudioClip, config: MelConfig = MelConfig()) -> np.ndarray:
    """Per-frame log mel-band energies, shape (n_frames, n_bands).

    Each row is one frame's band energies, log(1e-10 + mel band power);
    silence floors every band at log(1e-10).
    """
    frames = frame_signal(clip.samples, config.frame_len, config.hop)
    spectra = np.fft.rfft(frames, axis=1)
    power = spectra.real**2 + spectra.imag**2
    bank = mel_filterbank(config.n_bands, config.frame_len, clip.sample_rate)
    return np.log(MEL_LOG_FLOOR + power @ bank.T)


def mel_band_edges(config: MelConfig, sample_rate: int) -> np.ndarray:
    """Hz positions of the n_bands + 2 filter edge points."""
    return mel_to_hz(
        np.linspace(0.0, hz_to_mel(sample_rate / 2.0), config.n_bands + 2)
    )
