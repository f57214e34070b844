"""Per-drum-class amplitude envelopes: extraction from a dataset and
application to generated audio.

An envelope is the smoothed mean Hilbert magnitude of the class's
peak-normalized clips, faded linearly to exactly zero at the tail and
peak-normalized so applying it can never amplify.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dsp import AudioClip, analytic_signal

ENVELOPE_MAGIC = b"ENV1"

DEFAULT_ENVELOPE_LEN = 65536
DEFAULT_SMOOTH_LEN = 1025
DEFAULT_FADE_LEN = 2048


class DrumClass(str, Enum):
    KICK = "kick"
    SNARE = "snare"
    TOM = "tom"
    CLOSED_HH = "closed_hh"
    OPEN_HH = "open_hh"

    @classmethod
    def from_name(cls, name: str) -> "DrumClass":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown drum class {name!r} (expected one of: {valid})") from None


@dataclass(frozen=True)
class EnvelopeTable:
    """Fixed-length nonnegative envelope for one drum class.

    Peak is 1 so elementwise application is a contraction; envelopes built
    by :func:`extract_class_envelope` additionally end at exactly 0
    (fade-out), which silences the tail of whatever they multiply.
    """

    drum_class: DrumClass
    values: np.ndarray
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("envelope values must be a non-empty 1-D array")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("envelope values must be finite and >= 0")
        peak = values.max()
        if peak > 0 and not np.isclose(peak, 1.0, rtol=0, atol=1e-6):
            raise ValueError("envelope peak must be 1 after normalization")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def _fit_length(x: np.ndarray, length: int) -> np.ndarray:
    """Tail-pad with zeros or truncate (drum clips are onset-aligned)."""
    if x.size >= length:
        return x[:length]
    out = np.zeros(length, dtype=x.dtype)
    out[: x.size] = x
    return out


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x.copy()
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="same")


def extract_class_envelope(clips, drum_class: DrumClass, length: int = DEFAULT_ENVELOPE_LEN,
                           smooth_len: int = DEFAULT_SMOOTH_LEN,
                           fade_len: int = DEFAULT_FADE_LEN,
                           sample_rate: int | None = None) -> EnvelopeTable:
    """Build the class envelope from a list of clips.

    Each clip is peak-normalized and fitted to ``length`` samples; the
    envelope is the moving average (window ``smooth_len``) of the mean
    Hilbert magnitude across clips, faded linearly to exactly zero over
    the last ``fade_len`` samples and finally peak-normalized to 1.
    """
    clips = list(clips)
    if not clips:
        raise ValueError("extract_class_envelope requires at least one clip")
    if not (1 <= fade_len <= length):
        raise ValueError("need length >= fade_len >= 1")
    if length < 4:
        raise ValueError("envelope length must be >= 4")
    if sample_rate is None:
        sample_rate = clips[0].sample_rate
    if any(c.sample_rate != sample_rate for c in clips):
        raise ValueError("all clips must share one sample rate")

    acc = np.zeros(length)
    for clip in clips:
        x = _fit_length(clip.samples, length)
        peak = np.max(np.abs(x))
        if peak > 0:
            x = x / peak
        acc += np.abs(analytic_signal(AudioClip(x, sample_rate)))
    mean_env = acc / len(clips)

    env = _moving_average(mean_env, smooth_len)
    ramp = 1.0 - np.arange(1, fade_len + 1) / fade_len
    env[length - fade_len :] *= ramp
    env = np.maximum(env, 0.0)
    peak = env.max()
    if peak > 0:
        env = env / peak
    env[-1] = 0.0
    return EnvelopeTable(drum_class=drum_class, values=env, sample_rate=sample_rate)


def apply_envelope(clip: AudioClip, env: EnvelopeTable) -> AudioClip:
    """Elementwise product of a clip with its class envelope."""
    if len(clip) != len(env):
        raise ValueError(f"length mismatch: clip {len(clip)} vs envelope {len(env)}")
    if clip.sample_rate != env.sample_rate:
        raise ValueError("sample rate mismatch between clip and envelope")
    return AudioClip(clip.samples * env.values, clip.sample_rate)


def write_envelope(env: EnvelopeTable, path):
    """Binary envelope file: magic ENV1, u32 length, u32 sample rate,
    u32 class-name length + name, then length x f32 little-endian."""
    name = env.drum_class.value.encode()
    with open(path, "wb") as fh:
        fh.write(ENVELOPE_MAGIC)
        fh.write(struct.pack("<III", len(env), env.sample_rate, len(name)))
        fh.write(name)
        fh.write(env.values.astype("<f4").tobytes())


def read_envelope(path) -> EnvelopeTable:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != ENVELOPE_MAGIC:
        raise ValueError("not an ENV1 envelope file")
    length, rate, name_len = struct.unpack_from("<III", data, 4)
    offset = 16
    name = data[offset : offset + name_len].decode()
    offset += name_len
    expected = offset + 4 * length
    if len(data) < expected:
        raise ValueError("truncated envelope file")
    values = np.frombuffer(data[offset:expected], dtype="<f4").astype(np.float64)
    return EnvelopeTable(DrumClass.from_name(name), values, rate)
