"""Built-in synthetic drum dataset: kick-like, snare-like, and hat-like
clips with randomized per-clip parameters, written as WAV files plus a
JSON-lines manifest. Deterministic per seed, with exact class allocation
from the requested proportions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dsp import AudioClip
from .envelope import DrumClass
from .sampler import DatasetManifest, ManifestEntry
from .wavio import write_wav

SYNTH_CLASSES = (DrumClass.KICK, DrumClass.SNARE, DrumClass.CLOSED_HH)
DEFAULT_PROPORTIONS = (0.1, 0.6, 0.3)


def _decay(n: int, sample_rate: int, tau_seconds: float) -> np.ndarray:
    return np.exp(-np.arange(n) / (tau_seconds * sample_rate))


def _kick(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    # 60-90 Hz decaying sine with a short click transient
    f0 = rng.uniform(60.0, 90.0)
    tau = rng.uniform(0.06, 0.16)
    t = np.arange(n) / sr
    body = np.sin(2 * np.pi * f0 * t) * _decay(n, sr, tau)
    click_len = max(4, int(0.004 * sr))
    click = np.zeros(n)
    click[:click_len] = rng.standard_normal(click_len) * np.linspace(1.0, 0.0, click_len)
    x = body + rng.uniform(0.1, 0.3) * click
    return x


def _snare(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    # 180 Hz decaying sine plus a broadband noise burst; the tone/noise mix
    # varies widely per clip so brightness spans a wide range within class
    t = np.arange(n) / sr
    tone = np.sin(2 * np.pi * 180.0 * t) * _decay(n, sr, rng.uniform(0.05, 0.12))
    noise = rng.standard_normal(n) * _decay(n, sr, rng.uniform(0.02, 0.08))
    mix = rng.uniform(0.15, 0.85)
    return (1.0 - mix) * tone + mix * noise


def _hat(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    # short high-passed noise burst
    noise = rng.standard_normal(n) * _decay(n, sr, rng.uniform(0.01, 0.04))
    spectrum = np.fft.rfft(noise)
    freqs = np.arange(spectrum.size) * sr / n
    cutoff = rng.uniform(2500.0, 4000.0)
    spectrum[freqs < cutoff] *= 0.02
    return np.fft.irfft(spectrum, n)


_RENDERERS = {
    DrumClass.KICK: _kick,
    DrumClass.SNARE: _snare,
    DrumClass.CLOSED_HH: _hat,
}


def class_counts(n: int, proportions) -> list:
    """Exact allocation of n items by largest remainder."""
    proportions = list(proportions)
    if abs(sum(proportions) - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    raw = [p * n for p in proportions]
    counts = [int(np.floor(r)) for r in raw]
    remainder = n - sum(counts)
    order = np.argsort([c - r for c, r in zip(counts, raw)])
    for i in range(remainder):
        counts[order[i]] += 1
    return counts


def synth_clip(drum_class: DrumClass, rng: np.random.Generator,
               length: int = 4096, sample_rate: int = 16000) -> AudioClip:
    renderer = _RENDERERS.get(drum_class)
    if renderer is None:
        raise ValueError(f"no synthetic renderer for class {drum_class.value!r}")
    x = renderer(rng, length, sample_rate)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.9 * x / peak
    return AudioClip(x, sample_rate)


def synth_dataset(out_dir, n: int, proportions=DEFAULT_PROPORTIONS, seed: int = 0,
                  length: int = 4096, sample_rate: int = 16000) -> DatasetManifest:
    """Write n WAV clips with the given class proportions plus manifest.jsonl.

    Clip filenames are <class>_<index>.wav; the manifest references them
    relative to out_dir. Identical seeds give identical file bytes.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"cannot create output directory {out_dir}: {exc}") from exc
    if len(list(proportions)) != len(SYNTH_CLASSES):
        raise ValueError(f"expected {len(SYNTH_CLASSES)} proportions (kick, snare, closed_hh)")

    counts = class_counts(n, proportions)
    children = np.random.SeedSequence(seed).spawn(len(SYNTH_CLASSES))
    entries = []
    for drum_class, count, child in zip(SYNTH_CLASSES, counts, children):
        rng = np.random.default_rng(child)
        for i in range(count):
            clip = synth_clip(drum_class, rng, length, sample_rate)
            name = f"{drum_class.value}_{i:05d}.wav"
            write_wav(clip, out_dir / name, fmt="float32")
            entries.append(ManifestEntry(name, drum_class))
    manifest = DatasetManifest(entries, base_dir=out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
