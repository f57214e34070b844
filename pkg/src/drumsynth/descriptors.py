"""Differentiable timbral descriptors: brightness, depth, warmth.

Each descriptor maps a waveform to a value strictly inside (0, 100) through
a logistic squashing of spectral-centroid and band-power-ratio terms. The
definitions are simplified differentiable surrogates of the perceptual
models they stand in for; absolute values are calibration-dependent, so
downstream evaluation relies on ordering, invariance, and self-consistency
rather than absolute targets.

All three descriptors are homogeneous of degree zero in amplitude: power
ratios and the centroid are invariant under rescaling of the input, up to
the tiny 1e-12 floor added to each spectral bin.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsp import AudioClip

DESCRIPTOR_NAMES = ("brightness", "depth", "warmth")

MIN_DESCRIBE_LEN = 64
POWER_EPS = 1e-12


@dataclass(frozen=True)
class DescriptorConfig:
    """Calibration constants for the three descriptors.

    Band edges are in Hz and must sit below Nyquist for the material being
    analyzed; logistic weights shape the (0, 100) output scale.
    """

    # brightness = 100*sigmoid(a*ln(C/c0) + b*r_hi + d), r_hi = power at >= hi_edge
    brightness_a: float = 1.5
    brightness_c0: float = 500.0
    brightness_b: float = 2.0
    # Intercept calibrated so broadband noise sits mid-scale, leaving
    # headroom for optimization experiments that push brightness upward.
    brightness_d: float = -4.5
    brightness_hi_edge: float = 2000.0
    # depth = 100*sigmoid(a*r_lo + b*ln(c1/C)), r_lo = power at <= lo_edge
    depth_a: float = 4.0
    depth_b: float = 0.5
    depth_c1: float = 1000.0
    depth_lo_edge: float = 200.0
    # warmth = 100*sigmoid(a*r_warm + b*ln(c2/C)), r_warm = power in [band_lo, band_hi]
    warmth_a: float = 4.0
    warmth_b: float = 0.4
    warmth_c2: float = 2000.0
    warmth_band_lo: float = 100.0
    warmth_band_hi: float = 420.0
    power_eps: float = POWER_EPS

    def __post_init__(self):
        if not (0.0 <= self.warmth_band_lo < self.warmth_band_hi):
            raise ValueError("warmth band edges must be increasing")

    def validate_for_rate(self, sample_rate: int):
        nyquist = sample_rate / 2.0
        for name in ("brightness_hi_edge", "depth_lo_edge", "warmth_band_hi"):
            if getattr(self, name) >= nyquist:
                raise ValueError(f"{name} must lie below Nyquist ({nyquist} Hz)")

    def to_file(self, path):
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "DescriptorConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = float(val.strip())
        return cls(**values)


@dataclass(frozen=True)
class DescriptorVector:
    """(brightness, depth, warmth) on the 0-100 scale."""

    brightness: float
    depth: float
    warmth: float

    def as_array(self) -> np.ndarray:
        return np.array([self.brightness, self.depth, self.warmth])

    def get(self, name: str) -> float:
        if name not in DESCRIPTOR_NAMES:
            raise ValueError(f"unknown descriptor {name!r}")
        return getattr(self, name)


def _spectral_terms(x: Tensor, sample_rate: int, eps: float):
    """Floored power spectrum plus total power and centroid as graph nodes."""
    n = x.data.size
    power = ad.real_dft_power(x) + eps
    freqs = np.arange(power.data.size) * sample_rate / n
    total = power.sum()
    centroid = ad.dot_const(power, freqs) / total
    return power, freqs, total, centroid


def _band_fraction(power: Tensor, freqs: np.ndarray, total: Tensor, mask: np.ndarray) -> Tensor:
    return ad.dot_const(power, mask.astype(np.float64)) / total


def brightness_graph(x: Tensor, sample_rate: int, cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    """Brightness of a waveform tensor as a differentiable scalar node."""
    power, freqs, total, centroid = _spectral_terms(x, sample_rate, cfg.power_eps)
    r_hi = _band_fraction(power, freqs, total, freqs >= cfg.brightness_hi_edge)
    logit = (
        cfg.brightness_a * ad.log(centroid / cfg.brightness_c0)
        + cfg.brightness_b * r_hi
        + cfg.brightness_d
    )
    return 100.0 * ad.sigmoid(logit)


def depth_graph(x: Tensor, sample_rate: int, cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    power, freqs, total, centroid = _spectral_terms(x, sample_rate, cfg.power_eps)
    r_lo = _band_fraction(power, freqs, total, freqs <= cfg.depth_lo_edge)
    logit = cfg.depth_a * r_lo + cfg.depth_b * ad.log(cfg.depth_c1 / centroid)
    return 100.0 * ad.sigmoid(logit)


def warmth_graph(x: Tensor, sample_rate: int, cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    power, freqs, total, centroid = _spectral_terms(x, sample_rate, cfg.power_eps)
    in_band = (freqs >= cfg.warmth_band_lo) & (freqs <= cfg.warmth_band_hi)
    r_warm = _band_fraction(power, freqs, total, in_band)
    logit = cfg.warmth_a * r_warm + cfg.warmth_b * ad.log(cfg.warmth_c2 / centroid)
    return 100.0 * ad.sigmoid(logit)


_GRAPHS = {
    "brightness": brightness_graph,
    "depth": depth_graph,
    "warmth": warmth_graph,
}


def _check_clip(clip: AudioClip, cfg: DescriptorConfig):
    if len(clip) < MIN_DESCRIBE_LEN:
        raise ValueError(f"descriptor input must have length >= {MIN_DESCRIBE_LEN}")
    cfg.validate_for_rate(clip.sample_rate)


def brightness(clip: AudioClip, cfg: DescriptorConfig = DescriptorConfig()) -> float:
    _check_clip(clip, cfg)
    return brightness_graph(Tensor(clip.samples), clip.sample_rate, cfg).item()


def depth(clip: AudioClip, cfg: DescriptorConfig = DescriptorConfig()) -> float:
    _check_clip(clip, cfg)
    return depth_graph(Tensor(clip.samples), clip.sample_rate, cfg).item()


def warmth(clip: AudioClip, cfg: DescriptorConfig = DescriptorConfig()) -> float:
    _check_clip(clip, cfg)
    return warmth_graph(Tensor(clip.samples), clip.sample_rate, cfg).item()


def describe(clip: AudioClip, cfg: DescriptorConfig = DescriptorConfig()) -> DescriptorVector:
    """All three descriptors of a clip."""
    return DescriptorVector(
        brightness=brightness(clip, cfg),
        depth=depth(clip, cfg),
        warmth=warmth(clip, cfg),
    )


def descriptor_loss(target: DescriptorVector, produced: DescriptorVector, mask=DESCRIPTOR_NAMES) -> float:
    """Mean absolute difference over the masked descriptors."""
    mask = tuple(mask)
    if not mask:
        raise ValueError("descriptor mask must select at least one descriptor")
    diffs = [abs(target.get(name) - produced.get(name)) for name in mask]
    return float(np.mean(diffs))


def _abs_graph(z: Tensor) -> Tensor:
    # |z| via sqrt(z^2); the engine's sqrt floor keeps it differentiable at 0
    return ad.sqrt(z * z)


def descriptor_loss_graph(x: Tensor, sample_rate: int, targets: dict,
                          cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    """L1 descriptor loss of a waveform tensor against target values.

    ``targets`` maps descriptor names to 0-100 targets; only the named
    descriptors contribute (masking semantics).
    """
    if not targets:
        raise ValueError("descriptor mask must select at least one descriptor")
    terms = []
    for name, value in targets.items():
        node = _GRAPHS[name](x, sample_rate, cfg)
        terms.append(_abs_graph(node - float(value)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / float(len(terms))


def _batched_terms(x: Tensor, sample_rate: int, eps: float):
    n = x.shape[1]
    power = ad.real_dft_power(x) + eps  # (B, K)
    n_bins = power.shape[1]
    freqs = np.arange(n_bins) * sample_rate / n
    ones = Tensor(np.ones((n_bins, 1), dtype=x.dtype))
    total = ad.matmul(power, ones)  # (B, 1)
    centroid = ad.matmul(power, Tensor(freqs[:, None].astype(x.dtype))) / total
    return power, freqs, total, centroid


def _batched_fraction(power, total, mask, dtype):
    return ad.matmul(power, Tensor(mask.astype(dtype)[:, None])) / total


def descriptor_graph_batch(x: Tensor, sample_rate: int, name: str,
                           cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    """Descriptor of each row of a waveform batch (B, T) -> (B, 1)."""
    power, freqs, total, centroid = _batched_terms(x, sample_rate, cfg.power_eps)
    if name == "brightness":
        r = _batched_fraction(power, total, freqs >= cfg.brightness_hi_edge, x.dtype)
        logit = (cfg.brightness_a * ad.log(centroid / cfg.brightness_c0)
                 + cfg.brightness_b * r + cfg.brightness_d)
    elif name == "depth":
        r = _batched_fraction(power, total, freqs <= cfg.depth_lo_edge, x.dtype)
        logit = cfg.depth_a * r + cfg.depth_b * ad.log(cfg.depth_c1 / centroid)
    elif name == "warmth":
        mask = (freqs >= cfg.warmth_band_lo) & (freqs <= cfg.warmth_band_hi)
        r = _batched_fraction(power, total, mask, x.dtype)
        logit = cfg.warmth_a * r + cfg.warmth_b * ad.log(cfg.warmth_c2 / centroid)
    else:
        raise ValueError(f"unknown descriptor {name!r}")
    return 100.0 * ad.sigmoid(logit)


def descriptor_l1_batch(x: Tensor, sample_rate: int, targets: np.ndarray, names,
                        cfg: DescriptorConfig = DescriptorConfig()) -> Tensor:
    """Mean absolute descriptor error of a waveform batch against per-item
    targets (B, len(names)) on the 0-100 scale; the loss the GAN trains on."""
    names = tuple(names)
    if not names:
        raise ValueError("descriptor mask must select at least one descriptor")
    targets = np.asarray(targets, dtype=np.float64)
    terms = []
    for j, name in enumerate(names):
        node = descriptor_graph_batch(x, sample_rate, name, cfg)
        diff = node - Tensor(targets[:, j : j + 1].astype(x.dtype))
        terms.append(_abs_graph(diff).mean())
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / float(len(terms))


class DescriptorMatchDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"descriptor matching diverged at step {step}")
        self.step = step


def match_descriptors(init: AudioClip, target: DescriptorVector, mask=DESCRIPTOR_NAMES,
                      steps: int = 500, step_size: float = 1e-3,
                      cfg: DescriptorConfig = DescriptorConfig()) -> AudioClip:
    """Drive a clip's descriptors toward targets by gradient descent on samples.

    Uses moment-normalized (Adam-style) updates with learning rate
    ``step_size``; raw fixed-step descent is uselessly slow here because the
    descriptor gradients shrink as 1/amplitude. Returns the best iterate
    seen (loss never exceeds the starting loss), peak-normalized to at
    most 1.

    Raises
    ------
    DescriptorMatchDiverged
        If the loss becomes non-finite, reporting the step index.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _check_clip(init, cfg)
    mask = tuple(mask)
    targets = {name: target.get(name) for name in mask}
    if not targets:
        raise ValueError("descriptor mask must select at least one descriptor")

    x = init.samples.astype(np.float64).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8

    def loss_of(data):
        return descriptor_loss_graph(Tensor(data), init.sample_rate, targets, cfg)

    best_x = x.copy()
    best_loss = loss_of(x).item()
    for step in range(1, steps + 1):
        leaf = Tensor(x, requires_grad=True)
        loss = descriptor_loss_graph(leaf, init.sample_rate, targets, cfg)
        value = loss.item()
        if not np.isfinite(value):
            raise DescriptorMatchDiverged(step)
        if value < best_loss:
            best_loss = value
            best_x = x.copy()
        loss.backward()
        g = leaf.grad
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        x = x - step_size * m_hat / (np.sqrt(v_hat) + adam_eps)

    final = loss_of(x).item()
    if not np.isfinite(final):
        raise DescriptorMatchDiverged(steps)
    if final < best_loss:
        best_loss = final
        best_x = x
    peak = np.max(np.abs(best_x))
    if peak > 1.0:
        best_x = best_x / peak  # descriptors are amplitude-invariant
    return AudioClip(best_x, init.sample_rate)
