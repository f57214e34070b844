"""Adversarial training loop: alternating critic/generator updates with a
one-sided Lipschitz penalty on interpolated points and an optional L1
descriptor loss on the generated audio.

The penalty term needs the parameter-gradient of the critic's input-gradient
norm, a second-order quantity the engine deliberately does not support.
The update therefore uses the exact-limit surrogate: the true input
gradient g is computed with detached parameters, and the differentiable
directional derivative of the critic along g/|g| (a centered finite
difference of two ordinary forwards) stands in for |g| inside the loss.
As the probe step shrinks this has the same parameter gradient as the true
penalty, because the norm's derivative is the directional derivative along
its own gradient direction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..descriptors import DescriptorConfig, describe, descriptor_l1_batch
from ..dsp import AudioClip
from ..envelope import extract_class_envelope
from ..sampler import DatasetManifest, sample
from ..wavio import read_wav
from .model import (
    GanConfig,
    condition_vector,
    detach_params,
    discriminator_forward_batch,
    discriminator_param_names,
    generator_forward_batch,
    generator_param_names,
    init_params,
    make_noises,
    save_checkpoint,
)

FD_PROBE_EPS = 0.1  # directional-derivative probe step, in sample units


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


def wgan_lp_loss(real_scores, fake_scores, interp_grad_norms, lam: float):
    """d_loss = mean(fake) - mean(real) + lam * mean(max(0, |grad| - 1)^2);
    g_loss = -mean(fake). Penalty is one-sided: norms below 1 are free."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    real_scores = np.asarray(real_scores, dtype=np.float64)
    fake_scores = np.asarray(fake_scores, dtype=np.float64)
    norms = np.asarray(interp_grad_norms, dtype=np.float64)
    penalty = lam * np.mean(np.maximum(0.0, norms - 1.0) ** 2)
    d_loss = fake_scores.mean() - real_scores.mean() + penalty
    g_loss = -fake_scores.mean()
    return float(d_loss), float(g_loss)


class Adam:
    """Moment-based updates (beta1=0 turns it into RMS-normalized descent)."""

    def __init__(self, names, lr=2e-3, beta1=0.0, beta2=0.99, eps=1e-8):
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict):
        self.t += 1
        for name in self.names:
            p = params[name]
            g = p.grad
            if g is None:
                continue
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1.0 - self.beta1**self.t) if self.beta1 > 0 else m
            v_hat = v / (1.0 - self.beta2**self.t)
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


@dataclass
class TrainResult:
    config: GanConfig
    params: dict
    envelopes: dict
    log_rows: list = field(default_factory=list)
    checkpoint_path: str | None = None


def _fit_length(x: np.ndarray, length: int) -> np.ndarray:
    if x.size >= length:
        return x[:length]
    out = np.zeros(length)
    out[: x.size] = x
    return out


def _load_dataset(cfg: GanConfig, manifest: DatasetManifest, desc_cfg: DescriptorConfig):
    """Clip cache (fitted to output_length) plus per-clip descriptor vectors."""
    clips = {}
    descriptors = {}
    for entry in manifest.entries:
        clip = read_wav(manifest.resolve(entry))
        if clip.sample_rate != cfg.sample_rate:
            raise ValueError(
                f"{entry.path}: sample rate {clip.sample_rate} != config {cfg.sample_rate}"
            )
        fitted = _fit_length(clip.samples, cfg.output_length)
        clips[entry.path] = fitted.astype(np.float32)
        descriptors[entry.path] = describe(AudioClip(fitted, cfg.sample_rate), desc_cfg)
    return clips, descriptors


def _build_envelopes(cfg: GanConfig, manifest: DatasetManifest, clips: dict,
                     smooth_len: int, fade_len: int) -> dict:
    envelopes = {}
    for drum_class in manifest.classes:
        class_clips = [
            AudioClip(clips[manifest.entries[i].path].astype(np.float64), cfg.sample_rate)
            for i in manifest.by_class[drum_class]
        ]
        table = extract_class_envelope(
            class_clips, drum_class, length=cfg.output_length,
            smooth_len=smooth_len, fade_len=fade_len, sample_rate=cfg.sample_rate,
        )
        envelopes[drum_class.value] = table.values
    return envelopes


def train(cfg: GanConfig, manifest: DatasetManifest, steps: int, seed: int,
          sampler_mode: str = "balanced", lr: float = 2e-3, lam: float = 10.0,
          desc_weight: float = 0.1, descriptor_loss_enabled: bool = True,
          desc_cfg: DescriptorConfig = DescriptorConfig(),
          envelope_smooth: int = 257, envelope_fade: int = 512,
          checkpoint_path=None, log_path=None, forward_log: list | None = None) -> TrainResult:
    """Run ``steps`` alternating critic/generator updates (1:1) and write a
    deterministic checkpoint.

    Conditioning per item comes from the sampled real clip: its class label
    one-hot plus (when the config conditions on descriptors) its measured
    descriptor values, which also serve as the L1 targets for the generated
    audio. Loss log rows are (step, d_loss, g_loss, desc_l1) with d_loss
    evaluated by :func:`wgan_lp_loss` at the true interpolation gradient
    norms.
    """
    missing = [c for c in (e.drum_class.value for e in manifest.entries) if c not in cfg.classes]
    if missing:
        raise ValueError(f"manifest classes {sorted(set(missing))} not in config classes")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7261]))
    params = init_params(cfg, seed)
    clips, clip_descriptors = _load_dataset(cfg, manifest, desc_cfg)
    envelopes = (
        _build_envelopes(cfg, manifest, clips, envelope_smooth, envelope_fade)
        if cfg.use_envelope
        else {}
    )

    adam_g = Adam(generator_param_names(params), lr=lr)
    adam_d = Adam(discriminator_param_names(params), lr=lr)
    g_names = generator_param_names(params)
    d_names = discriminator_param_names(params)
    use_desc = bool(cfg.descriptors) and descriptor_loss_enabled
    n_batch = cfg.batch_size
    log_rows = []

    for step in range(1, steps + 1):
        entries = [sample(manifest, sampler_mode, rng) for _ in range(n_batch)]
        real = np.stack([clips[e.path] for e in entries])
        descs = [clip_descriptors[e.path] for e in entries]
        targets = [
            {name: d.get(name) for name in cfg.descriptors} if cfg.descriptors else None
            for d in descs
        ]
        conds = np.stack([
            condition_vector(cfg, e.drum_class.value, t) for e, t in zip(entries, targets)
        ])
        envs = (
            np.stack([envelopes[e.drum_class.value] for e in entries])
            if cfg.use_envelope
            else None
        )

        # ---- critic update -------------------------------------------
        z = rng.standard_normal((n_batch, cfg.d_z))
        noises = make_noises(cfg, n_batch, rng)
        fake = generator_forward_batch(detach_params(params), cfg, z, conds, noises, envs).data

        mix = rng.uniform(0.0, 1.0, (n_batch, 1))
        interp = (mix * real + (1.0 - mix) * fake).astype(np.float32)

        detached = detach_params(params)
        leaf = Tensor(interp, requires_grad=True)
        discriminator_forward_batch(detached, cfg, leaf, conds).sum().backward()
        grad_in = leaf.grad.astype(np.float64)
        norms = np.sqrt((grad_in**2).sum(axis=1))
        unit = grad_in / np.maximum(norms, 1e-12)[:, None]

        d_real = discriminator_forward_batch(params, cfg, real, conds)
        d_fake = discriminator_forward_batch(params, cfg, fake, conds)
        d_plus = discriminator_forward_batch(
            params, cfg, (interp + FD_PROBE_EPS * unit).astype(np.float32), conds)
        d_minus = discriminator_forward_batch(
            params, cfg, (interp - FD_PROBE_EPS * unit).astype(np.float32), conds)
        dir_deriv = (d_plus - d_minus) * (1.0 / (2.0 * FD_PROBE_EPS))
        penalty = ad.relu(dir_deriv - 1.0)
        d_loss_t = d_fake.mean() - d_real.mean() + lam * (penalty * penalty).mean()
        if not np.isfinite(d_loss_t.item()):
            raise TrainingDiverged(step, "critic loss")
        ad.zero_grad(params.values())
        d_loss_t.backward()
        adam_d.step(params)

        d_loss, _ = wgan_lp_loss(d_real.data, d_fake.data, norms, lam)

        # ---- generator update ----------------------------------------
        z2 = rng.standard_normal((n_batch, cfg.d_z))
        noises2 = make_noises(cfg, n_batch, rng)
        fake2 = generator_forward_batch(params, cfg, z2, conds, noises2, envs)
        if forward_log is not None:
            forward_log.append(fake2.data.copy())
        detached = detach_params(params)
        g_loss_t = -discriminator_forward_batch(detached, cfg, fake2, conds).mean()
        desc_l1 = None
        if use_desc:
            target_mat = np.array([[t[name] for name in cfg.descriptors] for t in targets])
            l1_t = descriptor_l1_batch(fake2, cfg.sample_rate, target_mat, cfg.descriptors, desc_cfg)
            desc_l1 = l1_t.item()
            g_loss_t = g_loss_t + desc_weight * l1_t
        g_loss = g_loss_t.item()
        if not np.isfinite(g_loss):
            raise TrainingDiverged(step, "generator loss")
        ad.zero_grad(params.values())
        g_loss_t.backward()
        adam_g.step(params)

        log_rows.append({"step": step, "d_loss": d_loss, "g_loss": g_loss, "desc_l1": desc_l1})

    if log_path is not None:
        write_loss_log(log_path, log_rows)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, cfg, params, envelopes if cfg.use_envelope else None)
    return TrainResult(
        config=cfg,
        params=params,
        envelopes=envelopes,
        log_rows=log_rows,
        checkpoint_path=None if checkpoint_path is None else str(checkpoint_path),
    )


def write_loss_log(path, log_rows):
    """CSV loss log: step,d_loss,g_loss,desc_l1 (desc_l1 blank when unused)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "d_loss", "g_loss", "desc_l1"])
        for row in log_rows:
            desc = "" if row["desc_l1"] is None else repr(row["desc_l1"])
            writer.writerow([row["step"], repr(row["d_loss"]), repr(row["g_loss"]), desc])
