"""Toy style-based waveform GAN: mapping network, style-dependent noise
layers, causal 1x9 convolution blocks with averaging-filter resampling,
input/output skips in the generator, and a residual discriminator whose
branch mix is a learned trigonometric fade.

Layout conventions: dense layers carry vectors as columns (dim, batch);
convolution stacks carry (batch, channels, time). The network trains in
float32; gradient checks cast parameters to float64.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..dsp import AudioClip
from ..descriptors import DESCRIPTOR_NAMES

CHECKPOINT_MAGIC = b"SWGK"
CHECKPOINT_VERSION = 1


class ForwardError(RuntimeError):
    """Non-finite activation inside a network forward pass."""

    def __init__(self, network: str, block: int):
        super().__init__(f"non-finite activation in {network} block {block}")
        self.network = network
        self.block = block


@dataclass(frozen=True)
class GanConfig:
    sample_rate: int = 16000
    output_length: int = 4096
    channels: tuple = (64, 64, 32, 32, 16)
    kernel_len: int = 9
    mapping_layers: int = 4
    d_z: int = 64
    d_w: int = 64
    d_embed: int = 16
    classes: tuple = ("kick", "snare", "closed_hh")
    descriptors: tuple = ()
    use_envelope: bool = False
    use_autofade: bool = True
    batch_size: int = 10
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        if self.kernel_len != 9:
            raise ValueError("kernel length is fixed at 9")
        n_blocks = len(self.channels)
        if n_blocks < 1:
            raise ValueError("need at least one block")
        factor = 2 ** (n_blocks - 1)
        if self.output_length % factor != 0 or self.output_length // factor < self.kernel_len:
            raise ValueError(
                f"output_length must be base_length * 2^{n_blocks - 1} with a sane base"
            )
        for d in self.descriptors:
            if d not in DESCRIPTOR_NAMES:
                raise ValueError(f"unknown descriptor {d!r}")
        if not self.classes:
            raise ValueError("need at least one class")

    @property
    def n_blocks(self) -> int:
        return len(self.channels)

    @property
    def base_length(self) -> int:
        return self.output_length // 2 ** (self.n_blocks - 1)

    @property
    def cond_dim(self) -> int:
        return len(self.classes) + len(self.descriptors)

    @property
    def style_dim(self) -> int:
        return self.d_w + self.d_embed

    def block_length(self, i: int) -> int:
        return self.base_length * 2 ** min(i, self.n_blocks - 1)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GanConfig":
        spec = {f.name: f.type for f in fields(cls)}
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in spec:
                raise ValueError(f"unknown GAN config key {key!r}")
            if key in ("channels",):
                values[key] = tuple(int(v) for v in val.split(",") if v)
            elif key in ("classes", "descriptors"):
                values[key] = tuple(v for v in val.split(",") if v)
            elif key in ("use_envelope", "use_autofade"):
                values[key] = val.lower() in ("1", "true", "yes")
            elif key == "leaky_slope":
                values[key] = float(val)
            else:
                values[key] = int(val)
        return cls(**values)


def condition_vector(cfg: GanConfig, class_name: str, targets: dict | None = None) -> np.ndarray:
    """One-hot class label plus conditioned descriptor values rescaled to [0, 1]."""
    if class_name not in cfg.classes:
        raise ValueError(f"class {class_name!r} not in config classes {cfg.classes}")
    vec = np.zeros(cfg.cond_dim)
    vec[cfg.classes.index(class_name)] = 1.0
    for j, name in enumerate(cfg.descriptors):
        if targets is None or name not in targets:
            raise ValueError(f"conditioning requires a target for descriptor {name!r}")
        vec[len(cfg.classes) + j] = float(targets[name]) / 100.0
    return vec


# ---------------------------------------------------------------------------
# Parameters

DTYPE = np.float32


def _param(rng, shape, std):
    return Tensor((rng.standard_normal(shape) * std).astype(DTYPE), requires_grad=True)


def _zeros(shape, value=0.0):
    return Tensor(np.full(shape, value, dtype=DTYPE), requires_grad=True)


def _d_channels(cfg: GanConfig) -> list:
    rev = list(reversed(cfg.channels))
    return rev + [rev[-1]]


def init_params(cfg: GanConfig, seed: int) -> dict:
    """Initialize all generator and discriminator parameters."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5747]))
    p = {}
    k = cfg.kernel_len
    s_dim = cfg.style_dim

    # generator
    p["g_const"] = _param(rng, (cfg.channels[0], cfg.base_length), 0.5)
    p["g_embed_w"] = _param(rng, (cfg.d_embed, cfg.cond_dim), 1.0 / math.sqrt(cfg.cond_dim))
    p["g_embed_b"] = _zeros((cfg.d_embed,))
    d_in = cfg.d_z + cfg.d_embed
    for i in range(cfg.mapping_layers):
        p[f"g_map{i}_w"] = _param(rng, (cfg.d_w, d_in), math.sqrt(2.0 / d_in))
        p[f"g_map{i}_b"] = _zeros((cfg.d_w,))
        d_in = cfg.d_w
    prev = cfg.channels[0]
    for i, ch in enumerate(cfg.channels):
        p[f"g_conv{i}_w"] = _param(rng, (ch, prev, k), math.sqrt(2.0 / (prev * k)))
        p[f"g_conv{i}_b"] = _zeros((ch,))
        p[f"g_style{i}_w"] = _param(rng, (ch, s_dim), 1.0 / math.sqrt(s_dim))
        p[f"g_style{i}_b"] = _zeros((ch,), value=1.0)
        p[f"g_noise{i}_w"] = _zeros((ch, s_dim))
        p[f"g_noise{i}_b"] = _zeros((ch,), value=0.1)
        p[f"g_nbias{i}"] = _zeros((ch,))
        p[f"g_skip{i}_w"] = _param(rng, (1, ch, 1), 1.0 / math.sqrt(ch))
        p[f"g_skip{i}_b"] = _zeros((1,))
        prev = ch

    # discriminator
    d_ch = _d_channels(cfg)
    p["d_from_w"] = _param(rng, (d_ch[0], 1, 1), 1.0)
    p["d_from_b"] = _zeros((d_ch[0],))
    for i in range(cfg.n_blocks):
        c_in, c_out = d_ch[i], d_ch[i + 1]
        p[f"d_conv{i}_w"] = _param(rng, (c_out, c_in, k), math.sqrt(2.0 / (c_in * k)))
        p[f"d_conv{i}_b"] = _zeros((c_out,))
        p[f"d_skip{i}_w"] = _param(rng, (c_out, c_in, 1), 1.0 / math.sqrt(c_in))
        p[f"d_skip{i}_b"] = _zeros((c_out,))
        p[f"d_alpha{i}"] = _zeros((), value=math.pi / 4.0)
    c_last = d_ch[-1]
    p["d_embed_w"] = _param(rng, (cfg.d_embed, cfg.cond_dim), 1.0 / math.sqrt(cfg.cond_dim))
    p["d_embed_b"] = _zeros((cfg.d_embed,))
    fc_in = c_last + cfg.d_embed
    p["d_fc1_w"] = _param(rng, (c_last, fc_in), math.sqrt(2.0 / fc_in))
    p["d_fc1_b"] = _zeros((c_last,))
    p["d_fc2_w"] = _param(rng, (1, c_last), 1.0 / math.sqrt(c_last))
    p["d_fc2_b"] = _zeros((1,))
    return p


def generator_param_names(params) -> list:
    return [n for n in params if n.startswith("g_")]


def discriminator_param_names(params) -> list:
    return [n for n in params if n.startswith("d_")]


def detach_params(params: dict) -> dict:
    return {name: t.detach() for name, t in params.items()}


# ---------------------------------------------------------------------------
# Layers


def autofade(x: Tensor, y: Tensor, alpha: Tensor) -> Tensor:
    """sin(alpha) * x + cos(alpha) * y; preserves variance when the branches
    have equal variance, and gradients flow to x, y, and alpha."""
    if x.shape != y.shape:
        raise ValueError(f"autofade shape mismatch: {x.shape} vs {y.shape}")
    return x * ad.sin(alpha) + y * ad.cos(alpha)


def noise_fade(t_len: int) -> np.ndarray:
    """Linear fade from 1 at t=0 to exactly 0 at t=T-1."""
    if t_len == 1:
        return np.ones(1)
    return 1.0 - np.arange(t_len) / (t_len - 1)


def shaped_noise(rng: np.random.Generator, n_batch: int, t_len: int) -> np.ndarray:
    """Standard-normal noise, one signal per item shared across channels,
    shaped by the linear fade so tails stay quiet."""
    return rng.standard_normal((n_batch, t_len)) * noise_fade(t_len)


def noise_layer(x: Tensor, style: Tensor, gain_w: Tensor, gain_b: Tensor,
                bias: Tensor, noise: np.ndarray) -> Tensor:
    """y = x + gain(style) * noise + bias, gains and bias per channel.

    ``noise`` is the pre-shaped (faded) signal, shape (batch, time).
    """
    gains = ad.transpose2d(ad.affine(style, gain_w, gain_b))
    return ad.add_channel_bias(ad.add_scaled_signal(x, gains, noise), bias)


def mapping_network(params: dict, cfg: GanConfig, z_cols, cond_cols) -> Tensor:
    """Latent + condition embedding -> style vector columns (style_dim, B).

    The condition embedding is concatenated to the latent before the
    mapping layers and again to the mapping output.
    """
    zt = z_cols if isinstance(z_cols, Tensor) else Tensor(np.asarray(z_cols, dtype=DTYPE))
    ct = cond_cols if isinstance(cond_cols, Tensor) else Tensor(np.asarray(cond_cols, dtype=DTYPE))
    if zt.shape[0] != cfg.d_z or ct.shape[0] != cfg.cond_dim:
        raise ValueError(f"mapping input dims: z {zt.shape}, cond {ct.shape}")
    embed = ad.affine(ct, params["g_embed_w"], params["g_embed_b"])
    h = ad.vstack([zt, embed])
    for i in range(cfg.mapping_layers):
        h = ad.leaky_relu(ad.affine(h, params[f"g_map{i}_w"], params[f"g_map{i}_b"]), cfg.leaky_slope)
    return ad.vstack([h, embed])


def make_noises(cfg: GanConfig, n_batch: int, rng: np.random.Generator) -> list:
    return [shaped_noise(rng, n_batch, cfg.block_length(i)) for i in range(cfg.n_blocks)]


def zero_noises(cfg: GanConfig, n_batch: int) -> list:
    return [np.zeros((n_batch, cfg.block_length(i))) for i in range(cfg.n_blocks)]


def generator_forward_batch(params: dict, cfg: GanConfig, z: np.ndarray, cond: np.ndarray,
                            noises: list, envelopes: np.ndarray | None = None) -> Tensor:
    """Synthesis pass for a batch: z (B, d_z), cond (B, cond_dim),
    noises[i] (B, block_length(i)); returns waveforms (B, output_length).

    Per block: 2x averaging upsample (after the first), causal 1x9 conv,
    per-channel style gain, style-dependent noise addition, leaky relu;
    block outputs are projected to one channel and summed over an upsampled
    skip path. ``envelopes`` (B, output_length) multiplies the output
    inside the graph when given.
    """
    n_batch = z.shape[0]
    style = mapping_network(params, cfg, z.T, cond.T)
    x = ad.repeat_batch(params["g_const"], n_batch)
    skip = None
    for i in range(cfg.n_blocks):
        if i > 0:
            x = ad.avg_upsample2x(x)
        x = ad.add_channel_bias(ad.causal_conv1d(x, params[f"g_conv{i}_w"]), params[f"g_conv{i}_b"])
        gains = ad.transpose2d(ad.affine(style, params[f"g_style{i}_w"], params[f"g_style{i}_b"]))
        x = ad.scale_channels(x, gains)
        x = noise_layer(x, style, params[f"g_noise{i}_w"], params[f"g_noise{i}_b"],
                        params[f"g_nbias{i}"], noises[i].astype(x.dtype))
        x = ad.leaky_relu(x, cfg.leaky_slope)
        if not np.all(np.isfinite(x.data)):
            raise ForwardError("generator", i)
        s = ad.add_channel_bias(ad.causal_conv1d(x, params[f"g_skip{i}_w"]), params[f"g_skip{i}_b"])
        skip = s if skip is None else ad.avg_upsample2x(skip) + s
    out = ad.reshape(skip, (n_batch, cfg.output_length))
    if envelopes is not None:
        out = out * Tensor(envelopes.astype(out.dtype))
    return out


def generator_forward(params: dict, cfg: GanConfig, z: np.ndarray, class_name: str,
                      targets: dict | None, rng: np.random.Generator,
                      envelope: np.ndarray | None = None) -> AudioClip:
    """Single-clip synthesis; returns an AudioClip of exactly output_length."""
    cond = condition_vector(cfg, class_name, targets)
    noises = make_noises(cfg, 1, rng)
    env = None if envelope is None else envelope[None, :]
    out = generator_forward_batch(params, cfg, z[None, :], cond[None, :], noises, env)
    return AudioClip(out.data[0].astype(np.float64), cfg.sample_rate)


def discriminator_forward_batch(params: dict, cfg: GanConfig, x, cond: np.ndarray) -> Tensor:
    """Residual critic: x (B, output_length) or Tensor -> scores (B,).

    Each block combines a causal-conv path with a 1x1 bypass, both
    downsampled 2x (except the last block), mixed by the learned
    trigonometric fade (or a fixed 1/sqrt(2) sum when disabled). The
    condition embedding joins the time-pooled features before the head.
    """
    xt = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))
    n_batch = xt.shape[0]
    if xt.shape[1] != cfg.output_length:
        raise ValueError(f"discriminator input length {xt.shape[1]} != {cfg.output_length}")
    h = ad.reshape(xt, (n_batch, 1, cfg.output_length))
    h = ad.leaky_relu(
        ad.add_channel_bias(ad.causal_conv1d(h, params["d_from_w"]), params["d_from_b"]),
        cfg.leaky_slope,
    )
    for i in range(cfg.n_blocks):
        conv = ad.add_channel_bias(ad.causal_conv1d(h, params[f"d_conv{i}_w"]), params[f"d_conv{i}_b"])
        conv = ad.leaky_relu(conv, cfg.leaky_slope)
        byp = ad.add_channel_bias(ad.causal_conv1d(h, params[f"d_skip{i}_w"]), params[f"d_skip{i}_b"])
        if i < cfg.n_blocks - 1:
            conv = ad.avg_downsample2x(conv)
            byp = ad.avg_downsample2x(byp)
        if cfg.use_autofade:
            h = autofade(conv, byp, params[f"d_alpha{i}"])
        else:
            h = (conv + byp) * (1.0 / math.sqrt(2.0))
        if not np.all(np.isfinite(h.data)):
            raise ForwardError("discriminator", i)
    pooled = ad.transpose2d(ad.time_mean(h))
    embed = ad.affine(Tensor(np.asarray(cond, dtype=xt.dtype).T), params["d_embed_w"], params["d_embed_b"])
    feat = ad.vstack([pooled, embed])
    hidden = ad.leaky_relu(ad.affine(feat, params["d_fc1_w"], params["d_fc1_b"]), cfg.leaky_slope)
    score = ad.affine(hidden, params["d_fc2_w"], params["d_fc2_b"])
    return ad.reshape(score, (n_batch,))


def discriminator_forward(params: dict, cfg: GanConfig, clip: AudioClip, class_name: str,
                          targets: dict | None = None) -> float:
    cond = condition_vector(cfg, class_name, targets)
    return float(discriminator_forward_batch(params, cfg, clip.samples[None, :], cond[None, :]).data[0])


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, cfg: GanConfig, params: dict, envelopes: dict | None = None):
    """Versioned binary: magic SWGK, u32 version, config text block, then
    named f32 tensors (parameters plus optional env/<class> tables)."""
    tensors = {name: t.data for name, t in params.items()}
    for class_name, values in (envelopes or {}).items():
        tensors[f"env/{class_name}"] = np.asarray(values)
    config_text = cfg.to_text().encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(config_text)))
        fh.write(config_text)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            data = np.asarray(tensors[name]).astype("<f4")  # keeps 0-d shapes
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path):
    """Returns (config, params, envelopes)."""
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a SWGK checkpoint")
    version, cfg_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    cfg = GanConfig.from_text(blob[offset : offset + cfg_len].decode())
    offset += cfg_len
    (n_tensors,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    params = {}
    envelopes = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode()
        offset += name_len
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        if name.startswith("env/"):
            envelopes[name[4:]] = data.astype(np.float64)
        else:
            params[name] = Tensor(data.astype(DTYPE), requires_grad=True)
    expected = set(init_params(cfg, 0))
    if set(params) != expected:
        missing = expected.symmetric_difference(params)
        raise ValueError(f"{path}: parameter set does not match config (mismatch: {sorted(missing)[:4]}...)")
    return cfg, params, envelopes


# ---------------------------------------------------------------------------
# Batch generation


def checkpoint_generator(cfg: GanConfig, params: dict, envelopes: dict | None = None):
    """Adapter for the control-evaluation protocol: returns a
    generate_fn(targets, class_name, rng) -> AudioClip closure."""

    def generate_fn(targets, class_name, rng):
        z = rng.standard_normal(cfg.d_z)
        env = envelopes[class_name] if cfg.use_envelope else None
        used = {name: targets[name] for name in cfg.descriptors}
        return generator_forward(params, cfg, z, class_name, used, rng, env)

    return generate_fn


@dataclass(frozen=True)
class GenerationStats:
    n_clips: int
    wall_seconds: float
    clips_per_second: float
    audio_seconds_per_second: float


def generate_batch(cfg: GanConfig, params: dict, n: int, cond_list, seed: int,
                   envelopes: dict | None = None):
    """Generate ``n`` clips deterministically from per-clip derived seeds.

    ``cond_list`` is a (class_name, targets) pair applied to every clip or a
    list of n such pairs. Returns (clips, GenerationStats); generation is
    seed-derived per clip, so any parallel schedule would produce identical
    audio.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if isinstance(cond_list, tuple):
        cond_list = [cond_list] * n
    cond_list = list(cond_list)
    if len(cond_list) != n:
        raise ValueError(f"need {n} conditions, got {len(cond_list)}")
    if cfg.use_envelope:
        missing = {c for c, _ in cond_list} - set(envelopes or {})
        if missing:
            raise ValueError(f"checkpoint lacks envelopes for classes: {sorted(missing)}")

    children = np.random.SeedSequence(seed).spawn(n)
    clips = []
    start = time.perf_counter()
    for i in range(n):
        rng = np.random.default_rng(children[i])
        z = rng.standard_normal(cfg.d_z)
        class_name, targets = cond_list[i]
        env = envelopes[class_name] if cfg.use_envelope else None
        clips.append(generator_forward(params, cfg, z, class_name, targets, rng, env))
    wall = time.perf_counter() - start
    clip_seconds = n * cfg.output_length / cfg.sample_rate
    stats = GenerationStats(
        n_clips=n,
        wall_seconds=wall,
        clips_per_second=n / wall if wall > 0 else 0.0,
        audio_seconds_per_second=clip_seconds / wall if wall > 0 else 0.0,
    )
    return clips, stats
