"""Plain-text key-value run configuration covering every tunable.

File format: one ``key = value`` pair per line, ``#`` comments, blank lines
ignored. Unknown keys are an error so typos cannot silently fall back to
defaults. Tuple-valued keys take comma-separated entries.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .descriptors import DescriptorConfig
from .dsp import MelConfig
from .gan.model import GanConfig

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _defaults() -> dict:
    out = {}
    for f in fields(MelConfig):
        out[f"mel.{f.name}"] = getattr(MelConfig(), f.name)
    for f in fields(DescriptorConfig):
        out[f"descriptor.{f.name}"] = getattr(DescriptorConfig(), f.name)
    for f in fields(GanConfig):
        out[f"gan.{f.name}"] = getattr(GanConfig(), f.name)
    out.update(
        {
            "envelope.length": 65536,
            "envelope.smooth_len": 1025,
            "envelope.fade_len": 2048,
            "train.lr": 2e-3,
            "train.lambda_lp": 10.0,
            "train.desc_weight": 0.1,
            "train.sampler_mode": "balanced",
            "train.envelope_smooth": 257,
            "train.envelope_fade": 512,
            "eval.n_per_level": 50,
            "eval.norm_scope": "per_class",
            "fad.clips_per_side": 512,
        }
    )
    return out


class RunConfig:
    """Typed view over the flat key-value store."""

    def __init__(self, overrides: dict | None = None):
        self.values = _defaults()
        for key, raw in (overrides or {}).items():
            if key not in self.values:
                raise KeyError(f"unknown configuration key {key!r}")
            self.values[key] = self._coerce(key, raw)

    def _coerce(self, key, raw):
        default = _defaults()[key]
        if isinstance(raw, str):
            raw = raw.strip()
            if isinstance(default, bool):
                if raw.lower() in _BOOL_TRUE:
                    return True
                if raw.lower() in _BOOL_FALSE:
                    return False
                raise ValueError(f"{key}: expected a boolean, got {raw!r}")
            if isinstance(default, int) and not isinstance(default, bool):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            if isinstance(default, tuple):
                parts = tuple(p.strip() for p in raw.split(",") if p.strip())
                if default and isinstance(default[0], int):
                    return tuple(int(p) for p in parts)
                return parts
            return raw
        return raw

    def __getitem__(self, key):
        if key not in self.values:
            raise KeyError(f"unknown configuration key {key!r}")
        return self.values[key]

    @classmethod
    def load(cls, path) -> "RunConfig":
        overrides = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _defaults():
                raise ValueError(f"{path}:{lineno}: unknown configuration key {key!r}")
            overrides[key] = val.strip()
        return cls(overrides)

    def save(self, path):
        lines = [f"{key} = {self._fmt(value)}" for key, value in sorted(self.values.items())]
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def _fmt(value):
        if isinstance(value, tuple):
            return ",".join(str(v) for v in value)
        return str(value)

    # typed sub-configs ---------------------------------------------------

    def mel_config(self) -> MelConfig:
        kwargs = {f.name: self[f"mel.{f.name}"] for f in fields(MelConfig)}
        return MelConfig(**kwargs)

    def descriptor_config(self) -> DescriptorConfig:
        kwargs = {f.name: self[f"descriptor.{f.name}"] for f in fields(DescriptorConfig)}
        return DescriptorConfig(**kwargs)

    def gan_config(self) -> GanConfig:
        kwargs = {f.name: self[f"gan.{f.name}"] for f in fields(GanConfig)}
        return GanConfig(**kwargs)
