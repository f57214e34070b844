"""Mono WAV reading and writing (PCM16 and float32, RIFF/WAVE container).

Float32 round-trips bit-exactly; PCM16 round-trips within one quantization
step (1/32768). Multichannel files are rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import AudioClip

FORMAT_PCM16 = "pcm16"
FORMAT_FLOAT32 = "float32"

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


class WavFormatError(ValueError):
    pass


def write_wav(clip: AudioClip, path, fmt: str = FORMAT_FLOAT32):
    if fmt == FORMAT_FLOAT32:
        audio_format = _WAVE_FORMAT_IEEE_FLOAT
        bits = 32
        payload = clip.samples.astype("<f4").tobytes()
    elif fmt == FORMAT_PCM16:
        audio_format = _WAVE_FORMAT_PCM
        bits = 16
        scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
    else:
        raise WavFormatError(f"unsupported format {fmt!r}")

    byte_rate = clip.sample_rate * bits // 8
    block_align = bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", audio_format, 1, clip.sample_rate, byte_rate, block_align, bits
    )
    riff_size = 4 + (8 + len(fmt_chunk)) + (8 + len(payload))
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", riff_size) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


def read_wav(path) -> AudioClip:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    chunks = {}
    offset = 12
    while offset + 8 <= len(data):
        cid = data[offset : offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body = data[offset + 8 : offset + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid.decode(errors='replace').strip()!r} chunk")
        chunks[cid] = body
        offset += 8 + size + (size % 2)

    if b"fmt " not in chunks:
        raise WavFormatError(f"{path}: missing 'fmt ' chunk")
    if b"data" not in chunks:
        raise WavFormatError(f"{path}: missing 'data' chunk")

    fmt_body = chunks[b"fmt "]
    if len(fmt_body) < 16:
        raise WavFormatError(f"{path}: malformed 'fmt ' chunk")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt_body, 0)
    if channels != 1:
        raise WavFormatError(f"{path}: only mono supported (got {channels} channels)")

    payload = chunks[b"data"]
    if audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    elif audio_format == _WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise WavFormatError(f"{path}: unsupported encoding (format {audio_format}, {bits}-bit)")
    if samples.size == 0:
        raise WavFormatError(f"{path}: empty 'data' chunk")
    return AudioClip(samples, sample_rate)
