"""WAV decode/encode and the waveform-domain transforms of the pipeline.

All operations are pure: they return new clips and never mutate their
inputs.  Samples are kept as float64 in [-1, 1]; clamping to the 16-bit
range happens only when a clip is written out.
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .errors import (
    InvalidBand,
    InvalidCutoff,
    IoFailure,
    MalformedWav,
    UnsupportedEncoding,
    UpsampleRequested,
)

#: remainders shorter than this many seconds are dropped by split()
MIN_TAIL_S = 1.0


@dataclass(frozen=True)
class ChunkId:
    """Identity of a chunk within one run.

    generation 0 = original recording, 1 = long split, 2 = detection
    split, 3 = silence split.
    """

    source_name: str
    offset_s: float = 0.0
    generation: int = 0

    def key(self) -> tuple:
        return (self.source_name, round(self.offset_s, 6), self.generation)

    def label(self) -> str:
        return f"{self.source_name}_{fmt_seconds(self.offset_s)}"


def fmt_seconds(x: float) -> str:
    """Render an offset compactly: 15.0 -> '15', 7.5 -> '7.5'."""
    if x == int(x):
        return str(int(x))
    return repr(round(x, 6))


@dataclass(frozen=True)
class AudioClip:
    """Decoded PCM audio: samples[channel][index] in [-1, 1]."""

    samples: np.ndarray  # shape (channels, n)
    sample_rate: int
    chunk_id: ChunkId = field(default_factory=lambda: ChunkId("unnamed"))

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[np.newaxis, :]
        if s.ndim != 2:
            raise ValueError("samples must be 1-D or (channels, n)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.sample_rate

    def mono(self) -> np.ndarray:
        """Single-channel view (mean of channels)."""
        if self.channels == 1:
            return self.samples[0]
        return self.samples.mean(axis=0)


# ---------------------------------------------------------------------------
# WAV I/O


def decode_wav(data: bytes, name: str = "unnamed") -> AudioClip:
    """Decode RIFF/WAVE bytes (PCM16 or float32) into an AudioClip."""
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{name}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise MalformedWav(f"{name}: fmt chunk too small")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            if len(body) < size:
                raise MalformedWav(f"{name}: data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise MalformedWav(f"{name}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if channels < 1 or rate <= 0:
        raise MalformedWav(f"{name}: bad channel count or rate")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"{name}: format {audio_format}/{bits}-bit not supported")
    if samples.size % channels:
        raise MalformedWav(f"{name}: sample data not divisible by channels")
    frames = samples.reshape(-1, channels).T  # (channels, n)
    return AudioClip(frames, rate, ChunkId(name))


def encode_wav(clip: AudioClip) -> bytes:
    """Encode a clip as PCM16 RIFF/WAVE bytes (clamped, round-to-nearest)."""
    x = np.clip(clip.samples, -1.0, 1.0)
    ints = np.rint(x * 32767.0).astype("<i2")
    payload = ints.T.reshape(-1).tobytes()
    buf = io.BytesIO()
    byte_rate = clip.sample_rate * clip.channels * 2
    buf.write(b"RIFF")
    buf.write(struct.pack("<I", 36 + len(payload)))
    buf.write(b"WAVE")
    buf.write(b"fmt ")
    buf.write(struct.pack("<IHHIIHH", 16, 1, clip.channels, clip.sample_rate,
                          byte_rate, clip.channels * 2, 16))
    buf.write(b"data")
    buf.write(struct.pack("<I", len(payload)))
    buf.write(payload)
    return buf.getvalue()


def read_wav(path) -> AudioClip:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return decode_wav(data, name)


def write_wav(clip: AudioClip, path) -> None:
    try:
        with open(path, "wb") as f:
            f.write(encode_wav(clip))
    except OSError as e:
        raise IoFailure(str(e)) from e


# ---------------------------------------------------------------------------
# Waveform transforms


def split(clip: AudioClip, length_s: float, new_generation: int) -> list[AudioClip]:
    """Cut a clip into consecutive length_s chunks.

    The final remainder is kept only if it is at least 1 s long.  Chunk
    offsets continue from the parent's offset.
    """
    if length_s <= 0:
        raise ValueError("length_s must be positive")
    rate = clip.sample_rate
    n_per = int(round(length_s * rate))
    min_tail = int(math.ceil(MIN_TAIL_S * rate))
    out = []
    n = clip.n_samples
    k = 0
    pos = 0
    while pos < n:
        piece = clip.samples[:, pos:pos + n_per]
        if piece.shape[1] < n_per and piece.shape[1] < min_tail:
            break  # sub-1 s tail dropped
        cid = ChunkId(clip.chunk_id.source_name,
                      clip.chunk_id.offset_s + k * length_s,
                      new_generation)
        out.append(AudioClip(piece, rate, cid))
        pos += n_per
        k += 1
    return out


def to_mono(clip: AudioClip) -> AudioClip:
    if clip.channels == 1:
        return clip
    return AudioClip(clip.mono(), clip.sample_rate, clip.chunk_id)


def downsample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Anti-aliased rational-rate reduction."""
    if target_rate > clip.sample_rate:
        raise UpsampleRequested(
            f"target {target_rate} above source rate {clip.sample_rate}")
    if target_rate == clip.sample_rate:
        return clip
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    out = signal.resample_poly(clip.samples, up, down, axis=1,
                               window=("kaiser", 8.0))
    return AudioClip(out, target_rate, clip.chunk_id)


def highpass(clip: AudioClip, cutoff_hz: float) -> AudioClip:
    """2nd-order Butterworth high-pass, zero initial state, one forward pass."""
    nyq = clip.sample_rate / 2
    if not 0 < cutoff_hz < nyq:
        raise InvalidCutoff(f"cutoff {cutoff_hz} outside (0, {nyq})")
    sos = signal.butter(2, cutoff_hz, btype="highpass",
                        fs=clip.sample_rate, output="sos")
    out = signal.sosfilt(sos, clip.samples, axis=1)
    return AudioClip(out, clip.sample_rate, clip.chunk_id)


def band_reject(clip: AudioClip, lo_hz: float, hi_hz: float) -> AudioClip:
    """Butterworth band-stop over [lo_hz, hi_hz]."""
    nyq = clip.sample_rate / 2
    if not 0 < lo_hz < hi_hz < nyq:
        raise InvalidBand(f"band [{lo_hz}, {hi_hz}] outside (0, {nyq})")
    sos = signal.butter(2, [lo_hz, hi_hz], btype="bandstop",
                        fs=clip.sample_rate, output="sos")
    out = signal.sosfilt(sos, clip.samples, axis=1)
    return AudioClip(out, clip.sample_rate, clip.chunk_id)


def with_chunk_id(clip: AudioClip, cid: ChunkId) -> AudioClip:
    return replace(clip, chunk_id=cid)
