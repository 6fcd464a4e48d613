"""Labeled synthetic corpus generation.

Produces minute-long 44.1 kHz stereo WAV files built from 15-second
segments, each segment being one of: chirp (FM bird-like bursts), rain
(broadband noise plus impulse transients), cicada (sustained narrowband
noise), or silence (noise floor only).  A CSV manifest records the
ground-truth label of every segment.  Output is byte-deterministic for a
fixed spec.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, ChunkId, write_wav
from .errors import IoFailure

LABELS = ("chirp", "rain", "cicada", "silence")
SEGMENT_S = 15
RATE = 44100

# per-label level above the noise floor, dB
CHIRP_DB = 24.0
RAIN_DB = 15.0
CICADA_DB = 12.0


@dataclass(frozen=True)
class SynthSpec:
    total_minutes: int
    mix: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    seed: int = 0
    noise_floor_db: float = -40.0

    def __post_init__(self):
        if self.total_minutes <= 0:
            raise ValueError("total_minutes must be positive")
        if abs(sum(self.mix) - 1.0) > 1e-9:
            raise ValueError("mix fractions must sum to 1")
        if any(f < 0 for f in self.mix):
            raise ValueError("mix fractions must be nonnegative")


def chirp_event(n: int, rate: int, rng: np.random.Generator,
                amp: float) -> np.ndarray:
    """Intermittent FM sweeps in 2-8 kHz with quiet gaps between bursts."""
    out = np.zeros(n)
    t = rng.uniform(0.1, 0.5)
    while True:
        dur = rng.uniform(0.5, 0.8)
        start = int(t * rate)
        ns = int(dur * rate)
        if start + ns > n:
            break
        f0 = rng.uniform(2000, 7000)
        f1 = np.clip(f0 + rng.uniform(-2000, 2000), 2000, 8000)
        tt = np.arange(ns) / rate
        phase = 2 * np.pi * (f0 * tt + (f1 - f0) * tt**2 / (2 * dur))
        env = np.hanning(ns)
        out[start:start + ns] += amp * env * np.sin(phase)
        t += dur + rng.uniform(0.7, 1.4)
    return out


def rain_event(n: int, rate: int, rng: np.random.Generator,
               amp: float) -> np.ndarray:
    """Sustained broadband wash with random impulse transients."""
    out = rng.normal(0.0, amp, n)
    n_impulses = rng.poisson(15 * n / rate)
    for _ in range(n_impulses):
        pos = rng.integers(0, max(1, n - 200))
        length = int(rng.integers(40, 200))
        decay = np.exp(-np.arange(length) / (length / 4))
        out[pos:pos + length] += rng.normal(0.0, 3 * amp, length) * decay
    return out


def cicada_event(n: int, rate: int, rng: np.random.Generator,
                 amp: float) -> np.ndarray:
    """Narrowband noise in a random 1.5-2.5 kHz-wide band within 3-9 kHz."""
    width = rng.uniform(1500, 2500)
    lo = rng.uniform(3000, 9000 - width)
    white = rng.normal(0.0, 1.0, n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    mask = (freqs >= lo) & (freqs <= lo + width)
    spec[~mask] = 0.0
    band = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(band**2))
    return band * (amp / max(rms, 1e-30))


def synth_segment(label: str, n: int, rate: int, rng: np.random.Generator,
                  floor_amp: float) -> np.ndarray:
    """Event-only signal for one segment (noise floor added by caller)."""
    if label == "chirp":
        return chirp_event(n, rate, rng, floor_amp * 10 ** (CHIRP_DB / 20))
    if label == "rain":
        return rain_event(n, rate, rng, floor_amp * 10 ** (RAIN_DB / 20))
    if label == "cicada":
        return cicada_event(n, rate, rng, floor_amp * 10 ** (CICADA_DB / 20))
    if label == "silence":
        return np.zeros(n)
    raise ValueError(f"unknown label {label!r}")


def gen_corpus(spec: SynthSpec, out_dir) -> list[dict]:
    """Write the corpus WAVs and labels.csv; return the manifest rows."""
    rng = np.random.default_rng(spec.seed)
    floor_amp = 10 ** (spec.noise_floor_db / 20)
    seg_n = SEGMENT_S * RATE
    rows = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for minute in range(spec.total_minutes):
            fname = f"corpus_{minute:03d}.wav"
            chans = rng.normal(0.0, floor_amp, (2, 60 * RATE))
            for k in range(60 // SEGMENT_S):
                label = rng.choice(LABELS, p=spec.mix)
                event = synth_segment(label, seg_n, RATE, rng, floor_amp)
                sl = slice(k * seg_n, (k + 1) * seg_n)
                chans[0, sl] += event
                chans[1, sl] += event
                rows.append({"file": fname, "offset_s": k * SEGMENT_S,
                             "duration_s": SEGMENT_S, "label": str(label)})
            clip = AudioClip(chans, RATE, ChunkId(os.path.splitext(fname)[0]))
            write_wav(clip, os.path.join(out_dir, fname))
        with open(os.path.join(out_dir, "labels.csv"), "w", newline="",
                  encoding="utf-8") as f:
            w = csv.DictWriter(f, ["file", "offset_s", "duration_s", "label"])
            w.writeheader()
            w.writerows(rows)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return rows
