"""Stationary noise reduction with the MMSE short-time spectral
amplitude estimator.

Per frame and bin the gain is derived from the a posteriori SNR
(gamma = |Y|^2 / noise) and a decision-directed a priori SNR estimate.
Noise power is initialized from the leading frames and tracked with a
gated recursive update (only bins with gamma < 2 adapt), so a late-onset
signal does not inflate the noise estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .audio import AudioClip
from .errors import TooFewFrames, TooShort
from .spectral import Spectrogram, _frame

NOISE_FLOOR = 1e-12
GAMMA_FLOOR = 1e-10
UPDATE_GATE = 2.0       # a posteriori SNR below which noise adapts
UPDATE_RATE = 0.02


@dataclass(frozen=True)
class EnhanceConfig:
    alpha: float = 0.98
    gain_floor_db: float = -25.0
    noise_init_frames: int = 40
    window_size: int = 256
    hop: int = 128

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.gain_floor_db >= 0:
            raise ValueError("gain_floor_db must be negative")
        if self.noise_init_frames < 1:
            raise ValueError("noise_init_frames must be >= 1")
        if self.hop != self.window_size // 2:
            raise ValueError("hop must be half the window size")


def mmse_gain(xi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Spectral amplitude gain for a priori SNR xi and a posteriori gamma.

    Uses exponentially-scaled Bessel functions, so no overflow for any v.
    """
    v = xi * gamma / (1.0 + xi)
    # exp(-v/2) * I0(v/2) == i0e(v/2), likewise for I1
    return (math.sqrt(math.pi) / 2.0) * (np.sqrt(v) / gamma) * (
        (1.0 + v) * i0e(v / 2.0) + v * i1e(v / 2.0))


def _gated_update(noise: np.ndarray, power: np.ndarray,
                  reference: np.ndarray) -> None:
    """Recursive noise update on bins whose a posteriori SNR is below the
    gate.  The SNR is taken against the initial estimate, not the tracked
    one: gating on the tracked value is self-reinforcing and drags the
    estimate steadily downward on stationary noise."""
    mask = power < UPDATE_GATE * reference
    noise[mask] = (1.0 - UPDATE_RATE) * noise[mask] + UPDATE_RATE * power[mask]


def estimate_noise_psd(spec: Spectrogram, n_frames: int) -> np.ndarray:
    """Tracked per-bin noise power: leading-frame mean plus gated updates
    over the remaining frames."""
    if spec.n_frames < n_frames:
        raise TooFewFrames(
            f"need >= {n_frames} frames, spectrogram has {spec.n_frames}")
    power = spec.magnitudes**2
    noise = power[:n_frames].mean(axis=0)
    reference = np.maximum(noise.copy(), NOISE_FLOOR)
    for t in range(n_frames, spec.n_frames):
        _gated_update(noise, power[t], reference)
    return noise


def mmse_stsa(clip: AudioClip, cfg: EnhanceConfig = EnhanceConfig()) -> AudioClip:
    """Enhance a mono clip; output has the same length and phase."""
    x = clip.mono()
    n = len(x)
    win, hop = cfg.window_size, cfg.hop
    if n < win:
        raise TooShort(f"need >= {win} samples, got {n}")
    if np.max(np.abs(x)) == 0.0:
        return AudioClip(x.copy(), clip.sample_rate, clip.chunk_id)

    # pad so every input sample is covered by a full frame
    n_frames = 1 + math.ceil((n - win) / hop)
    padded = np.zeros(win + (n_frames - 1) * hop)
    padded[:n] = x
    frames = _frame(padded, win, hop)
    w = np.hamming(win)
    spectra = np.fft.rfft(frames * w, axis=1)
    power = np.abs(spectra)**2

    init = min(cfg.noise_init_frames, n_frames)
    noise = np.maximum(power[:init].mean(axis=0), NOISE_FLOOR)
    reference = noise.copy()
    gain_floor = 10.0 ** (cfg.gain_floor_db / 20.0)
    prev = np.ones(spectra.shape[1])  # G^2 * gamma of the previous frame

    out = np.zeros_like(padded)
    wsum = np.zeros_like(padded)
    for t in range(n_frames):
        gamma = np.maximum(power[t] / np.maximum(noise, NOISE_FLOOR),
                           GAMMA_FLOOR)
        xi = cfg.alpha * prev + (1.0 - cfg.alpha) * np.maximum(gamma - 1.0, 0.0)
        xi = np.maximum(xi, GAMMA_FLOOR)
        gain = np.clip(mmse_gain(xi, gamma), gain_floor, 1.0)
        prev = gain**2 * gamma
        _gated_update(noise, power[t], reference)
        seg = np.fft.irfft(gain * spectra[t], win)
        pos = t * hop
        out[pos:pos + win] += seg
        wsum[pos:pos + win] += w
    out /= np.maximum(wsum, 1e-8)
    return AudioClip(out[:n], clip.sample_rate, clip.chunk_id)


def ola_roundtrip(clip: AudioClip, cfg: EnhanceConfig = EnhanceConfig()) -> AudioClip:
    """Run the analysis/synthesis path with unit gain (identity check)."""
    x = clip.mono()
    n = len(x)
    win, hop = cfg.window_size, cfg.hop
    if n < win:
        raise TooShort(f"need >= {win} samples, got {n}")
    n_frames = 1 + math.ceil((n - win) / hop)
    padded = np.zeros(win + (n_frames - 1) * hop)
    padded[:n] = x
    frames = _frame(padded, win, hop)
    w = np.hamming(win)
    spectra = np.fft.rfft(frames * w, axis=1)
    out = np.zeros_like(padded)
    wsum = np.zeros_like(padded)
    for t in range(n_frames):
        seg = np.fft.irfft(spectra[t], win)
        pos = t * hop
        out[pos:pos + win] += seg
        wsum[pos:pos + win] += w
    out /= np.maximum(wsum, 1e-8)
    return AudioClip(out[:n], clip.sample_rate, clip.chunk_id)
