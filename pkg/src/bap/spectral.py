"""STFT, Welch PSD, banded acoustic indices, and cicada band estimation.

Everything here is a pure function of its inputs.  The analysis settings
are fixed at window 256 / hop 128 with a Hamming window; all indices are
normalized so that amplitude scaling leaves entropies and the ACI
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import BandOutOfRange, TooShort

WINDOW = 256
HOP = 128

INDEX_NAMES = ("spectral_entropy", "temporal_entropy", "aci",
               "background_noise_db", "psd_mean", "spectral_snr_db")

#: detectors operate on five 2 kHz bands from 1 kHz up, plus "full"
BAND_EDGES_HZ = ((1000, 3000), (3000, 5000), (5000, 7000),
                 (7000, 9000), (9000, 11000))

_TINY = 1e-30


@dataclass(frozen=True)
class BandRange:
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 <= self.lo_hz < self.hi_hz:
            raise ValueError(f"bad band [{self.lo_hz}, {self.hi_hz}]")


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (frames, bins), linear magnitude
    sample_rate: int
    window_size: int = WINDOW
    hop: int = HOP
    window_kind: str = "hamming"

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.window_size


def default_bands(sample_rate: int) -> dict[str, BandRange]:
    """Named bands B1..B5 clipped to Nyquist."""
    nyq = sample_rate / 2
    out = {}
    for i, (lo, hi) in enumerate(BAND_EDGES_HZ, start=1):
        if lo >= nyq:
            break
        out[f"B{i}"] = BandRange(lo, min(hi, nyq))
    return out


def _frame(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    n = len(x)
    if n < window:
        return np.empty((0, window))
    n_frames = 1 + (n - window) // hop
    idx = np.arange(window) + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(clip: AudioClip) -> Spectrogram:
    x = clip.mono()
    if len(x) < WINDOW:
        raise TooShort(f"need >= {WINDOW} samples, got {len(x)}")
    frames = _frame(x, WINDOW, HOP)
    w = np.hamming(WINDOW)
    mags = np.abs(np.fft.rfft(frames * w, axis=1))
    return Spectrogram(mags, clip.sample_rate)


def psd_from_spectrogram(spec: Spectrogram) -> np.ndarray:
    """One-sided Welch power per bin; sums approximately to the signal's
    mean square (windowing-corrected)."""
    w = np.hamming(spec.window_size)
    scale = spec.window_size * np.sum(w**2)
    power = np.mean(spec.magnitudes**2, axis=0) / scale
    power[1:-1] *= 2.0  # fold negative frequencies, except DC and Nyquist
    return power


def welch_psd(clip: AudioClip) -> np.ndarray:
    return psd_from_spectrogram(stft(clip))


def _band_bins(spec: Spectrogram, band: BandRange) -> np.ndarray:
    if band.hi_hz > spec.sample_rate / 2 + 1e-9:
        raise BandOutOfRange(
            f"band [{band.lo_hz}, {band.hi_hz}] above Nyquist")
    freqs = np.arange(spec.n_bins) * spec.bin_hz
    sel = np.nonzero((freqs >= band.lo_hz) & (freqs < band.hi_hz))[0]
    if len(sel) == 0:
        raise BandOutOfRange(f"band [{band.lo_hz}, {band.hi_hz}] too narrow")
    return sel


def _entropy(p: np.ndarray) -> float:
    """Shannon entropy of a nonnegative vector, normalized to [0, 1]."""
    total = p.sum()
    if total <= 0 or len(p) < 2:
        return 0.0
    q = p / total
    q = q[q > 0]
    h = -np.sum(q * np.log(q))
    return float(h / np.log(len(p)))


def _envelope_db(env: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(env + _TINY)


def modal_db(env_db: np.ndarray, bins: int = 100) -> float:
    """Histogram-mode background estimate over the observed dB range."""
    lo, hi = float(env_db.min()), float(env_db.max())
    if hi - lo < 1e-12:
        return lo
    counts, edges = np.histogram(env_db, bins=bins, range=(lo, hi))
    k = int(np.argmax(counts))
    return float((edges[k] + edges[k + 1]) / 2)


def _indices_for_bins(spec: Spectrogram, psd: np.ndarray,
                      sel: np.ndarray) -> dict[str, float]:
    m = spec.magnitudes[:, sel]  # (frames, band bins)
    mean_mag = m.mean(axis=0)
    env = np.sqrt(np.mean(m**2, axis=1))  # per-frame band RMS

    # ACI: per-bin normalized frame-to-frame variation, summed over bins
    diffs = np.abs(np.diff(m, axis=0)).sum(axis=0)
    sums = m.sum(axis=0)
    ok = sums > 0
    aci = float(np.sum(diffs[ok] / sums[ok]))

    env_db = _envelope_db(env)
    background = modal_db(env_db)
    peak = float(env_db.max()) if len(env_db) else background
    return {
        "spectral_entropy": _entropy(mean_mag),
        "temporal_entropy": _entropy(env),
        "aci": aci,
        "background_noise_db": background,
        "psd_mean": float(psd[sel].mean()),
        "spectral_snr_db": peak - background,
    }


def band_features(spec: Spectrogram, clip: AudioClip,
                  bands: dict[str, BandRange] | None = None) -> dict:
    """Acoustic indices per named band plus the full range.

    Returns a FeatureVector: {(index_name, band_name): value}.
    """
    if bands is None:
        bands = default_bands(spec.sample_rate)
    psd = psd_from_spectrogram(spec)
    nyq = spec.sample_rate / 2
    all_bands = dict(bands)
    all_bands["full"] = BandRange(0.0, nyq)
    fv = {}
    for name, band in all_bands.items():
        sel = _band_bins(spec, band)
        for index, value in _indices_for_bins(spec, psd, sel).items():
            fv[(index, name)] = value
    return fv


def snr_index(clip: AudioClip) -> float:
    """Normalized peak-over-background level of the waveform envelope.

    0 means flat/silent, 1 means >= 60 dB of peak above the modal level.
    """
    x = clip.mono()
    if len(x) < clip.sample_rate:
        raise TooShort("snr_index needs at least 1 s of audio")
    frames = _frame(x, WINDOW, HOP)
    env = np.sqrt(np.mean(frames**2, axis=1))
    if env.max() <= 0:
        return 0.0
    env_db = _envelope_db(env)
    snr_db = float(env_db.max()) - modal_db(env_db)
    return min(1.0, max(0.0, snr_db / 60.0))


def cicada_band_estimate(spec: Spectrogram,
                         ratio: float = 2.0,
                         persistence: float = 0.8,
                         min_width_hz: float = 300.0) -> list[BandRange]:
    """Frequency ranges dominated by a sustained narrowband source.

    Bins whose time-mean magnitude exceeds `ratio` times the median bin
    mean, and which stay above that level in >= `persistence` of frames,
    are merged into ranges; narrow ranges are discarded and the result is
    clipped to [1 kHz, Nyquist].
    """
    m = spec.magnitudes
    if m.size == 0:
        return []
    mean_mag = m.mean(axis=0)
    thr = ratio * float(np.median(mean_mag))
    if thr <= 0:
        return []
    persistent = (m > thr).mean(axis=0) >= persistence
    marked = (mean_mag > thr) & persistent
    df = spec.bin_hz
    nyq = spec.sample_rate / 2
    ranges = []
    k = 0
    while k < len(marked):
        if marked[k]:
            start = k
            while k < len(marked) and marked[k]:
                k += 1
            lo = max(1000.0, start * df)
            hi = min(nyq, k * df)
            if hi - lo >= min_width_hz:
                ranges.append(BandRange(lo, hi))
        else:
            k += 1
    return ranges
