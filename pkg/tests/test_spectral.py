import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bap import spectral
from bap.audio import AudioClip
from bap.errors import BandOutOfRange, TooShort
from bap.spectral import (BandRange, Spectrogram, band_features,
                          cicada_band_estimate, default_bands, snr_index,
                          stft, welch_psd)
from helpers import noise, tone


def brute_force_dft_magnitude(frame):
    n = len(frame)
    k = np.arange(n // 2 + 1)
    ang = -2j * np.pi * np.outer(k, np.arange(n)) / n
    return np.abs(np.exp(ang) @ frame)


class TestStft:
    def test_frame_and_bin_counts(self):
        sg = stft(noise(5.0))
        assert sg.magnitudes.shape == (860, 129)

    def test_zero_input(self):
        sg = stft(AudioClip(np.zeros(1000), 22050))
        assert np.all(sg.magnitudes == 0)

    def test_tone_bin(self):
        sg = stft(tone(1000, 1.0))
        assert np.all(sg.magnitudes.argmax(axis=1) == 12)

    def test_matches_brute_force_dft(self):
        clip = noise(0.1, seed=5)
        sg = stft(clip)
        w = np.hamming(256)
        frame0 = clip.samples[0][:256] * w
        assert np.allclose(sg.magnitudes[0], brute_force_dft_magnitude(frame0),
                           atol=1e-9)

    def test_too_short(self):
        with pytest.raises(TooShort):
            stft(AudioClip(np.zeros(255), 22050))

    @given(st.integers(256, 60000))
    @settings(max_examples=200, deadline=None)
    def test_frame_count_formula(self, n):
        sg = stft(AudioClip(np.zeros(n), 22050))
        assert sg.n_frames == 1 + (n - 256) // 128


class TestWelch:
    def test_zero(self):
        assert np.all(welch_psd(AudioClip(np.zeros(1000), 22050)) == 0)

    def test_white_noise_flat(self):
        worst = 0.0
        for seed in range(20):
            psd = welch_psd(noise(10.0, seed=seed))
            inner = psd[1:-1]
            worst = max(worst, 10 * np.log10(inner.max() / inner.min()))
        assert worst <= 6.0

    def test_tone_concentration(self):
        psd = welch_psd(tone(1000, 2.0))
        assert psd[11:14].sum() / psd.sum() >= 0.9

    def test_parseval(self):
        clip = noise(5.0, seed=11)
        psd = welch_psd(clip)
        ms = np.mean(clip.samples[0]**2)
        assert abs(psd.sum() - ms) / ms <= 0.05


class TestBandFeatures:
    def test_required_keys_present(self):
        fv = band_features(stft(noise(2.0)), noise(2.0))
        bands = set(default_bands(22050)) | {"full"}
        for index in spectral.INDEX_NAMES:
            for band in bands:
                assert (index, band) in fv
        assert len(fv) == len(spectral.INDEX_NAMES) * len(bands)

    def test_aci_zero_for_constant_frames(self):
        mags = np.ones((50, 129))
        sg = Spectrogram(mags, 22050)
        fv = band_features(sg, noise(1.0))
        assert all(fv[("aci", b)] == 0 for b in
                   list(default_bands(22050)) + ["full"])

    def test_entropy_extremes(self):
        flat = Spectrogram(np.ones((50, 129)), 22050)
        fv = band_features(flat, noise(1.0))
        assert fv[("spectral_entropy", "full")] == pytest.approx(1.0)
        single = np.zeros((50, 129))
        single[:, 40] = 1.0
        fv = band_features(Spectrogram(single, 22050), noise(1.0))
        assert fv[("spectral_entropy", "full")] == 0.0

    def test_scale_invariance(self):
        clip = noise(3.0, seed=4)
        scaled = AudioClip(0.1 * clip.samples, 22050)
        fv1 = band_features(stft(clip), clip)
        fv2 = band_features(stft(scaled), scaled)
        for (index, band), v in fv1.items():
            if index in ("spectral_entropy", "temporal_entropy", "aci"):
                assert abs(fv2[(index, band)] - v) <= 1e-6, (index, band)
            elif index == "background_noise_db":
                assert fv2[(index, band)] - v == pytest.approx(
                    20 * np.log10(0.1), abs=0.1)

    def test_band_out_of_range(self):
        sg = stft(noise(1.0))
        with pytest.raises(BandOutOfRange):
            band_features(sg, noise(1.0), {"bad": BandRange(100, 20000)})


class TestSnrIndex:
    def test_all_zero(self):
        assert snr_index(AudioClip(np.zeros(22050), 22050)) == 0.0

    def test_stationary_noise_low(self):
        for seed in range(20):
            assert snr_index(noise(5.0, seed=seed)) < 0.1

    def test_chirp_over_noise_high(self):
        # a 1 s +26 dB chirp burst; the Hann envelope keeps the burst's
        # frame levels spread out so the modal level stays at the floor
        rng = np.random.default_rng(8)
        floor = rng.normal(0, 0.01, 5 * 22050)
        burst = np.zeros_like(floor)
        t = np.arange(22050) / 22050
        burst[22050:44100] = 0.2 * np.sin(
            2 * np.pi * (2000 + 2000 * t) * t) * np.hanning(22050)
        idx = snr_index(AudioClip(floor + burst, 22050))
        assert idx >= 0.33

    def test_scale_invariance(self):
        clip = noise(3.0, seed=6)
        a = snr_index(clip)
        b = snr_index(AudioClip(0.05 * clip.samples, 22050))
        assert abs(a - b) <= 0.01

    def test_too_short(self):
        with pytest.raises(TooShort):
            snr_index(AudioClip(np.zeros(1000), 22050))


class TestCicadaBands:
    def _narrowband(self, lo, hi, dur=5.0, rate=22050, seed=0):
        rng = np.random.default_rng(seed)
        n = int(dur * rate)
        white = rng.normal(0, 1.0, n)
        sp = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, 1 / rate)
        sp[(freqs < lo) | (freqs > hi)] = 0
        band = np.fft.irfft(sp, n)
        floor = rng.normal(0, 0.01, n)
        band *= 0.04 / np.sqrt(np.mean(band**2))
        return AudioClip(band + floor, rate)

    def test_recovers_injected_band(self):
        ranges = cicada_band_estimate(stft(self._narrowband(4000, 6000)))
        assert len(ranges) == 1
        assert 3700 <= ranges[0].lo_hz <= 4300
        assert 5700 <= ranges[0].hi_hz <= 6300

    def test_white_noise_empty(self):
        for seed in range(20):
            assert cicada_band_estimate(stft(noise(3.0, seed=seed))) == []

    def test_zero_empty(self):
        sg = Spectrogram(np.zeros((10, 129)), 22050)
        assert cicada_band_estimate(sg) == []

    def test_disjoint_sorted(self):
        clip1 = self._narrowband(3000, 4000, seed=1)
        clip2 = self._narrowband(7000, 8500, seed=2)
        both = AudioClip(clip1.samples + clip2.samples, 22050)
        ranges = cicada_band_estimate(stft(both))
        los = [r.lo_hz for r in ranges]
        assert los == sorted(los)
        for a, b in zip(ranges, ranges[1:]):
            assert a.hi_hz <= b.lo_hz
