"""Denoise a synthetic bird chirp buried in stationary noise.

Builds a 0 dB SNR recording (chirp + white noise), runs the spectral-gain
enhancer, and reports the segmental SNR before and after. Writes
before/after WAVs next to the script output for listening.

Run:  python3 demos/02_denoise.py
"""

import tempfile

import numpy as np

from bap import audio, enhance
from bap.audio import AudioClip

rate = 22050
rng = np.random.default_rng(0)
n = 4 * rate
t = np.arange(n) / rate

# three chirp bursts after a noise-only lead-in the noise tracker can use
clean = np.zeros(n)
for start in (0.6, 1.8, 3.0):
    s = int(start * rate)
    seg = t[: rate // 2]
    clean[s:s + rate // 2] = 0.15 * np.sin(
        2 * np.pi * (2500 + 3000 * seg) * seg) * np.hanning(rate // 2)

noise = rng.normal(0.0, 0.15 / np.sqrt(2), n)
noisy = AudioClip(clean + noise, rate)
out = enhance.mmse_stsa(noisy, enhance.EnhanceConfig())


def seg_snr(ref, test):
    vals = []
    for s in range(0, len(ref) - 256, 256):
        pr = np.sum(ref[s:s + 256] ** 2)
        pd = np.sum((ref[s:s + 256] - test[s:s + 256]) ** 2)
        if pr < 1e-8:
            continue
        vals.append(np.clip(10 * np.log10(pr / max(pd, 1e-30)), -10, 35))
    return float(np.mean(vals))


before = seg_snr(clean, noisy.samples[0])
after = seg_snr(clean, out.samples[0])
print(f"segmental SNR before: {before:6.2f} dB")
print(f"segmental SNR after:  {after:6.2f} dB")
print(f"improvement:          {after - before:6.2f} dB")

work = tempfile.mkdtemp(prefix="bap_demo2_")
audio.write_wav(noisy, f"{work}/noisy.wav")
audio.write_wav(out, f"{work}/denoised.wav")
print(f"wrote {work}/noisy.wav and {work}/denoised.wav")
