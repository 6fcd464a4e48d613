import csv
import filecmp
import os

import numpy as np
import pytest
from scipy.signal import welch

from bap import corpus
from bap.audio import read_wav
from bap.corpus import SynthSpec, gen_corpus


def test_determinism_byte_identical(tmp_path):
    spec = SynthSpec(1, (0.25, 0.25, 0.25, 0.25), seed=7)
    a, b = tmp_path / "a", tmp_path / "b"
    gen_corpus(spec, a)
    gen_corpus(spec, b)
    for name in os.listdir(a):
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_pure_chirp_mix(tmp_path):
    rows = gen_corpus(SynthSpec(1, (1.0, 0.0, 0.0, 0.0), seed=1), tmp_path / "c")
    assert rows and all(r["label"] == "chirp" for r in rows)
    with open(tmp_path / "c" / "labels.csv") as f:
        labels = {r["label"] for r in csv.DictReader(f)}
    assert labels == {"chirp"}


def test_rain_psd_flat(tmp_path):
    rows = gen_corpus(SynthSpec(1, (0.0, 1.0, 0.0, 0.0), seed=2), tmp_path / "r")
    clip = read_wav(tmp_path / "r" / rows[0]["file"])
    f, p = welch(clip.samples[0], clip.sample_rate, nperseg=2048)
    band = p[(f >= 1000) & (f <= 10000)]
    assert 10 * np.log10(band.max() / band.min()) <= 6.0


def test_invalid_specs():
    with pytest.raises(ValueError):
        SynthSpec(0)
    with pytest.raises(ValueError):
        SynthSpec(1, (0.5, 0.5, 0.5, 0.5))


def test_manifest_covers_all_segments(tmp_path):
    rows = gen_corpus(SynthSpec(2, seed=3), tmp_path / "m")
    assert len(rows) == 2 * 4  # four 15 s segments per minute
    assert {r["file"] for r in rows} == {"corpus_000.wav", "corpus_001.wav"}
