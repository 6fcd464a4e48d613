"""Shared test utilities: signal factories and corpus feature extraction."""

import os

import numpy as np

from bap import corpus, detect, pipeline, spectral
from bap.audio import AudioClip, read_wav


def tone(freq_hz: float, dur_s: float, rate: int = 22050,
         amp: float = 1.0) -> AudioClip:
    t = np.arange(int(dur_s * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq_hz * t), rate)


def noise(dur_s: float, rate: int = 22050, sigma: float = 0.1,
          seed: int = 0) -> AudioClip:
    rng = np.random.default_rng(seed)
    return AudioClip(rng.normal(0.0, sigma, int(dur_s * rate)), rate)


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.asarray(x)**2)))


def rms_db(x: np.ndarray) -> float:
    return 20.0 * np.log10(rms(x) + 1e-300)


def make_corpus(tmp_path, minutes=1, mix=(0.25, 0.25, 0.25, 0.25), seed=0):
    d = os.path.join(tmp_path, f"corpus_{seed}_{minutes}")
    rows = corpus.gen_corpus(corpus.SynthSpec(minutes, mix, seed), d)
    return d, rows


def labeled_features(corpus_dir, rows, pcfg=None):
    """(feature_vector, label) for every detection chunk of a corpus."""
    pcfg = pcfg or pipeline.PipelineConfig()
    labels = {(r["file"].removesuffix(".wav"), float(r["offset_s"])): r["label"]
              for r in rows}
    data = []
    for name in sorted(os.listdir(corpus_dir)):
        if not name.endswith(".wav"):
            continue
        clip = read_wav(os.path.join(corpus_dir, name))
        for chunk in pipeline.preprocess_front(clip, pcfg):
            chunk = pipeline.quantize(chunk)
            key = (chunk.chunk_id.source_name, chunk.chunk_id.offset_s)
            fv = spectral.band_features(spectral.stft(chunk), chunk)
            data.append((fv, labels[key]))
    return data


def binarize(data, positive):
    return [(fv, label if label == positive else "other")
            for fv, label in data]


def cv_accuracy(data, positive, folds=5, seed=0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    correct = 0
    for f in range(folds):
        test_idx = set(order[f::folds].tolist())
        train = [data[i] for i in range(len(data)) if i not in test_idx]
        test = [data[i] for i in test_idx]
        tree = detect.train_tree(binarize(train, positive), max_depth=6,
                                 min_leaf=2)
        for fv, label in binarize(test, positive):
            if detect.classify(tree, fv)[0] == label:
                correct += 1
    return correct / len(data)


def kept_files(out_dir):
    out = {}
    for name in os.listdir(out_dir):
        if name.endswith(".wav"):
            with open(os.path.join(out_dir, name), "rb") as f:
                out[name] = f.read()
    return out
