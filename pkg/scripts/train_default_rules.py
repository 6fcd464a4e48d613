"""Regenerate the bundled rain/cicada rule files from a synthetic corpus.

Usage: python scripts/train_default_rules.py [minutes] [seed]
Writes src/bap/rules/{rain,cicada}.rules and prints 5-fold CV accuracy.
"""

import os
import sys
import tempfile

import numpy as np

from bap import corpus, detect, pipeline, spectral
from bap.audio import read_wav


def labeled_features(minutes: int, seed: int, mix=(0.3, 0.3, 0.2, 0.2)):
    """(feature_vector, label) per detection chunk of a fresh corpus."""
    spec = corpus.SynthSpec(minutes, mix, seed)
    out = tempfile.mkdtemp(prefix="bap_rules_")
    rows = corpus.gen_corpus(spec, out)
    labels = {(r["file"].removesuffix(".wav"), float(r["offset_s"])): r["label"]
              for r in rows}
    pcfg = pipeline.PipelineConfig()
    data = []
    for name in sorted(os.listdir(out)):
        if not name.endswith(".wav"):
            continue
        clip = read_wav(os.path.join(out, name))
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


def main():
    minutes = int(sys.argv[1]) if len(sys.argv) > 1 else 30
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42
    rules_dir = os.path.join(os.path.dirname(__file__), "..", "src", "bap",
                             "rules")
    data = labeled_features(minutes, seed)
    print(f"{len(data)} labeled chunks")
    for kind in ("rain", "cicada"):
        acc = cv_accuracy(data, kind)
        tree = detect.train_tree(binarize(data, kind), max_depth=6, min_leaf=2)
        path = os.path.join(rules_dir, f"{kind}.rules")
        detect.save_rules(tree, path)
        print(f"{kind}: 5-fold CV accuracy {acc:.3f}, rules -> {path}")


if __name__ == "__main__":
    main()
