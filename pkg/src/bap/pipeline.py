"""Stage composition: master-side front half, worker-side back half, and
the single-threaded sequential baseline runner.

Back-half order is fixed: features -> rain -> cicada -> silence -> mmse,
so a chunk deleted early never pays for the expensive enhancement stage.
Chunks cross the front/back boundary as PCM16 WAV bytes in both the
sequential and distributed runners, so their outputs are byte-identical.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import logging
import os
import time
from dataclasses import dataclass, field

from . import audio
from .audio import AudioClip, ChunkId, fmt_seconds
from .detect import DecisionTree, classify, is_silent, load_rules, parse_rules
from .detect import SilenceConfig
from .enhance import EnhanceConfig, mmse_stsa
from .errors import BapError, IoFailure
from .spectral import band_features, cicada_band_estimate, stft

log = logging.getLogger("bap.pipeline")

MANIFEST_FIELDS = ("source", "offset_s", "generation", "decision", "reason",
                   "output_files", "stage_ms_json")

STAGES = ("features", "rain", "cicada", "silence", "mmse")


@dataclass(frozen=True)
class PipelineConfig:
    long_split_s: float = 120.0
    detect_split_s: float = 15.0
    silence_split_s: float = 5.0
    target_rate_hz: int = 22050
    hpf_cutoff_hz: float = 1000.0
    silence: SilenceConfig = field(default_factory=SilenceConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    rain_rules: str | None = None    # None -> bundled default rules
    cicada_rules: str | None = None

    def __post_init__(self):
        if not self.long_split_s >= self.detect_split_s >= self.silence_split_s > 0:
            raise ValueError("split lengths must be long >= detect >= silence > 0")
        ratio = self.detect_split_s / self.silence_split_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("detect_split_s must be divisible by silence_split_s")
        if not 0 < self.hpf_cutoff_hz < self.target_rate_hz / 2:
            raise ValueError("hpf_cutoff_hz must be below target Nyquist")


@dataclass(frozen=True)
class ChunkOutcome:
    original: ChunkId
    decision: str                 # "kept" | "deleted"
    reason: str | None            # "rain" | "silence" when deleted
    outputs: tuple                # kept enhanced pieces (AudioClip)
    stage_ms: dict                # stage name -> elapsed ms, pipeline order


def default_tree(kind: str) -> DecisionTree:
    """Bundled rule set ('rain' or 'cicada'), trained on a synthetic corpus."""
    res = importlib.resources.files("bap").joinpath("rules", f"{kind}.rules")
    return parse_rules(res.read_text(encoding="utf-8"))


def load_tree(path: str | None, kind: str) -> DecisionTree:
    if path is None:
        return default_tree(kind)
    return load_rules(path)


def preprocess_front(clip: AudioClip, cfg: PipelineConfig) -> list[AudioClip]:
    """split(long) -> downsample -> mono -> high-pass -> split(detect)."""
    out = []
    for long_chunk in audio.split(clip, cfg.long_split_s, 1):
        c = audio.downsample(long_chunk, cfg.target_rate_hz)
        c = audio.to_mono(c)
        c = audio.highpass(c, cfg.hpf_cutoff_hz)
        out.extend(audio.split(c, cfg.detect_split_s, 2))
    return out


def quantize(chunk: AudioClip) -> AudioClip:
    """PCM16 round-trip; the wire representation of a chunk."""
    decoded = audio.decode_wav(audio.encode_wav(chunk))
    return audio.with_chunk_id(decoded, chunk.chunk_id)


def process_chunk(chunk: AudioClip, cfg: PipelineConfig,
                  rain_tree: DecisionTree,
                  cicada_tree: DecisionTree) -> ChunkOutcome:
    """Run the back half of the pipeline on one detection chunk."""
    stage_ms: dict[str, float] = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        result = fn()
        stage_ms[name] = (time.perf_counter() - t0) * 1000.0
        return result

    spec = None

    def compute_features():
        nonlocal spec
        spec = stft(chunk)
        return band_features(spec, chunk)

    fv = timed("features", compute_features)

    label, _, _ = timed("rain", lambda: classify(rain_tree, fv))
    if label == "rain":
        return ChunkOutcome(chunk.chunk_id, "deleted", "rain", (), stage_ms)

    def cicada_stage():
        label, _, _ = classify(cicada_tree, fv)
        cleaned = chunk
        if label == "cicada":
            nyq = cleaned.sample_rate / 2
            for band in cicada_band_estimate(spec):
                hi = min(band.hi_hz, nyq - 1.0)
                if band.lo_hz < hi:
                    cleaned = audio.band_reject(cleaned, band.lo_hz, hi)
        return cleaned

    cleaned = timed("cicada", cicada_stage)

    def silence_stage():
        pieces = audio.split(cleaned, cfg.silence_split_s, 3)
        return [p for p in pieces
                if not is_silent(p, cfg.silence.snr_threshold)]

    survivors = timed("silence", silence_stage)
    if not survivors:
        return ChunkOutcome(chunk.chunk_id, "deleted", "silence", (), stage_ms)

    enhanced = timed("mmse", lambda: tuple(
        mmse_stsa(p, cfg.enhance) for p in survivors))
    return ChunkOutcome(chunk.chunk_id, "kept", None, enhanced, stage_ms)


def piece_filename(source: str, chunk_offset_s: float,
                   piece_offset_s: float) -> str:
    return (f"{source}_{fmt_seconds(chunk_offset_s)}"
            f"_{fmt_seconds(piece_offset_s)}.wav")


def outcome_row(outcome: ChunkOutcome, filenames: list[str]) -> dict:
    return {
        "source": outcome.original.source_name,
        "offset_s": fmt_seconds(outcome.original.offset_s),
        "generation": outcome.original.generation,
        "decision": outcome.decision,
        "reason": outcome.reason or "",
        "output_files": ";".join(filenames),
        "stage_ms_json": json.dumps(outcome.stage_ms),
    }


def write_manifest(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, MANIFEST_FIELDS)
        w.writeheader()
        w.writerows(rows)


def read_manifest(path) -> list[dict]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def decision_multiset(rows: list[dict]):
    """Comparable summary: sorted (source, offset, decision, reason)."""
    return sorted((r["source"], r["offset_s"], r["decision"], r["reason"])
                  for r in rows)


def list_input_wavs(input_dir) -> list[str]:
    try:
        names = os.listdir(input_dir)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return sorted(os.path.join(input_dir, n) for n in names
                  if n.lower().endswith(".wav"))


def run_sequential(input_dir, output_dir,
                   cfg: PipelineConfig = PipelineConfig()) -> list[dict]:
    """Whole pipeline on one thread; the scalability baseline."""
    rain_tree = load_tree(cfg.rain_rules, "rain")
    cicada_tree = load_tree(cfg.cicada_rules, "cicada")
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e
    rows = []
    for path in list_input_wavs(input_dir):
        try:
            clip = audio.read_wav(path)
        except BapError as e:
            log.warning("skipping %s: %s", path, e)
            continue
        for chunk in preprocess_front(clip, cfg):
            outcome = process_chunk(quantize(chunk), cfg,
                                    rain_tree, cicada_tree)
            names = []
            for piece in outcome.outputs:
                name = piece_filename(outcome.original.source_name,
                                      outcome.original.offset_s,
                                      piece.chunk_id.offset_s)
                audio.write_wav(piece, os.path.join(output_dir, name))
                names.append(name)
            rows.append(outcome_row(outcome, names))
    write_manifest(rows, os.path.join(output_dir, "manifest.csv"))
    return rows
