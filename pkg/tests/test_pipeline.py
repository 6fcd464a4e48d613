import json

import numpy as np
import pytest

from bap import audio, pipeline
from bap.audio import AudioClip, ChunkId
from bap.corpus import SynthSpec, gen_corpus
from bap.pipeline import (PipelineConfig, decision_multiset,
                          default_tree, piece_filename, preprocess_front,
                          process_chunk, quantize, read_manifest,
                          run_sequential, write_manifest, STAGES)
from helpers import kept_files


@pytest.fixture(scope="module")
def trees():
    return default_tree("rain"), default_tree("cicada")


def detect_chunk(kind, seed=0, sr=22050, dur=15.0):
    """Build a mono detection-length chunk of a given character."""
    rng = np.random.default_rng(seed)
    n = int(dur * sr)
    x = rng.normal(0, 0.01, n)
    t = np.arange(n) / sr
    if kind == "chirp":
        for k in range(5):
            s = int((0.3 + 2.8 * k) * sr)
            seg = np.arange(sr // 2) / sr
            x[s:s + sr // 2] += 0.25 * np.sin(
                2 * np.pi * (3000 + 4000 * seg) * seg * sr / (sr // 2))
    elif kind == "rain":
        x += rng.normal(0, 0.08, n)
    elif kind == "silence":
        pass
    else:
        raise ValueError(kind)
    clip = AudioClip(x, sr, ChunkId("t", 0.0, 2))
    return audio.highpass(clip, 1000.0)


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.long_split_s == 120.0
        assert cfg.detect_split_s == 15.0
        assert cfg.silence_split_s == 5.0
        assert cfg.target_rate_hz == 22050
        assert cfg.hpf_cutoff_hz == 1000.0
        assert cfg.silence.snr_threshold == 0.2

    def test_bad_ordering(self):
        with pytest.raises(ValueError):
            PipelineConfig(long_split_s=10.0, detect_split_s=15.0)

    def test_non_divisible(self):
        with pytest.raises(ValueError):
            PipelineConfig(detect_split_s=15.0, silence_split_s=4.0)

    def test_cutoff_above_nyquist(self):
        with pytest.raises(ValueError):
            PipelineConfig(hpf_cutoff_hz=12000.0)


class TestFront:
    def test_chunk_geometry(self):
        rows = gen_corpus(SynthSpec(2, (1.0, 0.0, 0.0, 0.0), 5), "/tmp/_front_geom")
        clip = audio.read_wav("/tmp/_front_geom/corpus_000.wav")
        chunks = preprocess_front(clip, PipelineConfig())
        assert len(chunks) == 4  # one minute -> four 15 s detection chunks
        assert all(c.sample_rate == 22050 for c in chunks)
        assert all(c.samples.shape[0] == 1 for c in chunks)
        assert [c.chunk_id.offset_s for c in chunks] == [0.0, 15.0, 30.0, 45.0]
        assert all(c.chunk_id.generation == 2 for c in chunks)

    def test_quantize_idempotent(self):
        c = quantize(detect_chunk("chirp"))
        again = quantize(c)
        assert np.array_equal(c.samples, again.samples)
        assert again.chunk_id == c.chunk_id


class TestProcessChunk:
    def test_chirp_kept(self, trees):
        out = process_chunk(detect_chunk("chirp"), PipelineConfig(), *trees)
        assert out.decision == "kept"
        assert out.reason is None
        assert 1 <= len(out.outputs) <= 3
        assert all(p.duration_s == pytest.approx(5.0) for p in out.outputs)
        assert list(out.stage_ms) == list(STAGES)

    def test_rain_deleted_short_circuits(self, trees):
        out = process_chunk(detect_chunk("rain"), PipelineConfig(), *trees)
        assert (out.decision, out.reason) == ("deleted", "rain")
        assert out.outputs == ()
        assert set(out.stage_ms) == {"features", "rain"}

    def test_silence_deleted(self, trees):
        out = process_chunk(detect_chunk("silence"), PipelineConfig(), *trees)
        assert (out.decision, out.reason) == ("deleted", "silence")
        assert "mmse" not in out.stage_ms
        assert {"features", "rain", "cicada", "silence"} <= set(out.stage_ms)

    def test_deterministic(self, trees):
        a = process_chunk(detect_chunk("chirp", seed=3), PipelineConfig(), *trees)
        b = process_chunk(detect_chunk("chirp", seed=3), PipelineConfig(), *trees)
        assert a.decision == b.decision
        assert len(a.outputs) == len(b.outputs)
        for pa, pb in zip(a.outputs, b.outputs):
            assert np.array_equal(pa.samples, pb.samples)


class TestManifest:
    def test_round_trip(self, tmp_path):
        rows = [{"source": "a", "offset_s": "15", "generation": "2",
                 "decision": "kept", "reason": "",
                 "output_files": "a_15_15.wav;a_15_20.wav",
                 "stage_ms_json": json.dumps({"features": 1.5})}]
        p = tmp_path / "manifest.csv"
        write_manifest(rows, p)
        assert read_manifest(p) == rows

    def test_piece_filename(self):
        assert piece_filename("corpus_000", 15.0, 20.0) == "corpus_000_15_20.wav"
        assert piece_filename("x", 7.5, 12.5) == "x_7.5_12.5.wav"


class TestSequential:
    def test_full_run(self, tmp_path):
        src = tmp_path / "in"
        out = tmp_path / "out"
        gen_corpus(SynthSpec(2, (0.5, 0.25, 0.0, 0.25), 11), src)
        rows = run_sequential(src, out, PipelineConfig())
        assert len(rows) == 8  # 2 minutes of 15 s chunks
        decisions = {r["decision"] for r in rows}
        assert decisions <= {"kept", "deleted"}
        assert any(r["decision"] == "deleted" for r in rows)
        assert any(r["decision"] == "kept" for r in rows)
        # every kept row's files exist and are valid 5 s mono WAVs
        for r in rows:
            for name in filter(None, r["output_files"].split(";")):
                clip = audio.read_wav(out / name)
                assert clip.duration_s == pytest.approx(5.0)
                assert clip.sample_rate == 22050
        # manifest on disk matches the returned rows
        assert decision_multiset(read_manifest(out / "manifest.csv")) == \
            decision_multiset(rows)

    def test_repeat_runs_byte_identical(self, tmp_path):
        src = tmp_path / "in"
        gen_corpus(SynthSpec(1, (0.75, 0.25, 0.0, 0.0), 13), src)
        a, b = tmp_path / "a", tmp_path / "b"
        ra = run_sequential(src, a, PipelineConfig())
        rb = run_sequential(src, b, PipelineConfig())
        assert decision_multiset(ra) == decision_multiset(rb)
        fa, fb = kept_files(a), kept_files(b)
        assert list(fa) == list(fb)
        for name in fa:
            assert fa[name] == fb[name]
