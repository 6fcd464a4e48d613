"""Command-line entry point: bap {gen,run,master,worker,train,features,bench}.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  BAP_LOG
(error|warn|info|debug) controls logging verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import subprocess
import sys
import tempfile
import threading
import time

from . import audio, cluster, corpus, detect, pipeline, spectral
from .detect import SilenceConfig
from .errors import BapError

log = logging.getLogger("bap.cli")

PIPELINE_KEYS = ("long_split_s", "detect_split_s", "silence_split_s",
                 "target_rate_hz", "hpf_cutoff_hz", "snr_threshold",
                 "rain_rules", "cicada_rules")


def _setup_logging():
    level = {"error": logging.ERROR, "warn": logging.WARNING,
             "info": logging.INFO, "debug": logging.DEBUG}.get(
                 os.environ.get("BAP_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def parse_mix(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("mix needs 4 comma-separated values")
    vals = tuple(float(p) for p in parts)
    return vals


def parse_config_file(path: str) -> dict:
    """Line-oriented `key = value` config."""
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise BapError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--long", type=float, dest="long_split_s")
    p.add_argument("--detect", type=float, dest="detect_split_s")
    p.add_argument("--silence", type=float, dest="silence_split_s")
    p.add_argument("--target-rate", type=int, dest="target_rate_hz")
    p.add_argument("--hpf-cutoff", type=float, dest="hpf_cutoff_hz")
    p.add_argument("--threshold", type=float, dest="snr_threshold")
    p.add_argument("--rain-rules", dest="rain_rules")
    p.add_argument("--cicada-rules", dest="cicada_rules")
    p.add_argument("--print-config", action="store_true",
                   help="print effective settings and exit")


def make_pipeline_config(args) -> pipeline.PipelineConfig:
    """defaults < config file < explicit CLI flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        raw = parse_config_file(args.config)
        for key in PIPELINE_KEYS:
            if key in raw:
                merged[key] = raw[key]
    for key in PIPELINE_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    kwargs = {}
    for key in ("long_split_s", "detect_split_s", "silence_split_s",
                "hpf_cutoff_hz"):
        if key in merged:
            kwargs[key] = float(merged[key])
    if "target_rate_hz" in merged:
        kwargs["target_rate_hz"] = int(merged["target_rate_hz"])
    for key in ("rain_rules", "cicada_rules"):
        if key in merged:
            kwargs[key] = merged[key] or None
    threshold = float(merged.get("snr_threshold", 0.2))
    silence_len = kwargs.get("silence_split_s", 5.0)
    kwargs["silence"] = SilenceConfig(threshold, silence_len)
    return pipeline.PipelineConfig(**kwargs)


def print_config(pcfg: pipeline.PipelineConfig, extra: dict | None = None):
    print(f"long_split_s = {pcfg.long_split_s}")
    print(f"detect_split_s = {pcfg.detect_split_s}")
    print(f"silence_split_s = {pcfg.silence_split_s}")
    print(f"target_rate_hz = {pcfg.target_rate_hz}")
    print(f"hpf_cutoff_hz = {pcfg.hpf_cutoff_hz}")
    print(f"snr_threshold = {pcfg.silence.snr_threshold}")
    print(f"rain_rules = {pcfg.rain_rules or ''}")
    print(f"cicada_rules = {pcfg.cicada_rules or ''}")
    for key, value in (extra or {}).items():
        print(f"{key} = {value}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bap",
                                description="bird audio preprocessing")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--minutes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mix", type=parse_mix, default=(0.25, 0.25, 0.25, 0.25),
                   help="chirp,rain,cicada,silence fractions")
    g.add_argument("--noise-floor-db", type=float, default=-40.0)

    r = sub.add_parser("run", help="sequential pipeline run")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    _pipeline_flags(r)

    m = sub.add_parser("master", help="serve chunks to workers")
    m.add_argument("--listen", type=parse_endpoint, required=True)
    m.add_argument("--input", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--local-threads", type=int, default=0)
    m.add_argument("--queue", type=int, default=7)
    m.add_argument("--send-interval", type=float, default=2.0)
    m.add_argument("--max-attempts", type=int, default=3)
    m.add_argument("--report", help="write the run report CSV here")
    _pipeline_flags(m)

    w = sub.add_parser("worker", help="process chunks from a master")
    w.add_argument("--connect", type=parse_endpoint, required=True)
    w.add_argument("--threads", type=int, default=1)
    w.add_argument("--queue", type=int, default=7)
    w.add_argument("--send-interval", type=float, default=2.0)
    w.add_argument("--name")
    _pipeline_flags(w)

    t = sub.add_parser("train", help="train a detection rule file")
    t.add_argument("--features", required=True,
                   help="CSV: chunk_id,band,index,value,label")
    t.add_argument("--out", required=True)
    t.add_argument("--max-depth", type=int, default=6)
    t.add_argument("--min-leaf", type=int, default=1)
    t.add_argument("--positive",
                   help="binarize: this label vs 'other'")

    f = sub.add_parser("features", help="dump acoustic indices for one WAV")
    f.add_argument("--input", required=True)
    f.add_argument("--out", help="CSV path (default stdout)")
    _pipeline_flags(f)

    b = sub.add_parser("bench", help="sequential-vs-distributed speedup")
    b.add_argument("--input", required=True)
    b.add_argument("--workers", required=True,
                   help="comma-separated worker counts, e.g. 1,2,4")
    b.add_argument("--out", help="CSV path (default stdout)")
    b.add_argument("--work-dir", help="scratch directory for run outputs")
    b.add_argument("--send-interval", type=float, default=0.5)
    _pipeline_flags(b)
    return p


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    spec = corpus.SynthSpec(args.minutes, tuple(args.mix), args.seed,
                            args.noise_floor_db)
    rows = corpus.gen_corpus(spec, args.out)
    print(f"wrote {args.minutes} minute(s), {len(rows)} labeled segments "
          f"to {args.out}")
    return 0


def cmd_run(args) -> int:
    pcfg = make_pipeline_config(args)
    if args.print_config:
        print_config(pcfg)
        return 0
    t0 = time.monotonic()
    rows = pipeline.run_sequential(args.input, args.out, pcfg)
    kept = sum(1 for r in rows if r["decision"] == "kept")
    print(f"{len(rows)} chunks ({kept} kept) in "
          f"{time.monotonic() - t0:.1f} s; manifest at "
          f"{os.path.join(args.out, 'manifest.csv')}")
    return 0


def cmd_master(args) -> int:
    pcfg = make_pipeline_config(args)
    host, port = args.listen
    ccfg = cluster.ClusterConfig(
        host=host, port=port, queue_size=args.queue,
        send_interval_s=args.send_interval, max_attempts=args.max_attempts,
        local_threads=args.local_threads)
    if args.print_config:
        print_config(pcfg, {"queue_size": ccfg.queue_size,
                            "send_interval_s": ccfg.send_interval_s,
                            "max_attempts": ccfg.max_attempts})
        return 0
    report = cluster.master_serve(ccfg, pcfg, args.input, args.out)
    print(report.to_text())
    if args.report:
        with open(args.report, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, cluster.REPORT_FIELDS)
            w.writeheader()
            w.writerows(report.to_csv_rows())
    return 0


def cmd_worker(args) -> int:
    pcfg = make_pipeline_config(args)
    host, port = args.connect
    ccfg = cluster.ClusterConfig(
        host=host, port=port, queue_size=args.queue,
        send_interval_s=args.send_interval, worker_threads=args.threads)
    if args.print_config:
        print_config(pcfg, {"queue_size": ccfg.queue_size,
                            "send_interval_s": ccfg.send_interval_s,
                            "threads": ccfg.worker_threads})
        return 0
    stats = cluster.worker_run(ccfg, pcfg, name=args.name)
    print(f"processed={stats['processed']} deleted={stats['deleted']} "
          f"busy_ms={stats['busy_ms']:.0f}")
    return 0


def read_feature_csv(path: str):
    """Pivot long-format feature rows into per-chunk vectors (+labels)."""
    vectors: dict[str, dict] = {}
    labels: dict[str, str] = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            cid = row["chunk_id"]
            vectors.setdefault(cid, {})[(row["index"], row["band"])] = \
                float(row["value"])
            if "label" in row and row["label"]:
                labels[cid] = row["label"]
    return vectors, labels


def cmd_train(args) -> int:
    vectors, labels = read_feature_csv(args.features)
    rows = []
    for cid, fv in vectors.items():
        if cid not in labels:
            raise BapError(f"chunk {cid} has no label")
        label = labels[cid]
        if args.positive:
            label = label if label == args.positive else "other"
        rows.append((fv, label))
    rows.sort(key=lambda r: sorted(r[0].items()).__repr__())
    tree = detect.train_tree(rows, args.max_depth, args.min_leaf)
    detect.save_rules(tree, args.out)
    correct = sum(1 for fv, label in rows
                  if detect.classify(tree, fv)[0] == label)
    print(f"trained on {len(rows)} rows; training accuracy "
          f"{correct / len(rows):.3f}; rules at {args.out}")
    return 0


def cmd_features(args) -> int:
    pcfg = make_pipeline_config(args)
    if args.print_config:
        print_config(pcfg)
        return 0
    clip = audio.read_wav(args.input)
    rows = []
    for chunk in pipeline.preprocess_front(clip, pcfg):
        fv = spectral.band_features(spectral.stft(chunk), chunk)
        cid = chunk.chunk_id
        name = f"{cid.source_name}:{audio.fmt_seconds(cid.offset_s)}:" \
               f"{cid.generation}"
        for (index, band), value in sorted(fv.items()):
            rows.append({"chunk_id": name, "band": band, "index": index,
                         "value": repr(value)})
    out = open(args.out, "w", newline="", encoding="utf-8") \
        if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, ["chunk_id", "band", "index", "value"])
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


# -- bench -------------------------------------------------------------------


def _kept_files(out_dir: str) -> dict[str, bytes]:
    out = {}
    for name in os.listdir(out_dir):
        if name.endswith(".wav"):
            with open(os.path.join(out_dir, name), "rb") as f:
                out[name] = f.read()
    return out


def runs_equivalent(dir_a: str, dir_b: str) -> bool:
    a = pipeline.read_manifest(os.path.join(dir_a, "manifest.csv"))
    b = pipeline.read_manifest(os.path.join(dir_b, "manifest.csv"))
    if pipeline.decision_multiset(a) != pipeline.decision_multiset(b):
        return False
    return _kept_files(dir_a) == _kept_files(dir_b)


def run_distributed(input_dir: str, out_dir: str,
                    pcfg: pipeline.PipelineConfig, n_workers: int,
                    send_interval_s: float = 0.5,
                    worker_threads: int = 1) -> cluster.RunReport:
    """Master in-process, workers as subprocesses; returns the report."""
    import queue as queue_mod
    port_q: queue_mod.Queue = queue_mod.Queue()
    ccfg = cluster.ClusterConfig(port=0, send_interval_s=send_interval_s)
    result: dict = {}

    def serve():
        result["report"] = cluster.master_serve(
            ccfg, pcfg, input_dir, out_dir, ready_callback=port_q.put)

    master = threading.Thread(target=serve)
    master.start()
    port = port_q.get(timeout=30)
    procs = []
    cmd_base = [sys.executable, "-m", "bap", "worker",
                "--threads", str(worker_threads),
                "--send-interval", str(send_interval_s),
                "--connect", f"127.0.0.1:{port}"]
    extra = []
    if pcfg.rain_rules:
        extra += ["--rain-rules", pcfg.rain_rules]
    if pcfg.cicada_rules:
        extra += ["--cicada-rules", pcfg.cicada_rules]
    for i in range(n_workers):
        procs.append(subprocess.Popen(
            cmd_base + extra + ["--name", f"w{i + 1}"],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL))
    master.join()
    for proc in procs:
        proc.wait(timeout=30)
    return result["report"]


def cmd_bench(args) -> int:
    pcfg = make_pipeline_config(args)
    if args.print_config:
        print_config(pcfg)
        return 0
    counts = [int(x) for x in args.workers.split(",")]
    work = args.work_dir or tempfile.mkdtemp(prefix="bap_bench_")
    os.makedirs(work, exist_ok=True)

    seq_dir = os.path.join(work, "sequential")
    t0 = time.monotonic()
    pipeline.run_sequential(args.input, seq_dir, pcfg)
    seq_wall = time.monotonic() - t0
    rows = [{"workers": 0, "wall_s": round(seq_wall, 3), "speedup": 1.0}]

    for k in counts:
        out_dir = os.path.join(work, f"workers_{k}")
        t0 = time.monotonic()
        run_distributed(args.input, out_dir, pcfg, k,
                        send_interval_s=args.send_interval)
        wall = time.monotonic() - t0
        if not runs_equivalent(seq_dir, out_dir):
            raise BapError(f"distributed run with {k} workers diverged "
                           f"from the sequential baseline")
        rows.append({"workers": k, "wall_s": round(wall, 3),
                     "speedup": round(seq_wall / wall, 3)})

    out = open(args.out, "w", newline="", encoding="utf-8") \
        if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, ["workers", "wall_s", "speedup"])
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "master": cmd_master,
            "worker": cmd_worker, "train": cmd_train,
            "features": cmd_features, "bench": cmd_bench}


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except BapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
