"""Master-worker distribution of the preprocessing pipeline over TCP.

The master front-preprocesses recordings into detection chunks and serves
them to workers on demand.  Workers keep a bounded prefetch queue, run
the back half of the pipeline on executor threads, and flush batched
results on a timer.  A worker disconnect returns its in-flight chunks to
the pending pool, so runs survive worker crashes.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import audio, pipeline
from .audio import ChunkId
from .errors import BapError, ProtocolViolation
from .protocol import (Hello, NoMoreWork, ResultDeleted, ResultProcessed,
                       Shutdown, WorkGrant, WorkRequest, decode_message,
                       encode_message)
from .tracker import FAILED, WorkTracker

log = logging.getLogger("bap.cluster")

REPORT_FIELDS = ("worker", "processed", "deleted", "bytes_in", "bytes_out",
                 "busy_ms")


@dataclass(frozen=True)
class ClusterConfig:
    host: str = "127.0.0.1"
    port: int = 0                  # 0 = pick a free port
    queue_size: int = 7
    send_interval_s: float = 2.0
    worker_threads: int = 1
    max_attempts: int = 3
    read_timeout_s: float = 30.0   # idle worker considered lost after this
    local_threads: int = 0         # master-side in-process worker

    def __post_init__(self):
        if self.queue_size < 1:
            raise ValueError("queue_size must be >= 1")
        if self.send_interval_s <= 0:
            raise ValueError("send_interval_s must be positive")


@dataclass
class RunReport:
    wall_time_s: float = 0.0
    requeue_events: int = 0
    chunk_counts: dict = field(default_factory=dict)
    stage_ms: dict = field(default_factory=dict)
    workers: dict = field(default_factory=dict)  # name -> stats dict

    def to_text(self) -> str:
        lines = [f"wall_time_s: {self.wall_time_s:.3f}",
                 f"requeue_events: {self.requeue_events}",
                 "chunks: " + " ".join(f"{k}={v}" for k, v in
                                       sorted(self.chunk_counts.items())),
                 "stage_ms: " + " ".join(f"{k}={v:.1f}" for k, v in
                                         self.stage_ms.items())]
        for name in sorted(self.workers):
            s = self.workers[name]
            lines.append(f"worker {name}: processed={s['processed']} "
                         f"deleted={s['deleted']} bytes_in={s['bytes_in']} "
                         f"bytes_out={s['bytes_out']} busy_ms={s['busy_ms']:.0f}")
        return "\n".join(lines)

    def to_csv_rows(self) -> list[dict]:
        rows = []
        for name in sorted(self.workers):
            s = self.workers[name]
            rows.append({"worker": name, "processed": s["processed"],
                         "deleted": s["deleted"], "bytes_in": s["bytes_in"],
                         "bytes_out": s["bytes_out"],
                         "busy_ms": round(s["busy_ms"], 1)})
        return rows


# ---------------------------------------------------------------------------
# framed socket helpers


def send_msg(sock: socket.socket, msg) -> int:
    data = encode_message(msg)
    sock.sendall(data)
    return len(data)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf += chunk
    return buf


def recv_msg(sock: socket.socket):
    """Read one framed message; raises socket.timeout / ConnectionError."""
    header = _recv_exact(sock, 4)
    (n,) = struct.unpack(">I", header)
    payload = _recv_exact(sock, n)
    return decode_message(header + payload), 4 + n


# ---------------------------------------------------------------------------
# master


class _Master:
    def __init__(self, cfg: ClusterConfig, pcfg: pipeline.PipelineConfig,
                 input_dir, output_dir):
        self.cfg = cfg
        self.pcfg = pcfg
        self.input_dir = input_dir
        self.output_dir = output_dir
        self.tracker = WorkTracker(cfg.max_attempts)
        self.rows: list[dict] = []
        self.rows_lock = threading.Lock()
        self.stage_ms: dict[str, float] = {}
        self.stop = threading.Event()
        self.handlers: list[threading.Thread] = []

    # -- front preprocessing ------------------------------------------------

    def load_inputs(self):
        try:
            for path in pipeline.list_input_wavs(self.input_dir):
                try:
                    clip = audio.read_wav(path)
                except BapError as e:
                    log.warning("skipping %s: %s", path, e)
                    continue
                for chunk in pipeline.preprocess_front(clip, self.pcfg):
                    self.tracker.add(chunk.chunk_id, audio.encode_wav(chunk))
        finally:
            self.tracker.finish_loading()

    # -- result handling ----------------------------------------------------

    def record_processed(self, msg: ResultProcessed, worker: str):
        if not self.tracker.complete(msg.original, worker):
            return  # duplicate of an already-terminal chunk
        names = []
        busy = 0.0
        for cid, wav in msg.outputs:
            name = pipeline.piece_filename(msg.original.source_name,
                                           msg.original.offset_s,
                                           cid.offset_s)
            with open(os.path.join(self.output_dir, name), "wb") as f:
                f.write(wav)
            names.append(name)
        stage_ms = dict(msg.stage_ms)
        with self.rows_lock:
            for stage, ms in stage_ms.items():
                self.stage_ms[stage] = self.stage_ms.get(stage, 0.0) + ms
                busy += ms
            self.rows.append({
                "source": msg.original.source_name,
                "offset_s": audio.fmt_seconds(msg.original.offset_s),
                "generation": msg.original.generation,
                "decision": "kept", "reason": "",
                "output_files": ";".join(names),
                "stage_ms_json": json.dumps(stage_ms),
            })
        self.tracker.add_worker_io(worker, busy_ms=busy)

    def record_deleted(self, msg: ResultDeleted, worker: str):
        for cid, reason in zip(msg.chunk_ids, msg.reasons):
            if not self.tracker.delete(cid, worker):
                continue
            with self.rows_lock:
                self.rows.append({
                    "source": cid.source_name,
                    "offset_s": audio.fmt_seconds(cid.offset_s),
                    "generation": cid.generation,
                    "decision": "deleted", "reason": reason,
                    "output_files": "", "stage_ms_json": "{}",
                })

    # -- per-worker connection handler ---------------------------------------

    def handle(self, conn: socket.socket):
        conn.settimeout(0.5)
        name = None
        bytes_in = bytes_out = 0
        idle_since = time.monotonic()
        try:
            while True:
                try:
                    msg, nbytes = recv_msg(conn)
                except socket.timeout:
                    if self.tracker.all_terminal() and name is not None:
                        bytes_out += send_msg(conn, Shutdown())
                        break
                    if time.monotonic() - idle_since > self.cfg.read_timeout_s:
                        raise ConnectionError("worker idle timeout")
                    continue
                idle_since = time.monotonic()
                bytes_in += nbytes
                if name is None:
                    if not isinstance(msg, Hello):
                        raise ProtocolViolation("expected Hello first")
                    name = msg.worker_name
                    self.tracker.register_worker(name, msg.thread_count)
                    continue
                if isinstance(msg, WorkRequest):
                    if self.tracker.all_terminal():
                        bytes_out += send_msg(conn, Shutdown())
                        break
                    grants = self.tracker.grant(name, msg.count)
                    for cid, payload in grants:
                        bytes_out += send_msg(conn, WorkGrant(cid, payload))
                    if not grants:
                        bytes_out += send_msg(conn, NoMoreWork())
                elif isinstance(msg, ResultProcessed):
                    self.record_processed(msg, name)
                elif isinstance(msg, ResultDeleted):
                    self.record_deleted(msg, name)
                else:
                    raise ProtocolViolation(f"unexpected {type(msg).__name__}")
        except (ConnectionError, OSError, BapError) as e:
            if name is not None:
                requeued = self.tracker.requeue_worker(name)
                log.warning("worker %s lost (%s); requeued %d chunks",
                            name, e, requeued)
        finally:
            if name is not None:
                self.tracker.add_worker_io(name, bytes_in=bytes_in,
                                           bytes_out=bytes_out)
            try:
                conn.close()
            except OSError:
                pass

    # -- run -----------------------------------------------------------------

    def serve(self) -> RunReport:
        t0 = time.monotonic()
        os.makedirs(self.output_dir, exist_ok=True)
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.cfg.host, self.cfg.port))
        listener.listen(16)
        listener.settimeout(0.2)
        self.bound_port = listener.getsockname()[1]

        loader = threading.Thread(target=self.load_inputs, daemon=True)
        loader.start()

        local = None
        if self.cfg.local_threads > 0:
            wcfg = ClusterConfig(
                host=self.cfg.host, port=self.bound_port,
                queue_size=self.cfg.queue_size,
                send_interval_s=self.cfg.send_interval_s,
                worker_threads=self.cfg.local_threads)
            local = threading.Thread(
                target=worker_run, args=(wcfg, self.pcfg),
                kwargs={"name": "local"}, daemon=True)
            local.start()

        try:
            while not (self.tracker.all_terminal() and not loader.is_alive()):
                try:
                    conn, _ = listener.accept()
                except socket.timeout:
                    continue
                t = threading.Thread(target=self.handle, args=(conn,),
                                     daemon=True)
                t.start()
                self.handlers.append(t)
        finally:
            self.stop.set()
            listener.close()
        for t in self.handlers:
            t.join(timeout=5.0)
        if local is not None:
            local.join(timeout=5.0)

        pipeline.write_manifest(self.rows,
                                os.path.join(self.output_dir, "manifest.csv"))
        report = RunReport(
            wall_time_s=time.monotonic() - t0,
            requeue_events=self.tracker.requeue_events,
            chunk_counts=self.tracker.counts(),
            stage_ms=dict(self.stage_ms))
        for name, s in self.tracker.worker_stats().items():
            report.workers[name] = {
                "processed": s.completed, "deleted": s.deleted,
                "bytes_in": s.bytes_in, "bytes_out": s.bytes_out,
                "busy_ms": s.busy_ms}
        if self.tracker.counts()[FAILED]:
            log.error("%d chunks failed permanently",
                      self.tracker.counts()[FAILED])
        return report


def master_serve(cfg: ClusterConfig, pipeline_cfg: pipeline.PipelineConfig,
                 input_dir, output_dir,
                 ready_callback=None) -> RunReport:
    """Serve the pipeline until every chunk is terminal.

    ready_callback, if given, receives the bound port once listening (used
    when port 0 was requested).
    """
    master = _Master(cfg, pipeline_cfg, input_dir, output_dir)
    if ready_callback is not None:
        threading.Thread(target=_wait_for_port,
                         args=(master, ready_callback), daemon=True).start()
    return master.serve()


def _wait_for_port(master: _Master, callback):
    while not hasattr(master, "bound_port"):
        time.sleep(0.01)
    callback(master.bound_port)


# ---------------------------------------------------------------------------
# worker


class _WorkerState:
    def __init__(self):
        self.lock = threading.Lock()
        self.processed: list[ResultProcessed] = []
        self.deleted: list[tuple[ChunkId, str]] = []
        self.in_progress = 0
        self.stats = {"processed": 0, "deleted": 0, "busy_ms": 0.0,
                      "bytes_in": 0, "bytes_out": 0, "max_queue": 0}


def _executor(inbound: queue.Queue, state: _WorkerState,
              pcfg: pipeline.PipelineConfig, rain_tree, cicada_tree):
    while True:
        item = inbound.get()
        if item is None:
            return
        cid, payload = item
        with state.lock:
            state.in_progress += 1
        t0 = time.monotonic()
        clip = audio.with_chunk_id(audio.decode_wav(payload), cid)
        outcome = pipeline.process_chunk(clip, pcfg, rain_tree, cicada_tree)
        busy = (time.monotonic() - t0) * 1000.0
        with state.lock:
            state.in_progress -= 1
            state.stats["busy_ms"] += busy
            if outcome.decision == "kept":
                outputs = tuple((p.chunk_id, audio.encode_wav(p))
                                for p in outcome.outputs)
                state.processed.append(ResultProcessed(
                    cid, outputs, tuple(outcome.stage_ms.items())))
                state.stats["processed"] += 1
            else:
                state.deleted.append((cid, outcome.reason))
                state.stats["deleted"] += 1


def worker_run(cfg: ClusterConfig, pipeline_cfg: pipeline.PipelineConfig,
               name: str | None = None) -> dict:
    """Connect to the master and process chunks until Shutdown."""
    if name is None:
        name = f"{socket.gethostname()}-{os.getpid()}"
    rain_tree = pipeline.load_tree(pipeline_cfg.rain_rules, "rain")
    cicada_tree = pipeline.load_tree(pipeline_cfg.cicada_rules, "cicada")

    sock = socket.create_connection((cfg.host, cfg.port), timeout=10.0)
    sock.settimeout(0.1)
    state = _WorkerState()
    inbound: queue.Queue = queue.Queue(maxsize=cfg.queue_size)
    threads = [threading.Thread(
        target=_executor, args=(inbound, state, pipeline_cfg,
                                rain_tree, cicada_tree), daemon=True)
        for _ in range(cfg.worker_threads)]
    for t in threads:
        t.start()

    def flush() -> int:
        sent = 0
        with state.lock:
            processed = state.processed
            deleted = state.deleted
            state.processed = []
            state.deleted = []
        for msg in processed:
            sent += send_msg(sock, msg)
        if deleted:
            sent += send_msg(sock, ResultDeleted(
                tuple(c for c, _ in deleted), tuple(r for _, r in deleted)))
        return sent

    outstanding = 0
    granted = 0
    no_work_until = 0.0
    last_flush = time.monotonic()
    shutdown = False
    try:
        state.stats["bytes_out"] += send_msg(
            sock, Hello(name, cfg.worker_threads))
        while not shutdown:
            now = time.monotonic()
            with state.lock:
                done = state.stats["processed"] + state.stats["deleted"]
            # chunks on hand = granted but not yet finished (queued or
            # executing); never ask for more than queue_size in total
            deficit = cfg.queue_size - (granted - done) - outstanding
            if deficit > 0 and now >= no_work_until:
                state.stats["bytes_out"] += send_msg(sock, WorkRequest(deficit))
                outstanding += deficit
            if now - last_flush >= cfg.send_interval_s:
                state.stats["bytes_out"] += flush()
                last_flush = now
            try:
                msg, nbytes = recv_msg(sock)
            except socket.timeout:
                continue
            state.stats["bytes_in"] += nbytes
            if isinstance(msg, WorkGrant):
                granted += 1
                inbound.put((msg.chunk_id, msg.wav_bytes))
                state.stats["max_queue"] = max(state.stats["max_queue"],
                                               inbound.qsize())
                assert inbound.qsize() <= cfg.queue_size
                outstanding = max(0, outstanding - 1)
            elif isinstance(msg, NoMoreWork):
                outstanding = 0
                no_work_until = time.monotonic() + 0.3
            elif isinstance(msg, Shutdown):
                shutdown = True
            else:
                raise ProtocolViolation(f"unexpected {type(msg).__name__}")
        # drain whatever is still queued locally, then final flush
        while True:
            with state.lock:
                if state.in_progress == 0 and inbound.empty():
                    break
            time.sleep(0.02)
        state.stats["bytes_out"] += flush()
    except (ConnectionError, OSError):
        log.warning("worker %s: connection to master lost", name)
    finally:
        for _ in threads:
            inbound.put(None)
        for t in threads:
            t.join(timeout=2.0)
        try:
            sock.close()
        except OSError:
            pass
    return state.stats
