"""Binary wire protocol between master and workers.

Frame layout: 4-byte big-endian payload length, then the payload, which
is a 1-byte type tag followed by the message fields in declared order.
Scalars are big-endian u32; strings and blobs are u32-length-prefixed
byte sequences.  Floats (chunk offsets) travel as their repr text so the
round trip is exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from .audio import ChunkId
from .errors import FrameTooShort, LengthMismatch, UnknownTag

TAG_HELLO = 0x01
TAG_WORK_REQUEST = 0x02
TAG_WORK_GRANT = 0x03
TAG_NO_MORE_WORK = 0x04
TAG_RESULT_PROCESSED = 0x05
TAG_RESULT_DELETED = 0x06
TAG_SHUTDOWN = 0x07


@dataclass(frozen=True)
class Hello:
    worker_name: str
    thread_count: int


@dataclass(frozen=True)
class WorkRequest:
    count: int


@dataclass(frozen=True)
class WorkGrant:
    chunk_id: ChunkId
    wav_bytes: bytes


@dataclass(frozen=True)
class NoMoreWork:
    pass


@dataclass(frozen=True)
class ResultProcessed:
    original: ChunkId
    outputs: tuple  # of (ChunkId, wav bytes)
    stage_ms: tuple  # of (stage name, ms), pipeline order


@dataclass(frozen=True)
class ResultDeleted:
    chunk_ids: tuple
    reasons: tuple


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Hello | WorkRequest | WorkGrant | NoMoreWork | ResultProcessed \
    | ResultDeleted | Shutdown


class _Writer:
    def __init__(self, tag: int):
        self.parts = [bytes([tag])]

    def u32(self, v: int):
        self.parts.append(struct.pack(">I", v))

    def blob(self, b: bytes):
        self.u32(len(b))
        self.parts.append(b)

    def text(self, s: str):
        self.blob(s.encode("utf-8"))

    def chunk_id(self, cid: ChunkId):
        self.text(cid.source_name)
        self.text(repr(float(cid.offset_s)))
        self.u32(cid.generation)

    def frame(self) -> bytes:
        payload = b"".join(self.parts)
        return struct.pack(">I", len(payload)) + payload


class _Reader:
    def __init__(self, payload: bytes):
        self.buf = payload
        self.pos = 0

    def u32(self) -> int:
        if self.pos + 4 > len(self.buf):
            raise LengthMismatch("truncated u32")
        (v,) = struct.unpack_from(">I", self.buf, self.pos)
        self.pos += 4
        return v

    def blob(self) -> bytes:
        n = self.u32()
        if self.pos + n > len(self.buf):
            raise LengthMismatch("truncated byte string")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def text(self) -> str:
        return self.blob().decode("utf-8")

    def chunk_id(self) -> ChunkId:
        source = self.text()
        offset = float(self.text())
        gen = self.u32()
        return ChunkId(source, offset, gen)

    def done(self):
        if self.pos != len(self.buf):
            raise LengthMismatch(
                f"{len(self.buf) - self.pos} unconsumed payload bytes")


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        w = _Writer(TAG_HELLO)
        w.text(msg.worker_name)
        w.u32(msg.thread_count)
    elif isinstance(msg, WorkRequest):
        w = _Writer(TAG_WORK_REQUEST)
        w.u32(msg.count)
    elif isinstance(msg, WorkGrant):
        w = _Writer(TAG_WORK_GRANT)
        w.chunk_id(msg.chunk_id)
        w.blob(msg.wav_bytes)
    elif isinstance(msg, NoMoreWork):
        w = _Writer(TAG_NO_MORE_WORK)
    elif isinstance(msg, ResultProcessed):
        w = _Writer(TAG_RESULT_PROCESSED)
        w.chunk_id(msg.original)
        w.u32(len(msg.outputs))
        for cid, wav in msg.outputs:
            w.chunk_id(cid)
            w.blob(wav)
        w.blob(json.dumps(list(msg.stage_ms)).encode("utf-8"))
    elif isinstance(msg, ResultDeleted):
        if len(msg.chunk_ids) != len(msg.reasons):
            raise ValueError("chunk_ids and reasons must align")
        w = _Writer(TAG_RESULT_DELETED)
        w.u32(len(msg.chunk_ids))
        for cid, reason in zip(msg.chunk_ids, msg.reasons):
            w.chunk_id(cid)
            w.text(reason)
    elif isinstance(msg, Shutdown):
        w = _Writer(TAG_SHUTDOWN)
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return w.frame()


def frame_payload(data: bytes) -> bytes:
    """Validate framing of a single complete frame and return its payload."""
    if len(data) < 4:
        raise FrameTooShort("missing length header")
    (n,) = struct.unpack(">I", data[:4])
    if len(data) < 4 + n:
        raise FrameTooShort(f"payload declares {n} bytes, have {len(data) - 4}")
    if len(data) > 4 + n:
        raise LengthMismatch("trailing bytes after frame")
    if n < 1:
        raise FrameTooShort("empty payload (no type tag)")
    return data[4:4 + n]


def decode_message(data: bytes) -> Message:
    payload = frame_payload(data)
    tag, r = payload[0], _Reader(payload[1:])
    if tag == TAG_HELLO:
        msg = Hello(r.text(), r.u32())
    elif tag == TAG_WORK_REQUEST:
        msg = WorkRequest(r.u32())
    elif tag == TAG_WORK_GRANT:
        msg = WorkGrant(r.chunk_id(), r.blob())
    elif tag == TAG_NO_MORE_WORK:
        msg = NoMoreWork()
    elif tag == TAG_RESULT_PROCESSED:
        original = r.chunk_id()
        outputs = tuple((r.chunk_id(), r.blob()) for _ in range(r.u32()))
        stage_ms = tuple((name, float(ms))
                         for name, ms in json.loads(r.blob().decode("utf-8")))
        msg = ResultProcessed(original, outputs, stage_ms)
    elif tag == TAG_RESULT_DELETED:
        count = r.u32()
        items = [(r.chunk_id(), r.text()) for _ in range(count)]
        msg = ResultDeleted(tuple(c for c, _ in items),
                            tuple(s for _, s in items))
    elif tag == TAG_SHUTDOWN:
        msg = Shutdown()
    else:
        raise UnknownTag(f"unknown message tag 0x{tag:02x}")
    r.done()
    return msg
