import numpy as np
import pytest

from bap.audio import ChunkId
from bap.errors import UnknownWorker
from bap.tracker import WorkTracker


def cid(i):
    return ChunkId("src", float(i * 15), 2)


def make_tracker(n=10, workers=("w1",), max_attempts=3):
    t = WorkTracker(max_attempts=max_attempts)
    for i in range(n):
        t.add(cid(i), b"x" * 4)
    for w in workers:
        t.register_worker(w)
    t.finish_loading()
    return t


class TestGrant:
    def test_fifo_order(self):
        t = make_tracker(5)
        granted = t.grant("w1", 3)
        assert [c.offset_s for c, _ in granted] == [0.0, 15.0, 30.0]

    def test_no_double_grant(self):
        t = make_tracker(5, workers=("w1", "w2"))
        a = {c.key() for c, _ in t.grant("w1", 3)}
        b = {c.key() for c, _ in t.grant("w2", 5)}
        assert not a & b
        assert len(a | b) == 5

    def test_exhausted(self):
        t = make_tracker(2)
        assert len(t.grant("w1", 5)) == 2
        assert t.grant("w1", 1) == []

    def test_unknown_worker(self):
        t = make_tracker(1)
        with pytest.raises(UnknownWorker):
            t.grant("ghost", 1)

    def test_payload_returned(self):
        t = make_tracker(1)
        [(c, payload)] = t.grant("w1", 1)
        assert payload == b"xxxx"


class TestTerminal:
    def test_complete(self):
        t = make_tracker(2)
        t.grant("w1", 2)
        assert t.complete(cid(0), "w1") is True
        assert t.counts()["done"] == 1
        assert t.all_terminal() is False
        assert t.delete(cid(1), "w1") is True
        assert t.all_terminal() is True

    def test_duplicate_result_ignored(self):
        t = make_tracker(1)
        t.grant("w1", 1)
        assert t.complete(cid(0), "w1") is True
        assert t.complete(cid(0), "w1") is False
        assert t.delete(cid(0), "w1") is False
        assert t.counts()["done"] == 1

    def test_not_terminal_until_loading_done(self):
        t = WorkTracker()
        t.register_worker("w1")
        assert t.all_terminal() is False
        t.finish_loading()
        assert t.all_terminal() is True

    def test_duplicate_add_rejected(self):
        t = make_tracker(1)
        with pytest.raises(ValueError):
            t.add(cid(0), b"")


class TestRequeue:
    def test_sent_return_to_pending(self):
        t = make_tracker(4)
        t.grant("w1", 3)
        t.complete(cid(0), "w1")
        assert t.requeue_worker("w1") == 2
        c = t.counts()
        assert (c["pending"], c["done"]) == (3, 1)
        assert t.requeue_events == 1

    def test_failed_after_max_attempts(self):
        t = make_tracker(1, max_attempts=3)
        for _ in range(3):
            t.grant("w1", 1)
            t.requeue_worker("w1")
        assert t.counts()["failed"] == 1
        assert t.all_terminal() is True

    def test_requeued_chunk_grantable_again(self):
        t = make_tracker(1, workers=("w1", "w2"))
        t.grant("w1", 1)
        t.requeue_worker("w1")
        [(c, _)] = t.grant("w2", 1)
        assert c == cid(0)

    def test_empty_requeue_not_an_event(self):
        t = make_tracker(1)
        assert t.requeue_worker("w1") == 0
        assert t.requeue_events == 0

    def test_unknown_worker(self):
        t = make_tracker(1)
        with pytest.raises(UnknownWorker):
            t.requeue_worker("ghost")


class TestStats:
    def test_grant_and_result_counters(self):
        t = make_tracker(3, workers=("w1", "w2"))
        t.grant("w1", 2)
        t.grant("w2", 1)
        t.complete(cid(0), "w1")
        t.delete(cid(1), "w1")
        t.complete(cid(2), "w2")
        s = t.worker_stats()
        assert (s["w1"].granted, s["w1"].completed, s["w1"].deleted) == (2, 1, 1)
        assert (s["w2"].granted, s["w2"].completed) == (1, 1)

    def test_io_accounting(self):
        t = make_tracker(1)
        t.add_worker_io("w1", bytes_in=100, bytes_out=40, busy_ms=12.5)
        t.add_worker_io("w1", bytes_in=1)
        s = t.worker_stats()["w1"]
        assert (s.bytes_in, s.bytes_out, s.busy_ms) == (101, 40, 12.5)


class TestRandomized:
    def test_lifecycle_invariants(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            n = int(rng.integers(1, 30))
            workers = [f"w{i}" for i in range(int(rng.integers(1, 5)))]
            t = make_tracker(n, workers=tuple(workers))
            in_flight = {w: [] for w in workers}
            for _ in range(400):
                op = rng.integers(0, 4)
                w = workers[int(rng.integers(0, len(workers)))]
                if op == 0:
                    for c, _ in t.grant(w, int(rng.integers(1, 4))):
                        in_flight[w].append(c)
                elif op == 1 and in_flight[w]:
                    t.complete(in_flight[w].pop(), w)
                elif op == 2 and in_flight[w]:
                    t.delete(in_flight[w].pop(), w)
                elif op == 3:
                    t.requeue_worker(w)
                    in_flight[w] = []
                t.check_invariants()
                counts = t.counts()
                assert sum(counts.values()) == n
            # drain to quiescence
            while True:
                granted = t.grant(workers[0], n)
                if not granted:
                    break
                for c, _ in granted:
                    t.complete(c, workers[0])
            for w in workers:
                for c in in_flight[w]:
                    t.complete(c, w)
            t.check_invariants()
            assert t.all_terminal() is True
            counts = t.counts()
            assert counts["pending"] == counts["sent"] == 0
