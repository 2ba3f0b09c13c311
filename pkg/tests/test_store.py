import threading

import pytest

from odaframe.sensors import NS_PER_S, SensorReading
from odaframe.store import AppendLogStore


def readings(*ts_seconds, v0=0):
    return [SensorReading(value=v0 + i, timestamp=int(t * NS_PER_S))
            for i, t in enumerate(ts_seconds)]


class TestAppendQuery:
    def test_range_query_matches_filter(self, tmp_path):
        store = AppendLogStore(tmp_path)
        store.append("/n/x", readings(*range(1, 11)))
        got = store.query("/n/x", 4 * NS_PER_S, 6 * NS_PER_S)
        assert [r.timestamp for r in got] == [i * NS_PER_S for i in (4, 5, 6)]

    def test_unknown_topic_empty(self, tmp_path):
        store = AppendLogStore(tmp_path)
        assert store.query("/nope", 0, 10) == []

    def test_batch_sorted_internally(self, tmp_path):
        store = AppendLogStore(tmp_path)
        store.append("/n/x", readings(5, 3, 4, 1, 2))
        got = store.query("/n/x", 1, 10 * NS_PER_S)
        assert [r.timestamp for r in got] == sorted(r.timestamp for r in got)
        assert len(got) == 5

    def test_records_older_than_tail_rejected_and_counted(self, tmp_path):
        store = AppendLogStore(tmp_path)
        store.append("/n/x", readings(5))
        accepted = store.append("/n/x", readings(3, 4, 6))
        assert accepted == 1
        assert store.rejected_count == 2
        assert [r.timestamp // NS_PER_S for r in store.query("/n/x", 1, 10 * NS_PER_S)] == [5, 6]

    def test_tail_equal_timestamp_accepted(self, tmp_path):
        store = AppendLogStore(tmp_path)
        store.append("/n/x", readings(5))
        assert store.append("/n/x", readings(5)) == 1

    def test_invalid_range(self, tmp_path):
        store = AppendLogStore(tmp_path)
        with pytest.raises(ValueError):
            store.query("/n/x", 10, 5)


class TestDurability:
    def test_reopen_sees_identical_data(self, tmp_path):
        store = AppendLogStore(tmp_path)
        data = readings(*range(1, 50))
        store.append("/n/x", data)
        store.append("/m/y", readings(7, 8))
        before_x = store.query("/n/x", 0, 10 ** 15)
        store.close()

        reopened = AppendLogStore(tmp_path)
        assert reopened.query("/n/x", 0, 10 ** 15) == before_x
        assert reopened.topics() == ["/m/y", "/n/x"]
        assert reopened.tail_timestamp("/m/y") == 8 * NS_PER_S

    def test_append_after_reopen_respects_tail(self, tmp_path):
        store = AppendLogStore(tmp_path)
        store.append("/n/x", readings(5))
        store.close()
        reopened = AppendLogStore(tmp_path)
        assert reopened.append("/n/x", readings(4)) == 0
        assert reopened.rejected_count == 1
        assert reopened.append("/n/x", readings(6)) == 1


class TestConcurrency:
    def test_readers_see_consistent_prefix(self, tmp_path):
        store = AppendLogStore(tmp_path)
        stop = threading.Event()
        errors = []

        def writer():
            ts = 1
            while not stop.is_set():
                batch = [SensorReading(value=ts + i, timestamp=ts + i) for i in range(20)]
                store.append("/n/x", batch)
                ts += 20

        def reader():
            while not stop.is_set():
                got = store.query("/n/x", 1, 10 ** 15)
                ts = [r.timestamp for r in got]
                if ts != sorted(ts) or any(r.value != r.timestamp for r in got):
                    errors.append("inconsistent read")
                    return

        threads = [threading.Thread(target=writer), threading.Thread(target=reader),
                   threading.Thread(target=reader)]
        for t in threads:
            t.start()
        import time
        time.sleep(0.4)
        stop.set()
        for t in threads:
            t.join()
        assert errors == []
