import random
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from odaframe.sensors import SensorReading
from odaframe.transport import (
    CollectorServer,
    FrameError,
    Publisher,
    Subscription,
    frame_decode,
    frame_encode,
    topic_matches_prefix,
)


def rd(ts, v):
    return SensorReading(value=v, timestamp=ts)


class TestCodec:
    def test_known_layout(self):
        frame = frame_encode("/a/b", [rd(1, 2)])
        assert len(frame) == 11 + 4 + 16
        assert frame[:4] == b"ODA1"
        assert frame[4] == 1
        assert int.from_bytes(frame[5:7], "big") == 4
        assert frame[7:11] == b"/a/b"
        assert int.from_bytes(frame[11:15], "big") == 1
        assert frame_decode(frame) == ("/a/b", [rd(1, 2)])

    def test_empty_readings_rejected(self):
        with pytest.raises(ValueError):
            frame_encode("/a/b", [])

    def test_flipped_magic_rejected_at_offset_zero(self):
        frame = bytearray(frame_encode("/a/b", [rd(1, 2)]))
        frame[0] ^= 0xFF
        with pytest.raises(FrameError) as exc:
            frame_decode(bytes(frame))
        assert exc.value.offset == 0

    def test_bad_version(self):
        frame = bytearray(frame_encode("/a/b", [rd(1, 2)]))
        frame[4] = 9
        with pytest.raises(FrameError):
            frame_decode(bytes(frame))

    def test_truncation_rejected(self):
        frame = frame_encode("/a/b", [rd(1, 2), rd(2, 3)])
        for cut in range(len(frame)):
            with pytest.raises(FrameError):
                frame_decode(frame[:cut])

    def test_trailing_bytes_rejected(self):
        frame = frame_encode("/a/b", [rd(1, 2)])
        with pytest.raises(FrameError):
            frame_decode(frame + b"\x00")

    topics = st.lists(
        st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-", min_size=1, max_size=8),
        min_size=1, max_size=5).map(lambda segs: "/" + "/".join(segs))
    readings = st.lists(
        st.tuples(st.integers(min_value=1, max_value=(1 << 64) - 1),
                  st.integers(min_value=-(1 << 63), max_value=(1 << 63) - 1)),
        min_size=1, max_size=20)

    @given(topics, readings)
    @settings(max_examples=400, deadline=None)
    def test_roundtrip_and_length_formula(self, topic, pairs):
        rs = [rd(ts, v) for ts, v in pairs]
        frame = frame_encode(topic, rs)
        assert len(frame) == 11 + len(topic.encode()) + 16 * len(rs)
        assert frame_decode(frame) == (topic, rs)

    def test_fuzz_decoder_never_crashes(self):
        rng = random.Random(1234)
        base = frame_encode("/fuzz/topic", [rd(i + 1, i) for i in range(4)])
        survived = 0
        for _ in range(20_000):
            mode = rng.randrange(3)
            if mode == 0:
                data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 64)))
            elif mode == 1:
                buf = bytearray(base)
                for _ in range(rng.randrange(1, 6)):
                    buf[rng.randrange(len(buf))] = rng.randrange(256)
                data = bytes(buf)
            else:
                data = base[:rng.randrange(len(base) + 1)]
            try:
                frame_decode(data)
            except FrameError:
                pass
            survived += 1
        assert survived == 20_000


class TestPrefix:
    @pytest.mark.parametrize("topic,prefix,want", [
        ("/a/b/c", "/a", True),
        ("/a/b/c", "/a/b", True),
        ("/a/b/c", "/a/b/c", True),
        ("/ab/c", "/a", False),
        ("/a/b", "/b", False),
        ("/a/b", "/", True),
    ])
    def test_segment_aware(self, topic, prefix, want):
        assert topic_matches_prefix(topic, prefix) == want


class TestPubSub:
    def test_publish_reaches_sink_and_subscriber_in_order(self):
        received = []
        server = CollectorServer(("127.0.0.1", 0),
                                 on_frame=lambda t, rs: received.append((t, rs)))
        server.start()
        try:
            sub_got = []
            sub = Subscription(server.address, "/lab")
            done = threading.Event()

            def drain():
                for topic, rs in sub:
                    sub_got.append((topic, rs))
                    if len(sub_got) == 100:
                        done.set()
                        return

            t = threading.Thread(target=drain, daemon=True)
            t.start()
            time.sleep(0.1)  # let the SUB line land before publishing

            pub = Publisher(server.address)
            pub.start()
            for i in range(100):
                pub.publish("/lab/n1/x", [rd(i + 1, i)])
            assert pub.flush(timeout=10)
            assert done.wait(timeout=10)
            pub.close()
            sub.close()

            assert [rs[0].value for _, rs in sub_got] == list(range(100))
            assert len(received) == 100
        finally:
            server.close()

    def test_disjoint_prefix_receives_nothing(self):
        server = CollectorServer(("127.0.0.1", 0))
        server.start()
        try:
            got = []
            sub = Subscription(server.address, "/other")
            t = threading.Thread(target=lambda: got.extend(sub), daemon=True)
            t.start()
            time.sleep(0.1)
            pub = Publisher(server.address)
            pub.start()
            for i in range(20):
                pub.publish("/lab/n1/x", [rd(i + 1, i)])
            assert pub.flush(timeout=10)
            time.sleep(0.2)
            pub.close()
            sub.close()
            assert got == []
        finally:
            server.close()

    def test_collector_restart_pusher_reconnects_in_order(self):
        received = []
        server = CollectorServer(("127.0.0.1", 0),
                                 on_frame=lambda t, rs: received.append(rs[0].value))
        server.start()
        port = server.address[1]
        pub = Publisher(("127.0.0.1", port), reconnect_floor_s=0.01)
        pub.start()
        try:
            for i in range(50):
                pub.publish("/lab/x", [rd(i + 1, i)])
            assert pub.flush(timeout=10)
            server.close()

            for i in range(50, 100):
                pub.publish("/lab/x", [rd(i + 1, i)])
            time.sleep(0.3)  # let some sends fail against the dead server

            server2 = CollectorServer(("127.0.0.1", port),
                                      on_frame=lambda t, rs: received.append(rs[0].value))
            server2.start()
            try:
                assert pub.flush(timeout=10)
                time.sleep(0.2)
                # No reordering: values form a strictly increasing sequence.
                assert received == sorted(received)
                assert received[0] == 0 and len(received) >= 99
            finally:
                server2.close()
        finally:
            pub.close()

    def test_bounded_buffer_drops_oldest(self):
        pub = Publisher(("127.0.0.1", 1), max_buffered_frames=10)  # nothing listens
        for i in range(25):
            pub.publish("/lab/x", [rd(i + 1, i)])
        assert pub.dropped_frames == 15
