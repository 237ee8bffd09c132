import hashlib
import threading
import time

import pytest

from fvv.channel import (ChannelClosed, EndOfStream, PackType, UnifiedDataPack,
                         UniversalDataChannel)


def pack(data: bytes, kind=PackType.CONTROL) -> UnifiedDataPack:
    return UnifiedDataPack(kind, data)


def test_pack_size_invariant():
    p = pack(b"abc")
    assert p.size == 3
    with pytest.raises(ValueError):
        UnifiedDataPack(PackType.CONTROL, b"abc", size=5)


def test_pack_trace_is_functional():
    p = pack(b"x")
    q = p.stamped("stage", at=1.5)
    assert p.trace == ()
    assert q.trace_time("stage") == 1.5
    with pytest.raises(KeyError):
        p.trace_time("stage")


def test_fifo_order():
    ch = UniversalDataChannel(capacity=4)
    sub = ch.subscribe()
    ch.put(pack(b"A"))
    ch.put(pack(b"B"))
    assert sub.get().payload == b"A"
    assert sub.get().payload == b"B"


def test_broadcast_exactly_once():
    ch = UniversalDataChannel(capacity=4)
    s1, s2 = ch.subscribe(), ch.subscribe()
    ch.put(pack(b"A"))
    ch.close()
    assert s1.get().payload == b"A"
    assert s2.get().payload == b"A"
    for s in (s1, s2):
        with pytest.raises(EndOfStream):
            s.get()


def test_put_blocks_at_capacity_until_get():
    ch = UniversalDataChannel(capacity=2)
    sub = ch.subscribe()
    ch.put(pack(b"1"))
    ch.put(pack(b"2"))
    third_done = threading.Event()

    def producer():
        ch.put(pack(b"3"))
        third_done.set()

    t = threading.Thread(target=producer)
    t.start()
    assert not third_done.wait(0.15), "put should block while backlog == capacity"
    assert sub.get(timeout=1).payload == b"1"
    assert third_done.wait(2), "put should resume after a get"
    t.join()
    assert sub.get(timeout=1).payload == b"2"
    assert sub.get(timeout=1).payload == b"3"


def test_put_on_closed_channel():
    ch = UniversalDataChannel()
    ch.close()
    with pytest.raises(ChannelClosed):
        ch.put(pack(b"x"))


def test_empty_closed_channel_signals_end_of_stream():
    ch = UniversalDataChannel()
    sub = ch.subscribe()
    ch.close()
    with pytest.raises(EndOfStream):
        sub.get()


def test_three_packs_in_order():
    ch = UniversalDataChannel(capacity=8)
    sub = ch.subscribe()
    for b in (b"a", b"b", b"c"):
        ch.put(pack(b))
    assert [sub.get().payload for _ in range(3)] == [b"a", b"b", b"c"]


def test_concurrent_producer_consumer_preserves_order():
    ch = UniversalDataChannel(capacity=3)
    sub = ch.subscribe()
    n = 200
    received = []

    def producer():
        for i in range(n):
            ch.put(pack(i.to_bytes(4, "little")))
            if i % 17 == 0:
                time.sleep(0.001)
        ch.close()

    t = threading.Thread(target=producer)
    t.start()
    for p in sub:
        received.append(int.from_bytes(p.payload, "little"))
    t.join()
    assert received == list(range(n))


def test_subscribers_see_identical_sequences():
    ch = UniversalDataChannel(capacity=4)
    subs = [ch.subscribe() for _ in range(3)]
    digests = [hashlib.sha256() for _ in subs]
    done = []

    def consumer(i):
        for p in subs[i]:
            digests[i].update(p.payload)
        done.append(i)

    threads = [threading.Thread(target=consumer, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for i in range(50):
        ch.put(pack(f"item-{i}".encode()))
    ch.close()
    for t in threads:
        t.join()
    assert len(done) == 3
    assert len({d.hexdigest() for d in digests}) == 1


def test_drop_oldest_mode_never_blocks():
    ch = UniversalDataChannel(capacity=2, drop_oldest=True)
    sub = ch.subscribe()
    for i in range(5):
        ch.put(pack(bytes([i])))
    ch.close()
    got = [p.payload[0] for p in sub]
    assert got == [3, 4]


def test_capacity_validation():
    with pytest.raises(ValueError):
        UniversalDataChannel(capacity=0)
