import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msbls.messages import MessageKind, ProtocolMessage, Role
from msbls.transport import (
    FrameError,
    TransportClosed,
    TransportTimeout,
    decode_message,
    encode_message,
    make_bus_endpoints,
    make_tcp_endpoints,
)

SID = bytes(range(16))


def msg(payloads, seq=3, sender=Role.CLIENT_A, receiver=Role.CLIENT_B,
        kind=MessageKind.BLINDED_DATA):
    return ProtocolMessage(
        session_id=SID, seq=seq, sender=sender, receiver=receiver,
        kind=kind, payloads=tuple(np.asarray(p, dtype=np.float64) for p in payloads),
    )


finite_f64 = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestFrameCodec:
    def test_zero_scalar_payload_layout(self):
        raw = encode_message(msg([[[0.0]]]))
        assert raw[:4] == b"MSBL"
        assert raw[4] == 1
        # header(27) | rows(4) cols(4) | one zero double | crc(4)
        assert len(raw) == 27 + 8 + 8 + 4
        rows, cols = struct.unpack(">II", raw[27:35])
        assert (rows, cols) == (1, 1)
        assert raw[35:43] == b"\x00" * 8

    def test_round_trip_random_payload(self):
        rng = np.random.default_rng(0)
        m = msg([rng.standard_normal((3, 2))])
        m2 = decode_message(encode_message(m))
        assert m2.session_id == SID
        assert (m2.seq, m2.sender, m2.receiver, m2.kind) == (
            m.seq, m.sender, m.receiver, m.kind
        )
        assert np.array_equal(m.payloads[0], m2.payloads[0])

    def test_two_payload_round_trip(self):
        rng = np.random.default_rng(1)
        m = msg(
            [rng.standard_normal((2, 3)), rng.standard_normal((4, 1))],
            seq=2, sender=Role.SERVER, receiver=Role.CLIENT_B,
            kind=MessageKind.KEY_MASKS,
        )
        m2 = decode_message(encode_message(m))
        assert len(m2.payloads) == 2
        for a, b in zip(m.payloads, m2.payloads):
            assert np.array_equal(a, b)

    @given(
        payload=arrays(
            np.float64,
            st.tuples(st.integers(1, 5), st.integers(1, 5)),
            elements=finite_f64,
        )
    )
    def test_round_trip_is_bit_exact(self, payload):
        m = msg([payload])
        decoded = decode_message(encode_message(m)).payloads[0]
        # Bit-level equality, including negative zero and subnormals.
        assert decoded.tobytes() == np.ascontiguousarray(payload).tobytes()

    def test_encoded_size_matches_actual_length(self):
        rng = np.random.default_rng(2)
        m = msg([rng.standard_normal((7, 5)), rng.standard_normal((1, 9))],
                seq=4, sender=Role.CLIENT_B, receiver=Role.CLIENT_A,
                kind=MessageKind.BLINDED_KEY_AND_CROSS)
        assert len(encode_message(m)) == m.encoded_size

    def test_corrupt_payload_byte_fails_checksum(self):
        raw = bytearray(encode_message(msg([np.ones((2, 2))])))
        raw[40] ^= 0x01
        with pytest.raises(FrameError, match="checksum"):
            decode_message(bytes(raw))

    def test_truncated_frame_rejected(self):
        raw = encode_message(msg([np.ones((2, 2))]))
        for cut in (3, 20, 30, len(raw) - 1):
            with pytest.raises(FrameError, match="truncated|checksum"):
                decode_message(raw[:cut])

    def test_bad_magic_rejected(self):
        raw = bytearray(encode_message(msg([[[1.0]]])))
        raw[0] = ord("X")
        with pytest.raises(FrameError, match="magic"):
            decode_message(bytes(raw))

    def test_bad_version_rejected(self):
        raw = bytearray(encode_message(msg([[[1.0]]])))
        raw[4] = 9
        with pytest.raises(FrameError, match="version"):
            decode_message(bytes(raw))

    def test_bad_payload_count_rejected(self):
        raw = bytearray(encode_message(msg([[[1.0]]])))
        raw[26] = 3
        with pytest.raises(FrameError, match="payload count"):
            decode_message(bytes(raw))

    def test_trailing_bytes_rejected(self):
        raw = encode_message(msg([[[1.0]]]))
        with pytest.raises(FrameError, match="trailing"):
            decode_message(raw + b"\x00")

    def test_non_finite_payload_cannot_be_encoded(self):
        m = msg([np.ones((2, 2))])
        m.payloads[0][0, 0] = np.nan  # mutate after construction-time checks
        with pytest.raises(FrameError, match="non-finite"):
            encode_message(m)

    def test_message_construction_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            msg([np.ones((2, 2))], seq=0)
        with pytest.raises(ValueError):
            msg([np.ones((2, 2))], seq=13)
        with pytest.raises(ValueError):
            msg([np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2))])
        with pytest.raises(ValueError):
            msg([np.array([[np.inf]])])
        with pytest.raises(ValueError):
            ProtocolMessage(b"short", 1, Role.SERVER, Role.CLIENT_A,
                            MessageKind.DATA_MASK, (np.ones((1, 1)),))


class TestBus:
    def test_send_then_recv_returns_same_message(self):
        endpoints = make_bus_endpoints()
        m = msg([np.ones((2, 2))])
        endpoints[Role.CLIENT_A].send(m)
        got = endpoints[Role.CLIENT_B].recv(Role.CLIENT_A, timeout=1.0)
        assert got is m

    def test_fifo_per_directed_pair(self):
        endpoints = make_bus_endpoints()
        first = msg([np.ones((1, 1))], seq=3)
        second = msg([np.zeros((1, 1))], seq=9)
        endpoints[Role.CLIENT_A].send(first)
        endpoints[Role.CLIENT_A].send(second)
        assert endpoints[Role.CLIENT_B].recv(Role.CLIENT_A, 1.0).seq == 3
        assert endpoints[Role.CLIENT_B].recv(Role.CLIENT_A, 1.0).seq == 9

    def test_recv_timeout(self):
        endpoints = make_bus_endpoints()
        with pytest.raises(TransportTimeout):
            endpoints[Role.SERVER].recv(Role.CLIENT_A, timeout=0.1)

    def test_closed_bus_raises(self):
        endpoints = make_bus_endpoints()
        endpoints[Role.SERVER].close()
        with pytest.raises(TransportClosed):
            endpoints[Role.CLIENT_A].send(msg([np.ones((1, 1))]))
        with pytest.raises(TransportClosed):
            endpoints[Role.CLIENT_B].recv(Role.CLIENT_A, timeout=0.5)

    def test_cannot_spoof_sender(self):
        endpoints = make_bus_endpoints()
        with pytest.raises(ValueError):
            endpoints[Role.SERVER].send(msg([np.ones((1, 1))]))  # sender CLIENT_A


class TestTcp:
    def test_all_pairs_deliver_and_roundtrip(self):
        endpoints = make_tcp_endpoints()
        try:
            pairs = [
                (Role.SERVER, Role.CLIENT_A, 1, MessageKind.DATA_MASK),
                (Role.SERVER, Role.CLIENT_B, 2, MessageKind.KEY_MASKS),
                (Role.CLIENT_A, Role.CLIENT_B, 3, MessageKind.BLINDED_DATA),
                (Role.CLIENT_B, Role.CLIENT_A, 4, MessageKind.BLINDED_KEY_AND_CROSS),
                (Role.CLIENT_A, Role.SERVER, 5, MessageKind.UNBLINDED_CROSS),
                (Role.CLIENT_B, Role.SERVER, 12, MessageKind.OWN_PRODUCT_B),
            ]
            rng = np.random.default_rng(3)
            for sender, receiver, seq, kind in pairs:
                payloads = [rng.standard_normal((3, 4))]
                if kind in (MessageKind.KEY_MASKS, MessageKind.BLINDED_KEY_AND_CROSS):
                    payloads.append(rng.standard_normal((2, 2)))
                m = msg(payloads, seq=seq, sender=sender, receiver=receiver, kind=kind)
                endpoints[sender].send(m)
                got = endpoints[receiver].recv(sender, timeout=5.0)
                assert got.seq == seq and got.kind == kind
                for a, b in zip(m.payloads, got.payloads):
                    assert a.tobytes() == b.tobytes()
        finally:
            for ep in endpoints.values():
                ep.close()

    def test_fifo_order_on_stream(self):
        endpoints = make_tcp_endpoints()
        try:
            for seq in (1, 7):
                endpoints[Role.SERVER].send(
                    msg([np.full((1, 1), float(seq))], seq=seq,
                        sender=Role.SERVER, receiver=Role.CLIENT_A,
                        kind=MessageKind.DATA_MASK if seq == 1 else MessageKind.KEY_MASKS)
                )
            assert endpoints[Role.CLIENT_A].recv(Role.SERVER, 5.0).seq == 1
            assert endpoints[Role.CLIENT_A].recv(Role.SERVER, 5.0).seq == 7
        finally:
            for ep in endpoints.values():
                ep.close()

    def test_recv_timeout(self):
        endpoints = make_tcp_endpoints()
        try:
            with pytest.raises((TransportTimeout, TransportClosed)):
                endpoints[Role.SERVER].recv(Role.CLIENT_A, timeout=0.2)
        finally:
            for ep in endpoints.values():
                ep.close()
