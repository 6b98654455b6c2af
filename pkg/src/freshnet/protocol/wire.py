"""Byte-exact wire format.

Every message is a fixed 47-byte big-endian header followed by the payload::

    version      u8   (0x01)
    kind         u8   POLL=1 DATA=2 EMPTY=3 FRAG=4 SYNC_REQ=5 SYNC_RESP=6
    source_id    u16
    info_type    u8
    seq          u32
    frag_index   u16
    frag_total   u16
    gen_ts       u64  microseconds
    aux[3]       u64  sync timestamps, zero for other kinds
    payload_len  u16

POLL packets reuse (seq, frag_index, frag_total) to acknowledge the last
fragment received from the polled instance; frag_total == 0 means nothing
is acknowledged.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

VERSION = 0x01
HEADER = struct.Struct(">BBHBIHHQQQQH")
HEADER_LEN = HEADER.size
assert HEADER_LEN == 47

MAX_U16 = 0xFFFF
MAX_U32 = 0xFFFFFFFF
MAX_U64 = 0xFFFFFFFFFFFFFFFF
DEFAULT_MTU = 1500 - 20 - 8  # IPv4 + UDP headers
DEFAULT_MTU_PAYLOAD = 1400


class Kind(IntEnum):
    POLL = 0x01
    DATA = 0x02
    EMPTY = 0x03
    FRAG = 0x04
    SYNC_REQ = 0x05
    SYNC_RESP = 0x06


_SYNC = (Kind.SYNC_REQ, Kind.SYNC_RESP)


class DecodeError(ValueError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class EncodeError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Packet:
    kind: Kind
    source_id: int
    info_type: int
    seq: int = 0
    frag_index: int = 0
    frag_total: int = 0
    gen_timestamp: int = 0
    aux: tuple[int, int, int] = (0, 0, 0)
    payload: bytes = b""

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def key(self) -> tuple[int, int]:
        return (self.source_id, self.info_type)

    @property
    def wire_len(self) -> int:
        return HEADER_LEN + len(self.payload)

    @property
    def is_final_fragment(self) -> bool:
        return self.frag_index == self.frag_total - 1

    def check(self, mtu: int = DEFAULT_MTU) -> None:
        """Raise ``EncodeError`` if the packet violates a field constraint."""
        problem = _field_problem(
            self.kind, self.source_id, self.info_type, self.seq, self.frag_index,
            self.frag_total, self.gen_timestamp, self.aux, len(self.payload),
        )
        if problem:
            raise EncodeError(f"{problem[0]}: {problem[1]}")
        if len(self.payload) > mtu - HEADER_LEN:
            raise EncodeError(f"payload_len: {len(self.payload)} exceeds MTU {mtu}")


def poll(source_id: int, info_type: int, ack: tuple[int, int, int] | None = None) -> Packet:
    """POLL for an instance; ``ack`` is (seq, frag_index, frag_total)."""
    seq, idx, total = ack if ack is not None else (0, 0, 0)
    return Packet(Kind.POLL, source_id, info_type, seq, idx, total)


def empty(source_id: int, info_type: int) -> Packet:
    return Packet(Kind.EMPTY, source_id, info_type)


def _field_problem(kind, source_id, info_type, seq, idx, total, gen, aux, plen):
    try:
        kind = Kind(kind)
    except ValueError:
        return ("kind", f"unknown kind 0x{int(kind):02x}")
    if not 0 <= source_id <= MAX_U16:
        return ("source_id", f"{source_id} out of range")
    if not 0 <= info_type <= 0xFF:
        return ("info_type", f"{info_type} out of range")
    if not 0 <= seq <= MAX_U32:
        return ("seq", f"{seq} out of range")
    if not (0 <= idx <= MAX_U16 and 0 <= total <= MAX_U16):
        return ("frag_index", "fragment fields out of range")
    if not 0 <= gen <= MAX_U64:
        return ("gen_timestamp", f"{gen} out of range")
    if len(aux) != 3 or any(not 0 <= a <= MAX_U64 for a in aux):
        return ("aux_timestamps", "need three u64 values")
    if plen > MAX_U16:
        return ("payload_len", f"{plen} exceeds u16")
    if kind is Kind.DATA:
        if total != 1 or idx != 0:
            return ("frag_total", "DATA must be a single fragment (0/1)")
    elif kind is Kind.FRAG:
        if total < 1 or idx >= total:
            return ("frag_index", f"index {idx} not below total {total}")
    elif kind is Kind.POLL:
        if total and idx >= total:
            return ("frag_index", f"acknowledged index {idx} not below total {total}")
        if total == 0 and (idx or seq):
            return ("frag_total", "ack fields set without a fragment total")
    elif idx or total:
        return ("frag_index", f"{kind.name} carries no fragment fields")
    if kind not in _SYNC and any(aux):
        return ("aux_timestamps", f"{kind.name} must have zero aux timestamps")
    if kind in (Kind.POLL, Kind.EMPTY, Kind.SYNC_REQ, Kind.SYNC_RESP) and plen:
        return ("payload_len", f"{kind.name} carries no payload")
    return None


def encode(packet: Packet, mtu: int = DEFAULT_MTU) -> bytes:
    packet.check(mtu)
    a0, a1, a2 = packet.aux
    return HEADER.pack(
        VERSION, int(packet.kind), packet.source_id, packet.info_type, packet.seq,
        packet.frag_index, packet.frag_total, packet.gen_timestamp, a0, a1, a2,
        len(packet.payload),
    ) + packet.payload


def decode(data: bytes) -> Packet:
    """Parse one datagram. Raises ``DecodeError`` naming the offending field."""
    if len(data) < HEADER_LEN:
        raise DecodeError("length", f"{len(data)} bytes is shorter than the {HEADER_LEN}-byte header")
    (version, kind, source_id, info_type, seq, idx, total, gen,
     a0, a1, a2, plen) = HEADER.unpack_from(data)
    if version != VERSION:
        raise DecodeError("version", f"unsupported version 0x{version:02x}")
    if len(data) != HEADER_LEN + plen:
        raise DecodeError(
            "payload_len", f"header says {plen} payload bytes, datagram has {len(data) - HEADER_LEN}"
        )
    problem = _field_problem(kind, source_id, info_type, seq, idx, total, gen, (a0, a1, a2), plen)
    if problem:
        raise DecodeError(*problem)
    return Packet(Kind(kind), source_id, info_type, seq, idx, total, gen, (a0, a1, a2), bytes(data[HEADER_LEN:]))
