"""Splitting updates into packets and putting them back together."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..queues import Update
from .wire import DEFAULT_MTU_PAYLOAD, Kind, Packet

SEQ_MOD = 1 << 32


def seq_newer(a: int, b: int) -> bool:
    """True if sequence number ``a`` is ahead of ``b`` under 32-bit wrap."""
    d = (a - b) % SEQ_MOD
    return 0 < d < SEQ_MOD // 2


def fragment_count(size: int, mtu_payload: int) -> int:
    return -(-size // mtu_payload)


def fragment(
    update: Update,
    mtu_payload: int = DEFAULT_MTU_PAYLOAD,
    source_id: int = 0,
    seq: int = 0,
) -> list[Packet]:
    """One DATA packet if the update fits, else FRAG packets sharing ``seq``."""
    if mtu_payload < 1:
        raise ValueError("mtu_payload must be at least 1")
    size = update.payload_size
    if size == 0:
        raise ValueError("zero-size updates cannot be sent")
    info = update.info_type
    ts = update.gen_timestamp
    if size <= mtu_payload:
        return [Packet(Kind.DATA, source_id, info, seq, 0, 1, ts, payload=update.payload)]
    total = fragment_count(size, mtu_payload)
    data = update.payload
    return [
        Packet(Kind.FRAG, source_id, info, seq, i, total, ts,
               payload=data[i * mtu_payload:(i + 1) * mtu_payload])
        for i in range(total)
    ]


@dataclass
class Reassembly:
    """Reassembly state for one instance.

    Holds at most one sequence number; a fragment of a newer sequence
    discards whatever was collected for the older one.
    """

    seq: Optional[int] = None
    total: int = 0
    gen_timestamp: int = 0
    parts: dict[int, bytes] = field(default_factory=dict)
    done: bool = False
    last_ack: Optional[tuple[int, int, int]] = None  # (seq, index, total)
    superseded: int = 0
    duplicates: int = 0

    def add(self, packet: Packet) -> Optional[Update]:
        """Take a DATA or FRAG packet; return the update once complete."""
        if packet.kind is Kind.DATA:
            self.last_ack = (packet.seq, 0, 1)
            return Update(packet.gen_timestamp, packet.payload, packet.info_type)
        if self.seq is None or seq_newer(packet.seq, self.seq):
            if self.parts:
                self.superseded += 1
            self.seq = packet.seq
            self.total = packet.frag_total
            self.gen_timestamp = packet.gen_timestamp
            self.parts = {}
            self.done = False
        elif packet.seq != self.seq:
            return None  # older sequence, already superseded
        self.last_ack = (packet.seq, packet.frag_index, packet.frag_total)
        if self.done or packet.frag_index in self.parts:
            self.duplicates += 1
            return None
        self.parts[packet.frag_index] = packet.payload
        if len(self.parts) < self.total:
            return None
        payload = b"".join(self.parts[i] for i in range(self.total))
        self.parts = {}
        self.done = True
        return Update(self.gen_timestamp, payload, packet.info_type)


def reassemble(packets: list[Packet]) -> Update:
    r = Reassembly()
    out = None
    for p in packets:
        out = r.add(p) or out
    if out is None:
        raise ValueError("incomplete fragment set")
    return out
