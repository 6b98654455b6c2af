from .fragments import Reassembly, fragment, reassemble, seq_newer
from .machines import (
    Delivered,
    DestinationMachine,
    PollReceived,
    Received,
    SendPoll,
    SourceMachine,
    SourceNode,
    TimeoutExpired,
    UpdateGenerated,
    destination_step,
    source_step,
)
from .sync import SyncSample, best_sample, sync_offset
from .wire import HEADER_LEN, DecodeError, Kind, Packet, decode, encode

__all__ = [
    "HEADER_LEN", "DecodeError", "Delivered", "DestinationMachine", "Kind", "Packet",
    "PollReceived", "Reassembly", "Received", "SendPoll", "SourceMachine", "SourceNode",
    "SyncSample", "TimeoutExpired", "UpdateGenerated", "best_sample", "decode",
    "destination_step", "encode", "fragment", "reassemble", "seq_newer", "source_step",
    "sync_offset",
]
