"""Shared drivers for queue and protocol tests."""
import math
import random

from freshnet.protocol.machines import (
    DestinationMachine, Received, SendPoll, SourceNode, TimeoutExpired, UpdateGenerated,
)
from freshnet.protocol.wire import DEFAULT_MTU, HEADER_LEN, Kind, Packet, empty
from freshnet.queues import Update

# criterion number -> measured summary, filled in by the acceptance tests
ACCEPTANCE: dict[int, str] = {}


def serve(queue, arrivals, opportunities):
    """Feed ``arrivals`` and pop once at each opportunity time.

    An arrival at the same instant as an opportunity is pushed first.
    Returns [(opportunity_time, update or None)].
    """
    out = []
    i = 0
    for s in opportunities:
        while i < len(arrivals) and arrivals[i] <= s:
            queue.push(Update(arrivals[i]))
            i += 1
        out.append((s, queue.pop()))
    return out


class NewestFirstStack:
    """Unbounded stack that serves the newest waiting update."""

    def __init__(self):
        self.items = []

    def push(self, update):
        self.items.append(update)

    def pop(self):
        return self.items.pop() if self.items else None


def age_path(served):
    """Breakpoints (time, freshest timestamp) of the age path implied by
    served updates, keeping only those that lower the age."""
    fresh = 0
    path = []
    for t, u in served:
        if u is not None and u.gen_timestamp > fresh:
            fresh = u.gen_timestamp
            path.append((t, fresh))
    return path


def random_valid_packet(rng: random.Random) -> Packet:
    kind = rng.choice(list(Kind))
    sid = rng.randrange(1 << 16)
    info = rng.randrange(256)
    u64 = lambda: rng.choice([0, (1 << 64) - 1, rng.randrange(1 << 64)])
    body = lambda: rng.randbytes(rng.choice([1, rng.randrange(1, DEFAULT_MTU - HEADER_LEN + 1)]))
    if kind is Kind.POLL:
        if rng.random() < 0.3:
            return Packet(kind, sid, info)
        total = rng.randrange(1, 1 << 16)
        return Packet(kind, sid, info, rng.randrange(1 << 32), rng.randrange(total), total)
    if kind is Kind.DATA:
        return Packet(kind, sid, info, rng.randrange(1 << 32), 0, 1, u64(), payload=body())
    if kind is Kind.FRAG:
        total = rng.randrange(1, 1 << 16)
        return Packet(kind, sid, info, rng.randrange(1 << 32), rng.randrange(total), total, u64(), payload=body())
    if kind is Kind.EMPTY:
        return Packet(kind, sid, info)
    return Packet(kind, sid, info, aux=(u64(), u64(), u64()))


# instance -> (rate per second, update size, round-trip success probability)
TRACE_INSTANCES = {
    (0, 0): (200.0, 50, 0.9),
    (0, 1): (50.0, 20, 0.9),
    (1, 0): (500.0, 150, 0.5),
    (2, 0): (20.0, 150, 0.3),
    (3, 3): (30.0, 3000, 0.7),  # three fragments at 1400 B
}


def closed_loop_trace(n_events, seed, unsolicited_rate=0.0, timeout_us=5_000):
    """Drive a destination and its sources through ``n_events`` serialized events.

    Each poll reaches its source with probability sqrt(p) and the reply
    comes back with probability sqrt(p); otherwise the poll times out. With
    ``unsolicited_rate`` > 0, stray EMPTY packets from instances that were
    not polled are slipped in before some events.

    Returns (destination, trace) where trace entries are
    (event, actions, solicited).
    """
    rng = random.Random(seed)
    dest = DestinationMachine(timeout_us=timeout_us)
    nodes: dict[int, SourceNode] = {}
    next_gen = {}
    for key, (rate, size, _) in TRACE_INSTANCES.items():
        node = nodes.setdefault(key[0], SourceNode(key[0]))
        node.add(key[1], mtu_payload=1400)
        dest.register(key, 0)
        next_gen[key] = rng.expovariate(rate) * 1e6
    keys = sorted(TRACE_INSTANCES)

    def generate(until):
        for key, (rate, size, _) in TRACE_INSTANCES.items():
            while next_gen[key] <= until:
                t = int(next_gen[key])
                upd = Update(t, rng.randbytes(size), key[1])
                nodes[key[0]].machines[key[1]].step(UpdateGenerated(upd))
                next_gen[key] += rng.expovariate(rate) * 1e6

    trace = []
    now = 0
    actions = dest.kick(now)
    trace.append((None, actions, True))
    while len(trace) < n_events:
        sends = [a for a in actions if isinstance(a, SendPoll)]
        if not sends:
            raise AssertionError("destination went quiet")
        pkt = sends[-1].packet
        deadline = sends[-1].deadline
        generate(now)
        p = TRACE_INSTANCES[pkt.key][2]
        reply = None
        if rng.random() < math.sqrt(p):
            reply = nodes[pkt.source_id].on_poll(pkt)[0]
            if rng.random() >= math.sqrt(p):
                reply = None
        t_event = now + rng.randrange(50, timeout_us) if reply is not None else deadline
        if unsolicited_rate and rng.random() < unsolicited_rate:
            other = rng.choice([k for k in keys if k != pkt.key])
            t_stray = rng.randrange(now, t_event + 1)
            ev = Received(empty(*other), t_stray)
            trace.append((ev, dest.step(ev), False))
        now = t_event
        ev = Received(reply, now) if reply is not None else TimeoutExpired(now)
        actions = dest.step(ev)
        trace.append((ev, actions, True))
    return dest, trace
