"""UDP latency harness for sealed-envelope delivery.

Wire format of every datagram::

    b"SCLT" | version u8 | mode u8 | seq u64 | timestamp_ns u64
    | frag_index u16 | frag_count u16 | payload

Modes: 1 = echo-rtt probe, 2 = one-way probe, 3 = echo reply.  Echo replies
carry the probe's header fields and no payload.  One-way timestamps are wall
clock and only meaningful with synchronized clocks.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import queue
import select
import socket
import struct
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .envelope import deserialize_envelope, open_envelope
from .errors import (
    AuthenticationFailure,
    EpochMismatch,
    MalformedInput,
    PolicyNotSatisfied,
    StarcastError,
)

log = logging.getLogger(__name__)

MAGIC = b"SCLT"
WIRE_VERSION = 1
MODE_ECHO = 1
MODE_ONE_WAY = 2
MODE_ECHO_REPLY = 3

_HEADER = struct.Struct(">4sBBQQHH")
HEADER_BYTES = _HEADER.size
DEFAULT_DATAGRAM_BUDGET = 1200

OPEN_OK = "ok"
OPEN_POLICY = "policy-not-satisfied"
OPEN_AUTH = "authentication-failure"
OPEN_EPOCH = "epoch-mismatch"
OPEN_MALFORMED = "malformed"
OPEN_SKIPPED = "not-opened"


@dataclass(frozen=True)
class Datagram:
    mode: int
    seq: int
    timestamp_ns: int
    frag_index: int
    frag_count: int
    payload: bytes = b""

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, WIRE_VERSION, self.mode, self.seq, self.timestamp_ns,
                            self.frag_index, self.frag_count) + self.payload

    @classmethod
    def unpack(cls, data: bytes) -> "Datagram":
        if len(data) < HEADER_BYTES:
            raise MalformedInput("datagram shorter than header", len(data))
        magic, version, mode, seq, ts, idx, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise MalformedInput("bad datagram magic", 0)
        if version != WIRE_VERSION:
            raise MalformedInput(f"unsupported wire version {version}", 4)
        if mode not in (MODE_ECHO, MODE_ONE_WAY, MODE_ECHO_REPLY):
            raise MalformedInput(f"unknown mode {mode}", 5)
        if count == 0 or idx >= count:
            raise MalformedInput("bad fragment index", 22)
        return cls(mode, seq, ts, idx, count, data[HEADER_BYTES:])


def fragment(mode: int, seq: int, timestamp_ns: int, payload: bytes,
             budget: int = DEFAULT_DATAGRAM_BUDGET) -> list[Datagram]:
    """Split one probe payload into datagrams of at most ``budget`` bytes."""
    room = budget - HEADER_BYTES
    if room <= 0:
        raise ValueError("datagram budget smaller than the probe header")
    chunks = [payload[i : i + room] for i in range(0, len(payload), room)] or [b""]
    if len(chunks) > 0xFFFF:
        raise ValueError("payload needs more than 65535 fragments")
    return [Datagram(mode, seq, timestamp_ns, i, len(chunks), c) for i, c in enumerate(chunks)]


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyStats:
    count: int
    loss: int
    mean_ms: float
    std_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    min_ms: float
    max_ms: float

    @classmethod
    def from_samples(cls, samples_ms: Iterable[float], sent: int | None = None) -> "LatencyStats":
        arr = np.asarray(list(samples_ms), dtype=float)
        n = int(arr.size)
        loss = 0 if sent is None else max(sent - n, 0)
        if n == 0:
            nan = float("nan")
            return cls(0, loss, nan, nan, nan, nan, nan, nan, nan)
        p50, p95, p99 = np.percentile(arr, [50, 95, 99])
        return cls(
            count=n,
            loss=loss,
            mean_ms=float(arr.mean()),
            std_ms=float(arr.std()),
            p50_ms=float(p50),
            p95_ms=float(p95),
            p99_ms=float(p99),
            min_ms=float(arr.min()),
            max_ms=float(arr.max()),
        )

    @property
    def loss_rate(self) -> float:
        total = self.count + self.loss
        return self.loss / total if total else 0.0

    def ordered(self) -> bool:
        if self.count == 0:
            return True
        return self.min_ms <= self.p50_ms <= self.p95_ms <= self.p99_ms <= self.max_ms

    def to_json(self) -> str:
        d = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2)


@dataclass
class ProbeRecord:
    seq: int
    send_ns: int
    recv_ns: int | None = None
    open_result: str = OPEN_SKIPPED

    @property
    def rtt_ms(self) -> float | None:
        if self.recv_ns is None:
            return None
        return (self.recv_ns - self.send_ns) / 1e6


RECORD_COLUMNS = ["seq", "send_ns", "recv_ns", "rtt_ms", "open_result"]


def records_csv(records: Iterable[ProbeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        rtt = r.rtt_ms
        w.writerow([r.seq, r.send_ns, "" if r.recv_ns is None else r.recv_ns,
                    "" if rtt is None else repr(rtt), r.open_result])
    return buf.getvalue()


@dataclass
class SenderResult:
    mode: int
    sent: int
    records: list[ProbeRecord] = field(default_factory=list)

    @property
    def stats(self) -> LatencyStats:
        samples = [r.rtt_ms for r in self.records if r.recv_ns is not None]
        return LatencyStats.from_samples(samples, sent=self.sent)


# ---------------------------------------------------------------------------
# Sender
# ---------------------------------------------------------------------------


def _payloads(source, count) -> Callable[[int], bytes]:
    if source is None:
        return lambda seq: b""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        return lambda seq: data
    if callable(source):
        return source
    items = list(source)
    if len(items) < count:
        raise ValueError("payload source shorter than probe count")
    return lambda seq: items[seq]


def run_sender(
    target: tuple[str, int],
    mode: str = "echo-rtt",
    rate: float = 100.0,
    count: int = 100,
    payload=None,
    broadcast: bool = False,
    budget: int = DEFAULT_DATAGRAM_BUDGET,
    timeout: float = 1.0,
) -> SenderResult:
    """Send ``count`` probes at ``rate`` per second.

    ``payload`` is bytes (same for every probe), a callable ``seq -> bytes``,
    or a sequence indexed by seq.  In echo mode, replies arriving within
    ``timeout`` seconds after the last send are matched by sequence number.
    """
    if mode not in ("echo-rtt", "one-way"):
        raise ValueError(f"unknown sender mode {mode!r}")
    if rate <= 0:
        raise ValueError("rate must be positive")
    wire_mode = MODE_ECHO if mode == "echo-rtt" else MODE_ONE_WAY
    result = SenderResult(mode=wire_mode, sent=0)
    if count <= 0:
        return result
    get_payload = _payloads(payload, count)
    clock = time.monotonic_ns if wire_mode == MODE_ECHO else time.time_ns
    pending: dict[int, ProbeRecord] = {}

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        if broadcast:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
        sock.setblocking(False)
        interval = 1.0 / rate
        start = time.monotonic()

        def drain(wait: float) -> None:
            deadline = time.monotonic() + wait
            while True:
                left = deadline - time.monotonic()
                ready, _, _ = select.select([sock], [], [], max(left, 0.0))
                if not ready:
                    if left <= 0:
                        return
                    continue
                try:
                    data, _ = sock.recvfrom(65535)
                except (BlockingIOError, ConnectionRefusedError):
                    # ICMP unreachable surfaces here on Linux; treat as loss.
                    continue
                now = clock()
                try:
                    dg = Datagram.unpack(data)
                except MalformedInput:
                    continue
                rec = pending.get(dg.seq)
                if dg.mode == MODE_ECHO_REPLY and rec is not None and rec.recv_ns is None and dg.timestamp_ns == rec.send_ns:
                    rec.recv_ns = now

        for seq in range(count):
            body = get_payload(seq)
            stamp = clock()
            rec = ProbeRecord(seq=seq, send_ns=stamp)
            for dg in fragment(wire_mode, seq, stamp, body, budget):
                try:
                    sock.sendto(dg.pack(), target)
                except (BlockingIOError, ConnectionRefusedError):
                    select.select([], [sock], [], 0.05)
                    try:
                        sock.sendto(dg.pack(), target)
                    except OSError as exc:
                        log.debug("send failed for seq %d: %s", seq, exc)
            pending[seq] = rec
            result.records.append(rec)
            result.sent += 1
            next_slot = start + (seq + 1) * interval
            if wire_mode == MODE_ECHO:
                drain(max(next_slot - time.monotonic(), 0.0))
            else:
                delay = next_slot - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        if wire_mode == MODE_ECHO:
            deadline = time.monotonic() + timeout
            while any(r.recv_ns is None for r in result.records) and time.monotonic() < deadline:
                drain(min(0.05, max(deadline - time.monotonic(), 0.0)))
    finally:
        sock.close()
    return result


# ---------------------------------------------------------------------------
# Receiver
# ---------------------------------------------------------------------------


def classify_open(payload: bytes, key) -> str:
    """Open a serialized envelope and name the outcome."""
    if key is None:
        return OPEN_SKIPPED
    try:
        env = deserialize_envelope(payload)
        open_envelope(env, key)
    except PolicyNotSatisfied:
        return OPEN_POLICY
    except AuthenticationFailure:
        return OPEN_AUTH
    except EpochMismatch:
        return OPEN_EPOCH
    except MalformedInput:
        return OPEN_MALFORMED
    except StarcastError:
        return OPEN_MALFORMED
    return OPEN_OK


class Receiver:
    """Bound UDP receiver; echo replies are sent before any decryption work.

    Intake runs on the calling thread (``serve``) and hands complete probes to
    a worker thread that opens envelopes.  ``records`` is filled in arrival
    order.
    """

    def __init__(self, port: int = 0, host: str = "0.0.0.0", key=None, mode: str = "echo-rtt"):
        if mode not in ("echo-rtt", "one-way"):
            raise ValueError(f"unknown receiver mode {mode!r}")
        self.mode = mode
        self.key = key
        self.records: list[ProbeRecord] = []
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]
        self._stop = threading.Event()
        self._work: queue.Queue = queue.Queue()

    def stop(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()
        self.close()

    def _worker(self):
        while True:
            item = self._work.get()
            if item is None:
                return
            rec, body = item
            rec.open_result = classify_open(body, self.key)

    def serve(self, max_probes: int | None = None, idle_timeout: float | None = None) -> list[ProbeRecord]:
        """Receive until ``max_probes`` complete probes, idle timeout, or ``stop()``."""
        worker = threading.Thread(target=self._worker, daemon=True)
        worker.start()
        partial: dict[tuple, dict[int, bytes]] = {}
        done = 0
        last_activity = time.monotonic()
        try:
            while not self._stop.is_set():
                if max_probes is not None and done >= max_probes:
                    break
                ready, _, _ = select.select([self.sock], [], [], 0.05)
                if not ready:
                    if idle_timeout is not None and time.monotonic() - last_activity > idle_timeout:
                        break
                    continue
                data, addr = self.sock.recvfrom(65535)
                last_activity = time.monotonic()
                try:
                    dg = Datagram.unpack(data)
                except MalformedInput:
                    continue
                if dg.mode == MODE_ECHO_REPLY:
                    continue
                key = (addr, dg.seq, dg.timestamp_ns)
                frags = partial.setdefault(key, {})
                frags[dg.frag_index] = dg.payload
                if len(frags) < dg.frag_count:
                    continue
                recv_ns = time.monotonic_ns() if dg.mode == MODE_ECHO else time.time_ns()
                del partial[key]
                if dg.mode == MODE_ECHO:
                    reply = Datagram(MODE_ECHO_REPLY, dg.seq, dg.timestamp_ns, 0, 1)
                    self.sock.sendto(reply.pack(), addr)
                body = b"".join(frags[i] for i in range(dg.frag_count))
                # Same-host monotonic clocks make the echo-mode delta meaningful
                # on loopback only.
                rec = ProbeRecord(seq=dg.seq, send_ns=dg.timestamp_ns, recv_ns=recv_ns)
                self.records.append(rec)
                self._work.put((rec, body))
                done += 1
        finally:
            self._work.put(None)
            worker.join()
        return self.records


def run_receiver(port: int, key=None, mode: str = "echo-rtt", host: str = "0.0.0.0",
                 max_probes: int | None = None, idle_timeout: float | None = None) -> list[ProbeRecord]:
    with Receiver(port=port, host=host, key=key, mode=mode) as rx:
        return rx.serve(max_probes=max_probes, idle_timeout=idle_timeout)
