"""Key-consuming applications.

Two consumers are modeled:

* :class:`Session` — a live one-time-pad byte stream (stand-in for the
  encrypted video conference). The payload is a seeded pseudorandom
  stream; the test target is bit-exact round-trip fidelity and pad
  accounting, not media handling. Sessions stall (never fail) on key
  exhaustion and resume when key arrives.
* :class:`KeyFile` — exportable stored key (the downloaded-pad phone
  model): "QKF1" binary files cut into fixed blocks (default 1 kB, one
  second of voice) that are zeroized and marked used on consumption.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, KeyExhaustedError

DEFAULT_SESSION_RATE_BPS = 128_000
DEFAULT_KEYFILE_BLOCK_BYTES = 1024

KEYFILE_MAGIC = b"QKF1"
_KEYFILE_HEADER = struct.Struct("<4s16s16sQII")


def otp_apply(data: bytes, pad: bytes) -> bytes:
    """Byte-wise XOR; self-inverse."""
    if len(data) != len(pad):
        raise InvalidArgumentError(
            f"pad length {len(pad)} does not match data length {len(data)}")
    return (np.frombuffer(data, dtype=np.uint8)
            ^ np.frombuffer(pad, dtype=np.uint8)).tobytes()


class EndToEndPool:
    """Mirrored delivered-key buffer for one (src, dst) demand.

    Relays append the delivered key here; both endpoints see the same
    byte sequence, so draws stay aligned by order.
    """

    def __init__(self):
        self._buf = bytearray()
        self.delivered_bytes = 0
        self.consumed_bytes = 0

    @property
    def available_bytes(self) -> int:
        return len(self._buf)

    def add(self, key: bytes) -> None:
        self._buf.extend(key)
        self.delivered_bytes += len(key)

    def draw(self, n_bytes: int) -> bytes:
        if n_bytes > len(self._buf):
            raise KeyExhaustedError(
                f"requested {n_bytes} bytes, pool holds {len(self._buf)}")
        out = bytes(self._buf[:n_bytes])
        del self._buf[:n_bytes]
        self.consumed_bytes += n_bytes
        return out


@dataclass
class SessionTelemetry:
    t_s: float
    state: str
    bytes_enciphered: int
    stall_s: float


class Session:
    """Bidirectional OTP stream between two nodes, driven by ticks."""

    def __init__(self, session_id: str, src: str, dst: str, pool: EndToEndPool,
                 rate_bps: float = DEFAULT_SESSION_RATE_BPS, seed: int = 0):
        if rate_bps <= 0:
            raise InvalidArgumentError("rate_bps must be positive")
        self.id = session_id
        self.src = src
        self.dst = dst
        self.pool = pool
        self.rate_bps = rate_bps
        self.state = "running"
        self.bytes_enciphered = 0       # per direction
        self.stall_s = 0.0
        self.telemetry: list[SessionTelemetry] = []
        self._stream = np.random.default_rng(seed)
        self._tx_fwd = hashlib.sha256()
        self._rx_fwd = hashlib.sha256()
        self._tx_rev = hashlib.sha256()
        self._rx_rev = hashlib.sha256()

    def tick(self, now_s: float, dt_s: float = 1.0) -> SessionTelemetry:
        """Advance one tick: encipher rate_bps*dt bits per direction, or
        stall if the delivered-key pool cannot cover both directions."""
        if self.state == "ended":
            raise InvalidArgumentError("session has ended")
        n = int(np.ceil(self.rate_bps * dt_s / 8))
        if self.pool.available_bytes < 2 * n:
            self.state = "stalled"
            self.stall_s += dt_s
        else:
            self.state = "running"
            for tx, rx in ((self._tx_fwd, self._rx_fwd),
                           (self._tx_rev, self._rx_rev)):
                pad = self.pool.draw(n)
                plaintext = self._stream.integers(0, 256, n, dtype=np.uint8).tobytes()
                ciphertext = otp_apply(plaintext, pad)
                received = otp_apply(ciphertext, pad)   # mirrored pad copy
                tx.update(plaintext)
                rx.update(received)
            self.bytes_enciphered += n
        row = SessionTelemetry(now_s, self.state, self.bytes_enciphered, self.stall_s)
        self.telemetry.append(row)
        return row

    def end(self) -> None:
        self.state = "ended"

    def round_trip_ok(self) -> bool:
        """Receiver streams equal sender streams, both directions."""
        return (self._tx_fwd.digest() == self._rx_fwd.digest()
                and self._tx_rev.digest() == self._rx_rev.digest())


@dataclass
class KeyFileBlock:
    id: int
    data: bytearray
    used: bool = False
    cursor: int = 0


@dataclass
class KeyFile:
    """Stored key exported from a node pair's pool."""

    node_a: str
    node_b: str
    block_bytes: int
    blocks: list[KeyFileBlock] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return sum(len(b.data) for b in self.blocks)

    @property
    def unused_bytes(self) -> int:
        return sum(len(b.data) - b.cursor for b in self.blocks if not b.used)

    def to_bytes(self) -> bytes:
        header = _KEYFILE_HEADER.pack(
            KEYFILE_MAGIC,
            self.node_a.encode()[:16].ljust(16, b"\0"),
            self.node_b.encode()[:16].ljust(16, b"\0"),
            self.total_bytes, self.block_bytes, len(self.blocks))
        parts = [header]
        for b in self.blocks:
            parts.append(struct.pack("<IBI", b.id, b.used, len(b.data)))
            parts.append(bytes(b.data))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "KeyFile":
        magic, a, b, total, block_bytes, n_blocks = _KEYFILE_HEADER.unpack_from(payload)
        if magic != KEYFILE_MAGIC:
            raise InvalidArgumentError("bad key-file magic")
        offset = _KEYFILE_HEADER.size
        blocks = []
        for _ in range(n_blocks):
            bid, used, length = struct.unpack_from("<IBI", payload, offset)
            offset += struct.calcsize("<IBI")
            blocks.append(KeyFileBlock(bid, bytearray(payload[offset:offset + length]),
                                       used=bool(used)))
            offset += length
        kf = cls(a.rstrip(b"\0").decode(), b.rstrip(b"\0").decode(),
                 block_bytes, blocks)
        if kf.total_bytes != total:
            raise InvalidArgumentError("key-file length mismatch")
        return kf


def export_key_file(kma, peer: str, n_bytes: int,
                    block_bytes: int = DEFAULT_KEYFILE_BLOCK_BYTES,
                    now_s: float = 0.0) -> KeyFile:
    """Move n_bytes out of the KMA pool into a stored key file; the pool
    accounts them as consumed."""
    if n_bytes <= 0 or block_bytes <= 0:
        raise InvalidArgumentError("sizes must be positive")
    pad = kma.reserve_and_consume(peer, n_bytes, purpose="keyfile", now_s=now_s)
    blocks = [KeyFileBlock(i, bytearray(pad[off:off + block_bytes]))
              for i, off in enumerate(range(0, n_bytes, block_bytes))]
    return KeyFile(kma.node_id, peer, block_bytes, blocks)


def consume_key_file(key_file: KeyFile, n_bytes: int) -> bytes:
    """Draw pad from the file front-to-back; consumed regions are
    zeroized in place and exhausted blocks flagged used (single-use)."""
    if n_bytes <= 0:
        raise InvalidArgumentError("n_bytes must be positive")
    if key_file.unused_bytes < n_bytes:
        raise KeyExhaustedError(
            f"requested {n_bytes} bytes, file holds {key_file.unused_bytes} unused")
    out = bytearray()
    need = n_bytes
    for block in key_file.blocks:
        if need == 0:
            break
        if block.used:
            continue
        take = min(need, len(block.data) - block.cursor)
        out += block.data[block.cursor:block.cursor + take]
        block.data[block.cursor:block.cursor + take] = bytes(take)
        block.cursor += take
        need -= take
        if block.cursor == len(block.data):
            block.used = True
    return bytes(out)


def voice_consumption_bytes(duration_s: float, rate_bytes_per_s: float = 1000.0,
                            directions: int = 2) -> float:
    """Stored-key consumption of a voice call."""
    return duration_s * rate_bytes_per_s * directions


def sustained_duration_s(total_bytes: float, rate_bytes_per_s: float = 1000.0,
                         directions: int = 2) -> float:
    """How long a stored key of total_bytes sustains a call."""
    if rate_bytes_per_s <= 0 or directions < 1:
        raise InvalidArgumentError("rate and directions must be positive")
    return total_bytes / (rate_bytes_per_s * directions)
