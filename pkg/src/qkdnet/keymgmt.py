"""Key management agents: per-node pools of distilled key material.

A :class:`KeyManagementAgent` (KMA) ingests pushed key material per
quantum link, re-chunks it into fixed-size storage blocks pooled per
peer node, serves reserve/consume draws, relays keys hop by hop with
one-time-pad masking, and emits windowed link statistics.

Both endpoints of a link ingest identical pushes and therefore hold
mirrored pools; draws stay aligned because blocks are consumed strictly
in ingestion order with a byte cursor. Every consumed byte region is
recorded in an audit log keyed by (node, peer, block id, offset) so a
full-run scan can prove no pad byte was served twice.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import (
    InvalidArgumentError,
    KeyExhaustedError,
    RelayAbortedError,
    ReplayError,
)

DEFAULT_CHUNK_BYTES = 32768
STATS_WINDOW_S = 1.0


@dataclass(frozen=True)
class KeyMaterialPush:
    """One push of freshly distilled key over the link API."""

    link_id: str
    seq: int
    data: bytes
    bit_length: int
    qber: float = 0.0
    secure_fraction: float = 0.0
    timestamp_s: float = 0.0

    def __post_init__(self):
        if len(self.data) != (self.bit_length + 7) // 8:
            raise InvalidArgumentError("push byte length does not match bit length")


@dataclass(frozen=True)
class StatsReport:
    """Per-link telemetry row forwarded to the central server."""

    link_id: str
    timestamp_s: float
    qber: float
    sifted_bps: float
    secure_bps: float
    buffer_bits: int

    def __post_init__(self):
        if self.sifted_bps < 0 or self.secure_bps < 0 or self.buffer_bits < 0:
            raise InvalidArgumentError("rates must be non-negative")

    def to_json(self) -> dict:
        return {
            "link_id": self.link_id,
            "timestamp_s": self.timestamp_s,
            "qber": self.qber,
            "sifted_bps": self.sifted_bps,
            "secure_bps": self.secure_bps,
            "buffer_bits": self.buffer_bits,
        }


@dataclass(frozen=True)
class AuditEntry:
    """One consumed byte region of one storage block."""

    timestamp_s: float
    node: str
    peer: str
    block_id: str
    offset: int
    length: int
    purpose: str


@dataclass
class _StorageBlock:
    id: str
    data: bytearray
    cursor: int = 0          # bytes below the cursor are consumed+zeroized

    @property
    def remaining(self) -> int:
        return len(self.data) - self.cursor


@dataclass
class PeerPool:
    """Ordered pool of storage blocks shared with one peer node."""

    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    blocks: deque = field(default_factory=deque)
    carry: bytearray = field(default_factory=bytearray)
    ingested_bits: int = 0
    available_bits: int = 0
    reserved_bits: int = 0
    consumed_bits: int = 0
    drained: list = field(default_factory=list)   # fully consumed blocks kept for audit
    _block_counter: int = 0

    def ingest(self, data: bytes, id_prefix: str) -> list[str]:
        """Append bytes, cutting full chunks into blocks; the remainder
        carries to the next ingest. Returns the new block ids."""
        self.carry.extend(data)
        ids = []
        while len(self.carry) >= self.chunk_bytes:
            chunk = bytearray(self.carry[:self.chunk_bytes])
            del self.carry[:self.chunk_bytes]
            block_id = f"{id_prefix}#{self._block_counter}"
            self._block_counter += 1
            self.blocks.append(_StorageBlock(block_id, chunk))
            self.ingested_bits += self.chunk_bytes * 8
            self.available_bits += self.chunk_bytes * 8
            ids.append(block_id)
        return ids

    def draw(self, n_bytes: int) -> tuple[bytes, list[tuple[str, int, int]]]:
        """Consume exactly n_bytes in pool order, zeroizing the consumed
        storage. Returns the pad and the (block_id, offset, length)
        regions it came from. Atomic: raises without mutation when short."""
        if n_bytes * 8 > self.available_bits:
            raise KeyExhaustedError(
                f"requested {n_bytes} bytes, pool holds {self.available_bits // 8}")
        self.reserved_bits += n_bytes * 8
        self.available_bits -= n_bytes * 8
        out = bytearray()
        regions = []
        need = n_bytes
        while need:
            blk = self.blocks[0]
            take = min(need, blk.remaining)
            out += blk.data[blk.cursor:blk.cursor + take]
            regions.append((blk.id, blk.cursor, take))
            blk.data[blk.cursor:blk.cursor + take] = bytes(take)
            blk.cursor += take
            need -= take
            if blk.remaining == 0:
                self.drained.append(self.blocks.popleft())
        self.reserved_bits -= n_bytes * 8
        self.consumed_bits += n_bytes * 8
        return bytes(out), regions

    def check_conservation(self) -> bool:
        return self.ingested_bits == (self.available_bits + self.reserved_bits
                                      + self.consumed_bits)

    def consumed_storage_zeroized(self) -> bool:
        for blk in list(self.drained) + list(self.blocks):
            if any(blk.data[:blk.cursor]):
                return False
        return True


class KeyManagementAgent:
    """Single-actor key store of one trusted node."""

    def __init__(self, node_id: str, chunk_bytes: int = DEFAULT_CHUNK_BYTES):
        self.node_id = node_id
        self.chunk_bytes = chunk_bytes
        self.pools: dict[str, PeerPool] = {}
        self.audit_log: list[AuditEntry] = []
        self._link_peer: dict[str, str] = {}
        self._last_seq: dict[str, int] = {}
        self._link_qber: dict[str, float] = {}
        self._secure_events: dict[str, deque] = {}
        self._sifted_events: dict[str, deque] = {}

    # --- wiring -------------------------------------------------------

    def bind_link(self, link_id: str, peer: str) -> None:
        """Associate a quantum link with the peer node it terminates at."""
        self._link_peer[link_id] = peer
        self.pools.setdefault(peer, PeerPool(self.chunk_bytes))
        self._secure_events.setdefault(link_id, deque())
        self._sifted_events.setdefault(link_id, deque())

    def pool(self, peer: str) -> PeerPool:
        if peer not in self.pools:
            raise InvalidArgumentError(f"no pool for peer {peer!r}")
        return self.pools[peer]

    def buffer_bits(self, peer: str) -> int:
        return self.pool(peer).available_bits

    # --- ingestion ----------------------------------------------------

    def ingest_key_material(self, push: KeyMaterialPush) -> list[str]:
        """Store pushed key bits; rejects replayed sequence numbers."""
        peer = self._link_peer.get(push.link_id)
        if peer is None:
            raise InvalidArgumentError(f"unknown link {push.link_id!r}")
        last = self._last_seq.get(push.link_id)
        if last is not None and push.seq <= last:
            raise ReplayError(
                f"link {push.link_id} seq {push.seq} already seen (last {last})")
        self._last_seq[push.link_id] = push.seq
        self._link_qber[push.link_id] = push.qber
        whole_bytes = push.bit_length // 8
        ids = self.pools[peer].ingest(push.data[:whole_bytes],
                                      id_prefix=f"{push.link_id}:{push.seq}")
        self._secure_events[push.link_id].append((push.timestamp_s, push.bit_length))
        return ids

    def note_sifted(self, link_id: str, timestamp_s: float, bits: int,
                    qber: float | None = None) -> None:
        """Record sifted-layer activity for rate reporting."""
        self._sifted_events.setdefault(link_id, deque()).append((timestamp_s, bits))
        if qber is not None:
            self._link_qber[link_id] = qber

    # --- consumption --------------------------------------------------

    def reserve_and_consume(self, peer: str, n_bytes: int, purpose: str,
                            now_s: float = 0.0) -> bytes:
        """Draw n_bytes of pad shared with ``peer``; storage is zeroized
        and the regions are appended to the audit log."""
        if n_bytes <= 0:
            raise InvalidArgumentError("n_bytes must be positive")
        pad, regions = self.pool(peer).draw(n_bytes)
        for block_id, offset, length in regions:
            self.audit_log.append(AuditEntry(
                now_s, self.node_id, peer, block_id, offset, length, purpose))
        return pad

    # --- telemetry ----------------------------------------------------

    def report_stats(self, link_id: str, now_s: float,
                     window_s: float = STATS_WINDOW_S) -> StatsReport:
        peer = self._link_peer.get(link_id)
        if peer is None:
            raise InvalidArgumentError(f"unknown link {link_id!r}")

        def rate(events: deque) -> float:
            while events and events[0][0] <= now_s - window_s:
                events.popleft()
            return sum(b for t, b in events if t <= now_s) / window_s

        return StatsReport(
            link_id=link_id,
            timestamp_s=now_s,
            qber=self._link_qber.get(link_id, 0.0),
            sifted_bps=rate(self._sifted_events.setdefault(link_id, deque())),
            secure_bps=rate(self._secure_events.setdefault(link_id, deque())),
            buffer_bits=self.buffer_bits(peer),
        )

    # --- audits -------------------------------------------------------

    def check_conservation(self) -> bool:
        return all(p.check_conservation() for p in self.pools.values())

    def check_zeroized(self) -> bool:
        return all(p.consumed_storage_zeroized() for p in self.pools.values())


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise InvalidArgumentError("xor operands must have equal length")
    return bytes(x ^ y for x, y in zip(a, b))


@dataclass(frozen=True)
class RelayResult:
    """Delivered key plus the per-hop wire messages for auditing."""

    key: bytes
    route_nodes: tuple[str, ...]
    wire_messages: tuple[bytes, ...]   # M_i = K xor P_i, one per hop
    hop_pad_bytes: int                 # pad consumed per hop (network total = hops * this)


def relay_key(kmas: dict[str, KeyManagementAgent], route_nodes: list[str],
              n_bytes: int, purpose: str, key: bytes, now_s: float = 0.0,
              ) -> RelayResult:
    """Relay ``key`` from the first to the last node of ``route_nodes``.

    Each hop (u, v) consumes n_bytes of the pad u and v share and puts
    ``M = key xor pad`` on the wire; v unmasks with its mirrored copy of
    the pad. A hop without enough pad aborts the relay; pads already
    consumed at completed hops stay consumed, and the per-hop status is
    attached to the error.
    """
    if len(route_nodes) < 2:
        raise InvalidArgumentError("a route needs at least two nodes")
    if len(key) != n_bytes:
        raise InvalidArgumentError("key length must equal n_bytes")

    wires = []
    hop_status = []
    for u, v in zip(route_nodes[:-1], route_nodes[1:]):
        try:
            pad_u = kmas[u].reserve_and_consume(v, n_bytes, purpose, now_s)
            pad_v = kmas[v].reserve_and_consume(u, n_bytes, purpose, now_s)
        except KeyExhaustedError as exc:
            hop_status.append((u, v, f"exhausted: {exc}"))
            raise RelayAbortedError(
                f"relay {purpose} aborted at hop {u}->{v}", hop_status) from exc
        if pad_u != pad_v:
            hop_status.append((u, v, "pad desync"))
            raise RelayAbortedError(
                f"relay {purpose} found desynchronized pools at hop {u}->{v}",
                hop_status)
        wire = xor_bytes(key, pad_u)
        recovered = xor_bytes(wire, pad_v)
        assert recovered == key
        wires.append(wire)
        hop_status.append((u, v, "ok"))

    return RelayResult(key=key, route_nodes=tuple(route_nodes),
                       wire_messages=tuple(wires), hop_pad_bytes=n_bytes)


def find_double_serving(audits: list[AuditEntry]) -> list[tuple]:
    """Scan audit entries of one node for overlapping byte regions of the
    same block; returns the offending pairs (empty when clean)."""
    by_block: dict[tuple[str, str, str], list[AuditEntry]] = {}
    for e in audits:
        by_block.setdefault((e.node, e.peer, e.block_id), []).append(e)
    bad = []
    for entries in by_block.values():
        entries = sorted(entries, key=lambda e: e.offset)
        for prev, cur in zip(entries[:-1], entries[1:]):
            if cur.offset < prev.offset + prev.length:
                bad.append((prev, cur))
    return bad
