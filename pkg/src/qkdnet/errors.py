"""Exception types shared across the simulator."""


class QkdNetError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(QkdNetError, ValueError):
    """An operation was called with arguments violating its precondition."""


class BlockAbortError(QkdNetError):
    """QBER is above the last error-correction threshold; key generation
    for this block must stop and the epoch is discarded."""

    def __init__(self, qber: float):
        super().__init__(f"QBER {qber:.4f} exceeds the highest correctable threshold")
        self.qber = qber


class BlockDeferredError(QkdNetError):
    """Block is shorter than the minimum privacy-amplification size;
    the caller should accumulate more key. Not fatal."""


class ReplayError(QkdNetError):
    """A key-material push reused an already-seen sequence number."""


class KeyExhaustedError(QkdNetError):
    """A key draw asked for more bytes than the pool holds."""


class RelayAbortedError(QkdNetError):
    """A hop on a relay route ran out of pad. Pads already consumed at
    completed hops stay consumed."""

    def __init__(self, message: str, hop_status: list):
        super().__init__(message)
        self.hop_status = hop_status


class NoRouteError(QkdNetError):
    """No all-up route exists for the requested demand."""


class TopologyError(QkdNetError):
    """Topology file failed validation; ``violations`` lists every problem."""

    def __init__(self, violations: list):
        super().__init__("; ".join(violations))
        self.violations = violations
