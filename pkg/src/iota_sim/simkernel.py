"""Deterministic discrete-event substrate.

Virtual clock, ordered event queue, communication cost model, a metered
in-memory blob store standing in for the shared object storage, and
forkable counter-based random streams.
"""

import hashlib
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidConfigError,
    KeyExistsError,
    NotFoundError,
)

__all__ = [
    "VirtualClock",
    "EventQueue",
    "NetworkModel",
    "transfer_duration",
    "BlobStore",
    "BlobReceipt",
    "RngStream",
]

MBPS = 1e6  # decimal megabit, networking convention


class VirtualClock:
    """Monotonically non-decreasing simulation time in seconds."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError(f"cannot advance clock by negative dt={dt}")
        self.now += dt
        return self.now

    def advance_to(self, t: float) -> float:
        if t < self.now:
            raise ValueError(f"cannot move clock backwards to {t} from {self.now}")
        self.now = t
        return self.now


class EventQueue:
    """Events fire in (time, insertion-order) order.

    Ties are broken by an insertion sequence number, so execution order is
    fully deterministic and independent of callback identity.
    """

    def __init__(self, clock: VirtualClock | None = None):
        self.clock = clock if clock is not None else VirtualClock()
        self._heap: list[tuple[float, int, object]] = []
        self._seq = 0

    def schedule(self, at: float, callback) -> None:
        if at < self.clock.now:
            raise ValueError(f"cannot schedule event in the past ({at} < {self.clock.now})")
        heapq.heappush(self._heap, (float(at), self._seq, callback))
        self._seq += 1

    def schedule_after(self, delay: float, callback) -> None:
        self.schedule(self.clock.now + delay, callback)

    def __len__(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        """Fire the next event. Returns False when the queue is empty."""
        if not self._heap:
            return False
        at, _, callback = heapq.heappop(self._heap)
        self.clock.advance_to(at)
        callback()
        return True

    def run(self, until: float | None = None) -> None:
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            self.step()
        if until is not None and until > self.clock.now:
            self.clock.advance_to(until)


@dataclass(frozen=True)
class NetworkModel:
    """Fixed-bandwidth link with compression modeled as a pure bit divisor."""

    bandwidth_bps: float
    compression_ratio: float = 1.0

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise InvalidConfigError(f"bandwidth_bps must be > 0, got {self.bandwidth_bps}")
        if self.compression_ratio < 1:
            raise InvalidConfigError(
                f"compression_ratio must be >= 1, got {self.compression_ratio}"
            )


def transfer_duration(nbytes: int, model: NetworkModel) -> float:
    """Seconds to move ``nbytes`` over one actor link."""
    if nbytes < 0:
        raise InvalidConfigError(f"nbytes must be >= 0, got {nbytes}")
    return (nbytes * 8.0 / model.compression_ratio) / model.bandwidth_bps


@dataclass(frozen=True)
class BlobReceipt:
    key: str
    size: int
    completion_time: float


@dataclass
class TransferMeter:
    bytes_uploaded: int = 0
    bytes_downloaded: int = 0


@dataclass
class BlobStore:
    """In-memory object store with per-actor transfer metering.

    Stands in for the shared storage bucket: actors upload and download
    byte payloads, and every completed transfer is accounted against the
    acting participant.
    """

    clock: VirtualClock | None = None
    network: NetworkModel | None = None
    objects: dict = field(default_factory=dict)
    meter: dict = field(default_factory=dict)
    # Wire-size divisor for compression codecs that are modeled by size
    # only: stored content is unchanged, metered/transferred bytes shrink.
    wire_ratio: float = 1.0

    def _meter_for(self, actor: str) -> TransferMeter:
        if actor not in self.meter:
            self.meter[actor] = TransferMeter()
        return self.meter[actor]

    def _duration(self, nbytes: int) -> float:
        if self.network is None:
            return 0.0
        return transfer_duration(nbytes, self.network)

    def _wire_bytes(self, nbytes: int) -> int:
        if self.wire_ratio == 1.0:
            return nbytes
        return math.ceil(nbytes / self.wire_ratio)

    def put(self, actor: str, key: str, data: bytes, overwrite: bool = False) -> BlobReceipt:
        if not key:
            raise InvalidConfigError("blob key must be non-empty")
        if key in self.objects and not overwrite:
            raise KeyExistsError(f"key already exists: {key}")
        data = bytes(data)
        self.objects[key] = data
        wire = self._wire_bytes(len(data))
        m = self._meter_for(actor)
        m.bytes_uploaded += wire
        now = self.clock.now if self.clock is not None else 0.0
        return BlobReceipt(key=key, size=len(data), completion_time=now + self._duration(wire))

    def get(self, actor: str, key: str, start: int = 0, length: int | None = None) -> bytes:
        """Fetch a blob, optionally a byte range. Each retrieval is metered."""
        if key not in self.objects:
            raise NotFoundError(f"no such key: {key}")
        data = self.objects[key]
        if length is None:
            chunk = data[start:]
        else:
            chunk = data[start : start + length]
        self._meter_for(actor).bytes_downloaded += self._wire_bytes(len(chunk))
        return chunk

    def exists(self, key: str) -> bool:
        return key in self.objects

    def size(self, key: str) -> int:
        if key not in self.objects:
            raise NotFoundError(f"no such key: {key}")
        return len(self.objects[key])

    def total_uploaded(self) -> int:
        return sum(m.bytes_uploaded for m in self.meter.values())

    def total_downloaded(self) -> int:
        return sum(m.bytes_downloaded for m in self.meter.values())


def _philox_key(seed: int, stream_id: str) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x1f{stream_id}".encode()).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


class RngStream:
    """Forkable random stream backed by the counter-based Philox generator.

    A stream is fully determined by ``(seed, stream_id)``; forking derives
    the child key by hashing, so children are reproducible regardless of
    how much the parent has been consumed.
    """

    def __init__(self, seed: int, stream_id: str = "root"):
        self.seed = int(seed)
        self.stream_id = stream_id
        self.generator = np.random.Generator(np.random.Philox(key=_philox_key(self.seed, stream_id)))

    def fork(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{label}")

    # Thin delegation for the draw kinds the simulator uses.
    def random(self, *args, **kwargs):
        return self.generator.random(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self.generator.uniform(*args, **kwargs)

    def normal(self, *args, **kwargs):
        return self.generator.normal(*args, **kwargs)

    def integers(self, *args, **kwargs):
        return self.generator.integers(*args, **kwargs)

    def permutation(self, *args, **kwargs):
        return self.generator.permutation(*args, **kwargs)

    def choice(self, *args, **kwargs):
        return self.generator.choice(*args, **kwargs)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"
