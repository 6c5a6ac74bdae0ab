"""Asset advertisement beacons and the client discovery state machine.

Each asset maps to a 128-bit service id (a namespaced UUIDv5 of
``"kind:owner:name"``). The edge server packs the ids of its current
snapshot into rotating beacon frames; a scanning client watches frames
until every id it wants has shown up, then connects and enumerates the
server's services before it can issue requests.

Canonical frame bytes, big-endian::

    u8  frame_index
    u8  frame_count
    u32 registry_revision
    16 bytes per service id (UUID bytes), repeated
"""

from __future__ import annotations

import struct
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .assets import RegistrySnapshot
from .errors import ChannelTimeout, InvalidTransition, ServiceNotFound
from .simnet import Channel

__all__ = [
    "DEFAULT_CAPACITY",
    "Beacon",
    "ClientSession",
    "SessionState",
    "decode_services",
    "discover",
    "discover_steps",
    "encode_beacons",
    "interrogate",
    "interrogate_steps",
    "scan_match",
    "service_id_of",
    "snapshot_service_ids",
]

DEFAULT_CAPACITY = 4
NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "urn:edgecoord:assets")
_HEADER = struct.Struct(">BBI")


def service_id_of(kind: str, owner: str, name: str) -> uuid.UUID:
    if not name:
        raise ValueError("asset name must be nonempty")
    owner = getattr(owner, "value", owner)
    return uuid.uuid5(NAMESPACE, f"{kind}:{owner}:{name}")


def snapshot_service_ids(snapshot: RegistrySnapshot) -> list[uuid.UUID]:
    return [service_id_of(*key) for key in snapshot.asset_keys()]


@dataclass(frozen=True)
class Beacon:
    frame_index: int
    frame_count: int
    services: tuple[uuid.UUID, ...] = ()
    registry_revision: int = 0

    def __post_init__(self):
        if not 0 <= self.frame_index < self.frame_count:
            raise ValueError(f"frame_index {self.frame_index} outside [0, {self.frame_count})")
        if self.frame_count > 255:
            raise ValueError("at most 255 frames fit the u8 frame counter")

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(self.frame_index, self.frame_count, self.registry_revision & 0xFFFFFFFF)
        return head + b"".join(s.bytes for s in self.services)

    @classmethod
    def from_bytes(cls, data: bytes) -> Beacon:
        if len(data) < _HEADER.size or (len(data) - _HEADER.size) % 16:
            raise ValueError(f"malformed beacon frame of {len(data)} bytes")
        index, count, revision = _HEADER.unpack_from(data)
        body = data[_HEADER.size:]
        services = tuple(uuid.UUID(bytes=body[i:i + 16]) for i in range(0, len(body), 16))
        return cls(index, count, services, revision)


def encode_beacons(snapshot: RegistrySnapshot, capacity: int = DEFAULT_CAPACITY) -> list[Beacon]:
    """Split the snapshot's service ids over ``ceil(n / capacity)`` frames (at least one)."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    ids = snapshot_service_ids(snapshot)
    chunks = [tuple(ids[i:i + capacity]) for i in range(0, len(ids), capacity)] or [()]
    return [Beacon(i, len(chunks), chunk, snapshot.revision) for i, chunk in enumerate(chunks)]


def decode_services(beacons: Iterable[Beacon]) -> set[uuid.UUID]:
    found: set[uuid.UUID] = set()
    for beacon in beacons:
        found.update(beacon.services)
    return found


def scan_match(observed_beacons: Iterable[Beacon], wanted) -> set[uuid.UUID]:
    wanted = set(wanted)
    if not wanted:
        return set()
    return wanted & decode_services(observed_beacons)


class SessionState(str, Enum):
    SCANNING = "Scanning"
    MATCHED = "Matched"
    CONNECTING = "Connecting"
    INTERROGATING = "Interrogating"
    READY = "Ready"
    FAILED = "Failed"


_NEXT = {
    SessionState.SCANNING: SessionState.MATCHED,
    SessionState.MATCHED: SessionState.CONNECTING,
    SessionState.CONNECTING: SessionState.INTERROGATING,
    SessionState.INTERROGATING: SessionState.READY,
}


@dataclass
class ClientSession:
    client_id: str
    state: SessionState = SessionState.SCANNING
    matched_services: set = field(default_factory=set)
    t_scan_start: float = 0.0
    t_matched: float | None = None
    t_ready: float | None = None
    history: list = field(default_factory=list)
    failure: str | None = None

    def __post_init__(self):
        if not self.history:
            self.history.append((self.t_scan_start, self.state))

    def advance(self, new_state: SessionState | str, now: float) -> None:
        new_state = SessionState(new_state)
        if self.state is SessionState.FAILED:
            raise InvalidTransition(f"session {self.client_id!r} has failed")
        if new_state is not SessionState.FAILED and _NEXT.get(self.state) is not new_state:
            raise InvalidTransition(f"{self.state.value} -> {new_state.value} is not allowed")
        self.state = new_state
        self.history.append((now, new_state))
        if new_state is SessionState.MATCHED:
            self.t_matched = now
        elif new_state is SessionState.READY:
            self.t_ready = now

    def fail(self, now: float, reason: str) -> None:
        if self.state is not SessionState.FAILED:
            self.advance(SessionState.FAILED, now)
            self.failure = reason

    @property
    def interrogation_time(self) -> float | None:
        """Milliseconds from spotting the server's broadcast to being ready to invoke it."""
        if self.t_ready is None or self.t_matched is None:
            return None
        return self.t_ready - self.t_matched


def discover_steps(session: ClientSession, beacons: list[Beacon], wanted, channel: Channel):
    """Process: watch rotating frames until every wanted id has been seen.

    A frame is heard every ``scan_gap``. One full rotation without a match
    fails the session with :class:`ServiceNotFound`.
    """
    clock = channel.clock
    wanted = set(wanted)
    observed: list[Beacon] = []
    for frame in beacons:
        yield channel.transfer("scan_gap") - clock.now
        observed.append(frame)
        session.matched_services = scan_match(observed, wanted)
        if session.matched_services == wanted:
            session.advance(SessionState.MATCHED, clock.now)
            clock.log(session.client_id, "matched")
            return session
    session.fail(clock.now, "wanted services not advertised")
    raise ServiceNotFound(f"{session.client_id}: missing {len(wanted - session.matched_services)} service id(s)")


def interrogate_steps(session: ClientSession, channel: Channel, timeout_ms: float | None = None):
    """Process: connect, enumerate services, end Ready (or Failed on timeout)."""
    if session.state is not SessionState.MATCHED:
        raise InvalidTransition(f"interrogate needs a Matched session, got {session.state.value}")
    clock = channel.clock
    for state, segment in ((SessionState.CONNECTING, "connect"), (SessionState.INTERROGATING, "enumerate")):
        session.advance(state, clock.now)
        delay = channel.transfer(segment) - clock.now
        if timeout_ms is not None and delay > timeout_ms:
            yield timeout_ms
            session.fail(clock.now, f"{segment} timed out")
            raise ChannelTimeout(f"{session.client_id}: {segment} exceeded {timeout_ms} ms")
        yield delay
    session.advance(SessionState.READY, clock.now)
    clock.log(session.client_id, "ready")
    return session


def _run(channel: Channel, gen, now: float | None, name: str):
    clock = channel.clock
    if now is not None and now > clock.now:
        clock.advance_to(now)
    return clock.run_until_complete(clock.spawn(gen, name))


def discover(session: ClientSession, beacons: list[Beacon], wanted, channel: Channel, now: float | None = None) -> ClientSession:
    return _run(channel, discover_steps(session, beacons, wanted, channel), now, f"discover:{session.client_id}")


def interrogate(session: ClientSession, channel: Channel, now: float | None = None, timeout_ms: float | None = None) -> ClientSession:
    return _run(channel, interrogate_steps(session, channel, timeout_ms), now, f"interrogate:{session.client_id}")
