import hashlib
import random
import string
import struct
import uuid

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecoord.assets import AssetRegistry, JobDescriptor, RegistrySnapshot
from edgecoord.config import load_config
from edgecoord.discovery import (
    NAMESPACE,
    Beacon,
    ClientSession,
    SessionState,
    decode_services,
    discover,
    encode_beacons,
    interrogate,
    scan_match,
    service_id_of,
    snapshot_service_ids,
)
from edgecoord.errors import ChannelTimeout, InvalidTransition, ServiceNotFound
from edgecoord.simnet import Channel, ChannelConfig, SimClock

from conftest import camera


def registry_of(n_things, n_jobs=0):
    return AssetRegistry([camera(f"cam{i}") for i in range(n_things)], [JobDescriptor(f"job{i}") for i in range(n_jobs)])


def test_service_id_deterministic():
    assert service_id_of("thing", "edge", "cam1") == service_id_of("thing", "edge", "cam1")


def test_service_id_kind_separates():
    a = service_id_of("thing", "edge", "cam1")
    b = service_id_of("job", "edge", "cam1")
    # oracle: RFC 4122 v5 = SHA-1 over namespace bytes + name, truncated to 128 bits
    def v5(name):
        return hashlib.sha1(NAMESPACE.bytes + name.encode()).digest()[:16]
    assert v5("thing:edge:cam1") != v5("job:edge:cam1")
    assert a != b
    assert a.bytes[:6] == v5("thing:edge:cam1")[:6]


def test_service_id_collision_scan():
    rng = random.Random(1)
    names = set()
    while len(names) < 10_000:
        names.add("".join(rng.choices(string.ascii_lowercase + string.digits, k=12)))
    ids = {service_id_of("thing", "edge", n) for n in names}
    assert len(ids) == 10_000


def test_empty_name_rejected():
    with pytest.raises(ValueError):
        service_id_of("thing", "edge", "")


def test_empty_registry_gives_one_empty_frame():
    frames = encode_beacons(RegistrySnapshot())
    assert len(frames) == 1
    assert frames[0].services == () and frames[0].frame_count == 1


def test_two_assets_one_frame():
    frames = encode_beacons(registry_of(1, 1).snapshot(), capacity=4)
    assert len(frames) == 1 and len(frames[0].services) == 2


def test_twelve_assets_three_frames():
    snap = registry_of(8, 4).snapshot()
    frames = encode_beacons(snap, capacity=4)
    assert [f.frame_count for f in frames] == [3, 3, 3]
    union = set()
    for i, a in enumerate(frames):
        for b in frames[i + 1:]:
            assert not set(a.services) & set(b.services)
        union |= set(a.services)
    assert union == set(snapshot_service_ids(snap))
    assert all(f.registry_revision == snap.revision for f in frames)


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        encode_beacons(RegistrySnapshot(), capacity=0)


def test_byte_layout():
    sid = uuid.UUID("00112233-4455-6677-8899-aabbccddeeff")
    frame = Beacon(1, 3, (sid,), 0x01020304)
    raw = frame.to_bytes()
    assert raw == bytes([1, 3, 1, 2, 3, 4]) + sid.bytes
    assert Beacon.from_bytes(raw) == frame


def test_malformed_frame():
    with pytest.raises(ValueError):
        Beacon.from_bytes(b"\x00\x01\x00\x00\x00\x00" + b"\x00" * 5)


def test_scan_match_cases():
    face = service_id_of("job", "edge", "face-reco")
    cam = service_id_of("thing", "edge", "cam1")
    frames = [Beacon(0, 1, (face, cam))]
    assert scan_match(frames, set()) == set()
    assert scan_match(frames, {face}) == {face}


def test_scan_match_needs_the_right_frame():
    snap = registry_of(12).snapshot()
    frames = encode_beacons(snap, capacity=4)
    wanted = {frames[2].services[1]}
    assert scan_match(frames[:1], wanted) == set()
    assert scan_match(frames[:2], wanted) == set()
    assert scan_match(frames[:3], wanted) == wanted


def test_discover_waits_for_rotation():
    snap = registry_of(12).snapshot()
    frames = encode_beacons(snap, capacity=4)
    clock = SimClock()
    ch = Channel("client", ChannelConfig.constant(scan_gap=100.0), clock)
    session = ClientSession("c1")
    discover(session, frames, {frames[2].services[0]}, ch)
    assert session.state is SessionState.MATCHED
    assert session.t_matched == 300.0


def test_discover_missing_service_fails():
    frames = encode_beacons(registry_of(2).snapshot())
    ch = Channel("client", ChannelConfig.zero(), SimClock())
    session = ClientSession("c1")
    with pytest.raises(ServiceNotFound):
        discover(session, frames, {service_id_of("job", "edge", "nope")}, ch)
    assert session.state is SessionState.FAILED


def matched_session():
    s = ClientSession("c1")
    s.advance(SessionState.MATCHED, 0.0)
    return s


@pytest.mark.parametrize("profile, expected", [("object", 260.0), ("face", 459.4)])
def test_interrogation_time_default_config(profile, expected):
    cfg = load_config().channel(profile)
    ch = Channel("client", cfg, SimClock())
    session = interrogate(matched_session(), ch, now=0.0)
    assert session.state is SessionState.READY
    assert session.interrogation_time == pytest.approx(expected, abs=1e-9)
    assert session.t_ready - session.t_scan_start == pytest.approx(expected, abs=1e-9)


def test_zero_latency_interrogation():
    session = interrogate(matched_session(), Channel("c", ChannelConfig.zero(), SimClock()))
    assert session.interrogation_time == 0


def test_interrogation_is_connect_plus_enumerate():
    ch = Channel("c", ChannelConfig.constant(connect=12.5, enumerate=30.25, request=999), SimClock())
    assert interrogate(matched_session(), ch).interrogation_time == 42.75


def test_interrogate_requires_matched():
    ch = Channel("c", ChannelConfig.zero(), SimClock())
    with pytest.raises(InvalidTransition):
        interrogate(ClientSession("c1"), ch)


def test_timeout_fails_session():
    ch = Channel("c", ChannelConfig.constant(connect=500.0), SimClock())
    session = matched_session()
    with pytest.raises(ChannelTimeout):
        interrogate(session, ch, timeout_ms=100.0)
    assert session.state is SessionState.FAILED
    assert ch.clock.now == 100.0


def test_history_passes_every_state():
    session = interrogate(matched_session(), Channel("c", ChannelConfig.constant(connect=1, enumerate=2), SimClock()))
    assert [s for _, s in session.history] == [
        SessionState.SCANNING,
        SessionState.MATCHED,
        SessionState.CONNECTING,
        SessionState.INTERROGATING,
        SessionState.READY,
    ]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(list(SessionState)), max_size=12))
def test_state_machine_never_skips(moves):
    order = [SessionState.SCANNING, SessionState.MATCHED, SessionState.CONNECTING, SessionState.INTERROGATING, SessionState.READY]
    session = ClientSession("c")
    for t, target in enumerate(moves):
        was = session.state
        try:
            session.advance(target, float(t))
        except InvalidTransition:
            assert session.state is was
            assert was is SessionState.FAILED or (
                target is not SessionState.FAILED and (was not in order[:-1] or order[order.index(was) + 1] is not target)
            )
            continue
        if was is not SessionState.FAILED and target is not SessionState.FAILED:
            assert order.index(target) == order.index(was) + 1
    if session.state is SessionState.READY:
        assert SessionState.INTERROGATING in [s for _, s in session.history]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 200), st.integers(1, 16))
def test_round_trip_property(n_assets, capacity):
    snap = registry_of(n_assets).snapshot()
    frames = encode_beacons(snap, capacity)
    decoded = [Beacon.from_bytes(f.to_bytes()) for f in frames]
    assert decoded == frames
    assert decode_services(decoded) == set(snapshot_service_ids(snap))
    assert sum(len(f.services) for f in frames) == n_assets
