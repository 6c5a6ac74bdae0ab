"""Plan execution, the context database writer, periodic jobs and fan-out.

:class:`EdgeServer` owns the registry, context database, task modules and
the three simulated links of the edge node:

* ``client`` (BLE-like): connect, enumerate, request, response_per_kb
* ``sensor`` (Wi-Fi-like): sensor_capture
* ``cloud``: cloud_round_trip

Work that takes simulated time is written as generator processes
(``*_steps``); the plain functions run one process to completion.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .assets import (
    AssetRegistry,
    ContextDatabase,
    ContextRecord,
    Owner,
    RegistrySnapshot,
    TaskType,
    merge_assets,
)
from .discovery import (
    ClientSession,
    SessionState,
    discover_steps,
    encode_beacons,
    interrogate_steps,
    service_id_of,
)
from .errors import (
    EdgeCoordError,
    InvalidTransition,
    ModuleMissing,
    SensorUnavailable,
    StalePlan,
    UnknownJob,
)
from .planner import (
    ExecutionPlan,
    ExecutorKind,
    LatencyProfile,
    ProfileBook,
    TaskRequest,
    plan,
    predict_latency,
)
from .simnet import Channel, ChannelConfig, Event, SimClock

__all__ = [
    "EdgeServer",
    "Execution",
    "Notification",
    "PeriodicScheduler",
    "ReadResult",
    "Subscription",
    "TaskModule",
    "decode_notification",
    "encode_notification",
    "execute_plan",
    "record_observation",
    "serve_read",
    "subscribe",
    "tick_periodic",
]

DEFAULT_LABELS = {
    TaskType.OBJECT_RECOGNITION: ("person", "chair", "laptop", "cup", "book", "bottle", "door", "plant"),
    TaskType.FACE_RECOGNITION: ("alice", "bob", "carol", "dave", "erin", "frank", "unknown"),
    TaskType.OTHER: ("event",),
}


@dataclass
class TaskModule:
    """Latency-modeled stand-in for an intelligence task's model."""

    task_type: TaskType
    latency_profile: LatencyProfile
    model_resident: bool = False
    model_load_ms: float = 0.0
    default_input_kb: float = 8.0
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.task_type = TaskType(self.task_type)
        if not self.labels:
            self.labels = DEFAULT_LABELS[self.task_type]
        if self.model_load_ms < 0 or not math.isfinite(self.model_load_ms):
            raise ValueError("model_load_ms must be finite and >= 0")

    def inference_ms(self, input_size: float, face_count: int = 1) -> float:
        return predict_latency(self.latency_profile, input_size, face_count)

    def duration_ms(self, input_size: float, face_count: int = 1, cold: bool = False) -> float:
        return self.inference_ms(input_size, face_count) + (self.model_load_ms if cold else 0.0)

    def result_for(self, sensor_id: str, input_size: float, seed: int) -> tuple[str, ...]:
        digest = hashlib.sha256(f"{seed}|{sensor_id}|{input_size!r}|{self.task_type.value}".encode()).digest()
        count = 1 + digest[0] % min(3, len(self.labels))
        picked = []
        for b in digest[1:]:
            label = self.labels[b % len(self.labels)]
            if label not in picked:
                picked.append(label)
            if len(picked) == count:
                break
        return tuple(picked)


@dataclass
class Subscription:
    client_id: str
    job_name: str
    created_at: float
    delivered_count: int = 0
    active: bool = True
    notifications: list = field(default_factory=list)


@dataclass(frozen=True)
class Notification:
    client_id: str
    job_name: str
    produced_at: float
    delivered_at: float
    result: tuple[str, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


_NOTE_HEAD = struct.Struct(">BH")
_NOTE_TIME = struct.Struct(">dI")


def encode_notification(note: Notification) -> bytes:
    """Wire layout: u8 status (0 result, 1 failure), u16 name length, name,
    f64 produced_at, u32 payload length, payload. The payload is the
    comma-joined labels, or the error text for a failure notice."""
    name = note.job_name.encode("utf-8")
    payload = (",".join(note.result) if note.ok else note.error).encode("utf-8")
    return (
        _NOTE_HEAD.pack(0 if note.ok else 1, len(name))
        + name
        + _NOTE_TIME.pack(note.produced_at, len(payload))
        + payload
    )


def decode_notification(data: bytes, client_id: str = "", delivered_at: float = math.nan) -> Notification:
    status, name_len = _NOTE_HEAD.unpack_from(data)
    pos = _NOTE_HEAD.size
    name = data[pos:pos + name_len].decode("utf-8")
    pos += name_len
    produced_at, payload_len = _NOTE_TIME.unpack_from(data, pos)
    pos += _NOTE_TIME.size
    payload = data[pos:pos + payload_len]
    if len(payload) != payload_len or pos + payload_len != len(data):
        raise ValueError("truncated or oversized notification")
    text = payload.decode("utf-8")
    if status == 0:
        return Notification(client_id, name, produced_at, delivered_at, tuple(text.split(",")) if text else ())
    if status == 1:
        return Notification(client_id, name, produced_at, delivered_at, (), text)
    raise ValueError(f"unknown notification status {status}")


@dataclass(frozen=True)
class Execution:
    """Timeline of one executed plan."""

    record: ContextRecord
    plan: ExecutionPlan
    started: float
    captured: float
    finished: float

    @property
    def capture_ms(self) -> float:
        return self.captured - self.started

    @property
    def inference_ms(self) -> float:
        return self.finished - self.captured


class ReadResult(NamedTuple):
    result: ContextRecord | None
    read_time_ms: float
    plan: ExecutionPlan | None = None
    execution: Execution | None = None
    error: str | None = None
    milestones: Mapping[str, float] = {}


class EdgeServer:
    def __init__(
        self,
        registry: AssetRegistry | None = None,
        modules: Mapping | None = None,
        channel_config: ChannelConfig | None = None,
        clock: SimClock | None = None,
        seed: int = 0,
        profiles: ProfileBook | None = None,
        context_db: ContextDatabase | None = None,
        internet_available: bool = True,
        cloud_profiles: Mapping | None = None,
        beacon_capacity: int = 4,
    ):
        self.registry = registry if registry is not None else AssetRegistry()
        self.modules = {TaskType(k): m for k, m in (modules or {}).items()}
        self.config = channel_config or ChannelConfig.zero()
        self.clock = clock or SimClock()
        self.seed = seed
        self.profiles = profiles if profiles is not None else ProfileBook()
        self.context_db = context_db if context_db is not None else ContextDatabase()
        self.internet_available = internet_available
        self.cloud_profiles = dict(cloud_profiles or {})
        self.beacon_capacity = beacon_capacity
        self.client_channel = Channel("client", self.config, self.clock, seed)
        self.sensor_channel = Channel("sensor", self.config, self.clock, seed)
        self.cloud_channel = Channel("cloud", self.config, self.clock, seed)
        self.subscriptions: dict[tuple[str, str], Subscription] = {}
        self.executions = 0

    # -- planning inputs -----------------------------------------------------

    def snapshot(self) -> RegistrySnapshot:
        return self.registry.snapshot()

    def beacons(self):
        return encode_beacons(self.snapshot(), self.beacon_capacity)

    def planning_profiles(self) -> ProfileBook:
        """Module-derived profiles overlaid with measured ones.

        Preloaded runs cost the module's inference profile, cold runs add the
        model load time, and the cloud costs its round trip as a constant
        unless a cloud profile was configured.
        """
        book = ProfileBook()
        for task_type, module in self.modules.items():
            book[task_type, ExecutorKind.PRELOADED] = module.latency_profile
            book[task_type, ExecutorKind.COLD] = module.latency_profile.shifted(module.model_load_ms)
            book[task_type, ExecutorKind.CLOUD] = self.cloud_profiles.get(
                task_type, LatencyProfile(task_type, self.config["cloud_round_trip"].base_ms)
            )
        for key, profile in self.profiles.items():
            book[key] = profile
        return book

    def plan(self, request: TaskRequest, client_snapshot: RegistrySnapshot | None = None, allow_cached: bool = True) -> ExecutionPlan:
        snapshot = self.snapshot()
        if client_snapshot is not None:
            merged = merge_assets(snapshot, client_snapshot)
            snapshot = RegistrySnapshot(merged.things, merged.jobs, snapshot.revision)
        return plan(request, snapshot, self.context_db, self.planning_profiles(), allow_cached=allow_cached)

    # -- execution -----------------------------------------------------------

    def _check_plan(self, plan_: ExecutionPlan, client_snapshot: RegistrySnapshot | None):
        try:
            job = self.registry.job(plan_.job_name)
        except UnknownJob:
            raise StalePlan(f"job {plan_.job_name!r} no longer registered") from None
        registered = self.registry.registered_at("job", job.job_name)
        if plan_.registry_revision > self.registry.revision or registered > plan_.registry_revision:
            raise StalePlan(f"plan for {job.job_name!r} predates the job's current registration")
        thing = None
        if plan_.executor is not ExecutorKind.CACHED:
            thing = self.registry.things.get(plan_.chosen_sensor)
            if thing is None and client_snapshot is not None:
                thing = client_snapshot.things.get(plan_.chosen_sensor)
            if thing is None:
                raise SensorUnavailable(f"sensor {plan_.chosen_sensor!r} is gone")
        return job, thing

    def execute_steps(self, plan_: ExecutionPlan, client_snapshot: RegistrySnapshot | None = None):
        """Process: capture input, run the executor, store the record."""
        clock = self.clock
        job, thing = self._check_plan(plan_, client_snapshot)
        started = clock.now
        if plan_.executor is ExecutorKind.CACHED:
            record = self.context_db.latest(job.job_name)
            if record is None:
                raise StalePlan(f"no cached result for {job.job_name!r}")
            return Execution(record, plan_, started, started, started)

        module = self.modules.get(job.task_type)
        if module is None and plan_.executor is not ExecutorKind.CLOUD:
            raise ModuleMissing(f"no module for task type {job.task_type.value!r}")

        link = self.client_channel if thing.owner is Owner.MOBILE else self.sensor_channel
        yield link.transfer("sensor_capture", plan_.input_size) - clock.now
        captured = clock.now
        clock.log("edge", f"captured:{plan_.chosen_sensor}", plan_.input_size)

        if plan_.executor is ExecutorKind.CLOUD:
            yield self.cloud_channel.transfer("cloud_round_trip", plan_.input_size) - clock.now
        else:
            cold = plan_.executor is ExecutorKind.COLD
            yield module.duration_ms(plan_.input_size, plan_.face_count, cold=cold)
        finished = clock.now

        labels = (module or TaskModule(job.task_type, LatencyProfile())).result_for(
            plan_.chosen_sensor, plan_.input_size, self.seed
        )
        record = ContextRecord(job.job_name, labels, finished, plan_.input_size)
        latest = self.context_db.latest(job.job_name)
        if latest is not None and latest.produced_at == finished:
            record = latest  # a concurrent run of the same job finished in the same instant
        else:
            self.context_db.append(record)
            self.registry.update_job(job.job_name, last_updated_at=finished)
        self.executions += 1
        clock.log("edge", f"executed:{job.job_name}:{plan_.executor.value}", plan_.input_size)
        return Execution(record, plan_, started, captured, finished)

    def execute_plan(self, plan_: ExecutionPlan, now: float | None = None) -> ContextRecord:
        if now is not None and now > self.clock.now:
            self.clock.advance_to(now)
        proc = self.clock.spawn(self.execute_steps(plan_), f"execute:{plan_.job_name}")
        return self.clock.run_until_complete(proc).record

    # -- client interaction --------------------------------------------------

    def serve_read_steps(self, session: ClientSession, request: TaskRequest, client_snapshot: RegistrySnapshot | None = None):
        """Process: request leg, plan, execute, response leg."""
        if session.state is not SessionState.READY:
            raise InvalidTransition(f"session {session.client_id!r} is {session.state.value}, not Ready")
        clock = self.clock
        channel = self.client_channel
        yield channel.transfer("request") - clock.now
        received = clock.now
        milestones = {"request": received - session.t_scan_start}
        plan_ = execution = record = error = None
        try:
            plan_ = self.plan(_at(request, clock.now), client_snapshot)
            execution = yield from self.execute_steps(plan_, client_snapshot)
            record = execution.record
            payload = len(record.payload()) / 1024.0
        except EdgeCoordError as exc:
            error = f"{type(exc).__name__}: {exc}"
            payload = len(error.encode()) / 1024.0
        if execution is not None:
            milestones["capture"] = execution.captured - session.t_scan_start
            milestones["inference"] = execution.finished - session.t_scan_start
        yield channel.transfer("response_per_kb", payload) - clock.now
        read_time = clock.now - session.t_scan_start
        milestones["read"] = read_time
        clock.log(session.client_id, "result" if error is None else "error", payload)
        return ReadResult(record, read_time, plan_, execution, error, milestones)

    def serve_read(self, session: ClientSession, request: TaskRequest, client_snapshot: RegistrySnapshot | None = None) -> ReadResult:
        proc = self.clock.spawn(self.serve_read_steps(session, request, client_snapshot), f"read:{session.client_id}")
        return self.clock.run_until_complete(proc)

    def client_read_steps(self, client_id: str, request: TaskRequest, wanted=None, client_snapshot=None, timeout_ms=None):
        """Process: a fresh client scans, interrogates and reads one result."""
        session = ClientSession(client_id, t_scan_start=self.clock.now)
        self.clock.log(client_id, "scan_start")
        if wanted is None:
            wanted = {service_id_of("job", Owner.EDGE.value, request.job_name)}
        yield from discover_steps(session, self.beacons(), wanted, self.client_channel)
        yield from interrogate_steps(session, self.client_channel, timeout_ms)
        result = yield from self.serve_read_steps(session, request, client_snapshot)
        return session, result

    # -- subscriptions ---------------------------------------------------------

    def subscribe(self, job_name: str, client_id: str, now: float | None = None) -> Subscription:
        now = self.clock.now if now is None else now
        job = self.registry.job(job_name)
        key = (job_name, client_id)
        sub = self.subscriptions.get(key)
        if sub is None:
            sub = self.subscriptions[key] = Subscription(client_id, job_name, now)
        if client_id not in job.subscribers:
            self.registry.update_job(job_name, subscribers=job.subscribers + (client_id,))
        return sub

    def unsubscribe(self, job_name: str, client_id: str) -> None:
        sub = self.subscriptions.get((job_name, client_id))
        if sub is not None:
            sub.active = False
        job = self.registry.job(job_name)
        if client_id in job.subscribers:
            self.registry.update_job(job_name, subscribers=tuple(c for c in job.subscribers if c != client_id))

    def active_subscriptions(self, job_name: str) -> list[Subscription]:
        return sorted(
            (s for (j, _), s in self.subscriptions.items() if j == job_name and s.active),
            key=lambda s: s.client_id,
        )


def _at(request: TaskRequest, now: float) -> TaskRequest:
    return TaskRequest(
        request.job_name,
        request.requester,
        request.max_result_age,
        request.input_size,
        request.face_count_hint,
        request.internet_available,
        now,
    )


class PeriodicScheduler:
    """Runs periodic jobs and fans their results out to subscribers.

    Each due job executes at most once per tick and its next due time moves
    forward by exactly one period, so a late tick never triggers a burst.
    """

    def __init__(self, server: EdgeServer):
        self.server = server
        self.next_due: dict[str, float] = {}
        self.executions = 0
        self.failures = 0
        self._attached = False
        self._until: float | None = None
        self._armed: set[str] = set()

    def add(self, job_name: str, start: float | None = None) -> float:
        job = self.server.registry.job(job_name)
        if not job.periodic:
            raise ValueError(f"job {job_name!r} is not periodic")
        if job_name not in self.next_due:
            start = self.server.clock.now if start is None else start
            self.next_due[job_name] = start + job.period
            self._arm(job_name)
        return self.next_due[job_name]

    def subscribe(self, job_name: str, client_id: str, now: float | None = None) -> Subscription:
        sub = self.server.subscribe(job_name, client_id, now)
        if self.server.registry.job(job_name).periodic:
            self.add(job_name, sub.created_at)
        return sub

    def due(self, now: float) -> list[str]:
        return sorted(j for j, t in self.next_due.items() if t <= now)

    def _job_steps(self, job_name: str):
        server = self.server
        clock = server.clock
        subs = server.active_subscriptions(job_name)
        record = error = None
        try:
            job = server.registry.job(job_name)
            module = server.modules.get(job.task_type)
            size = module.default_input_kb if module is not None else 1.0
            request = TaskRequest(job_name, "scheduler", 0.0, size, None, server.internet_available, clock.now)
            execution = yield from server.execute_steps(server.plan(request, allow_cached=False))
            record = execution.record
        except EdgeCoordError as exc:
            error = f"{type(exc).__name__}: {exc}"
            self.failures += 1
        produced_at = record.produced_at if record is not None else clock.now
        payload_kb = len((record.payload() if record is not None else error.encode())) / 1024.0
        notes = []
        last_arrival = clock.now
        for sub in subs:
            arrival = server.client_channel.transfer("response_per_kb", payload_kb)
            note = Notification(
                sub.client_id, job_name, produced_at, arrival, record.result if record is not None else (), error
            )
            sub.notifications.append(note)
            sub.delivered_count += 1
            notes.append(note)
            last_arrival = max(last_arrival, arrival)
        yield last_arrival - clock.now
        return notes

    def _start_due(self, now: float):
        procs = []
        for job_name in self.due(now):
            job = self.server.registry.jobs.get(job_name)
            if job is None or not job.periodic:
                self.next_due.pop(job_name, None)
                continue
            self.next_due[job_name] += job.period
            self.executions += 1
            procs.append(self.server.clock.spawn(self._job_steps(job_name), f"periodic:{job_name}"))
        return procs

    def tick(self, now: float | None = None) -> list[Notification]:
        """Run every job due at ``now`` once and return the delivered notifications."""
        clock = self.server.clock
        if now is not None and now > clock.now:
            clock.advance_to(now)
        procs = self._start_due(clock.now)
        notes = []
        for proc in procs:
            notes.extend(clock.run_until_complete(proc))
        return sorted(notes, key=lambda n: (n.delivered_at, n.job_name, n.client_id))

    # -- autonomous mode -----------------------------------------------------

    def _arm(self, job_name: str) -> None:
        if not self._attached:
            return
        due = self.next_due.get(job_name)
        if due is None or job_name in self._armed:
            return
        if self._until is not None and due > self._until:
            return
        self._armed.add(job_name)
        self.server.clock.schedule_at(due, Event("scheduler", f"tick:{job_name}", action=lambda: self._fire(job_name)))

    def _fire(self, job_name: str) -> None:
        self._armed.discard(job_name)
        clock = self.server.clock
        if self.next_due.get(job_name, math.inf) <= clock.now:
            job = self.server.registry.jobs.get(job_name)
            if job is None or not job.periodic:
                self.next_due.pop(job_name, None)
                return
            self.next_due[job_name] += job.period
            self.executions += 1
            clock.spawn(self._job_steps(job_name), f"periodic:{job_name}")
        self._arm(job_name)

    def attach(self, until: float | None = None) -> None:
        """Drive ticks from the clock; without ``until`` they never stop."""
        self._attached = True
        self._until = until
        for job_name in list(self.next_due):
            self._arm(job_name)

    def run(self, until: float) -> list[Notification]:
        """Tick every due time up to ``until`` and let in-flight work finish."""
        self.attach(until)
        self.server.clock.run_until_idle()
        return sorted(
            (n for s in self.server.subscriptions.values() for n in s.notifications),
            key=lambda n: (n.delivered_at, n.job_name, n.client_id),
        )


def execute_plan(plan_: ExecutionPlan, server: EdgeServer, now: float | None = None) -> ContextRecord:
    return server.execute_plan(plan_, now)


def subscribe(server: EdgeServer, job_name: str, client_id: str, now: float | None = None) -> Subscription:
    return server.subscribe(job_name, client_id, now)


def tick_periodic(scheduler: PeriodicScheduler, now: float | None = None) -> list[Notification]:
    return scheduler.tick(now)


def serve_read(server: EdgeServer, session: ClientSession, request: TaskRequest, client_snapshot=None) -> ReadResult:
    return server.serve_read(session, request, client_snapshot)


def record_observation(profiles: ProfileBook, task_type, input_size: float, face_count: int, duration: float, kind=ExecutorKind.PRELOADED) -> ProfileBook:
    profiles.record(task_type, kind, input_size, face_count, duration)
    return profiles
