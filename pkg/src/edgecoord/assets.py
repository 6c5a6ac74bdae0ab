"""Asset descriptors, the assets registry and the context database.

Things (sensors) are identified by ``(owner, thing_name)`` and addressed by a
qualified id such as ``"edge/cam1"``. Jobs (intelligence tasks) are
identified by ``job_name``. Descriptors are immutable; the registry swaps
whole descriptors on every update so snapshots can be shared freely.
"""

from __future__ import annotations

import bisect
import json
import math
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import AssetFileError, InvalidDescriptor, UnknownJob, UnknownThing

__all__ = [
    "AssetRegistry",
    "ContextDatabase",
    "ContextRecord",
    "JobDescriptor",
    "Owner",
    "QualityValue",
    "RegistrySnapshot",
    "TaskType",
    "ThingDescriptor",
    "ThingType",
    "heartbeat",
    "latest_context",
    "load_assets",
    "merge_assets",
    "prune_stale",
    "qualified_id",
    "register_job",
    "register_thing",
    "save_assets",
]

CONTEXT_HISTORY = 100


class ThingType(str, Enum):
    CAMERA = "camera"
    MICROPHONE = "microphone"
    TEMPERATURE = "temperature"
    MOTION = "motion"
    LIGHT = "light"
    OTHER = "other"


class Owner(str, Enum):
    MOBILE = "mobile"
    EDGE = "edge"


class TaskType(str, Enum):
    OBJECT_RECOGNITION = "object-recognition"
    FACE_RECOGNITION = "face-recognition"
    OTHER = "other"


def qualified_id(owner, thing_name: str) -> str:
    return f"{Owner(owner).value}/{thing_name}"


@dataclass(frozen=True)
class QualityValue:
    name: str
    current: float
    accepted_min: float
    accepted_max: float

    def validate(self) -> None:
        if not self.name:
            raise InvalidDescriptor("quality value needs a name")
        for attr in ("current", "accepted_min", "accepted_max"):
            if not math.isfinite(getattr(self, attr)):
                raise InvalidDescriptor(f"quality value {self.name!r}: {attr} must be finite")
        if self.accepted_min > self.accepted_max:
            raise InvalidDescriptor(
                f"quality value {self.name!r}: accepted_min {self.accepted_min} > accepted_max {self.accepted_max}"
            )

    def passes(self) -> bool:
        return self.accepted_min <= self.current <= self.accepted_max

    def margin(self) -> float:
        """Distance from ``current`` to the nearer accepted bound (negative when outside)."""
        return min(self.current - self.accepted_min, self.accepted_max - self.current)


@dataclass(frozen=True)
class ThingDescriptor:
    thing_name: str
    thing_type: ThingType = ThingType.OTHER
    owner: Owner = Owner.EDGE
    tethered: bool = False
    quality_values: tuple[QualityValue, ...] = ()
    coordinates: tuple[float, float, float] | None = None
    last_seen: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "thing_type", ThingType(self.thing_type))
        object.__setattr__(self, "owner", Owner(self.owner))
        object.__setattr__(self, "quality_values", tuple(self.quality_values))
        if self.coordinates is not None:
            object.__setattr__(self, "coordinates", tuple(float(c) for c in self.coordinates))

    @property
    def qualified_id(self) -> str:
        return qualified_id(self.owner, self.thing_name)

    def validate(self) -> None:
        if not self.thing_name or "/" in self.thing_name:
            raise InvalidDescriptor(f"invalid thing name {self.thing_name!r}")
        seen = set()
        for qv in self.quality_values:
            qv.validate()
            if qv.name in seen:
                raise InvalidDescriptor(f"{self.qualified_id}: duplicate quality value {qv.name!r}")
            seen.add(qv.name)
        if self.coordinates is not None and len(self.coordinates) != 3:
            raise InvalidDescriptor(f"{self.qualified_id}: coordinates must be a 3-tuple")

    def quality(self, name: str) -> QualityValue:
        for qv in self.quality_values:
            if qv.name == name:
                return qv
        raise KeyError(name)


@dataclass(frozen=True)
class JobDescriptor:
    job_name: str
    task_type: TaskType = TaskType.OTHER
    alternative_sensors: tuple[str, ...] = ()
    periodic: bool = False
    period: float | None = None
    subscribers: tuple[str, ...] = ()
    last_updated_at: float | None = None
    model_resident: bool = False

    def __post_init__(self):
        object.__setattr__(self, "task_type", TaskType(self.task_type))
        object.__setattr__(self, "alternative_sensors", tuple(self.alternative_sensors))
        object.__setattr__(self, "subscribers", tuple(self.subscribers))

    def validate(self) -> None:
        if not self.job_name:
            raise InvalidDescriptor("job needs a name")
        if self.periodic and (self.period is None or not self.period > 0):
            raise InvalidDescriptor(f"job {self.job_name!r}: periodic jobs need a period > 0")
        if self.period is not None and not math.isfinite(self.period):
            raise InvalidDescriptor(f"job {self.job_name!r}: period must be finite")
        if len(set(self.subscribers)) != len(self.subscribers):
            raise InvalidDescriptor(f"job {self.job_name!r}: duplicate subscribers")

    @property
    def runnable(self) -> bool:
        return bool(self.alternative_sensors)


@dataclass(frozen=True)
class ContextRecord:
    job_name: str
    result: tuple[str, ...]
    produced_at: float
    input_size: float = 0.0

    def payload(self) -> bytes:
        return ",".join(self.result).encode("utf-8")


@dataclass(frozen=True)
class RegistrySnapshot:
    """Read-only view of the registry at a single revision."""

    things: Mapping[str, ThingDescriptor] = field(default_factory=dict)
    jobs: Mapping[str, JobDescriptor] = field(default_factory=dict)
    revision: int = 0

    def __post_init__(self):
        object.__setattr__(self, "things", MappingProxyType(dict(self.things)))
        object.__setattr__(self, "jobs", MappingProxyType(dict(self.jobs)))

    def __eq__(self, other):
        if not isinstance(other, RegistrySnapshot):
            return NotImplemented
        return (
            dict(self.things) == dict(other.things)
            and dict(self.jobs) == dict(other.jobs)
            and self.revision == other.revision
        )

    def __hash__(self):
        return hash((frozenset(self.things), frozenset(self.jobs), self.revision))

    def job(self, job_name: str) -> JobDescriptor:
        try:
            return self.jobs[job_name]
        except KeyError:
            raise UnknownJob(f"unknown job {job_name!r}") from None

    def resolve(self, reference: str) -> list[str]:
        """Qualified ids matching a sensor reference.

        A qualified reference (``"edge/cam1"``) matches at most one thing; a
        bare name (``"cam1"``) matches that name under every owner.
        """
        if "/" in reference:
            return [reference] if reference in self.things else []
        return sorted(q for q, t in self.things.items() if t.thing_name == reference)

    def asset_keys(self) -> list[tuple[str, str, str]]:
        """``(kind, owner, name)`` for every asset, things first, in a stable order."""
        keys = [("thing", t.owner.value, t.thing_name) for _, t in sorted(self.things.items())]
        keys += [("job", Owner.EDGE.value, name) for name in sorted(self.jobs)]
        return keys


class AssetRegistry:
    """Mutable assets database.

    Writers are serialized by a lock; readers work on :meth:`snapshot`. The
    revision grows by exactly one per successful mutation.
    """

    def __init__(self, things: Iterable[ThingDescriptor] = (), jobs: Iterable[JobDescriptor] = ()):
        self._things: dict[str, ThingDescriptor] = {}
        self._jobs: dict[str, JobDescriptor] = {}
        self._registered_at: dict[tuple[str, str], int] = {}
        self.revision = 0
        self._lock = threading.RLock()
        for thing in things:
            self.register_thing(thing)
        for job in jobs:
            self.register_job(job)

    @property
    def things(self) -> Mapping[str, ThingDescriptor]:
        return MappingProxyType(self._things)

    @property
    def jobs(self) -> Mapping[str, JobDescriptor]:
        return MappingProxyType(self._jobs)

    def _bump(self) -> int:
        self.revision += 1
        return self.revision

    def snapshot(self) -> RegistrySnapshot:
        with self._lock:
            return RegistrySnapshot(self._things, self._jobs, self.revision)

    def registered_at(self, kind: str, key: str) -> int | None:
        """Revision at which an asset was last (re-)registered, or None if absent."""
        return self._registered_at.get((kind, key))

    def thing(self, qid: str) -> ThingDescriptor:
        try:
            return self._things[qid]
        except KeyError:
            raise UnknownThing(f"unknown thing {qid!r}") from None

    def job(self, job_name: str) -> JobDescriptor:
        try:
            return self._jobs[job_name]
        except KeyError:
            raise UnknownJob(f"unknown job {job_name!r}") from None

    def register_thing(self, descriptor: ThingDescriptor) -> int:
        descriptor.validate()
        with self._lock:
            qid = descriptor.qualified_id
            old = self._things.get(qid)
            if old is not None and old.last_seen > descriptor.last_seen:
                descriptor = replace(descriptor, last_seen=old.last_seen)
            self._things[qid] = descriptor
            rev = self._bump()
            self._registered_at[("thing", qid)] = rev
            return rev

    def register_job(self, descriptor: JobDescriptor) -> int:
        descriptor.validate()
        with self._lock:
            self._jobs[descriptor.job_name] = descriptor
            rev = self._bump()
            self._registered_at[("job", descriptor.job_name)] = rev
            return rev

    def heartbeat(self, owner, thing_name: str, quality_updates: Mapping[str, float] | None, now: float) -> ThingDescriptor:
        with self._lock:
            qid = qualified_id(owner, thing_name)
            old = self.thing(qid)
            updates = dict(quality_updates or {})
            unknown = set(updates) - {qv.name for qv in old.quality_values}
            if unknown:
                raise InvalidDescriptor(f"{qid}: no quality value named {', '.join(sorted(unknown))}")
            values = tuple(
                replace(qv, current=float(updates[qv.name])) if qv.name in updates else qv
                for qv in old.quality_values
            )
            new = replace(old, quality_values=values, last_seen=max(old.last_seen, float(now)))
            new.validate()
            self._things[qid] = new
            self._bump()
            return new

    def prune_stale(self, now: float, liveness_window: float) -> list[str]:
        if not liveness_window > 0:
            raise ValueError("liveness_window must be > 0")
        with self._lock:
            removed = sorted(q for q, t in self._things.items() if now - t.last_seen > liveness_window)
            for qid in removed:
                del self._things[qid]
                self._registered_at.pop(("thing", qid), None)
            if removed:
                self._bump()
            return removed

    def update_job(self, job_name: str, **changes) -> JobDescriptor:
        """Edit bookkeeping fields of a job without re-registering it."""
        with self._lock:
            new = replace(self.job(job_name), **changes)
            new.validate()
            self._jobs[job_name] = new
            self._bump()
            return new


def register_thing(registry: AssetRegistry, descriptor: ThingDescriptor) -> int:
    return registry.register_thing(descriptor)


def register_job(registry: AssetRegistry, descriptor: JobDescriptor) -> int:
    return registry.register_job(descriptor)


def heartbeat(registry: AssetRegistry, owner, thing_name: str, quality_updates=None, now: float = 0.0) -> ThingDescriptor:
    return registry.heartbeat(owner, thing_name, quality_updates, now)


def prune_stale(registry: AssetRegistry, now: float, liveness_window: float) -> list[str]:
    return registry.prune_stale(now, liveness_window)


def _as_snapshot(obj) -> RegistrySnapshot:
    return obj.snapshot() if isinstance(obj, AssetRegistry) else obj


def merge_assets(edge_snapshot, client_snapshot) -> RegistrySnapshot:
    """Union of two snapshots.

    Things colliding on qualified id keep the most recently seen descriptor
    (edge wins ties); jobs colliding on name keep the edge copy.
    """
    edge = _as_snapshot(edge_snapshot)
    client = _as_snapshot(client_snapshot)
    things = dict(client.things)
    for qid, thing in edge.things.items():
        other = things.get(qid)
        if other is None or thing.last_seen >= other.last_seen:
            things[qid] = thing
    jobs = {**client.jobs, **edge.jobs}
    return RegistrySnapshot(things, jobs, max(edge.revision, client.revision))


class ContextDatabase:
    """Per-job history of task results, newest ``history`` records kept."""

    def __init__(self, history: int = CONTEXT_HISTORY):
        if history < 1:
            raise ValueError("history must be >= 1")
        self.history = history
        self._records: dict[str, list[ContextRecord]] = {}
        self._lock = threading.Lock()

    def append(self, record: ContextRecord) -> None:
        with self._lock:
            records = self._records.setdefault(record.job_name, [])
            times = [r.produced_at for r in records]
            pos = bisect.bisect_left(times, record.produced_at)
            if pos < len(times) and times[pos] == record.produced_at:
                raise ValueError(
                    f"job {record.job_name!r} already has a record produced at {record.produced_at}"
                )
            records.insert(pos, record)
            del records[: max(len(records) - self.history, 0)]

    def latest(self, job_name: str) -> ContextRecord | None:
        records = self._records.get(job_name)
        return records[-1] if records else None

    def records(self, job_name: str) -> tuple[ContextRecord, ...]:
        return tuple(self._records.get(job_name, ()))

    def __len__(self) -> int:
        return sum(len(r) for r in self._records.values())


def latest_context(context_db: ContextDatabase, job_name: str) -> ContextRecord | None:
    return context_db.latest(job_name)


# -- asset documents on disk -------------------------------------------------

def thing_to_document(thing: ThingDescriptor) -> dict:
    attributes = {
        "owner": thing.owner.value,
        "tethered": thing.tethered,
        "qualityValues": [
            {
                "name": qv.name,
                "current": qv.current,
                "acceptedMin": qv.accepted_min,
                "acceptedMax": qv.accepted_max,
            }
            for qv in thing.quality_values
        ],
        "lastSeen": thing.last_seen,
    }
    if thing.coordinates is not None:
        attributes["coordinates"] = list(thing.coordinates)
    return {"thingName": thing.thing_name, "thingTypeName": thing.thing_type.value, "attributes": attributes}


def job_to_document(job: JobDescriptor) -> dict:
    return {
        "jobName": job.job_name,
        "taskType": job.task_type.value,
        "attributes": {
            "alternativeSensors": list(job.alternative_sensors),
            "periodic": job.periodic,
            "period": job.period,
            "subscribers": list(job.subscribers),
            "lastUpdatedAt": job.last_updated_at,
            "modelResident": job.model_resident,
        },
    }


def _require(doc: Mapping, key: str, kind):
    if key not in doc:
        raise ValueError(f"missing field {key!r}")
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise ValueError(f"field {key!r} must be {kind.__name__}")
    return value


def _optional_number(doc: Mapping, key: str) -> float | None:
    if doc.get(key) is None:
        return None
    return _require(doc, key, float)


def thing_from_document(doc: Mapping) -> ThingDescriptor:
    if not isinstance(doc, dict):
        raise ValueError("thing document must be a JSON object")
    attrs = doc.get("attributes", {})
    if not isinstance(attrs, dict):
        raise ValueError("field 'attributes' must be an object")
    qvs = []
    for i, raw in enumerate(attrs.get("qualityValues", [])):
        if not isinstance(raw, dict):
            raise ValueError(f"qualityValues[{i}] must be an object")
        qvs.append(
            QualityValue(
                _require(raw, "name", str),
                _require(raw, "current", float),
                _require(raw, "acceptedMin", float),
                _require(raw, "acceptedMax", float),
            )
        )
    coords = attrs.get("coordinates")
    if coords is not None and (
        not isinstance(coords, list) or len(coords) != 3 or not all(isinstance(c, (int, float)) for c in coords)
    ):
        raise ValueError("field 'coordinates' must be a list of 3 numbers")
    tethered = attrs.get("tethered", False)
    if not isinstance(tethered, bool):
        raise ValueError("field 'tethered' must be a boolean")
    thing = ThingDescriptor(
        thing_name=_require(doc, "thingName", str),
        thing_type=ThingType(_require(doc, "thingTypeName", str)),
        owner=Owner(attrs.get("owner", Owner.EDGE.value)),
        tethered=tethered,
        quality_values=tuple(qvs),
        coordinates=tuple(coords) if coords is not None else None,
        last_seen=_optional_number(attrs, "lastSeen") or 0.0,
    )
    thing.validate()
    return thing


def job_from_document(doc: Mapping) -> JobDescriptor:
    if not isinstance(doc, dict):
        raise ValueError("job document must be a JSON object")
    attrs = doc.get("attributes", {})
    if not isinstance(attrs, dict):
        raise ValueError("field 'attributes' must be an object")
    sensors = attrs.get("alternativeSensors", [])
    subscribers = attrs.get("subscribers", [])
    for key, seq in (("alternativeSensors", sensors), ("subscribers", subscribers)):
        if not isinstance(seq, list) or not all(isinstance(s, str) for s in seq):
            raise ValueError(f"field {key!r} must be a list of strings")
    for key in ("periodic", "modelResident"):
        if not isinstance(attrs.get(key, False), bool):
            raise ValueError(f"field {key!r} must be a boolean")
    job = JobDescriptor(
        job_name=_require(doc, "jobName", str),
        task_type=TaskType(doc.get("taskType", TaskType.OTHER.value)),
        alternative_sensors=tuple(sensors),
        periodic=attrs.get("periodic", False),
        period=_optional_number(attrs, "period"),
        subscribers=tuple(subscribers),
        last_updated_at=_optional_number(attrs, "lastUpdatedAt"),
        model_resident=attrs.get("modelResident", False),
    )
    job.validate()
    return job


def load_assets(directory) -> AssetRegistry:
    """Build a registry from ``things/*.json`` and ``jobs/*.json`` under ``directory``.

    Any malformed document raises :class:`AssetFileError` naming the file.
    """
    root = Path(directory)
    if not root.is_dir():
        raise AssetFileError(root, "not a directory")
    registry = AssetRegistry()
    seen_things: dict[str, Path] = {}
    for sub, parse in (("things", thing_from_document), ("jobs", job_from_document)):
        for path in sorted((root / sub).glob("*.json")):
            try:
                with open(path, encoding="utf-8") as fh:
                    doc = json.load(fh)
                asset = parse(doc)
            except (ValueError, TypeError, KeyError) as exc:
                raise AssetFileError(path, str(exc)) from exc
            if isinstance(asset, ThingDescriptor):
                if asset.qualified_id in seen_things:
                    raise AssetFileError(path, f"duplicate thing {asset.qualified_id} (also in {seen_things[asset.qualified_id]})")
                seen_things[asset.qualified_id] = path
                registry.register_thing(asset)
            else:
                if asset.job_name in registry.jobs:
                    raise AssetFileError(path, f"duplicate job {asset.job_name!r}")
                registry.register_job(asset)
    return registry


def save_assets(registry, directory) -> list[Path]:
    snap = _as_snapshot(registry)
    root = Path(directory)
    written = []
    for sub in ("things", "jobs"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for qid, thing in sorted(snap.things.items()):
        path = root / "things" / f"{thing.owner.value}__{thing.thing_name}.json"
        path.write_text(json.dumps(thing_to_document(thing), indent=2) + "\n", encoding="utf-8")
        written.append(path)
    for name, job in sorted(snap.jobs.items()):
        path = root / "jobs" / f"{name}.json"
        path.write_text(json.dumps(job_to_document(job), indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written
