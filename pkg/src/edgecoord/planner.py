"""Quality-aware sensor selection and executor planning.

The default policy is lexicographic:

1. a cached result young enough for the requester wins outright;
2. otherwise a sensor is chosen among the job's alternatives that pass every
   quality check, preferring tethered sensors, then the widest quality
   margin, then the smallest qualified id;
3. a preloaded model is used when the job's model is resident, else the
   cheaper of the cloud service (if the internet is reachable) and a cold
   local model load, ties going to the lexicographically smaller executor
   name.

Subclass :class:`LexicographicPolicy` to change the ordering.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .assets import ContextDatabase, JobDescriptor, RegistrySnapshot, TaskType, ThingDescriptor
from .errors import InsufficientData, NoExecutor, NoViableSensor, UnfittedProfile

__all__ = [
    "ExecutionPlan",
    "ExecutorKind",
    "LatencyProfile",
    "LexicographicPolicy",
    "ProfileBook",
    "TaskRequest",
    "candidate_sensors",
    "check_quality",
    "fit_profile",
    "plan",
    "predict_latency",
    "select_sensor",
]


class ExecutorKind(str, Enum):
    CACHED = "CachedResult"
    PRELOADED = "PreloadedLocalModel"
    COLD = "ColdLocalModel"
    CLOUD = "CloudService"


@dataclass(frozen=True)
class TaskRequest:
    job_name: str
    requester: str
    max_result_age: float
    input_size: float
    face_count_hint: int | None = None
    internet_available: bool = True
    now: float = 0.0

    def __post_init__(self):
        if self.max_result_age < 0:
            raise ValueError("max_result_age must be >= 0")
        if not self.input_size > 0:
            raise ValueError("input_size must be > 0")
        if self.face_count_hint is not None and self.face_count_hint < 0:
            raise ValueError("face_count_hint must be >= 0")

    @property
    def face_count(self) -> int:
        return 1 if self.face_count_hint is None else self.face_count_hint


@dataclass(frozen=True)
class ExecutionPlan:
    job_name: str
    chosen_sensor: str | None
    executor: ExecutorKind
    predicted_latency: float
    registry_revision: int
    input_size: float = 0.0
    face_count: int = 1


@dataclass(frozen=True)
class LatencyProfile:
    """Linear execution-time model.

    ``observation_count`` is None for profiles taken from configuration;
    fitted profiles need at least two observations to be usable.
    """

    task_type: TaskType = TaskType.OTHER
    intercept_ms: float = 0.0
    slope_ms_per_kb: float = 0.0
    per_face_ms: float = 0.0
    observation_count: int | None = None

    @property
    def fitted(self) -> bool:
        return self.observation_count is None or self.observation_count >= 2

    def shifted(self, extra_ms: float) -> LatencyProfile:
        return LatencyProfile(
            self.task_type, self.intercept_ms + extra_ms, self.slope_ms_per_kb, self.per_face_ms, self.observation_count
        )


def predict_latency(profile: LatencyProfile, input_size_kb: float, face_count: int = 1) -> float:
    if profile is None or not profile.fitted:
        raise UnfittedProfile("profile has fewer than two observations")
    extra_faces = max(face_count - 1, 0)
    value = profile.intercept_ms + profile.slope_ms_per_kb * input_size_kb + profile.per_face_ms * extra_faces
    if not math.isfinite(value):
        raise UnfittedProfile(f"non-finite prediction {value!r}")
    return max(value, 0.0)


def fit_profile(observations, per_face_ms: float | None = None, task_type=TaskType.OTHER) -> LatencyProfile:
    """Ordinary least squares of duration on input size.

    ``observations`` are ``(input_size_kb, face_count, duration_ms)``. When
    ``per_face_ms`` is None and the face counts vary enough, the per-face
    cost is estimated jointly; otherwise the given (or zero) per-face cost is
    removed before the two-parameter fit.
    """
    obs = np.asarray(list(observations), dtype=float).reshape(-1, 3)
    if len(obs) < 2 or len(np.unique(obs[:, 0])) < 2:
        raise InsufficientData("need at least two observations with distinct input sizes")
    size, faces, duration = obs.T
    extra = np.maximum(faces - 1, 0)
    ones = np.ones_like(size)
    if per_face_ms is None:
        design = np.column_stack([ones, size, extra])
        if np.ptp(extra) > 0 and np.linalg.matrix_rank(design) == 3:
            (intercept, slope, per_face), *_ = np.linalg.lstsq(design, duration, rcond=None)
            return LatencyProfile(TaskType(task_type), float(intercept), float(slope), float(per_face), len(obs))
        per_face_ms = 0.0
    design = np.column_stack([ones, size])
    (intercept, slope), *_ = np.linalg.lstsq(design, duration - per_face_ms * extra, rcond=None)
    return LatencyProfile(TaskType(task_type), float(intercept), float(slope), float(per_face_ms), len(obs))


class ProfileBook(Mapping):
    """Latency profiles keyed by ``(task_type, executor)``, plus raw observations."""

    def __init__(self, profiles=None):
        self._profiles: dict = {}
        self.observations: dict = {}
        for key, profile in (profiles or {}).items():
            self[key] = profile

    @staticmethod
    def _key(key):
        task_type, kind = key
        return TaskType(task_type), ExecutorKind(kind)

    def __getitem__(self, key):
        return self._profiles[self._key(key)]

    def __setitem__(self, key, profile: LatencyProfile):
        self._profiles[self._key(key)] = profile

    def __iter__(self):
        return iter(self._profiles)

    def __len__(self):
        return len(self._profiles)

    def record(self, task_type, kind, input_size: float, face_count: int, duration: float) -> LatencyProfile | None:
        if duration < 0:
            raise ValueError("duration must be >= 0")
        key = self._key((task_type, kind))
        obs = self.observations.setdefault(key, [])
        obs.append((float(input_size), int(face_count), float(duration)))
        previous = self._profiles.get(key)
        try:
            profile = fit_profile(obs, task_type=key[0])
        except InsufficientData:
            return None
        if np.ptp([o[1] for o in obs]) == 0 and previous is not None:
            profile = fit_profile(obs, per_face_ms=previous.per_face_ms, task_type=key[0])
        self._profiles[key] = profile
        return profile


def check_quality(thing: ThingDescriptor) -> bool:
    return all(qv.passes() for qv in thing.quality_values)


def quality_margin(thing: ThingDescriptor) -> float:
    if not thing.quality_values:
        return math.inf
    return min(qv.margin() for qv in thing.quality_values)


class LexicographicPolicy:
    """Orderings used by :func:`select_sensor` and :func:`plan`."""

    def sensor_key(self, thing: ThingDescriptor):
        return (not thing.tethered, -quality_margin(thing), thing.qualified_id)

    def executor_key(self, kind: ExecutorKind, predicted: float):
        return (predicted, kind.value)


DEFAULT_POLICY = LexicographicPolicy()


def candidate_sensors(job: JobDescriptor, snapshot: RegistrySnapshot) -> list[str]:
    """Qualified ids of the job's listed sensors present in the snapshot, in listing order."""
    seen: dict[str, None] = {}
    for ref in job.alternative_sensors:
        for qid in snapshot.resolve(ref):
            seen.setdefault(qid)
    return list(seen)


def select_sensor(job, snapshot: RegistrySnapshot, policy: LexicographicPolicy = DEFAULT_POLICY) -> str:
    if not isinstance(job, JobDescriptor):
        job = snapshot.job(job)
    viable = [snapshot.things[q] for q in candidate_sensors(job, snapshot) if check_quality(snapshot.things[q])]
    if not viable:
        raise NoViableSensor(f"job {job.job_name!r}: no listed sensor passes its quality checks")
    return min(viable, key=policy.sensor_key).qualified_id


def plan(
    request: TaskRequest,
    snapshot: RegistrySnapshot,
    context_db: ContextDatabase,
    profiles: Mapping,
    policy: LexicographicPolicy = DEFAULT_POLICY,
    allow_cached: bool = True,
) -> ExecutionPlan:
    job = snapshot.job(request.job_name)
    faces = request.face_count

    def make(sensor, kind, predicted):
        return ExecutionPlan(job.job_name, sensor, kind, predicted, snapshot.revision, request.input_size, faces)

    if allow_cached:
        record = context_db.latest(job.job_name)
        if record is not None and request.now - record.produced_at <= request.max_result_age:
            return make(None, ExecutorKind.CACHED, 0.0)

    sensor = select_sensor(job, snapshot, policy)

    def usable(kind):
        profile = profiles.get((job.task_type, kind))
        return profile if profile is not None and profile.fitted else None

    if job.model_resident:
        profile = usable(ExecutorKind.PRELOADED)
        if profile is None:
            raise NoExecutor(f"job {job.job_name!r}: model resident but no preloaded profile")
        return make(sensor, ExecutorKind.PRELOADED, predict_latency(profile, request.input_size, faces))

    options = []
    kinds = [ExecutorKind.COLD] + ([ExecutorKind.CLOUD] if request.internet_available else [])
    for kind in kinds:
        profile = usable(kind)
        if profile is not None:
            predicted = predict_latency(profile, request.input_size, faces)
            options.append((policy.executor_key(kind, predicted), kind, predicted))
    if not options:
        raise NoExecutor(f"job {job.job_name!r}: model not resident and no cloud or cold-load option")
    _, kind, predicted = min(options)
    return make(sensor, kind, predicted)
