"""Scenario runner reproducing the object- and face-recognition timing runs.

Every repetition builds a fresh fixture (one edge camera, one job, one
client) on its own clock, lets the client scan, interrogate and read one
result, and records four aggregate milestones measured from scan start:

``interrogation``, ``capture``, ``inference``, ``read``

plus per-stage durations under the same names suffixed ``_delta``:
``interrogation_delta`` (broadcast spotted to Ready), ``capture_delta`` and
``inference_delta`` (execution stages) and ``read_delta`` (Ready to result).
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field

from .assets import (
    AssetRegistry,
    ContextRecord,
    JobDescriptor,
    Owner,
    QualityValue,
    TaskType,
    ThingDescriptor,
    ThingType,
)
from .config import Config, load_config
from .errors import ConfigError, EdgeCoordError, ScenarioError
from .executor import EdgeServer, TaskModule
from .planner import ExecutorKind, TaskRequest
from .simnet import SimClock, derive_seed

__all__ = [
    "MILESTONES",
    "SCENARIOS",
    "Measurement",
    "Scenario",
    "ScenarioRun",
    "build_fixture",
    "emit_csv",
    "run_scenario",
]

SCENARIOS = ("object-ready", "object-cloud", "object-cold", "object-preloaded", "face")
MILESTONES = (
    "interrogation",
    "capture",
    "inference",
    "read",
    "interrogation_delta",
    "capture_delta",
    "inference_delta",
    "read_delta",
)
# image sizes the face profile is anchored on; other sizes are extrapolated
MEASURED_FACE_KB = (8.0, 300.0)
CSV_HEADER = ("scenario", "repetition", "milestone", "ms")

_EXPECTED_EXECUTOR = {
    "object-ready": ExecutorKind.CACHED,
    "object-cloud": ExecutorKind.CLOUD,
    "object-cold": ExecutorKind.COLD,
    "object-preloaded": ExecutorKind.PRELOADED,
    "face": ExecutorKind.PRELOADED,
}

CAMERA = "cam1"
CLIENT = "client-1"


@dataclass(frozen=True)
class Scenario:
    name: str
    repetitions: int = 5
    face_count: int | None = None
    image_kb: float | None = None
    config_path: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {', '.join(SCENARIOS)}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.face_count is not None and self.face_count < 0:
            raise ValueError("face_count must be >= 0")
        if self.image_kb is not None and not self.image_kb > 0:
            raise ValueError("image_kb must be > 0")

    @property
    def is_face(self) -> bool:
        return self.name == "face"


@dataclass(frozen=True)
class Measurement:
    scenario: str
    repetition: int
    milestone: str
    ms: float


@dataclass
class ScenarioRun:
    scenario: Scenario
    measurements: list[Measurement] = field(default_factory=list)
    traces: list[str] = field(default_factory=list)

    def values(self, milestone: str) -> list[float]:
        return [m.ms for m in self.measurements if m.milestone == milestone]

    def mean(self, milestone: str) -> float:
        return statistics.fmean(self.values(milestone))

    def standard_error(self, milestone: str) -> float:
        vals = self.values(milestone)
        if len(vals) < 2:
            return 0.0
        return statistics.stdev(vals) / math.sqrt(len(vals))

    def summary(self) -> dict[str, tuple[float, float]]:
        return {m: (self.mean(m), self.standard_error(m)) for m in MILESTONES if self.values(m)}

    @property
    def trace(self) -> str:
        return "".join(self.traces)


def build_fixture(scenario: Scenario, config: Config, seed: int) -> tuple[EdgeServer, TaskRequest]:
    """Edge server plus the client's request for one repetition."""
    if scenario.is_face:
        task, job_name, profile = TaskType.FACE_RECOGNITION, "face-reco", "face"
        image_kb = scenario.image_kb or config["scenario.face.image_kb"]
        faces = config["scenario.face.face_count"] if scenario.face_count is None else scenario.face_count
        resident = True
    else:
        task, job_name, profile = TaskType.OBJECT_RECOGNITION, "object-reco", "object"
        image_kb = scenario.image_kb or config["scenario.object.image_kb"]
        faces = None
        resident = scenario.name == "object-preloaded"

    registry = AssetRegistry()
    registry.register_thing(
        ThingDescriptor(
            CAMERA,
            ThingType.CAMERA,
            Owner.EDGE,
            tethered=True,
            quality_values=(QualityValue("brightness", 0.7, 0.3, 1.0),),
            coordinates=(0.0, 0.0, 2.5),
        )
    )
    registry.register_job(
        JobDescriptor(job_name, task, (f"edge/{CAMERA}",), model_resident=resident)
    )
    params = config.module_params(task)
    module = TaskModule(
        task,
        config.module_profile(task),
        model_resident=resident,
        model_load_ms=params["model_load_ms"],
        default_input_kb=image_kb,
    )
    server = EdgeServer(
        registry,
        {task: module},
        config.channel(profile),
        SimClock(),
        seed=seed,
        profiles=config.profiles(),
        internet_available=scenario.name != "object-cold",
        beacon_capacity=config["beacon.capacity"],
    )
    max_age = 0.0
    if not scenario.is_face:
        max_age = config["scenario.object.max_result_age_ms"]
        age = config["scenario.object.fresh_age_ms" if scenario.name == "object-ready" else "scenario.object.stale_age_ms"]
        server.context_db.append(
            ContextRecord(job_name, module.result_for(f"edge/{CAMERA}", image_kb, seed), -age, image_kb)
        )
    request = TaskRequest(job_name, CLIENT, max_age, image_kb, faces, server.internet_available, 0.0)
    return server, request


def _label(scenario: Scenario, config: Config) -> str:
    if scenario.is_face:
        kb = scenario.image_kb or config["scenario.face.image_kb"]
        if kb not in MEASURED_FACE_KB:
            return "face-predicted"
    return scenario.name


def _run_once(scenario: Scenario, config: Config, rep: int, seed: int):
    server, request = build_fixture(scenario, config, seed)
    clock = server.clock
    proc = clock.spawn(server.client_read_steps(CLIENT, request), f"client:{CLIENT}")
    clock.run_until_idle()
    if proc.error is not None:
        raise ScenarioError(scenario.name, "interrogation", proc.error)
    session, result = proc.value
    marks = result.milestones
    if result.error is not None:
        missing = next(m for m in ("capture", "inference", "read") if m not in marks)
        raise ScenarioError(scenario.name, missing, result.error)
    expected = _EXPECTED_EXECUTOR[scenario.name]
    if result.plan.executor is not expected:
        raise ScenarioError(
            scenario.name, "inference", f"planner chose {result.plan.executor.value}, expected {expected.value}"
        )
    interrogation = session.t_ready - session.t_scan_start
    execution = result.execution
    values = {
        "interrogation": interrogation,
        "capture": marks["capture"],
        "inference": marks["inference"],
        "read": marks["read"],
        "interrogation_delta": session.interrogation_time,
        "capture_delta": execution.capture_ms,
        "inference_delta": execution.inference_ms,
        "read_delta": marks["read"] - interrogation,
    }
    trace = "".join(rec.to_line(rep=rep) + "\n" for rec in clock.trace)
    return values, trace


def run_scenario(scenario: Scenario, config: Config | None = None) -> ScenarioRun:
    config = config or load_config(scenario.config_path)
    seed = config.seed if scenario.seed is None else scenario.seed
    label = _label(scenario, config)
    run = ScenarioRun(scenario)
    for rep in range(1, scenario.repetitions + 1):
        rep_seed = derive_seed(seed, scenario.name, rep)
        try:
            values, trace = _run_once(scenario, config, rep, rep_seed)
        except (ScenarioError, ConfigError):
            raise
        except EdgeCoordError as exc:
            raise ScenarioError(scenario.name, "setup", exc) from exc
        run.measurements.extend(Measurement(label, rep, m, values[m]) for m in MILESTONES)
        run.traces.append(trace)
    return run


def csv_text(measurements) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for m in measurements:
        writer.writerow((m.scenario, m.repetition, m.milestone, f"{m.ms:.1f}"))
    return buf.getvalue()


def emit_csv(measurements, path) -> int:
    """Write ``scenario,repetition,milestone,ms`` rows; returns the data row count."""
    measurements = list(measurements)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(measurements))
    return len(measurements)
