"""Flat dotted-key configuration.

A config file is a list of ``dotted.key = value`` lines (TOML syntax, with
``#`` comments). Files are overlaid on :data:`DEFAULT_CONFIG`, so a file only
needs the keys it changes. Every key is checked against a schema and errors
name the offending key.
"""

from __future__ import annotations

import math
import os
import re
import sys
from dataclasses import dataclass
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assets import TaskType
from .errors import ConfigError
from .planner import ExecutorKind, LatencyProfile, ProfileBook
from .simnet import SEGMENTS, ChannelConfig, LatencyModel

__all__ = ["DEFAULT_CONFIG", "Config", "load_config", "parse_config"]

ENV_VAR = "EDGECOORD_CONFIG"

DEFAULT_CONFIG = """\
# edgecoord default configuration.
# Constant latencies; each scenario milestone is an exact sum of segments.

seed = 0
beacon.capacity = 4
registry.heartbeat_period_ms = 1000.0
registry.liveness_window_ms = 3000.0

# Object recognition over BLE; images already sit on the edge server.
# interrogation = connect + enumerate = 260.0
# cached read   = interrogation + request = 472.0
channel.object.scan_gap.base_ms = 0.0
channel.object.connect.base_ms = 120.0
channel.object.enumerate.base_ms = 140.0
channel.object.request.base_ms = 212.0
channel.object.response_per_kb.base_ms = 0.0
channel.object.sensor_capture.base_ms = 0.0
channel.object.cloud_round_trip.base_ms = 3375.0

# Face recognition with a Wi-Fi camera.
# interrogation = 459.4, capture = 10.4, read = 3550.2 at 8 KB and one face
channel.face.scan_gap.base_ms = 0.0
channel.face.connect.base_ms = 200.0
channel.face.enumerate.base_ms = 259.4
channel.face.request.base_ms = 2604.6
channel.face.response_per_kb.base_ms = 0.0
channel.face.sensor_capture.base_ms = 10.4
channel.face.cloud_round_trip.base_ms = 0.0

# Task modules. Inference = intercept + slope * kB + per_face * (faces - 1).
# Cold runs add model_load_ms: 22503 + 989 = 23492 for object recognition.
module.object-recognition.intercept_ms = 989.0
module.object-recognition.slope_ms_per_kb = 0.0
module.object-recognition.per_face_ms = 0.0
module.object-recognition.model_load_ms = 22503.0
module.object-recognition.default_input_kb = 100.0

# Line through (8 kB, 475.8 ms) and (300 kB, 1300 ms).
module.face-recognition.intercept_ms = 453.2191780821918
module.face-recognition.slope_ms_per_kb = 2.8226027397260274
module.face-recognition.per_face_ms = 360.0
module.face-recognition.model_load_ms = 0.0
module.face-recognition.default_input_kb = 8.0

# Planner profiles (override the module-derived ones).
profile.object-cloud.task_type = "object-recognition"
profile.object-cloud.executor = "CloudService"
profile.object-cloud.intercept_ms = 3375.0

scenario.object.image_kb = 100.0
scenario.object.max_result_age_ms = 5000.0
scenario.object.fresh_age_ms = 100.0
scenario.object.stale_age_ms = 60000.0
scenario.face.image_kb = 8.0
scenario.face.face_count = 1
"""

_NAME = r"[A-Za-z0-9_-]+"
_TASKS = "|".join(re.escape(t.value) for t in TaskType)
_SEGS = "|".join(SEGMENTS)
_PROFILE_FIELDS = ("intercept_ms", "slope_ms_per_kb", "per_face_ms")
_MODULE_FIELDS = _PROFILE_FIELDS + ("model_load_ms", "default_input_kb")


def _int(min_value=None):
    def check(key, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if min_value is not None and value < min_value:
            raise ConfigError(key, f"must be >= {min_value}")
        return value
    return check


def _real(min_value=None, positive=False):
    def check(key, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(key, f"expected a finite number, got {value!r}")
        if min_value is not None and value < min_value:
            raise ConfigError(key, f"must be >= {min_value}")
        if positive and not value > 0:
            raise ConfigError(key, "must be > 0")
        return float(value)
    return check


def _choice(options):
    def check(key, value):
        if value not in options:
            raise ConfigError(key, f"expected one of {', '.join(options)}, got {value!r}")
        return value
    return check


_SCHEMA = [
    (r"seed", _int(0)),
    (r"beacon\.capacity", _int(1)),
    (r"registry\.(heartbeat_period_ms|liveness_window_ms)", _real(positive=True)),
    (rf"channel\.{_NAME}\.({_SEGS})\.(base_ms|jitter_ms)", _real(0.0)),
    (rf"channel\.{_NAME}\.({_SEGS})\.distribution", _choice(("constant", "uniform"))),
    (rf"module\.({_TASKS})\.({'|'.join(_PROFILE_FIELDS)})", _real()),
    (rf"module\.({_TASKS})\.model_load_ms", _real(0.0)),
    (rf"module\.({_TASKS})\.default_input_kb", _real(positive=True)),
    (rf"profile\.{_NAME}\.task_type", _choice(tuple(t.value for t in TaskType))),
    (rf"profile\.{_NAME}\.executor", _choice(tuple(k.value for k in ExecutorKind if k is not ExecutorKind.CACHED))),
    (rf"profile\.{_NAME}\.({'|'.join(_PROFILE_FIELDS)})", _real()),
    (r"scenario\.(object|face)\.image_kb", _real(positive=True)),
    (r"scenario\.object\.(max_result_age_ms|fresh_age_ms|stale_age_ms)", _real(0.0)),
    (r"scenario\.face\.face_count", _int(0)),
]
_SCHEMA = [(re.compile(pattern + r"\Z"), check) for pattern, check in _SCHEMA]


def _flatten(tree: Mapping, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def _validate(flat: Mapping[str, Any]) -> dict[str, Any]:
    out = {}
    for key, value in flat.items():
        for pattern, check in _SCHEMA:
            if pattern.match(key):
                out[key] = check(key, value)
                break
        else:
            raise ConfigError(key, "unknown configuration key")
    return out


def parse_config(text: str, base: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Parse config text into a validated flat dict, overlaid on ``base``."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    values = dict(base or {})
    values.update(_validate(_flatten(tree)))
    return values


@dataclass(frozen=True)
class Config:
    values: Mapping[str, Any]
    source: str = "<default>"

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(key, "missing required key") from None

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return self["seed"]

    def channel_profiles(self) -> list[str]:
        return sorted({k.split(".")[1] for k in self.values if k.startswith("channel.")})

    def channel(self, profile: str) -> ChannelConfig:
        segments = {}
        for seg in SEGMENTS:
            prefix = f"channel.{profile}.{seg}."
            try:
                segments[seg] = LatencyModel(
                    self.get(prefix + "base_ms", 0.0),
                    self.get(prefix + "jitter_ms", 0.0),
                    self.get(prefix + "distribution", "constant"),
                )
            except ValueError as exc:
                raise ConfigError(prefix + "base_ms", str(exc)) from None
        if not any(k.startswith(f"channel.{profile}.") for k in self.values):
            raise ConfigError(f"channel.{profile}", "no such channel profile")
        return ChannelConfig(segments)

    def module_params(self, task_type) -> dict[str, float]:
        task = TaskType(task_type).value
        params = {}
        for name in _MODULE_FIELDS:
            params[name] = self[f"module.{task}.{name}"]
        return params

    def module_profile(self, task_type) -> LatencyProfile:
        p = self.module_params(task_type)
        return LatencyProfile(TaskType(task_type), p["intercept_ms"], p["slope_ms_per_kb"], p["per_face_ms"])

    def profiles(self) -> ProfileBook:
        """Named planner profiles from ``profile.<name>.*`` entries."""
        book = ProfileBook()
        names = sorted({k.split(".")[1] for k in self.values if k.startswith("profile.")})
        for name in names:
            prefix = f"profile.{name}."
            task_type = self[prefix + "task_type"]
            executor = self[prefix + "executor"]
            book[task_type, executor] = LatencyProfile(
                TaskType(task_type),
                self.get(prefix + "intercept_ms", 0.0),
                self.get(prefix + "slope_ms_per_kb", 0.0),
                self.get(prefix + "per_face_ms", 0.0),
            )
        return book

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, str):
                lines.append(f'{key} = "{value}"')
            elif isinstance(value, bool):
                lines.append(f"{key} = {str(value).lower()}")
            else:
                lines.append(f"{key} = {value!r}")
        return "\n".join(lines) + "\n"


def load_config(path=None) -> Config:
    """Load ``path``, else ``$EDGECOORD_CONFIG``, else the built-in defaults."""
    defaults = parse_config(DEFAULT_CONFIG)
    path = path or os.environ.get(ENV_VAR) or None
    if path is None:
        return Config(defaults)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    return Config(parse_config(text, defaults), str(path))
