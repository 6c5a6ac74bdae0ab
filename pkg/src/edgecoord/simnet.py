"""Deterministic discrete-event substrate.

Everything in edgecoord runs on a :class:`SimClock`: a virtual millisecond
timeline with an event queue ordered by ``(due time, insertion sequence)``.
Long-running activities are written as generator *processes* that yield a
delay in milliseconds and are resumed by the clock once it elapses::

    def ping(channel):
        arrival = channel.transfer("request")
        yield arrival - channel.clock.now
        return channel.clock.now

    clock = SimClock()
    proc = clock.spawn(ping(Channel("c", ChannelConfig.zero(), clock)))
    clock.run_until_idle()

Channels sample segment latencies from per-segment random streams derived
from a single seed by stable hashing, so adding a channel or a segment never
perturbs the samples of another.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable, Mapping

from .errors import HorizonExceeded, UnknownSegment

__all__ = [
    "SEGMENTS",
    "Channel",
    "ChannelConfig",
    "Event",
    "LatencyModel",
    "Process",
    "SimClock",
    "TraceRecord",
    "derive_seed",
    "run_until_idle",
    "schedule",
    "transfer",
]

SEGMENTS = (
    "scan_gap",
    "connect",
    "enumerate",
    "request",
    "response_per_kb",
    "sensor_capture",
    "cloud_round_trip",
)

DEFAULT_MAX_EVENTS = 1_000_000


def derive_seed(seed: int, *labels: Any) -> int:
    """Stable 64-bit seed for the stream named by ``labels``."""
    text = ":".join([str(seed), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class TraceRecord:
    time: float
    component: str
    event: str
    payload_kb: float = 0.0

    def to_dict(self) -> dict:
        return {
            "t": round(self.time, 6),
            "component": self.component,
            "event": self.event,
            "kb": round(self.payload_kb, 6),
        }

    def to_line(self, **extra) -> str:
        return json.dumps({**extra, **self.to_dict()}, sort_keys=True)


@dataclass
class Event:
    """A scheduled occurrence. Named events are written to the trace when they fire."""

    component: str | None = None
    name: str | None = None
    payload_kb: float = 0.0
    action: Callable[[], Any] | None = None


class Process:
    """Handle on a generator process running on a clock."""

    def __init__(self, clock: SimClock, gen: Generator, name: str):
        self.clock = clock
        self.name = name
        self._gen = gen
        self.done = False
        self.value: Any = None
        self.error: BaseException | None = None
        self._callbacks: list[Callable[[Process], None]] = []

    def on_done(self, callback: Callable[[Process], None]) -> None:
        if self.done:
            callback(self)
        else:
            self._callbacks.append(callback)

    def result(self) -> Any:
        if not self.done:
            raise RuntimeError(f"process {self.name!r} has not finished")
        if self.error is not None:
            raise self.error
        return self.value

    def _resume(self) -> None:
        try:
            delay = next(self._gen)
        except StopIteration as stop:
            self._finish(value=stop.value)
            return
        except Exception as exc:  # surfaced through result()
            self._finish(error=exc)
            return
        if delay is None:
            delay = 0.0
        if delay < 0 or not math.isfinite(delay):
            self._finish(error=ValueError(f"process {self.name!r} yielded bad delay {delay!r}"))
            return
        self.clock.schedule(delay, Event(action=self._resume))

    def _finish(self, value: Any = None, error: BaseException | None = None) -> None:
        self.done = True
        self.value = value
        self.error = error
        callbacks, self._callbacks = self._callbacks, []
        for cb in callbacks:
            cb(self)


class SimClock:
    """Virtual clock in milliseconds with a FIFO-stable event queue."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = 0
        self.trace: list[TraceRecord] = []

    def __len__(self) -> int:
        return len(self._queue)

    def schedule(self, delay_ms: float, event: Event | Callable[[], Any] | None = None) -> int:
        if delay_ms < 0 or not math.isfinite(delay_ms):
            raise ValueError(f"delay must be finite and >= 0, got {delay_ms!r}")
        return self.schedule_at(self.now + delay_ms, event)

    def schedule_at(self, time_ms: float, event: Event | Callable[[], Any] | None = None) -> int:
        if time_ms < self.now:
            raise ValueError(f"cannot schedule in the past ({time_ms} < {self.now})")
        if event is None:
            event = Event()
        elif not isinstance(event, Event):
            event = Event(action=event)
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (float(time_ms), seq, event))
        return seq

    def peek(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def log(self, component: str, event: str, payload_kb: float = 0.0) -> None:
        self.trace.append(TraceRecord(self.now, component, event, float(payload_kb)))

    def step(self) -> bool:
        if not self._queue:
            return False
        time_ms, _, event = heapq.heappop(self._queue)
        self.now = time_ms
        if event.name is not None:
            self.log(event.component or "sim", event.name, event.payload_kb)
        if event.action is not None:
            event.action()
        return True

    def spawn(self, gen: Generator, name: str = "process") -> Process:
        """Start ``gen`` at the current time (after already-queued same-time events)."""
        proc = Process(self, gen, name)
        self.schedule(0.0, Event(action=proc._resume))
        return proc

    def run_until_idle(self, horizon: float | None = None, max_events: int = DEFAULT_MAX_EVENTS) -> float:
        """Fire events until the queue empties or the next event lies past ``horizon``.

        With a horizon the clock finishes exactly at ``horizon``. Without one,
        firing more than ``max_events`` events raises :class:`HorizonExceeded`.
        """
        fired = 0
        while self._queue:
            if horizon is not None and self._queue[0][0] > horizon:
                break
            if horizon is None and fired >= max_events:
                raise HorizonExceeded(
                    f"more than {max_events} events without a horizon (now={self.now})"
                )
            self.step()
            fired += 1
        if horizon is not None and horizon > self.now:
            self.now = float(horizon)
        return self.now

    def advance_to(self, time_ms: float) -> float:
        """Fire everything due up to ``time_ms`` and move the clock there."""
        if time_ms < self.now:
            raise ValueError(f"clock cannot move backwards ({time_ms} < {self.now})")
        return self.run_until_idle(horizon=time_ms)

    def run_until_complete(self, proc: Process, max_events: int = DEFAULT_MAX_EVENTS) -> Any:
        fired = 0
        while not proc.done:
            if not self.step():
                raise RuntimeError(f"process {proc.name!r} is blocked with an empty queue")
            fired += 1
            if fired > max_events:
                raise HorizonExceeded(f"process {proc.name!r} did not finish in {max_events} events")
        return proc.result()

    def export_trace(self, path=None) -> str:
        text = "".join(rec.to_line() + "\n" for rec in self.trace)
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class LatencyModel:
    base_ms: float = 0.0
    jitter_ms: float = 0.0
    distribution: str = "constant"

    def __post_init__(self):
        for name in ("base_ms", "jitter_ms"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if self.distribution not in ("constant", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def sample(self, rng: random.Random) -> float:
        if self.distribution == "constant":
            return self.base_ms
        low = max(self.base_ms - self.jitter_ms, 0.0)
        return rng.uniform(low, self.base_ms + self.jitter_ms)


@dataclass(frozen=True)
class ChannelConfig:
    segments: Mapping[str, LatencyModel] = field(default_factory=dict)

    def __post_init__(self):
        missing = [s for s in SEGMENTS if s not in self.segments]
        if missing:
            raise ValueError(f"channel config missing segments: {', '.join(missing)}")
        extra = sorted(set(self.segments) - set(SEGMENTS))
        if extra:
            raise ValueError(f"unknown channel segments: {', '.join(extra)}")

    @classmethod
    def constant(cls, **base_ms: float) -> ChannelConfig:
        """Constant-latency config; unspecified segments are zero."""
        unknown = set(base_ms) - set(SEGMENTS)
        if unknown:
            raise UnknownSegment(f"unknown segment(s): {', '.join(sorted(unknown))}")
        return cls({s: LatencyModel(float(base_ms.get(s, 0.0))) for s in SEGMENTS})

    @classmethod
    def zero(cls) -> ChannelConfig:
        return cls.constant()

    def __getitem__(self, segment: str) -> LatencyModel:
        try:
            return self.segments[segment]
        except KeyError:
            raise UnknownSegment(f"unknown segment {segment!r}") from None

    def total(self, names: Iterable[str]) -> float:
        return sum(self[s].base_ms for s in names)


class Channel:
    """A latency-injecting link bound to a clock.

    ``response_per_kb`` is a pure per-kilobyte cost: transferring over it
    costs ``payload_kb * sample``. Every other segment costs one sample, plus
    the per-kilobyte cost when ``size_dependent`` is set.
    """

    def __init__(self, name: str, config: ChannelConfig, clock: SimClock, seed: int = 0):
        self.name = name
        self.config = config
        self.clock = clock
        self.seed = seed
        self._rngs = {s: random.Random(derive_seed(seed, name, s)) for s in SEGMENTS}

    def sample(self, segment: str) -> float:
        model = self.config[segment]
        return model.sample(self._rngs[segment])

    def transfer(self, segment: str, payload_kb: float = 0.0, size_dependent: bool = False) -> float:
        if payload_kb < 0:
            raise ValueError("payload_kb must be >= 0")
        if segment == "response_per_kb":
            delay = payload_kb * self.sample(segment)
        else:
            delay = self.sample(segment)
            if size_dependent and payload_kb:
                delay += payload_kb * self.sample("response_per_kb")
        self.clock.log(self.name, f"send:{segment}", payload_kb)
        return self.clock.now + delay

    def wait(self, segment: str, payload_kb: float = 0.0, size_dependent: bool = False):
        """Process helper: sleep through one transfer, return the arrival time."""
        arrival = self.transfer(segment, payload_kb, size_dependent)
        yield arrival - self.clock.now
        return arrival


def schedule(clock: SimClock, delay_ms: float, event: Event | Callable[[], Any] | None = None) -> int:
    return clock.schedule(delay_ms, event)


def transfer(channel: Channel, segment: str, payload_kb: float = 0.0, size_dependent: bool = False) -> float:
    return channel.transfer(segment, payload_kb, size_dependent)


def run_until_idle(clock: SimClock, horizon: float | None = None) -> float:
    return clock.run_until_idle(horizon)
