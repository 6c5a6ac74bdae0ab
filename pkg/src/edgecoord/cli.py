"""Command line entry point: ``edgecoord bench | validate-assets | serve``."""

from __future__ import annotations

import argparse
import shlex
import sys

from . import __version__
from .assets import JobDescriptor, QualityValue, TaskType, ThingDescriptor, ThingType, load_assets
from .bench import SCENARIOS, Scenario, csv_text, emit_csv, run_scenario
from .config import DEFAULT_CONFIG, load_config
from .errors import AssetFileError, ConfigError, EdgeCoordError, ScenarioError
from .executor import EdgeServer, PeriodicScheduler, TaskModule
from .planner import TaskRequest
from .simnet import SimClock


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgecoord", description="Edge task coordination simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--print-default-config", action="store_true", help="print the built-in config and exit")
    sub = parser.add_subparsers(dest="command")

    bench = sub.add_parser("bench", help="run a timing scenario and emit CSV")
    bench.add_argument("--scenario", required=True, choices=SCENARIOS)
    bench.add_argument("--faces", type=int, default=None)
    bench.add_argument("--image-kb", type=float, default=None)
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--config", default=None, help="config file (default: $EDGECOORD_CONFIG or built-in)")
    bench.add_argument("--csv", default=None, help="write measurements here (default: stdout)")
    bench.add_argument("--trace", default=None, help="write the event trace (JSON lines) here")

    validate = sub.add_parser("validate-assets", help="check a things/ + jobs/ asset directory")
    validate.add_argument("directory")

    serve = sub.add_parser("serve", help="interactive loop over a fixture environment")
    serve.add_argument("--assets", default=None, help="asset directory to load instead of the fixture")
    serve.add_argument("--channel", default="object", help="channel profile from the config")
    serve.add_argument("--config", default=None)
    serve.add_argument("--seed", type=int, default=None)
    return parser


def cmd_bench(args, out, err) -> int:
    try:
        config = load_config(args.config)
        scenario = Scenario(args.scenario, args.reps, args.faces, args.image_kb, args.config, args.seed)
        run = run_scenario(scenario, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=err)
        return 2
    except ScenarioError as exc:
        print(f"error: {exc}", file=err)
        return 1
    if args.csv:
        rows = emit_csv(run.measurements, args.csv)
        print(f"wrote {rows} rows to {args.csv}", file=err)
    else:
        out.write(csv_text(run.measurements))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(run.trace)
    for milestone, (mean, se) in run.summary().items():
        print(f"{scenario.name:>16} {milestone:<20} {mean:10.1f} ms  (SE {se:.1f})", file=err)
    return 0


def cmd_validate(args, out, err) -> int:
    try:
        registry = load_assets(args.directory)
    except AssetFileError as exc:
        print(f"invalid: {exc}", file=err)
        return 1
    snap = registry.snapshot()
    print(f"ok: {len(snap.things)} things, {len(snap.jobs)} jobs", file=out)
    return 0


def fixture_server(config, channel: str = "object", seed: int | None = None, assets=None) -> EdgeServer:
    if assets is not None:
        registry = load_assets(assets)
    else:
        from .assets import AssetRegistry

        registry = AssetRegistry()
        registry.register_thing(
            ThingDescriptor("cam1", ThingType.CAMERA, "edge", True, (QualityValue("brightness", 0.7, 0.3, 1.0),))
        )
        registry.register_thing(
            ThingDescriptor("phone-cam", ThingType.CAMERA, "mobile", False, (QualityValue("brightness", 0.1, 0.3, 1.0),))
        )
        registry.register_job(JobDescriptor("object-reco", TaskType.OBJECT_RECOGNITION, ("cam1",)))
        registry.register_job(
            JobDescriptor("face-reco", TaskType.FACE_RECOGNITION, ("phone-cam", "cam1"), True, 1000.0, model_resident=True)
        )
    modules = {}
    for task in (TaskType.OBJECT_RECOGNITION, TaskType.FACE_RECOGNITION):
        params = config.module_params(task)
        resident = any(j.model_resident for j in registry.jobs.values() if j.task_type is task)
        modules[task] = TaskModule(
            task, config.module_profile(task), resident, params["model_load_ms"], params["default_input_kb"]
        )
    return EdgeServer(
        registry,
        modules,
        config.channel(channel),
        SimClock(),
        seed=config.seed if seed is None else seed,
        profiles=config.profiles(),
        beacon_capacity=config["beacon.capacity"],
    )


SERVE_HELP = """\
commands:
  things | jobs | beacons | time
  advance MS                      move the clock forward
  heartbeat OWNER NAME [Q=V ...]  refresh a thing and its quality values
  prune WINDOW_MS                 drop things not seen within the window
  read CLIENT JOB [MAX_AGE [KB [FACES]]]
  subscribe CLIENT JOB            subscribe to a (periodic) job
  tick                            run periodic jobs due now
  quit"""


def cmd_serve(args, inp, out, err) -> int:
    try:
        config = load_config(args.config)
        server = fixture_server(config, args.channel, args.seed, args.assets)
    except (ConfigError, AssetFileError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    scheduler = PeriodicScheduler(server)
    clock = server.clock
    print("edgecoord serve; type 'help'", file=out)
    for raw in inp:
        words = shlex.split(raw)
        if not words:
            continue
        cmd, rest = words[0], words[1:]
        try:
            if cmd in ("quit", "exit"):
                break
            elif cmd == "help":
                print(SERVE_HELP, file=out)
            elif cmd == "time":
                print(f"{clock.now:.1f}", file=out)
            elif cmd == "things":
                for qid, t in sorted(server.registry.things.items()):
                    quality = " ".join(f"{q.name}={q.current:g}" for q in t.quality_values)
                    print(f"{qid} {t.thing_type.value} tethered={t.tethered} last_seen={t.last_seen:.1f} {quality}", file=out)
            elif cmd == "jobs":
                for name, j in sorted(server.registry.jobs.items()):
                    print(f"{name} {j.task_type.value} sensors={','.join(j.alternative_sensors)} "
                          f"periodic={j.periodic} subscribers={','.join(j.subscribers) or '-'}", file=out)
            elif cmd == "beacons":
                for b in server.beacons():
                    print(f"frame {b.frame_index}/{b.frame_count} rev={b.registry_revision} {b.to_bytes().hex()}", file=out)
            elif cmd == "advance":
                clock.advance_to(clock.now + float(rest[0]))
                print(f"{clock.now:.1f}", file=out)
            elif cmd == "heartbeat":
                updates = dict(kv.split("=", 1) for kv in rest[2:])
                t = server.registry.heartbeat(rest[0], rest[1], {k: float(v) for k, v in updates.items()}, clock.now)
                print(f"{t.qualified_id} last_seen={t.last_seen:.1f}", file=out)
            elif cmd == "prune":
                removed = server.registry.prune_stale(clock.now, float(rest[0]))
                print("removed: " + (", ".join(removed) or "-"), file=out)
            elif cmd == "read":
                client, job = rest[0], rest[1]
                max_age = float(rest[2]) if len(rest) > 2 else 0.0
                kb = float(rest[3]) if len(rest) > 3 else 8.0
                faces = int(rest[4]) if len(rest) > 4 else None
                request = TaskRequest(job, client, max_age, kb, faces, server.internet_available, clock.now)
                proc = clock.spawn(server.client_read_steps(client, request), f"client:{client}")
                clock.run_until_complete(proc)
                session, result = proc.value
                if result.error:
                    print(f"error after {result.read_time_ms:.1f} ms: {result.error}", file=out)
                else:
                    print(f"{','.join(result.result.result)} via {result.plan.executor.value} "
                          f"read={result.read_time_ms:.1f} ms interrogation={session.interrogation_time:.1f} ms", file=out)
            elif cmd == "subscribe":
                sub = scheduler.subscribe(rest[1], rest[0])
                print(f"{sub.client_id} -> {sub.job_name}", file=out)
            elif cmd == "tick":
                for note in scheduler.tick():
                    status = ",".join(note.result) if note.ok else note.error
                    print(f"{note.client_id} {note.job_name} @{note.produced_at:.1f}: {status}", file=out)
            else:
                print(f"unknown command {cmd!r}; type 'help'", file=out)
        except (EdgeCoordError, ValueError, IndexError) as exc:
            print(f"error: {exc}", file=out)
    return 0


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        stdout.write(DEFAULT_CONFIG)
        return 0
    if args.command == "bench":
        return cmd_bench(args, stdout, stderr)
    if args.command == "validate-assets":
        return cmd_validate(args, stdout, stderr)
    if args.command == "serve":
        return cmd_serve(args, stdin, stdout, stderr)
    parser.print_help(stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
