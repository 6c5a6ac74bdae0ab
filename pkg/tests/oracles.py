"""Independent reference computations used by the tests.

Nothing here calls into the planner or fitting code it is checking.
"""

import itertools
import math

KINDS = ("CachedResult", "PreloadedLocalModel", "ColdLocalModel", "CloudService")


def lsq_line(xs, ys):
    """Closed-form simple linear regression: (intercept, slope)."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return my - slope * mx, slope


def rss(xs, ys, intercept, slope):
    return sum((y - intercept - slope * x) ** 2 for x, y in zip(xs, ys))


def grid_best_rss(xs, ys, intercepts, slopes):
    return min(rss(xs, ys, a, b) for a in intercepts for b in slopes)


def linear_prediction(intercept, slope, per_face, size, faces):
    extra = faces - 1 if faces > 1 else 0
    return max(0.0, intercept + slope * size + per_face * extra)


def passes(thing):
    for qv in thing.quality_values:
        if qv.current < qv.accepted_min or qv.current > qv.accepted_max:
            return False
    return True


def margin(thing):
    best = math.inf
    for qv in thing.quality_values:
        best = min(best, qv.current - qv.accepted_min, qv.accepted_max - qv.current)
    return best


def listed_sensors(job, things):
    ids = []
    for ref in job.alternative_sensors:
        for qid, thing in things.items():
            if (qid == ref if "/" in ref else thing.thing_name == ref) and qid not in ids:
                ids.append(qid)
    return ids


def brute_force_plan(job, things, latest_age, max_age, resident, profiles, internet, size, faces):
    """Enumerate every (sensor, executor) pair and keep the best feasible one.

    ``profiles`` maps executor kind name -> (intercept, slope, per_face) or is
    missing the kind. Returns ("error", name) or (kind, sensor, predicted).
    """
    if latest_age is not None and latest_age <= max_age:
        return ("CachedResult", None, 0.0)
    sensors = [q for q in listed_sensors(job, things) if passes(things[q])]
    if not sensors:
        return ("error", "NoViableSensor")
    candidates = []
    for qid, kind in itertools.product(sensors, KINDS[1:]):
        if kind == "PreloadedLocalModel" and not resident:
            continue
        if kind != "PreloadedLocalModel" and resident:
            continue
        if kind == "CloudService" and not internet:
            continue
        if kind not in profiles:
            continue
        predicted = linear_prediction(*profiles[kind], size, faces)
        thing = things[qid]
        key = (predicted, kind, 0 if thing.tethered else 1, -margin(thing), qid)
        candidates.append((key, kind, qid, predicted))
    if not candidates:
        return ("error", "NoExecutor")
    best = min(candidates)
    return (best[1], best[2], best[3])


# -- randomized planning cases ----------------------------------------------

def random_planning_case(rng):
    """Build (request, snapshot, context_db, profiles) plus oracle inputs."""
    from edgecoord.assets import (
        AssetRegistry,
        ContextDatabase,
        ContextRecord,
        JobDescriptor,
        QualityValue,
        TaskType,
        ThingDescriptor,
    )
    from edgecoord.planner import LatencyProfile, ProfileBook, TaskRequest

    reg = AssetRegistry()
    n = rng.randint(0, 6)
    grid = [0.0, 0.25, 0.3, 0.5, 0.75, 1.0, 1.2]
    for i in range(n):
        qvs = []
        for qname in rng.sample(["brightness", "noise", "blur"], rng.randint(0, 2)):
            lo, hi = sorted(rng.sample([0.0, 0.3, 0.5, 1.0], 2))
            qvs.append(QualityValue(qname, rng.choice(grid), lo, hi))
        name = rng.choice([f"cam{i}", "shared"])
        reg.register_thing(
            ThingDescriptor(name, "camera", rng.choice(["edge", "mobile"]), rng.random() < 0.5, tuple(qvs))
        )
    names = sorted({t.thing_name for t in reg.things.values()} | {"ghost"})
    refs = []
    for _ in range(rng.randint(1, 6)):
        name = rng.choice(names)
        refs.append(name if rng.random() < 0.6 else f"{rng.choice(['edge', 'mobile'])}/{name}")
    task = rng.choice([TaskType.OBJECT_RECOGNITION, TaskType.FACE_RECOGNITION])
    resident = rng.random() < 0.4
    reg.register_job(JobDescriptor("job", task, tuple(refs), model_resident=resident))

    now = 10_000.0
    max_age = float(rng.choice([0, 100, 500, 5000]))
    db = ContextDatabase()
    latest_age = None
    if rng.random() < 0.5:
        latest_age = float(rng.choice([0, max_age, max_age + 1, max_age - 1 if max_age else 0, 9000]))
        db.append(ContextRecord("job", ("x",), now - latest_age))

    oracle_profiles = {}
    book = ProfileBook()
    for kind in ("PreloadedLocalModel", "ColdLocalModel", "CloudService"):
        if rng.random() < 0.75:
            params = (
                rng.choice([0.0, 500.0, 989.0, 3375.0, 23492.0]),
                rng.choice([0.0, 0.5, 2.8]),
                rng.choice([0.0, 360.0]),
            )
            oracle_profiles[kind] = params
            book[task, kind] = LatencyProfile(task, *params)
    internet = rng.random() < 0.5
    size = rng.choice([8.0, 75.0, 300.0])
    faces = rng.choice([None, 0, 1, 2, 3])
    request = TaskRequest("job", "client", max_age, size, faces, internet, now)
    snapshot = reg.snapshot()
    oracle_args = (
        snapshot.jobs["job"],
        dict(snapshot.things),
        latest_age,
        max_age,
        resident,
        oracle_profiles,
        internet,
        size,
        1 if faces is None else faces,
    )
    return (request, snapshot, db, book), oracle_args


def plan_outcome(request, snapshot, db, book):
    from edgecoord.errors import NoExecutor, NoViableSensor
    from edgecoord.planner import plan

    try:
        p = plan(request, snapshot, db, book)
    except (NoViableSensor, NoExecutor) as exc:
        return ("error", type(exc).__name__)
    return (p.executor.value, p.chosen_sensor, p.predicted_latency)
