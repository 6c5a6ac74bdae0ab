"""Quality-aware sensor choice: a pocketed phone camera loses to a wall camera.

Run: python demos/sensor_fallback.py
"""

from edgecoord.assets import AssetRegistry, ContextDatabase, JobDescriptor, QualityValue, TaskType, ThingDescriptor
from edgecoord.config import load_config
from edgecoord.errors import NoViableSensor
from edgecoord.planner import ExecutorKind, ProfileBook, TaskRequest, check_quality, plan

FACE = TaskType.FACE_RECOGNITION


def cam(name, owner, tethered, brightness):
    return ThingDescriptor(name, "camera", owner, tethered, (QualityValue("brightness", brightness, 0.3, 1.0),))


registry = AssetRegistry(
    [cam("phone", "mobile", False, 0.05), cam("hallway", "edge", True, 0.6)],
    [JobDescriptor("who-is-here", FACE, ("phone", "hallway"), model_resident=True)],
)
profiles = ProfileBook({(FACE, ExecutorKind.PRELOADED): load_config().module_profile(FACE)})
request = TaskRequest("who-is-here", "phone", 0.0, 8.0, 2, True, 0.0)

for qid, thing in sorted(registry.things.items()):
    print(f"{qid:14} tethered={thing.tethered!s:5} quality ok={check_quality(thing)}")

p = plan(request, registry.snapshot(), ContextDatabase(), profiles)
print(f"\nplan: {p.executor.value} on {p.chosen_sensor}, predicted {p.predicted_latency:.1f} ms for 2 faces")

# Lights go out in the hallway too.
registry.heartbeat("edge", "hallway", {"brightness": 0.1}, now=1000.0)
try:
    plan(request, registry.snapshot(), ContextDatabase(), profiles)
except NoViableSensor as exc:
    print(f"after the hallway dims: {exc}")
