"""A periodic presence job fanning results out to three subscribers.

Run: python demos/periodic_presence.py
"""

from edgecoord.assets import AssetRegistry, JobDescriptor, TaskType, ThingDescriptor
from edgecoord.config import load_config
from edgecoord.executor import EdgeServer, PeriodicScheduler, TaskModule
from edgecoord.simnet import SimClock

FACE = TaskType.FACE_RECOGNITION
config = load_config()

registry = AssetRegistry(
    [ThingDescriptor("lobby", "camera", "edge", True)],
    [JobDescriptor("presence", FACE, ("lobby",), periodic=True, period=1000.0, model_resident=True)],
)
module = TaskModule(FACE, config.module_profile(FACE), model_resident=True)
server = EdgeServer(registry, {FACE: module}, config.channel("face"), SimClock())
scheduler = PeriodicScheduler(server)

for client in ("alice-phone", "bob-watch", "door-panel"):
    scheduler.subscribe("presence", client, now=0.0)

notes = scheduler.run(until=10_000.0)
print(f"{scheduler.executions} executions, {len(notes)} notifications\n")
for n in notes[:6]:
    print(f"{n.delivered_at:9.1f} ms  {n.client_id:12} {','.join(n.result)}  (produced {n.produced_at:.1f})")
print("...")
for sub in server.active_subscriptions("presence"):
    print(f"{sub.client_id:12} received {sub.delivered_count}")
