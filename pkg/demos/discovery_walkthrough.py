"""Walk a client through scanning, matching and interrogating an edge server.

Run: python demos/discovery_walkthrough.py
"""

from edgecoord.assets import AssetRegistry, JobDescriptor, TaskType, ThingDescriptor
from edgecoord.config import load_config
from edgecoord.discovery import ClientSession, discover, encode_beacons, interrogate, service_id_of
from edgecoord.simnet import Channel, SimClock

config = load_config()
registry = AssetRegistry(
    [ThingDescriptor(f"cam{i}", "camera", "edge", True) for i in range(1, 6)],
    [JobDescriptor("object-reco", TaskType.OBJECT_RECOGNITION, ("cam1",))],
)
snapshot = registry.snapshot()

# Six services at four ids per frame: the server rotates two frames.
beacons = encode_beacons(snapshot, capacity=4)
for b in beacons:
    print(f"frame {b.frame_index + 1}/{b.frame_count}: {len(b.services)} ids, {len(b.to_bytes())} bytes")

clock = SimClock()
channel = Channel("client", config.channel("object"), clock, seed=config.seed)
wanted = {service_id_of("job", "edge", "object-reco")}

session = ClientSession("phone", t_scan_start=clock.now)
discover(session, beacons, wanted, channel)
interrogate(session, channel)

for t, state in session.history:
    print(f"{t:8.1f} ms  {state.value}")
print(f"interrogation took {session.interrogation_time:.1f} ms")

print("\ntrace:")
print(clock.export_trace(), end="")
