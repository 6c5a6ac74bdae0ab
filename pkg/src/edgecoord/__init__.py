"""Edge-server coordination of ambience-intelligence tasks, simulated.

Submodules: ``assets`` (registry, context database, asset files),
``discovery`` (beacons, client sessions), ``planner``, ``executor``,
``simnet`` (discrete-event substrate), ``config`` and ``bench``.
"""

__version__ = "0.1.0"

from .assets import (
    AssetRegistry,
    ContextDatabase,
    ContextRecord,
    JobDescriptor,
    Owner,
    QualityValue,
    RegistrySnapshot,
    TaskType,
    ThingDescriptor,
    ThingType,
    load_assets,
    merge_assets,
    save_assets,
)
from .discovery import Beacon, ClientSession, SessionState, encode_beacons, scan_match, service_id_of
from .executor import EdgeServer, PeriodicScheduler, TaskModule
from .planner import (
    ExecutionPlan,
    ExecutorKind,
    LatencyProfile,
    ProfileBook,
    TaskRequest,
    check_quality,
    fit_profile,
    plan,
    predict_latency,
    select_sensor,
)
from .simnet import Channel, ChannelConfig, LatencyModel, SimClock
