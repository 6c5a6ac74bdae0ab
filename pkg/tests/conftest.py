import pytest

from edgecoord.assets import AssetRegistry, JobDescriptor, QualityValue, TaskType, ThingDescriptor, ThingType

ACCEPTANCE_LINES = []


def camera(name, owner="edge", tethered=True, brightness=0.7, lo=0.3, hi=1.0, last_seen=0.0):
    return ThingDescriptor(
        name,
        ThingType.CAMERA,
        owner,
        tethered,
        (QualityValue("brightness", brightness, lo, hi),),
        last_seen=last_seen,
    )


@pytest.fixture
def registry():
    reg = AssetRegistry()
    reg.register_thing(camera("cam1", "mobile", tethered=False, brightness=0.1))
    reg.register_thing(camera("cam2", "edge", tethered=True, brightness=0.8))
    reg.register_job(JobDescriptor("face-reco", TaskType.FACE_RECOGNITION, ("cam1", "cam2"), model_resident=True))
    return reg


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
