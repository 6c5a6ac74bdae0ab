import pytest

from edgecoord.bench import CSV_HEADER, MILESTONES, SCENARIOS, Measurement, Scenario, csv_text, emit_csv, run_scenario
from edgecoord.config import load_config, parse_config, Config
from edgecoord.errors import ScenarioError


def test_emit_csv_rows(tmp_path):
    ms = [Measurement("face", r, m, 1.0) for r in range(1, 6) for m in ("interrogation", "capture", "inference", "read")]
    path = tmp_path / "out.csv"
    assert emit_csv(ms, path) == 20
    lines = path.read_text().splitlines()
    assert len(lines) == 21 and lines[0] == ",".join(CSV_HEADER)


def test_emit_csv_empty(tmp_path):
    path = tmp_path / "e.csv"
    assert emit_csv([], path) == 0
    assert path.read_text() == "scenario,repetition,milestone,ms\n"


@pytest.mark.parametrize("name", SCENARIOS)
def test_row_count(name):
    run = run_scenario(Scenario(name, repetitions=3))
    assert len(csv_text(run.measurements).splitlines()) == 3 * len(MILESTONES) + 1


def test_reruns_byte_identical():
    a = run_scenario(Scenario("face", repetitions=4))
    b = run_scenario(Scenario("face", repetitions=4))
    assert csv_text(a.measurements) == csv_text(b.measurements)
    assert a.trace == b.trace and a.trace


def test_summary_constant_channels():
    run = run_scenario(Scenario("object-cloud"))
    mean, se = run.summary()["read"]
    assert mean == pytest.approx(3847.0) and se == 0.0


def test_face_extrapolation_label():
    run = run_scenario(Scenario("face", repetitions=1, image_kb=75))
    assert {m.scenario for m in run.measurements} == {"face-predicted"}
    assert run_scenario(Scenario("face", repetitions=1)).measurements[0].scenario == "face"


def test_jitter_gives_spread_but_same_reruns():
    cfg = Config(parse_config(
        'channel.face.request.distribution = "uniform"\nchannel.face.request.jitter_ms = 100.0\n',
        load_config().values,
    ))
    a = run_scenario(Scenario("face", repetitions=5), cfg)
    assert a.standard_error("read") > 0
    assert csv_text(a.measurements) == csv_text(run_scenario(Scenario("face", repetitions=5), cfg).measurements)


def test_seed_changes_jittered_values():
    cfg = Config(parse_config(
        'channel.face.request.distribution = "uniform"\nchannel.face.request.jitter_ms = 100.0\n',
        load_config().values,
    ))
    a = run_scenario(Scenario("face", repetitions=2, seed=1), cfg)
    b = run_scenario(Scenario("face", repetitions=2, seed=2), cfg)
    assert a.values("read") != b.values("read")


@pytest.mark.parametrize("kwargs", [dict(name="nope"), dict(name="face", repetitions=0),
                                    dict(name="face", face_count=-1), dict(name="face", image_kb=0)])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        Scenario(**kwargs)


def test_scenario_error_names_milestone():
    cfg = Config(parse_config("scenario.object.stale_age_ms = 0.0\n", load_config().values))
    with pytest.raises(ScenarioError) as info:
        run_scenario(Scenario("object-cloud", repetitions=1), cfg)
    assert info.value.milestone == "inference"
    assert "object-cloud" in str(info.value)
