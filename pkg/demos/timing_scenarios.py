"""Reproduce the object- and face-recognition timing scenarios.

Run: python demos/timing_scenarios.py
"""

from edgecoord.bench import SCENARIOS, Scenario, run_scenario
from edgecoord.config import load_config
from edgecoord.planner import fit_profile, predict_latency

config = load_config()
print(f"{'scenario':18}{'interrogation':>15}{'capture':>10}{'inference':>11}{'read':>10}")
for name in SCENARIOS:
    run = run_scenario(Scenario(name), config)
    row = [run.mean(m) for m in ("interrogation_delta", "capture_delta", "inference_delta", "read")]
    print(f"{name:18}" + "".join(f"{v:{w}.1f}" for v, w in zip(row, (15, 10, 11, 10))))

print("\nface recognition vs face count (8 KB):")
for faces in (1, 2, 3):
    run = run_scenario(Scenario("face", 1, face_count=faces), config)
    print(f"  {faces} face(s): {run.mean('inference_delta'):7.1f} ms")

# Fit a profile from the three measured image sizes and compare.
profile = fit_profile([(8, 1, 475.8), (75, 1, 565.8), (300, 1, 1300.0)])
print("\nleast squares over 8/75/300 KB:")
for kb in (8, 75, 300):
    print(f"  {kb:3d} KB -> {predict_latency(profile, kb):7.1f} ms")
