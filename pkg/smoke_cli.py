"""CLI smoke drive: count, synth, verify, export, bench on bundled scenarios."""

import json
import sys
import time
from pathlib import Path

sys.path.insert(0, "src")

from atrsynth.cli import main

SC = Path("src/atrsynth/scenarios")


def run(argv, expect=0, label=""):
    t0 = time.perf_counter()
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse errors
        code = exc.code
    dt = time.perf_counter() - t0
    tag = "ok" if code == expect else f"FAIL (code {code}, wanted {expect})"
    print(f"--- [{label or ' '.join(argv)}] {tag} in {dt:.2f}s ---", flush=True)
    assert code == expect, f"{argv}: exit {code} != {expect}"
    return dt


# 1. count on the academic scenarios (stdout checked manually against targets).
run(["count", str(SC / "c1.json")], label="count c1")
run(["count", str(SC / "c2.json")], label="count c2")
run(["count", str(SC / "phi1.json")], label="count phi1")
run(["count", str(SC / "phi2.json")], label="count phi2")
run(["count", str(SC / "phi3.json")], label="count phi3")

# 2. quickstart synth: reach under [0,0] then widened bound.
run(["synth", str(SC / "reach.json"), "--out", "/tmp/reach_out"], label="synth reach [0,0]")
print(json.loads(Path("/tmp/reach_out/result.json").read_text())["oracle"])
run(
    ["synth", str(SC / "reach.json"), "--bound", "-2", "2", "--out", "/tmp/reach_wide"],
    label="synth reach [-2,2]",
)
print(json.loads(Path("/tmp/reach_wide/result.json").read_text())["oracle"])

# 3. desk constraint synth at three bounds, timed.
for lo, hi in ((0, 0), (-1, 1), (-2, 2)):
    dt = run(
        [
            "synth",
            str(SC / "multirobot_constraint_desk.json"),
            "--bound",
            str(lo),
            str(hi),
            "--out",
            f"/tmp/desk_{lo}_{hi}",
        ],
        label=f"synth desk [{lo},{hi}]",
    )
    res = json.loads(Path(f"/tmp/desk_{lo}_{hi}/result.json").read_text())
    print("   status", res["status"], "obj", res["objective"], "oracle", res["oracle"])
    assert dt < 60.0, f"desk [{lo},{hi}] took {dt:.1f}s"

# 4. verify the [-1,1] desk trajectory at the wider bound.
run(
    [
        "verify",
        str(SC / "multirobot_constraint_desk.json"),
        "--states",
        "/tmp/desk_-1_1/states.csv",
        "--inputs",
        "/tmp/desk_-1_1/inputs.csv",
        "--bound",
        "-1",
        "1",
    ],
    label="verify desk [-1,1]",
)

# 5. STL desk synth (reduced) under [-1,1].
dt = run(
    [
        "synth",
        str(SC / "multirobot_stl_desk.json"),
        "--out",
        "/tmp/stl_desk",
        "--time-cap",
        "120",
    ],
    label="synth stl desk [-1,1]",
)
res = json.loads(Path("/tmp/stl_desk/result.json").read_text())
print("   status", res["status"], "obj", res["objective"], "oracle", res["oracle"])

# 6. phi3 desk synth both methods.
for method in ("reduced", "naive"):
    dt = run(
        [
            "synth",
            str(SC / "phi3_desk.json"),
            "--method",
            method,
            "--out",
            f"/tmp/phi3_desk_{method}",
            "--time-cap",
            "120",
        ],
        label=f"synth phi3_desk {method}",
    )
    res = json.loads(Path(f"/tmp/phi3_desk_{method}/result.json").read_text())
    print("   status", res["status"], "obj", res["objective"], "oracle", res["oracle"])

# 7. export the full multirobot STL model (round-trip checked inside cmd_export).
run(
    ["export", str(SC / "multirobot_stl.json"), "--out", "/tmp/export_out"],
    label="export multirobot_stl",
)
run(
    ["export", str(SC / "multirobot_constraint.json"), "--out", "/tmp/export_out"],
    label="export multirobot_constraint",
)

# 8. bench count-only on the academic set, then a real bench on phi3_desk.
run(
    ["bench", str(SC / "phi3_desk.json"), "--out", "/tmp/bench_out", "--time-cap", "120"],
    label="bench phi3_desk",
)

# 9. infeasible exit code: reach at horizon too short. Build a custom scenario.
bad = {
    "name": "unreach",
    "horizon": 3,
    "bound": [0, 0],
    "system": {
        "agents": [
            {
                "A": [[1.0]],
                "B": [[1.0]],
                "state_box": [[-2.0, 2.0]],
                "input_box": [[-0.1, 0.1]],
                "x0": [0.0],
            }
        ]
    },
    "task": {
        "kind": "constraint",
        "pieces": [{"label": "far", "members": ["x1 - 1"], "instants": [3]}],
    },
    "objective": "feasibility",
}
Path("/tmp/unreach.json").write_text(json.dumps(bad))
run(["synth", "/tmp/unreach.json", "--out", "/tmp/unreach_out"], expect=2, label="synth infeasible")

# 10. validation exit code: malformed scenario.
Path("/tmp/broken.json").write_text('{"name": "broken"}')
run(["synth", "/tmp/broken.json"], expect=4, label="synth invalid")

# 11. synth on an export-only objective must refuse with code 4.
run(
    ["synth", str(SC / "multirobot_constraint.json"), "--out", "/tmp/nope"],
    expect=4,
    label="synth exported_quadratic refused",
)

print("ALL CLI SMOKE CHECKS PASSED")
