import csv
import sys

import numpy as np
import pytest
from PIL import Image

from dronetile.cli import main
from dronetile.ingest import read_detections

SPEC = """
[scene]
width = 320
height = 240
frames = 12
background = gradient

[track a]
start = 60, 60
velocity = 4, 2
size = 16, 12

[track b]
start = 250, 180
velocity = -3, -1
size = 20, 20

[track c]
label = bird
start = 160, 40
velocity = 1, 1
size = 8, 8
"""


@pytest.fixture
def scene(tmp_path):
    (tmp_path / "scene.ini").write_text(SPEC)
    assert main(["synth", "--spec", str(tmp_path / "scene.ini"), "--out", str(tmp_path / "s"), "--video-id", "clip"]) == 0
    return tmp_path / "s"


def test_plan_tiles(capsys):
    assert main(["plan-tiles", "--width", "1920", "--height", "1080"]) == 0
    assert capsys.readouterr().out.splitlines() == [
        "full 0 0 1920 1080", "corner0 0 0 1056 594", "corner1 864 0 1056 594",
        "corner2 0 486 1056 594", "corner3 864 486 1056 594"]


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["plan-tiles", "--width", "10"]) == 1
    assert main(["nope"]) == 1
    assert main(["run", "--manifest", "m", "--out", "o"]) != 0


def test_data_error(tmp_path, capsys):
    assert main(["plan-tiles", "--width", "1", "--height", "10"]) == 2
    (tmp_path / "gt").mkdir()
    (tmp_path / "gt" / "v.txt").write_text("0 1 1 -3 3\n")
    (tmp_path / "d.jsonl").write_text("")
    assert main(["evaluate", "--detections", str(tmp_path / "d.jsonl"), "--gt", str(tmp_path / "gt")]) == 2
    assert "negative width" in capsys.readouterr().err


def test_run_perfect(scene, tmp_path, capsys):
    out = tmp_path / "dets.jsonl"
    code = main(["run", "--manifest", str(scene / "manifest.txt"), "--gt", str(scene / "gt"), "--out", str(out),
                 "--csv", str(tmp_path / "r.csv")])
    assert code == 0
    table = capsys.readouterr().out
    assert "Average" in table
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["video", "ap50", "tp", "fp", "fn", "n_gt"]
    assert rows[-1][:2] == ["Average", "1.000000"]
    assert len(read_detections(out)) == 24


def test_stage_chain_matches_run(scene, tmp_path, capsys):
    common = ["--gt", str(scene / "gt"), "--miss-prob", "0.3", "--jitter", "1.5", "--fp-rate", "0.3",
              "--score-range", "0.3:1", "--seed", "5"]
    m = str(scene / "manifest.txt")
    assert main(["run", "--manifest", m, "--out", str(tmp_path / "run.jsonl"), *common]) == 0
    assert main(["detect", "--manifest", m, "--out", str(tmp_path / "raw.jsonl"), *common]) == 0
    capsys.readouterr()
    main(["plan-tiles", "--width", "320", "--height", "240"])
    (tmp_path / "plan.txt").write_text(capsys.readouterr().out)
    assert main(["fuse", "--plan", str(tmp_path / "plan.txt"), "--detections", str(tmp_path / "raw.jsonl"),
                 "--out", str(tmp_path / "fused.jsonl")]) == 0
    assert main(["interpolate", "--detections", str(tmp_path / "fused.jsonl"), "--frame-size", "320x240",
                 "--manifest", m, "--out", str(tmp_path / "final.jsonl")]) == 0
    assert (tmp_path / "final.jsonl").read_bytes() == (tmp_path / "run.jsonl").read_bytes()
    assert main(["evaluate", "--detections", str(tmp_path / "final.jsonl"), "--gt", str(scene / "gt")]) == 0


def test_jobs_invariance(scene, tmp_path):
    args = ["run", "--manifest", str(scene / "manifest.txt"), "--gt", str(scene / "gt"), "--fp-rate", "1",
            "--miss-prob", "0.2", "--score-range", "0.2:1"]
    assert main([*args, "--out", str(tmp_path / "a.jsonl"), "--jobs", "1"]) == 0
    assert main([*args, "--out", str(tmp_path / "b.jsonl"), "--jobs", "8"]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_config_file(scene, tmp_path):
    (tmp_path / "cfg.ini").write_text("miss-prob = 1\nno-interpolate = true\n")
    base = ["run", "--manifest", str(scene / "manifest.txt"), "--gt", str(scene / "gt")]
    assert main([*base, "--config", str(tmp_path / "cfg.ini"), "--out", str(tmp_path / "a.jsonl")]) == 0
    assert read_detections(tmp_path / "a.jsonl") == []
    # explicit flags win over the file
    assert main([*base, "--config", str(tmp_path / "cfg.ini"), "--miss-prob", "0", "--out", str(tmp_path / "b.jsonl")]) == 0
    assert len(read_detections(tmp_path / "b.jsonl")) == 24
    (tmp_path / "bad.ini").write_text("colour = red\n")
    assert main([*base, "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "c.jsonl")]) == 1


def test_empty_manifest(tmp_path):
    (tmp_path / "m.txt").write_text("")
    (tmp_path / "gt").mkdir()
    assert main(["run", "--manifest", str(tmp_path / "m.txt"), "--gt", str(tmp_path / "gt"),
                 "--out", str(tmp_path / "o.jsonl")]) == 0
    assert (tmp_path / "o.jsonl").read_text() == ""


def test_subprocess_backend_errors(scene, tmp_path):
    child = tmp_path / "det.py"
    child.write_text("import sys\nsys.exit(2)\n")
    cmd = f"{sys.executable} {child}"
    args = ["run", "--manifest", str(scene / "manifest.txt"), "--backend", "subprocess", "--backend-cmd", cmd]
    assert main([*args, "--out", str(tmp_path / "o.jsonl")]) == 3
    assert main([*args, "--skip-failed-frames", "--out", str(tmp_path / "o.jsonl")]) == 0
    assert main(["run", "--manifest", str(scene / "manifest.txt"), "--backend", "subprocess",
                 "--out", str(tmp_path / "o.jsonl")]) == 1


def test_subprocess_backend_end_to_end(scene, tmp_path):
    child = tmp_path / "det.py"
    child.write_text("import sys\nfrom PIL import Image\nw, h = Image.open(sys.argv[1]).size\n"
                     "print(f'drone 0.8 {w // 2} {h // 2} 4 4')\n")
    out = tmp_path / "o.jsonl"
    assert main(["run", "--manifest", str(scene / "manifest.txt"), "--backend", "subprocess",
                 "--backend-cmd", f"{sys.executable} {child}", "--out", str(out), "--jobs", "4"]) == 0
    # every window reports a box at its own centre; the full frame's is at (160, 120)
    recs = read_detections(out)
    assert {r.frame for r in recs} == set(range(12))
    assert all(any((r.x, r.y, r.w, r.h) == (160, 120, 4, 4) for r in recs if r.frame == t) for t in range(12))


def test_subsample(scene, tmp_path, capsys):
    assert main(["subsample", "--stride", "5", "--manifest", str(scene / "manifest.txt")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[1] for ln in lines] == ["0", "5", "10"]
    out = tmp_path / "sub.txt"
    assert main(["subsample", "--stride", "4", "--manifest", str(scene / "manifest.txt"), "--out", str(out)]) == 0
    assert [ln.split()[1] for ln in out.read_text().splitlines()] == ["0", "4", "8"]
    assert main(["subsample", "--stride", "0", "--manifest", str(scene / "manifest.txt")]) == 2


def test_render(scene, tmp_path):
    m = str(scene / "manifest.txt")
    main(["run", "--manifest", m, "--gt", str(scene / "gt"), "--out", str(tmp_path / "d.jsonl")])
    assert main(["render", "--manifest", m, "--detections", str(tmp_path / "d.jsonl"), "--gt", str(scene / "gt"),
                 "--out", str(tmp_path / "r")]) == 0
    assert len(list((tmp_path / "r").glob("*.png"))) == 12


def test_augment(tmp_path, capsys):
    for d in ("img", "lab", "pat"):
        (tmp_path / d).mkdir()
    Image.fromarray(np.full((100, 100, 3), 120, np.uint8)).save(tmp_path / "img" / "a.png")
    (tmp_path / "lab" / "a.txt").write_text("")
    patch = np.zeros((6, 6, 4), np.uint8)
    patch[..., :3], patch[..., 3] = 110, 255
    Image.fromarray(patch, "RGBA").save(tmp_path / "pat" / "drone_x.png")
    args = ["augment", "--images", str(tmp_path / "img"), "--labels", str(tmp_path / "lab"),
            "--patches", str(tmp_path / "pat"), "--seed", "1", "--scale", "0.05:0.1", "--max-instances", "2"]
    assert main([*args, "--out", str(tmp_path / "o")]) == 0
    assert "placements 2" in capsys.readouterr().out
    assert len((tmp_path / "o" / "labels" / "a.txt").read_text().splitlines()) == 2
    (tmp_path / "lab" / "a.txt").write_text("9 0 0 0 0\n")
    assert main([*args, "--out", str(tmp_path / "o2")]) == 2
