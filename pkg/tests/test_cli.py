import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from crossbif import __version__
from crossbif.cli import BRANCH_HEADER, SCAN_HEADER, main, render_csv

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

MODE = {
    "transcritical": "classify-map",
    "pitchfork": "classify-map",
    "rotated_transcritical": "classify-map",
    "destruction_map": "classify-map",
    "continue_transcritical": "continue",
    "demo_scan": "libration-scan",
    "harmonic_scan": "libration-scan",
    "demo_monodromy": "monodromy",
    "demo_perturb": "perturb-check",
}


def run_config(name, out):
    return main([MODE[name], "--config", str(CONFIGS / f"{name}.json"), "--out", str(out)])


def without_version(text):
    doc = json.loads(text)
    assert doc.pop("version") == __version__
    return doc


def write(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_every_config_has_a_golden():
    assert sorted(p.stem for p in CONFIGS.glob("*.json")) == sorted(MODE)
    assert sorted(p.name for p in GOLDEN.iterdir()) == sorted(MODE)


@pytest.mark.parametrize("name", sorted(MODE))
def test_golden_reports(name, tmp_path):
    assert run_config(name, tmp_path) == 0
    for gold in sorted((GOLDEN / name).iterdir()):
        produced = (tmp_path / gold.name).read_text()
        if gold.suffix == ".json":
            assert without_version(produced) == without_version(gold.read_text())
            assert produced.replace(f'"version": "{__version__}"', "") == \
                gold.read_text().replace(f'"version": "{__version__}"', "")
        else:
            assert produced == gold.read_text()


@pytest.mark.parametrize("name", ["transcritical", "continue_transcritical"])
def test_runs_are_byte_stable(name, tmp_path):
    run_config(name, tmp_path / "a")
    run_config(name, tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_transcritical_kind(tmp_path):
    run_config("transcritical", tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["result"]["classification"]["kind"] == "Rank1CrossTranscritical"


def test_pitchfork_kind(tmp_path):
    run_config("pitchfork", tmp_path)
    cls = json.loads((tmp_path / "report.json").read_text())["result"]["classification"]
    assert cls["kind"] == "Rank1CrossForkLike"
    assert abs(cls["eps_b_second"] - 2.0) <= 1e-8


def test_theta_in_radians_matches_degrees(tmp_path):
    deg = {"family": {"builtin": "transcritical", "theta_deg": 30.0}, "point": [0, 0, 0]}
    rad = {"family": {"builtin": "transcritical", "theta": 0.5235987755982988}, "point": [0, 0, 0]}
    assert main(["classify-map", "--config", str(write(tmp_path, deg)), "--out", str(tmp_path / "d")]) == 0
    (tmp_path / "cfg.json").unlink()
    assert main(["classify-map", "--config", str(write(tmp_path, rad)), "--out", str(tmp_path / "r")]) == 0
    a = json.loads((tmp_path / "d" / "report.json").read_text())["result"]
    b = json.loads((tmp_path / "r" / "report.json").read_text())["result"]
    assert a["classification"]["kind"] == b["classification"]["kind"]
    assert a["classification"]["theta"] == pytest.approx(b["classification"]["theta"], abs=1e-12)


def test_unknown_key_exits_2_without_output(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "transcritical.json").read_text())
    cfg["colour"] = "blue"
    out = tmp_path / "out"
    assert main(["classify-map", "--config", str(write(tmp_path, cfg)), "--out", str(out)]) == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config_invalid" and "colour" in err["message"]


@pytest.mark.parametrize("cfg,mode", [
    ({"family": {"builtin": "transcritical"}}, "classify-map"),
    ({"family": {"builtin": "nope"}, "point": [0, 0, 0]}, "classify-map"),
    ({"family": {"builtin": "transcritical"}, "point": [0, 0]}, "classify-map"),
    ({"mode": "continue", "family": {"builtin": "transcritical"}, "point": [0, 0, 0]}, "classify-map"),
])
def test_invalid_configs_exit_2(tmp_path, cfg, mode):
    assert main([mode, "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_bad_tolerance_override_exits_2(tmp_path):
    args = ["classify-map", "--config", str(CONFIGS / "transcritical.json"), "--out", str(tmp_path)]
    assert main(args + ["--tol", "bogus=1"]) == 2
    assert main(args + ["--tol", "trace"]) == 2


def test_tolerance_override_is_echoed(tmp_path):
    args = ["classify-map", "--config", str(CONFIGS / "transcritical.json"), "--out", str(tmp_path)]
    assert main(args + ["--tol", "p_qq=1e-3"]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["config"]["tolerances"] == {"p_qq": 1e-3}
    assert doc["result"]["classification"]["tolerances"]["p_qq"] == 1e-3


def test_missing_config_file_exits_2(tmp_path):
    assert main(["monodromy", "--config", str(tmp_path / "none.json")]) == 2


def test_unknown_mode_exits_2(tmp_path):
    assert main(["dance", "--config", str(CONFIGS / "transcritical.json")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    # energy below the bottom of the well: no libration exists
    cfg = {"potential": {"builtin": "demo"}, "E0": -1.0, "section_y0": 0.0}
    out = tmp_path / "o"
    assert main(["monodromy", "--config", str(write(tmp_path, cfg)), "--out", str(out)]) == 3
    assert not out.exists()
    err = json.loads(capsys.readouterr().err)
    assert set(err) == {"error", "message"} and err["error"] == "no_well"


def test_seed_not_fixed_exits_3(tmp_path):
    cfg = {"family": {"builtin": "transcritical"}, "seed": [0.5, 0.0, 0.0], "eps_range": [-0.1, 0.1],
           "step": 0.05}
    assert main(["continue", "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 3


def test_branch_csv(tmp_path):
    cfg = {"family": {"builtin": "transcritical"}, "seed": [0.0, 0.0, -0.3], "eps_range": [-0.3, 0.3],
           "step": 0.1}
    assert main(["continue", "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "branch.csv").read_text().splitlines()
    assert lines[0] == BRANCH_HEADER
    assert len(lines) == 8
    for line in lines[1:]:
        eps, q, p, tr = map(float, line.split(","))
        assert q == 0.0 and p == 0.0 and tr == pytest.approx(2 + eps, abs=1e-12)


def test_scan_csv_harmonic(tmp_path):
    assert run_config("harmonic_scan", tmp_path) == 0
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == SCAN_HEADER
    for line in lines[1:]:
        assert abs(float(line.split(",")[2]) - 2.0) <= 1e-9


def test_empty_branch_is_header_only():
    assert render_csv(BRANCH_HEADER, []) == BRANCH_HEADER + "\n"


def test_csv_numbers_round_trip():
    text = render_csv("a,b", [(0.1, 1 / 3)])
    assert [float(v) for v in text.splitlines()[1].split(",")] == [0.1, 1 / 3]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "crossbif", "classify-map", "--config",
                           str(CONFIGS / "transcritical.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True, env={**os.environ, "PYTHONHASHSEED": "0"})
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.json").exists()
