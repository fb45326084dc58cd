import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percsel.cli import main
from percsel.errors import ParseError, ValidationError
from percsel.evaluation import landing_scenario
from percsel.scenario import dump_scenario, parse_scenario, parse_text, scenario_hash

TINY = Path(__file__).parent / "data" / "tiny.yaml"


def test_tiny_scenario(tiny_path):
    sc = parse_scenario(tiny_path)
    assert sc.horizon == 1 and sc.suite.W == 2 and sc.continuous_suite is not None
    assert sc.solver["gap_tol"] == 1e-10 and sc.solver["node_limit"] == 200000
    assert sc.x0 is None


def test_landing_scenario_shape():
    sc = landing_scenario()
    assert (sc.horizon, sc.suite.W, sc.dynamics.n) == (150, 8, 4)
    assert sc.upsilon == 100 and (sc.alpha, sc.beta) == (0.6, 0.4)


def test_round_trip_is_idempotent(tiny_path):
    sc = parse_scenario(tiny_path)
    text = dump_scenario(sc)
    again = parse_text(text)
    assert again == sc and dump_scenario(again) == text
    assert scenario_hash(again) == scenario_hash(sc)


@settings(max_examples=25, deadline=None)
@given(mean=st.floats(-1e6, 1e6, allow_nan=False), var=st.floats(0, 1e6, allow_nan=False),
       alpha=st.floats(1e-6, 10), beta=st.floats(0, 10))
def test_float_round_trip(mean, var, alpha, beta):
    text = TINY.read_text()
    text = text.replace("- {family: degenerate, value: [2.0]}\n",
                        f"- {{family: normal, mean: [{mean!r}], variance: [{var!r}]}}\n", 1)
    text = text.replace("{alpha: 1.0, beta: 1.0}", f"{{alpha: {alpha!r}, beta: {beta!r}}}")
    sc = parse_text(text)
    assert sc.suite.models[0][0].mean[0] == mean and sc.alpha == alpha
    dumped = dump_scenario(sc)
    assert dump_scenario(parse_text(dumped)) == dumped


def test_parse_error_has_position(tiny_path):
    text = tiny_path.read_text().replace("A: [[1.0]]", "A: [[1.0, 2.0], [3.0]]")
    with pytest.raises(ParseError) as info:
        parse_text(text)
    assert info.value.line == 3 and info.value.col is not None


def test_malformed_yaml_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_text("name: [unclosed\n")


def test_missing_and_invalid_fields(tiny_path):
    text = tiny_path.read_text()
    with pytest.raises(ValidationError) as info:
        parse_text(text.replace("upsilon: 1.0\n", ""))
    assert any("upsilon" in str(v) for v in info.value.violations)
    with pytest.raises(ValidationError):
        parse_text(text.replace("{alpha: 1.0, beta: 1.0}", "{alpha: 0.0, beta: 0.0}"))
    with pytest.raises(ValidationError):
        parse_text(text.replace("value: [2.0]}", "value: [2.0, 1.0]}", 1))


def run(*args):
    return main([str(a) for a in args])


def test_cli_plan_outputs(tiny_path, tmp_path, capsys):
    assert run("plan", "--scenario", tiny_path, "--out", tmp_path) == 0
    assert (tmp_path / "sequence.csv").read_text() == "step,model_index\n0,1\n"
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["objective"] == pytest.approx(1.0) and plan["status"] == "optimal"
    assert run("plan", "--scenario", tiny_path, "--out", tmp_path, "--solver", "exhaustive",
               "--mode", "exact") == 0


def test_cli_realized_file(tiny_path, tmp_path):
    np.save(tmp_path / "r.npy", np.array([[[2.0]], [[0.0]]]))
    assert run("plan", "--scenario", tiny_path, "--out", tmp_path, "--mode", "exact",
               "--realized", tmp_path / "r.npy") == 0
    (tmp_path / "r.csv").write_text("model,step,component,error\n0,0,0,2.0\n")
    assert run("plan", "--scenario", tiny_path, "--out", tmp_path, "--mode", "exact",
               "--realized", tmp_path / "r.csv") == 1


def test_cli_plan_continuous(tiny_path, tmp_path):
    assert run("plan-continuous", "--scenario", tiny_path, "--out", tmp_path,
               "--export-sdp") == 0
    doc = json.loads((tmp_path / "continuous.json").read_text())
    assert doc["c"][0] == pytest.approx(0.75, abs=1e-6)
    assert (tmp_path / "sdp.txt").read_text().startswith("percsel-sdp 1\n")


def test_cli_error_exit_codes(tiny_path, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(tiny_path.read_text().replace("upsilon: 1.0\n", ""))
    assert run("plan", "--scenario", bad, "--out", tmp_path) == 1
    assert "upsilon" in capsys.readouterr().err
    bad.write_text(tiny_path.read_text().replace("A: [[1.0]]", "A: [[1.0, 2.0], [3.0]]"))
    assert run("plan", "--scenario", bad, "--out", tmp_path) == 1
    assert "line 3" in capsys.readouterr().err
    assert run("plan", "--scenario", tmp_path / "missing.yaml", "--out", tmp_path) == 1


def test_cli_bound_gap_exit_code(tmp_path):
    sc = landing_scenario()
    data = dict(sc.data)
    data["horizon"] = 30
    data["solver"] = dict(data["solver"], node_limit=1, gap_tol=1e-12)
    data.pop("x0", None)
    from percsel.scenario import from_data
    path = tmp_path / "gap.yaml"
    dump_scenario(from_data(data), path)
    code = run("plan", "--scenario", path, "--out", tmp_path, "--mode", "exact", "--seed", 0)
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert code == 2 and plan["status"] == "bound_gap"
    assert plan["lower_bound"] < plan["objective"]


def test_cli_verify_fault_injection(capsys):
    assert run("verify", "quick") == 0
    assert run("verify", "quick", "--inject-fault", "asymmetric-psi") == 1
    assert "[FAIL] Psi PSD" in capsys.readouterr().out


def test_console_script_determinism(tiny_path, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        proc = subprocess.run([sys.executable, "-m", "percsel.cli", "evaluate", "--scenario",
                               str(tiny_path), "--out", str(out), "--trials", "4"],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(((out / "trials.csv").read_bytes(), (out / "summary.json").read_bytes(),
                     proc.stdout))
    assert outs[0] == outs[1]
