import csv
import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from causaltest.cli import main
from causaltest.report import load_schema

from conftest import fixture_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_table(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestValidateDag:
    def test_plt_roles_ok(self, capsys):
        code, out, _ = run(capsys, "validate-dag", fixture_path("plt.dot"),
                           "--roles", fixture_path("plt_roles.json"))
        assert code == 0 and out.startswith("ok")

    def test_output_to_input(self, tmp_path, capsys):
        (tmp_path / "g.dot").write_text("digraph { Y -> X; }")
        (tmp_path / "r.json").write_text('{"X": "input", "Y": "output"}')
        code, out, _ = run(capsys, "validate-dag", tmp_path / "g.dot", "--roles", tmp_path / "r.json")
        assert code == 2 and "assumption 1" in out

    def test_input_to_input_warns(self, tmp_path, capsys):
        (tmp_path / "g.dot").write_text("digraph { A -> B; B -> Y; }")
        (tmp_path / "r.json").write_text('{"A": "input", "B": "input", "Y": "output"}')
        code, out, _ = run(capsys, "validate-dag", tmp_path / "g.dot", "--roles", tmp_path / "r.json")
        assert code == 0 and "warning: assumption 2" in out

    @pytest.mark.parametrize("text", ["digraph { a -> ; }", "digraph { a -> b; b -> a; }"])
    def test_bad_dag(self, tmp_path, capsys, text):
        (tmp_path / "g.dot").write_text(text)
        code, _, err = run(capsys, "validate-dag", tmp_path / "g.dot")
        assert code == 2 and err.startswith("error:")

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "validate-dag", tmp_path / "none.dot")[0] == 2


class TestIdentify:
    def test_all(self, capsys):
        code, out, _ = run(capsys, "identify", fixture_path("infection.dot"), "beta", "I", "--all")
        assert code == 0
        assert out.splitlines() == ["{L}", "{A, C}", "{A, L}", "{C, L}", "{A, C, L}"]

    def test_minimal_empty(self, capsys):
        code, out, _ = run(capsys, "identify", fixture_path("plt.dot"), "I", "P_u", "--minimal")
        assert code == 0 and out.strip() == "{}"

    def test_unidentifiable(self, capsys):
        assert run(capsys, "identify", fixture_path("unidentifiable.dot"), "X", "Y")[0] == 3

    def test_unknown_node(self, capsys):
        assert run(capsys, "identify", fixture_path("infection.dot"), "Q", "I")[0] == 2


@pytest.fixture
def linear_suite(tmp_path):
    rng = np.random.default_rng(0)
    x = np.tile(np.arange(5.0), 20)
    z = rng.normal(size=x.size)
    y = 2 * x + z + 0.1 * rng.normal(size=x.size)
    with open(tmp_path / "data.csv", "w") as fh:
        fh.write("X,Z,Y\n")
        for row in zip(x, z, y):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    (tmp_path / "g.dot").write_text("digraph { X -> Y; Z -> Y; Z -> X; }")

    def make(cases, data=None):
        suite = {"dag": "g.dot",
                 "scenario": {"variables": {"X": {}, "Z": {}, "Y": {"role": "output"}},
                              "constraints": ["0 <= X <= 4"]},
                 "data": data or {"csv": "data.csv"},
                 "cases": cases}
        p = tmp_path / "suite.json"
        p.write_text(json.dumps(suite))
        return p

    return make


def case(name, oracle, formula="Y ~ 1 + X + Z", **kw):
    d = {"name": name, "outcome": "Y", "treatment": "X", "control": 1, "treatment_value": 3,
         "formula": formula, "oracle": oracle}
    d.update(kw)
    return d


class TestTestCommand:
    def test_pass(self, linear_suite, capsys):
        p = linear_suite([case("pos", {"type": "positive"}),
                          case("exact", {"type": "exact", "target": 4, "atol": 0.2})])
        code, out, _ = run(capsys, "test", p, "--jobs", 1)
        assert code == 0
        assert "summary: 2 passed, 0 failed, 0 errors" in out

    def test_fail(self, linear_suite, capsys):
        p = linear_suite([case("pos", {"type": "positive"}), case("neg", {"type": "negative"})])
        assert run(capsys, "test", p)[0] == 1

    def test_error_missing_adjustment_term(self, linear_suite, capsys):
        p = linear_suite([case("pos", {"type": "positive"}, formula="Y ~ 1 + X")])
        code, out, _ = run(capsys, "test", p)
        assert code == 2 and "Z" in out

    def test_missing_data_file(self, linear_suite, capsys):
        p = linear_suite([case("pos", {"type": "positive"})], data={"csv": "nope.csv"})
        code, _, err = run(capsys, "test", p)
        assert code == 2 and "nope.csv" in err

    def test_report_schema_and_determinism(self, linear_suite, tmp_path, capsys):
        p = linear_suite([case("pos", {"type": "positive"}),
                          case("rr", {"type": "noeffect"}, metric="RR", n_boot=200),
                          case("bad", {"type": "positive"}, formula="Y ~ 1 + X")])
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert run(capsys, "test", p, "--report", r1, "--jobs", 1, "--csv", tmp_path / "r.csv")[0] == 2
        assert run(capsys, "test", p, "--report", r2, "--jobs", 4)[0] == 2
        assert r1.read_bytes() == r2.read_bytes()
        rep = json.loads(r1.read_text())
        jsonschema.validate(rep, load_schema())
        assert rep["summary"] == {"pass": 1, "fail": 1, "error": 1}
        assert rep["results"][2]["estimate"] is None
        assert rep["results"][0]["diagnostics"]["adjustment_set"] == ["Z"]
        assert len(rep["inputs"]["data"]["sha256"]) == 64
        rows = read_table((tmp_path / "r.csv").read_text())
        assert [r["verdict"] for r in rows] == ["pass", "fail", "error"]

    def test_timing_is_opt_in(self, linear_suite, tmp_path, capsys):
        p = linear_suite([case("pos", {"type": "positive"})])
        run(capsys, "test", p, "--report", tmp_path / "r.json", "--timing")
        rep = json.loads((tmp_path / "r.json").read_text())
        jsonschema.validate(rep, load_schema())
        assert rep["wall_time_s"] >= 0

    def test_counterfactual_drop(self, linear_suite, tmp_path, capsys):
        p = linear_suite([case("pos", {"type": "positive"})])
        run(capsys, "test", p, "--counterfactual-drop", "--report", tmp_path / "r.json")
        res = json.loads((tmp_path / "r.json").read_text())["results"][0]
        assert res["mode"] == "counterfactual"
        assert res["diagnostics"]["rows_dropped_counterfactual"] == 20
        assert res["estimate"]["n_used"] == 80

    def test_experimental_builtin(self, tmp_path, capsys):
        suite = {"dag": fixture_path("plt.dot"),
                 "scenario": {"variables": {v: {"role": "input"} for v in "WHI"} |
                              {v: {"role": "output"} for v in ("L_t", "P_t", "L_u", "P_u")}},
                 "data": {"runner": {"builtin": "plt"}, "repeats": 40,
                          "base_config": {"W": 10, "H": 10}},
                 "cases": [{"name": "lines", "outcome": "L_t", "treatment": "I", "control": 1,
                            "treatment_value": 2, "formula": "L_t ~ 1 + I",
                            "oracle": {"type": "positive"}}]}
        p = tmp_path / "s.json"
        p.write_text(json.dumps(suite))
        code, out, _ = run(capsys, "test", p, "--report", tmp_path / "r.json")
        assert code == 0, out
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["mode"] == "experimental"
        assert rep["results"][0]["estimate"]["n_used"] == 80
        # E[L_t] = 2 I (W + H), so doubling I from 1 adds about 40 lines
        assert 30 < rep["results"][0]["estimate"]["point"] < 50

    def test_experimental_needs_runner(self, linear_suite, capsys):
        p = linear_suite([case("pos", {"type": "positive"})])
        assert run(capsys, "test", p, "--mode", "experimental")[0] == 2


class TestGenerators:
    def test_plt_lhs(self, tmp_path, capsys):
        out_path = tmp_path / "lhs.csv"
        assert run(capsys, "plt-generate", "--lhs", 50, "--seed", 2, "--out", out_path)[0] == 0
        rows = read_table(out_path.read_text())
        assert list(rows[0]) == ["W", "H", "I", "L_t", "P_t", "L_u", "P_u", "seed"]
        assert len(rows) == 50
        run(capsys, "plt-generate", "--lhs", 50, "--seed", 2, "--out", tmp_path / "b.csv")
        assert out_path.read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_plt_grid(self, capsys):
        code, out, _ = run(capsys, "plt-generate", "--sides", 1, 2, "--intensities", 1,
                           "--repeats", 3)
        rows = read_table(out)
        assert code == 0 and len(rows) == 6
        assert {(r["W"], r["H"]) for r in rows} == {("1", "1"), ("2", "2")}

    def test_plt_run(self, capsys):
        code, out, _ = run(capsys, "plt-run", "--W", 1, "--H", 1, "--I", 2, "--seed", 5)
        pairs = dict(kv.split("=") for kv in out.split())
        assert code == 0 and pairs["L_t"] == pairs["L_u"].replace(".0", "")

    def test_confounded(self, tmp_path, capsys):
        law = tmp_path / "law.json"
        law.write_text('{"sigma": 0.0}')
        code, out, _ = run(capsys, "confounded-generate", "--n", 20, "--seed", 1, "--law", law)
        rows = read_table(out)
        assert code == 0 and len(rows) == 20
        assert list(rows[0]) == ["location", "beta", "age", "contacts", "infections"]
        code, out2, _ = run(capsys, "confounded-generate", "--n", 20, "--seed", 1,
                            "--law", '{"sigma": 0.0}')
        assert out2 == out
        assert run(capsys, "confounded-generate", "--law", "{not json")[0] == 2

    def test_collect_builtin(self, tmp_path, capsys):
        (tmp_path / "runner.json").write_text('{"builtin": "plt"}')
        (tmp_path / "configs.csv").write_text("W,H,I\n1,1,1\n2,2,4\n")
        code, out, _ = run(capsys, "collect", "--runner", tmp_path / "runner.json",
                           "--configs", tmp_path / "configs.csv", "--repeats", 3, "--jobs", 2)
        rows = read_table(out)
        assert code == 0 and len(rows) == 6
        assert list(rows[0]) == ["W", "H", "I", "L_t", "P_t", "L_u", "P_u", "seed"]

    def test_collect_subprocess_failure(self, tmp_path, capsys):
        (tmp_path / "runner.json").write_text(json.dumps(
            {"command": [sys.executable, "-c", "import sys; sys.exit(3)", "{X}"], "outputs": ["Y"]}))
        (tmp_path / "configs.json").write_text('[{"X": 1}]')
        code, _, err = run(capsys, "collect", "--runner", tmp_path / "runner.json",
                           "--configs", tmp_path / "configs.json")
        assert code == 2 and "config 0" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "causaltest", "identify",
                           fixture_path("infection.dot"), "beta", "I", "--minimal"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "{L}"


def test_shipped_replication_suite_detects_violation(capsys):
    code, out, _ = run(capsys, "test", fixture_path("plt_replication.json"))
    assert code == 1
    assert out.startswith("FAIL  double_intensity_small_window")


def test_shipped_trivial_suite_passes(capsys):
    assert run(capsys, "test", fixture_path("trivial.json"))[0] == 0


def test_cycle_is_listed(tmp_path, capsys):
    (tmp_path / "g.dot").write_text("digraph { a -> b; b -> c; c -> a; }")
    code, _, err = run(capsys, "validate-dag", tmp_path / "g.dot")
    assert code == 2 and "a -> b -> c -> a" in err
