import csv
import io
import json

import pytest

from kelly_riskcal import cli
from kelly_riskcal.errors import ConvergenceFailure

SEVEN = {"p": [0.5, 0.3, 0.2], "q": [0.45, 0.35, 0.30]}


@pytest.fixture
def market_file(tmp_path):
    def make(doc, name="m.json"):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(path)

    return make


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_seven_text(capsys, market_file):
    code, out, _ = run(capsys, "solve", "--input", market_file(SEVEN), "--lambda", "2")
    assert code == 0
    for needle in ("regime: Overround", "k*: 1", "tau*: 0.9091", "R(0): 1.0100", "binding: true",
                   "s*: 0.3794", "c*: 0.9394", "x*: 0.0606 0.0000 0.0000", "W*: 1.0740",
                   "eta*: 0.1674", "nu*: 1.3348", "objective:", "risk: 1.0000"):
        assert needle in out


def test_solve_log_risk_is_kelly(capsys, market_file):
    code, out, _ = run(capsys, "solve", "--input", market_file(SEVEN), "--lambda", "1")
    assert code == 0 and "binding: false" in out and "c*: 0.9091" in out and "x*: 0.0909" in out


def test_labels_echoed(capsys, market_file):
    doc = dict(SEVEN, labels=["home", "draw", "away"])
    code, out, _ = run(capsys, "solve", "--input", market_file(doc), "--lambda", "2")
    assert "home=0.0606" in out
    code, out, _ = run(capsys, "solve", "--input", market_file(doc), "--lambda", "2", "--format", "json")
    assert json.loads(out)["labels"] == ["home", "draw", "away"]


def test_json_roundtrip_audit(capsys, market_file, tmp_path):
    out_path = tmp_path / "solved.json"
    code, _, _ = run(capsys, "solve", "--input", market_file(SEVEN), "--lambda", "2",
                     "--format", "json", "--output", str(out_path))
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc["s*"] == pytest.approx(0.3793833364, abs=1e-10)
    assert doc["allocation"]["c"] == 0.9394389831
    code, out, _ = run(capsys, "audit", "--input", str(out_path), "--format", "json")
    assert code == 0 and json.loads(out)["status"] == "PASS"


def test_audit_flags_kelly_at_lambda_two(capsys, market_file):
    doc = dict(SEVEN, allocation={"c": 0.5 / 0.55, "x": [0.45 * (10 / 9 - 0.5 / 0.55), 0, 0]})
    code, out, _ = run(capsys, "audit", "--input", market_file(doc), "--lambda", "2")
    assert code == 0 and "status: FAIL" in out and "feasible: false" in out


def test_deterministic_output(capsys, market_file):
    path = market_file(SEVEN)
    outs = {run(capsys, "sweep", "--input", path, "--lambda-grid", "0.5,1,2,4", "--format", fmt)[1]
            for fmt in ("json",) for _ in range(3)}
    assert len(outs) == 1


def test_sweep_csv(capsys, market_file):
    code, out, _ = run(capsys, "sweep", "--input", market_file(SEVEN), "--lambda-grid", "1,2,3", "--format", "csv")
    assert code == 0
    assert "\r" not in out
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["lambda", "binding", "s_star", "c", "risk", "objective", "x_1", "x_2", "x_3"]
    assert all(len(r) == 6 + 3 for r in rows)
    assert rows[1][1] == "false" and rows[2][1] == "true"
    assert float(rows[2][2]) == pytest.approx(0.3793833364, abs=1e-10)
    assert len(rows[2][3].replace("0.", "", 1)) <= 10


def test_sweep_partial_failure(capsys, market_file):
    code, out, _ = run(capsys, "sweep", "--input", market_file(SEVEN), "--lambda-grid", "2,5000", "--format", "csv")
    assert code == 2
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[1][1] == "true" and rows[2][1] == "error" and len(rows[2]) == 9


def test_classify(capsys, market_file):
    code, out, _ = run(capsys, "classify", "--input", market_file({"p": [0.5, 0.5], "q": [0.5, 0.45]}))
    assert code == 0
    assert out.strip() == "regime: Subfair — solver not applicable; see documentation"
    code, out, _ = run(capsys, "classify", "--input", market_file(SEVEN))
    assert "prefix: unique" in out and "k*: 1" in out and "s*" not in out
    code, out, _ = run(capsys, "classify", "--input", market_file({"p": [0.25] * 4, "q": [0.275] * 4}))
    assert "all cash" in out


def test_kelly_crra_oracle(capsys, market_file):
    path = market_file(SEVEN)
    assert "c*: 0.9091" in run(capsys, "kelly", "--input", path)[1]
    assert "c*: 0.9547" in run(capsys, "crra", "--input", path, "--gamma", "2")[1]
    code, out, _ = run(capsys, "oracle", "--input", path, "--lambda", "2", "--resolution", "60")
    assert code == 0 and "support: [1]" in out and "c*: 0.9394" in out


def test_fair_solve(capsys, market_file):
    code, out, _ = run(capsys, "solve", "--input", market_file({"p": [0.6, 0.4], "q": [0.5, 0.5]}),
                       "--lambda", "3")
    assert code == 0 and "regime: Fair" in out and "binding: true" in out and "W*: 1.1009 0.8991" in out


@pytest.mark.parametrize(
    "doc, argv",
    [
        ("{not json", ["solve"]),
        ({"p": [0.5, 0.5]}, ["solve"]),
        ({"p": [0.5, "a"], "q": [0.5, 0.5]}, ["solve"]),
        (SEVEN, ["solve", "--lambda", "-1"]),
        (SEVEN, ["sweep"]),
        (SEVEN, ["solve", "--bogus"]),
        (SEVEN, ["audit"]),
    ],
)
def test_parse_errors(capsys, market_file, doc, argv):
    code, _, err = run(capsys, argv[0], "--input", market_file(doc), *argv[1:])
    assert code == 1 and err


def test_missing_file(capsys):
    assert run(capsys, "solve", "--input", "/nonexistent/m.json")[0] == 1


@pytest.mark.parametrize(
    "doc",
    [
        {"p": [0.5, 0.4], "q": [0.5, 0.5]},
        {"p": [0.5, 0.5], "q": [0.5, 0.45]},
        {"p": [0.5, 0.5], "q": [0.5, 0.5, 0.5]},
    ],
)
def test_model_errors(capsys, market_file, doc):
    code, _, err = run(capsys, "solve", "--input", market_file(doc), "--lambda", "2")
    assert code == 2 and "error:" in err


def test_convergence_failure_exit(capsys, market_file, monkeypatch):
    def boom(*a, **k):
        raise ConvergenceFailure("stalled")

    monkeypatch.setattr(cli.logcal, "solve", boom)
    code, _, err = run(capsys, "solve", "--input", market_file(SEVEN), "--lambda", "2")
    assert code == 3 and "ConvergenceFailure" in err
