import json
import os

import pytest

from lemonsignal import cli
from lemonsignal.oracle import ConvergenceRow

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main(list(args) + ["--out", str(out)])
    return code, json.loads((out / "report.json").read_text()), out


def test_analyze_canon(tmp_path):
    code, rep, out = _run(tmp_path, "analyze", "CANON", "--objective", "volume", "--alpha", "const:1")
    assert code == 0
    assert rep["theta_star"] == pytest.approx(0.5, abs=1e-10)
    assert rep["theta_lower"] == pytest.approx(0.25, abs=1e-6)
    assert rep["value"] == pytest.approx(0.75, abs=1e-6)
    assert abs(rep["certificate"]["gap"]) <= 1e-6
    for name in ("report.json", "plan.csv", "curves.csv", "dual.csv"):
        assert (out / name).exists()


def test_two_type_oracle_only(tmp_path):
    code, rep, _ = _run(tmp_path, "analyze", os.path.join(CONFIGS, "two-type.yaml"), "--oracle-only")
    assert code == 0
    assert rep["oracle"]["value"]["exact"] == "1/2"
    assert rep["oracle"]["signals"]["sigma_prime"]["value"]["exact"] == "5/12"
    prices = [r["price"] for r in rep["oracle"]["signals"]["sigma"]["realizations"]]
    assert prices == [0.0, 0.5]


def test_builtin_two_type_matches_config(tmp_path):
    code, rep, _ = _run(tmp_path, "oracle", "two-type")
    assert code == 0 and rep["oracle"]["value"]["exact"] == "1/2"


def test_gains_bottom_routes_to_reveal(tmp_path):
    code, rep, _ = _run(tmp_path, "analyze", os.path.join(CONFIGS, "gains-bottom.yaml"))
    assert code == 0
    assert [s["kind"] for s in rep["plan"]["segments"]] == ["reveal"]
    assert any("full revelation" in n for n in rep["notes"])


def test_piecewise_alpha(tmp_path):
    code, rep, _ = _run(tmp_path, "certify", "CANON", "--alpha", "piecewise:" + os.path.join(CONFIGS, "convex-weight.yaml"))
    assert code == 0
    assert rep["x_star"] == pytest.approx(0.5245917242, abs=1e-9)


def test_poly_alpha(tmp_path):
    code, rep, _ = _run(tmp_path, "build-signal", "CANON", "--alpha", "poly:1,-4,6,-4,1")
    assert code == 0 and rep["plan"]["label"] == "pool-reveal-pool"


def test_price_surplus_verify(tmp_path):
    code, rep, _ = _run(tmp_path, "verify", "CANON", "--objective", "price-surplus", "--beta", "0.5", "--n", "500")
    assert code == 0
    assert rep["value"] == pytest.approx(0.2578125, abs=1e-6)
    assert rep["verification"]["feasible"]


def test_config_errors_exit_1_with_report(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("density: [1\ncost: [0.25]\n")
    code, rep, _ = _run(tmp_path, "analyze", str(bad))
    assert code == 1 and rep["failure"]["reason"] == "config"
    assert "line" in rep["failure"]["detail"]


def test_missing_key_reported(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("density: [1]\n")
    code, rep, _ = _run(tmp_path, "analyze", str(bad))
    assert code == 1 and "cost" in rep["failure"]["detail"]


def test_bad_cost_reports_key(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("density: [1]\ncost: [0.5, -0.1]\n")
    code, rep, _ = _run(tmp_path, "analyze", str(bad))
    assert code == 1 and "cost" in rep["failure"]["detail"]


def test_beta_required(tmp_path):
    code, rep, _ = _run(tmp_path, "analyze", "CANON", "--objective", "price-surplus")
    assert code == 1 and "beta" in rep["failure"]["detail"]


def test_full_trade_feasible_exits_2(tmp_path):
    inst = tmp_path / "ft.yaml"
    inst.write_text("density: [1]\ncost: [0.05, 0.4]\n")
    code, rep, _ = _run(tmp_path, "analyze", str(inst))
    assert code == 2 and rep["failure"]["reason"] == "assumption"


def test_certificate_violation_exits_3(tmp_path, monkeypatch):
    real = cli.vf.dual_value
    monkeypatch.setattr(cli.vf, "dual_value", lambda cert, inst: real(cert, inst) + 1e-3)
    code, rep, _ = _run(tmp_path, "certify", "CANON")
    assert code == 3 and rep["failure"]["reason"] == "certificate"


def test_oracle_disagreement_exits_4(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "compare", lambda plan, lp, its=None: [ConvergenceRow(20, 1.0, 0.25, True, 0)])
    code, rep, _ = _run(tmp_path, "oracle", "CANON", "--lp-n", "20")
    assert code == 4 and rep["failure"]["reason"] == "oracle"


def test_outputs_are_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert cli.main(["analyze", "CANON", "--oracle", "--lp-n", "20", "--n", "200", "--out", str(out)]) == 0
    for name in ("plan.csv", "curves.csv", "dual.csv", "lp_solution.csv", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["build-signal", "CANON"]) == 0
    assert (tmp_path / "envout" / "report.json").exists()


def test_export_lp(tmp_path):
    code, rep, out = _run(tmp_path, "export-lp", "CANON", "--lp-n", "12")
    assert code == 0 and (out / "problem.lp").exists()
    assert rep["lp"]["n_rows"] > 12


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["analyze"])
    assert err.value.code == 1
