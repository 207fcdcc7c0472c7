import json

import pytest

from lasercoh.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_bounds_prints_constants(capsys):
    code, out, _ = run(capsys, "bounds", "--mu", "10")
    assert code == 0
    fields = dict(tok.split("=", 1) for tok in out.split() if "=" in tok)
    assert abs(float(fields["heisenberg"]) - 29748.0) <= 10.0
    assert float(fields["sql"]) == 1600.0


def test_dim_guard_exits_1(capsys):
    code, _, err = run(capsys, "coherence", "--dim", "1")
    assert code == 1
    assert "validation error" in err


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["coherence", "--dim", "3", "--frobnicate"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 1


def test_numerical_failure_exits_2(capsys):
    code, _, err = run(capsys, "coherence", "--dim", "30",
                       "--method", "gmres", "--tol", "1e-16")
    assert code == 2
    assert "numerical failure" in err


def test_model_json_schema(tmp_path, capsys):
    out = tmp_path / "model.json"
    code, _, _ = run(capsys, "model", "--dim", "3", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert list(doc) == ["dim", "gain", "loss", "steady", "flux", "mu",
                         "linewidth", "meta"]
    assert doc["linewidth"] is None
    assert doc["meta"]["version"]


def test_sweep_csv_deterministic_and_headed(tmp_path, capsys):
    def sweep_lines(path):
        code, _, _ = run(capsys, "sweep", "--dims", "10,20,30", "--threads", "2",
                         "--csv", str(path))
        assert code == 0
        return path.read_text().splitlines()

    lines_a = sweep_lines(tmp_path / "a.csv")
    lines_b = sweep_lines(tmp_path / "b.csv")
    assert lines_a[0].startswith("# lasercoh ")
    assert "config=" in lines_a[0]
    assert lines_a[1] == "dim,mu,coherence,flux,linewidth,seconds"

    def strip_seconds(lines):
        return [",".join(line.split(",")[:-1]) for line in lines[1:]]

    # bit-identical apart from the wall-time column (and the csv path in the header)
    assert strip_seconds(lines_a) == strip_seconds(lines_b)


def test_sweep_fit_json(tmp_path, capsys):
    out = tmp_path / "fit.json"
    code, _, _ = run(capsys, "sweep", "--dims", "20,30,40,50,60", "--fit",
                     "--fit-window", "5", "1e9", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert {"meta", "exponent", "coefficient", "rms_log_residual",
            "window", "points", "sql_crossover_dim"} <= set(doc)
    assert 3.5 <= doc["exponent"] <= 4.5  # small dims, loose check only


def test_g1_csv_schema(tmp_path, capsys):
    out = tmp_path / "g1.csv"
    code, msg, _ = run(capsys, "g1", "--dim", "10", "--smax", "4",
                       "--points", "11", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "s,g1_model,g1_ideal,delta"
    assert len(lines) == 13
    first = lines[2].split(",")
    assert float(first[0]) == 0.0 and float(first[3]) == 0.0


def test_g2max_json_keys(tmp_path, capsys):
    out = tmp_path / "g2.json"
    code, _, _ = run(capsys, "g2max", "--dim", "8", "--grid", "5",
                     "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert {"meta", "dim", "tau", "argmax", "delta", "corner_delta"} == set(doc)
    assert len(doc["argmax"]) == 4
    assert doc["delta"] >= doc["corner_delta"]


def test_discrete_json_keys(tmp_path, capsys):
    out = tmp_path / "disc.json"
    code, _, _ = run(capsys, "discrete", "--dim", "6", "--gamma", "0.01",
                     "--dt", "1e-3", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    for key in ("dim", "gamma", "isometry_residual", "fixed_point_residual",
                "liouvillian_residual", "discrete_coherence", "one_site_term",
                "choi_distance"):
        assert key in doc
    assert doc["isometry_residual"] <= 1e-13


def test_msse_requires_exactly_one_window_parameter(capsys):
    code, _, err = run(capsys, "msse", "--linewidth", "0.1")
    assert code == 1
    code, _, _ = run(capsys, "msse", "--linewidth", "0.1", "--tau", "1.0",
                     "--quadrature")
    assert code == 0


def test_asymmetry_output(tmp_path, capsys):
    out = tmp_path / "asym.json"
    code, msg, _ = run(capsys, "asymmetry", "--nbar", "100", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["tail_bound"] <= 1e-6
    assert abs(doc["asymmetry"] - 2.7284) <= 1e-3


def test_control_csv(tmp_path, capsys):
    out = tmp_path / "control.csv"
    code, msg, _ = run(capsys, "control", "--dim", "6", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "dim,which,residual,precision"
    assert len(lines) == 4
    assert "||v||_inf" in msg


def test_optimize_json(tmp_path, capsys):
    out = tmp_path / "opt.json"
    code, msg, _ = run(capsys, "optimize", "--dim", "4", "--budget", "300",
                       "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert {"coherence", "fidelity_to_ansatz", "converged",
            "evaluations", "loss", "steady"} <= set(doc)


def test_coherence_quadrature_and_export(tmp_path, capsys):
    mtx = tmp_path / "liouv.mtx"
    code, out_text, _ = run(capsys, "coherence", "--dim", "12", "--quadrature",
                            "--export-liouvillian", str(mtx))
    assert code == 0
    assert "quadrature=" in out_text
    assert mtx.exists() and mtx.read_text().startswith("%%MatrixMarket")
