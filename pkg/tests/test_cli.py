import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from subreg.cli import DEMOS, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


class TestSolve:
    def test_f7_josephy(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "solve", problems_dir / "f7_kkt.json")
        assert code == 0
        assert rep["command"] == "solve" and rep["timings"] is None
        np.testing.assert_allclose(rep["results"]["x"], [0.5, 0.5, 1.0], atol=1e-12)
        assert set(rep) == {"command", "inputs-digest", "results", "diagnostics", "timings"}

    @pytest.mark.parametrize("method", ["semismooth", "broyden"])
    def test_other_methods(self, capsys, problems_dir, method):
        code, rep, _ = run(capsys, "solve", problems_dir / "circle_kkt.json", "--method", method)
        assert code == 0 and rep["results"]["status"] == "converged"

    def test_budget_exit(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "solve", problems_dir / "square_root_hard.json", "--max-iter", "1")
        assert code == 2 and rep["results"]["status"] == "budget-exhausted"

    def test_csv_output(self, capsys, problems_dir, tmp_path):
        path = tmp_path / "log.csv"
        code, rep, _ = run(capsys, "solve", problems_dir / "f7_kkt.json", "--method", "broyden", "--csv", path)
        assert code == 0
        text = path.read_bytes().decode()
        assert "\r" not in text
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["iter", "residual", "error", "dm_quotient"]

    def test_bad_x0(self, capsys, problems_dir):
        code, _, err = run(capsys, "solve", problems_dir / "f7_kkt.json", "--x0", "1,2")
        assert code == 1 and "x0" in err

    def test_timings(self, capsys, problems_dir):
        _, rep, _ = run(capsys, "solve", problems_dir / "f7_kkt.json", "--timings")
        assert rep["timings"]["wall_seconds"] >= 0


class TestRegularity:
    def test_linear_chain(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "regularity", problems_dir / "diag4.json", "--routine", "linear",
                           "--norms", "linf,l2")
        assert code == 0
        assert rep["results"]["modulus"] == pytest.approx(4.0)
        assert rep["results"]["consistent"]

    def test_rate_on_selection(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "regularity", problems_dir / "minus_x_x.json", "--routine", "rate")
        assert code == 0 and rep["results"]["modulus"] == pytest.approx(1.0, rel=1e-2)

    def test_polyhedral_selection(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "regularity", problems_dir / "minus_x_x.json", "--routine", "polyhedral")
        assert code == 0 and rep["results"]["isolated"]
        assert rep["results"]["modulus"] == pytest.approx(1.0)

    def test_radius_linear(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "regularity", problems_dir / "diag4.json", "--routine", "radius")
        assert code == 0 and rep["results"]["radius"] == pytest.approx(0.25)

    def test_rejected_norm_pair(self, capsys, problems_dir):
        code, _, err = run(capsys, "regularity", problems_dir / "diag4.json", "--routine", "linear",
                           "--norms", "l2,linf")
        assert code == 1 and "not supported" in err

    def test_unknown_norm(self, capsys, problems_dir):
        code, _, _ = run(capsys, "regularity", problems_dir / "diag4.json", "--routine", "linear",
                         "--norms", "l1,l2")
        assert code == 1

    def test_cap_exit(self, capsys, problems_dir):
        code, _, err = run(capsys, "regularity", problems_dir / "cone30.json", "--routine", "polyhedral")
        assert code == 4 and "cap" in err

    def test_wrong_kind(self, capsys, problems_dir):
        code, _, _ = run(capsys, "regularity", problems_dir / "f8.json", "--routine", "rate")
        assert code == 1


class TestOtherCommands:
    def test_kkt(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "kkt", problems_dir / "f7_nlp.json")
        assert code == 0
        r = rep["results"]
        assert r["smf"] and r["sosc"] and r["subreg"] and r["consistent"]

    def test_kkt_bad_point(self, capsys, problems_dir):
        code, _, err = run(capsys, "kkt", problems_dir / "f7_nlp.json", "--point", "0,0", "1")
        assert code == 1 and "KKT" in err

    def test_radius(self, capsys, problems_dir):
        code, rep, _ = run(capsys, "radius", problems_dir / "pd_radius.json")
        A = np.array([[4, 1, 0], [1, 3, 1], [0, 1, 2]], dtype=float)
        assert code == 0
        assert rep["results"]["sigma"] == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-9)

    def test_radius_nonneg(self, capsys, problems_dir):
        with pytest.warns(RuntimeWarning):
            code, rep, _ = run(capsys, "radius", problems_dir / "nonneg_radius.json")
        # attained at (1, 1)/sqrt(2)
        assert code == 0 and rep["results"]["sigma"] == pytest.approx(-1.0)

    def test_ocp(self, capsys, problems_dir, tmp_path):
        path = tmp_path / "study.csv"
        code, rep, _ = run(capsys, "ocp", problems_dir / "lq.json", "--Ns", "8,16", "--Nref", "128",
                           "--csv", path)
        assert code == 0
        assert rep["results"]["exact_errors"] is not None
        assert path.read_text().startswith("N,error,w_norm,iterations\n")

    def test_ocp_bad_nref(self, capsys, problems_dir):
        code, _, _ = run(capsys, "ocp", problems_dir / "f8.json", "--Ns", "8,16", "--Nref", "32")
        assert code == 1

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", tmp_path / "none.json")
        assert code == 1 and "cannot read" in err

    def test_usage_error_exit_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve"])
        assert exc.value.code == 1


class TestDemos:
    @pytest.mark.parametrize("name", DEMOS)
    def test_all_pass(self, capsys, name):
        code, rep, err = run(capsys, "demo", name)
        assert code == 0
        assert rep["results"]["all_pass"], err
        assert "verdict" in err.splitlines()[0]

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "r.json"
        code, rep, _ = run(capsys, "demo", "ell-infty-diag", "--N", "3", "--out", path)
        assert code == 0 and rep is None
        assert json.loads(path.read_text())["results"]["rows"][0]["computed"] == pytest.approx(3.0)


def test_deterministic_subprocess(problems_dir):
    cmd = [sys.executable, "-m", "subreg", "regularity", str(problems_dir / "f7_kkt.json"),
           "--routine", "rate", "--samples", "300", "--seed", "11"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a.endswith(b"\n")
