import csv
import io
import math
from pathlib import Path

import numpy as np
import pytest

from subrayleigh import io as sio
from subrayleigh.cli import EXIT_ACCEPT, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main
from subrayleigh.diffraction import CovMatrix
from subrayleigh.source import rotation

DATA = Path(__file__).parent / "data"


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _body(text):
    return "\n".join(line for line in text.splitlines() if not line.startswith("#"))


def _records(text):
    return list(csv.DictReader(io.StringIO(_body(text))))


def _pair_goldens():
    with open(DATA / "fock_pair_goldens_v1.csv") as fh:
        return {r["quantity"]: float(r["value"]) for r in csv.DictReader(l for l in fh if not l.startswith("#"))}


SCEN = ["--v1x", "1", "--v1y", "2", "--v2x", "3", "--v2y", "0.5", "--theta1", "0.3"]


def test_subdiff_point_source(capsys):
    code, out, _ = _run(capsys, "subdiff", "--v1x", "0", "--v1y", "0", "--v2x", "0.25", "--v2y", "0.15")
    assert code == EXIT_OK
    rec = _records(out)[0]
    assert float(rec["xi_q"]) == pytest.approx(0.004, rel=1e-14)
    assert float(rec["xi_spade"]) == pytest.approx(0.004, rel=1e-14)
    assert abs(float(rec["gap"])) < 1e-12


def test_subdiff_rotated_90_has_zero_gap(capsys):
    code, out, _ = _run(capsys, "subdiff", "--v1x", "6", "--v1y", "12", "--v2x", "6", "--v2y", "12",
                        "--theta1", "pi/4", "--theta2=-pi/4", "--i0", "100")
    rec = _records(out)[0]
    assert float(rec["xi_q"]) == pytest.approx(18 - 12 * math.sqrt(2), abs=1e-8)
    assert abs(float(rec["gap"])) < 1e-9


def test_subdiff_generic_gap_positive_and_idempotent(capsys):
    code, out1, _ = _run(capsys, "subdiff", *SCEN)
    code, out2, _ = _run(capsys, "subdiff", *SCEN)
    assert float(_records(out1)[0]["gap"]) > 0
    assert _body(out1) == _body(out2)
    assert out1.startswith("# command: subdiff")


def test_usage_errors(capsys):
    assert _run(capsys, "subdiff", "--v1x", "1")[0] == EXIT_USAGE
    assert _run(capsys, "subdiff", *SCEN, "--chi", "0.5")[0] == EXIT_USAGE
    assert _run(capsys, "subdiff", *SCEN, "--theta1", "import os")[0] == EXIT_USAGE
    assert _run(capsys, "nonsense")[0] == EXIT_USAGE
    assert _run(capsys, "sweep", *SCEN, "--theta0-step", "0")[0] == EXIT_USAGE
    assert _run(capsys, "qcb")[0] == EXIT_USAGE


def test_sweep_single_point_equals_subdiff(capsys):
    _, sweep, _ = _run(capsys, "sweep", *SCEN, "--theta0-list", "0.4")
    _, sub, _ = _run(capsys, "subdiff", *SCEN, "--theta0", "0.4")
    a, b = _records(sweep)[0], _records(sub)[0]
    assert a["xi_q"] == b["xi_q"] and a["xi_spade"] == b["xi_spade"] and a["gap"] == b["gap"]


def test_sweep_preset_runs_threaded_and_deterministic(capsys):
    _, one, _ = _run(capsys, "sweep", "--preset", "fig3", "--theta0-list", "0,0.3,pi/4")
    _, four, _ = _run(capsys, "sweep", "--preset", "fig3", "--theta0-list", "0,0.3,pi/4", "--threads", "4")
    assert _body(one) == _body(four)
    assert len(_records(one)) == 3 * 8


def _write_cov(path, g):
    sio.write_cov_csv(path, CovMatrix(np.asarray(g)))
    return str(path)


def test_qcb_golden_pair(capsys, tmp_path):
    g1 = np.diag([0.3, 0.1])
    u = rotation(0.7)
    c1 = _write_cov(tmp_path / "a.csv", g1)
    c2 = _write_cov(tmp_path / "b.csv", u @ g1 @ u.T)
    code, out, _ = _run(capsys, "qcb", "--cov1", c1, "--cov2", c2)
    rec = _records(out)[0]
    assert code == EXIT_OK and rec["method"] == "general" and rec["commuting"] == "False"
    assert abs(float(rec["exponent"]) - _pair_goldens()["qcb"]) < 1e-5


def test_qcb_commuting_dual_path(capsys, tmp_path):
    c1 = _write_cov(tmp_path / "a.csv", np.diag([0.4, 0.0, 0.2]))
    c2 = _write_cov(tmp_path / "b.csv", np.diag([0.1, 0.3, 0.2]))
    _, fast, _ = _run(capsys, "qcb", "--cov1", c1, "--cov2", c2)
    _, slow, _ = _run(capsys, "qcb", "--cov1", c1, "--cov2", c2, "--method", "general")
    a, b = _records(fast)[0], _records(slow)[0]
    assert a["method"] == "commuting"
    assert abs(float(a["exponent"]) - float(b["exponent"])) < 1e-8


def test_qcb_identical_files_and_errors(capsys, tmp_path):
    c1 = _write_cov(tmp_path / "a.csv", [[0.3, 0.1], [0.1, 0.2]])
    code, out, _ = _run(capsys, "qcb", "--cov1", c1, "--cov2", c1)
    assert code == EXIT_OK and abs(float(_records(out)[0]["exponent"])) < 1e-14
    c3 = _write_cov(tmp_path / "c.csv", np.eye(3) * 0.1)
    assert _run(capsys, "qcb", "--cov1", c1, "--cov2", c3)[0] == EXIT_DOMAIN
    bad = tmp_path / "bad.csv"
    bad.write_text("0.1,0\n0,oops\n")
    code, _, err = _run(capsys, "qcb", "--cov1", c1, "--cov2", str(bad))
    assert code == EXIT_DOMAIN and "row 2, column 2" in err


def test_qcb_from_source_configs(capsys, tmp_path):
    s1 = tmp_path / "s1.cfg"
    s1.write_text("kind = gaussian_blob\nn = 65\nextent = 4\nsx = 0.5\nsy = 0.25\n")
    s2 = tmp_path / "s2.cfg"
    s2.write_text("kind = gaussian_blob\nn = 65\nextent = 4\nsx = 0.25\nsy = 0.5\n")
    code, out, _ = _run(capsys, "qcb", "--source1", str(s1), "--source2", str(s2), "--sigma", "5")
    assert code == EXIT_OK and float(_records(out)[0]["exponent"]) > 0


def test_config_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("v1x = 0\nv1y = 0\nv2x = 0.25\nv2y = 0.15\nchi = 0.2\n")
    _, out, _ = _run(capsys, "subdiff", "--config", str(cfg))
    assert float(_records(out)[0]["xi_q"]) == pytest.approx(0.4 * 0.04)
    _, out, _ = _run(capsys, "subdiff", "--config", str(cfg), "--chi", "0.1")
    assert float(_records(out)[0]["xi_q"]) == pytest.approx(0.4 * 0.01)
    cfg.write_text("bogus = 1\n")
    assert _run(capsys, "subdiff", "--config", str(cfg), *SCEN)[0] == EXIT_USAGE


def test_out_uses_env_directory(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(sio.OUTPUT_DIR_ENV, str(tmp_path))
    _, out, _ = _run(capsys, "subdiff", *SCEN, "--out", "res.csv")
    assert (tmp_path / "res.csv").read_text() == out


def test_simulate_small_run(capsys):
    args = ["simulate", "--v1x", "0", "--v1y", "0", "--v2x", "0.25", "--v2y", "0.15",
            "--trials", "2000", "--seed", "5", "--n-list", "100,400"]
    code, out1, err = _run(capsys, *args)
    assert code == EXIT_OK and "slope" in err
    _, out2, _ = _run(capsys, *args)
    assert _body(out1) == _body(out2)
    recs = _records(out1)
    assert [r["N"] for r in recs] == ["100", "400"]
    assert float(recs[0]["xi_theory"]) == pytest.approx(0.004)
    assert "# seed: 5" in out1
    assert _run(capsys, *args[:-2], "--n-list", "100,200")[0] == EXIT_DOMAIN


def test_oracle_check_negative_control(capsys):
    code, out, err = _run(capsys, "oracle-check", "--perturb", "1e-3")
    assert code == EXIT_ACCEPT
    assert "FAIL: pair" in err


def test_oracle_check_passes_and_matches_goldens(capsys):
    code, out, err = _run(capsys, "oracle-check")
    assert code == EXIT_OK
    recs = _records(out)
    assert len(recs) == 20 and max(float(r["deviation"]) for r in recs) < 1e-5
    with open(DATA / "fock_goldens_v1.csv") as fh:
        gold = list(csv.DictReader(l for l in fh if not l.startswith("#")))
    for r, g in zip(recs, gold):
        assert r["qcb_fock"] == g["qcb_fock"]


def test_oracle_cutoff_sweep_monotone(capsys):
    code, _, err = _run(capsys, "oracle-check", "--cutoff-sweep", "3,4,6,8")
    devs = [float(line.split()[-1]) for line in err.splitlines() if line.startswith("cutoff")]
    assert len(devs) == 4 and all(a > b for a, b in zip(devs, devs[1:]))
