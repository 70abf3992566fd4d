import numpy as np
import pytest
from hypothesis import given, strategies as st

from subrayleigh import io as sio
from subrayleigh.diffraction import CovMatrix


def test_fmt_round_trips_17_digits():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, 18 - 12 * 2**0.5):
        assert float(sio.fmt(x)) == x
    assert sio.fmt(3) == "3" and sio.fmt(True) == "True" and sio.fmt(float("nan")) == "nan"


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=8))
def test_csv_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "rows.csv"
    man = sio.RunManifest("test", {"a": 1}, seed=3, version="0", timestamp="t")
    sio.write_csv(path, ["k", "v"], [(i, v) for i, v in enumerate(values)], man)
    meta, rows = sio.read_csv_rows(path)
    assert meta["command"] == "test" and meta["seed"] == "3"
    assert rows[0][1] == ["k", "v"]
    assert [float(r[1]) for _, r in rows[1:]] == values


def test_manifest_header_prefixed():
    lines = sio.RunManifest("qcb", {"b": 2, "a": 1}, None, "1.0", "now").header_lines()
    assert all(line.startswith("# ") for line in lines)
    assert lines[-2:] == ["# param a: 1", "# param b: 2"]


def test_cov_csv_round_trip(tmp_path):
    cov = CovMatrix(np.array([[0.3, 0.1], [0.1, 0.2]]), I0=0.5)
    path = tmp_path / "c.csv"
    sio.write_cov_csv(path, cov)
    back = sio.read_cov_csv(path)
    assert np.array_equal(back.entries, cov.entries)
    assert back.basis == cov.basis and back.I0 == 0.5


def test_parse_error_reports_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# basis: hg\n1,2\n3,x\n")
    with pytest.raises(sio.ParseError, match="row 3, column 2"):
        sio.read_cov_csv(path)
    path.write_text("1,2\n3\n")
    with pytest.raises(sio.ParseError, match="row 2"):
        sio.read_cov_csv(path)
    path.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(sio.ParseError, match="square"):
        sio.read_cov_csv(path)
    path.write_text("1,nan\n0,1\n")
    with pytest.raises(sio.ParseError, match="non-finite"):
        sio.read_cov_csv(path)


def test_pixel_csv(tmp_path):
    path = tmp_path / "px.csv"
    path.write_text("0,1,0\n1,2,1\n")
    assert sio.read_pixel_csv(path).shape == (2, 3)


def test_config_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nv1x = 1.5\ntheta-0: pi/8  # trailing\n\n")
    assert sio.read_config(path) == {"v1x": "1.5", "theta_0": "pi/8"}
    path.write_text("just words\n")
    with pytest.raises(sio.ParseError, match="line 1"):
        sio.read_config(path)


def test_output_dir_env(monkeypatch):
    monkeypatch.setenv(sio.OUTPUT_DIR_ENV, "/tmp/somewhere")
    assert sio.output_dir() == "/tmp/somewhere"
    monkeypatch.delenv(sio.OUTPUT_DIR_ENV)
    assert sio.output_dir("x") == "x"


def test_cov_csv_accepts_hg_alias(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text("# basis: hg\n0.5,0.1\n0.1,0.3\n")
    assert sio.read_cov_csv(f).basis == "hermite_gauss"
