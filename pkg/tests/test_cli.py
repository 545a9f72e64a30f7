import json
import subprocess
import sys

import numpy as np
import pytest

from polytori import __version__
from polytori.cli import EXIT_INVARIANT, EXIT_OK, EXIT_PARSE, EXIT_VERIFY, main
from polytori.conical import tau
from polytori.cover import build_cycle_basis, period_coordinates
from polytori.elliptic import dedekind_eta
from polytori.qdiff import random_spec


@pytest.fixture(scope="module")
def spec():
    return random_spec(2, sigma=1j, rng=np.random.default_rng(1))


@pytest.fixture
def files(tmp_path, spec):
    paths = {
        "spec": tmp_path / "spec.json",
        "spec2": tmp_path / "spec2.json",
        "empty": tmp_path / "empty.json",
        "bad": tmp_path / "bad.json",
        "ok_ini": tmp_path / "ok.ini",
        "bad_ini": tmp_path / "bad.ini",
        "divisor": tmp_path / "divisor.json",
    }
    paths["spec"].write_text(spec.to_json())
    paths["spec2"].write_text(spec.translated(0.13 + 0.21j).to_json())
    paths["empty"].write_text(json.dumps({"sigma": [0, 1], "points": [], "orders": []}))
    paths["bad"].write_text(json.dumps({"sigma": [0, 1], "zeros": [[0.1, 0.1], [0.5, 0.5]], "poles": [[0.3, 0.2], [0.7, 0.1]]}))
    paths["ok_ini"].write_text("[run]\nresolution = 16\neigenvalues = 5\n")
    paths["bad_ini"].write_text("[run]\nresolution = 16\nfoo = 1\n")
    paths["divisor"].write_text(json.dumps({"sigma": [0, 1], "points": [[0.3, 0.3], [0.7, 0.6]], "orders": [0.25, -0.25]}))
    return {k: str(v) for k, v in paths.items()}


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version_via_console_entry():
    out = subprocess.run([sys.executable, "-m", "polytori.cli", "--version"], capture_output=True, text=True)
    if out.returncode != 0:
        out = subprocess.run(["polytori", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert __version__ in out.stdout


def test_periods_artifact(capsys, files, spec):
    code, out, _ = _run(capsys, ["periods", "--input", files["spec"]])
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["version"] == __version__
    assert doc["config"]["command"] == "periods"
    got = doc["result"]["periods"]
    expected = period_coordinates(build_cycle_basis(spec)).to_dict()
    assert set(got) == set(expected)
    for k in expected:
        assert np.allclose(got[k], expected[k], rtol=1e-13, atol=0)


def test_output_is_idempotent(tmp_path, files):
    path = tmp_path / "periods.json"
    assert main(["periods", "--input", files["spec"], "--output", str(path)]) == EXIT_OK
    first = path.read_bytes()
    assert main(["periods", "--input", files["spec"], "--output", str(path)]) == EXIT_OK
    assert path.read_bytes() == first


def test_tau_command(capsys, files, spec):
    code, out, _ = _run(capsys, ["tau", "--input", files["spec"]])
    assert code == EXIT_OK
    res = json.loads(out)["result"]
    assert abs(res["abs_tau"] / tau(spec)[1] - 1) < 1e-13


def test_det_formula_of_empty_divisor(capsys, files):
    code, out, _ = _run(capsys, ["det-formula", "--input", files["empty"]])
    assert code == EXIT_OK
    res = json.loads(out)["result"]
    assert res["area"] == 1.0
    assert abs(res["det_formula"] - abs(dedekind_eta(1j)) ** 4) < 1e-14
    assert abs(res["det_formula"] - 0.348300982) < 1e-9


def test_non_principal_divisor_is_an_invariant_error(capsys, files):
    code, _, err = _run(capsys, ["tau", "--input", files["bad"]])
    assert code == EXIT_INVARIANT
    assert "not principal" in err


def test_verify_rauch_passes_and_fails_with_tolerance(capsys, files):
    code, out, err = _run(capsys, ["verify", "rauch", "--input", files["spec"]])
    assert code == EXIT_OK
    (rep,) = json.loads(out)["result"]
    assert rep["passed"] is True
    assert "rauch" in err
    code, out, _ = _run(capsys, ["verify", "rauch", "--input", files["spec"], "--tolerance", "1e-30"])
    assert code == EXIT_VERIFY
    assert json.loads(out)["result"][0]["passed"] is False


def test_verify_all_suites(capsys, files):
    code, out, _ = _run(capsys, ["verify", "all", "--input", files["spec"]])
    assert code == EXIT_OK
    reports = json.loads(out)["result"]
    assert [r["suite"] for r in reports] == ["rauch", "v0-and-cone-values", "tau-omega-Q"]
    assert all(r["passed"] for r in reports)


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "nope", "--input", "SPEC"],
        ["spectrum", "--input", "EMPTY", "--resolution", "17"],
        ["spectrum", "--input", "EMPTY", "--config", "BAD_INI"],
        ["periods", "--input", "MISSING"],
    ],
)
def test_parse_errors(capsys, files, tmp_path, argv):
    subst = {"SPEC": files["spec"], "EMPTY": files["empty"], "BAD_INI": files["bad_ini"], "MISSING": str(tmp_path / "none.json")}
    code, _, err = _run(capsys, [subst.get(a, a) for a in argv])
    assert code == EXIT_PARSE
    assert err.startswith("error:")


def test_spectrum_csv_with_config(capsys, files):
    code, out, _ = _run(capsys, ["spectrum", "--input", files["empty"], "--config", files["ok_ini"]])
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("# polytori")
    assert lines[1].startswith("# config:")
    cfg = json.loads(lines[1][len("# config:") :])
    assert cfg["resolution"] == 16 and cfg["eigenvalues"] == 5
    assert lines[2] == "index,lambda,est_error"
    rows = [ln.split(",") for ln in lines[3:]]
    assert len(rows) == 6
    lam = np.array([float(r[1]) for r in rows])
    assert abs(lam[0]) < 1e-10
    assert np.allclose(lam[1:5], 4 * np.pi**2, rtol=0.05)


def test_troyanov_csv(capsys, files):
    code, out, _ = _run(capsys, ["troyanov", "--input", files["divisor"], "--grid", "6"])
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[1].startswith("# config:")
    assert lines[2].startswith("# cones:")
    meta = json.loads(lines[2][len("# cones:") :])
    assert [c["beta"] for c in meta["cones"]] == [0.25, -0.25]
    assert lines[3] == "x,y,density"
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[4:]])
    assert data.shape == (36, 3)
    assert np.all(data[:, 2] > 0)


def test_det_ratio_of_translated_spec(capsys, files):
    code, out, _ = _run(capsys, ["det-ratio", "--input", files["spec"], "--input2", files["spec2"], "--resolution", "32"])
    assert code == EXIT_OK
    res = json.loads(out)["result"]
    assert abs(res["ratio"] - 1) < 0.02


def test_polyakov_command(capsys, files):
    code, out, err = _run(capsys, ["polyakov", "--resolution", "32", "--tolerance", "0.5"])
    assert code == EXIT_OK
    assert json.loads(out)["result"]["passed"] is True
    assert "polyakov" in err
