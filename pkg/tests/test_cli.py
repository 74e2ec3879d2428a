import json

import pytest

from chaoslab.cli import EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_NUMERIC, EXIT_OK, main
from chaoslab.fieldgen import GridField
from chaoslab.rng import SEED_ENV


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV, raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out.strip(), out.err


def test_moments_berry_csv_and_summary(capsys, tmp_path):
    code, out, _ = run(capsys, "moments", "--model", "berry", "--d", "2", "--q", "8..16")
    assert code == EXIT_OK
    assert out.startswith("slope=-")
    assert "radial=" in out and "plane/(2pi)^2=" in out
    rows = (tmp_path / "chaoslab_moments.csv").read_bytes().decode().split("\r\n")
    assert rows[0] == "d,model,q,r_max,signed,value,err"
    manifest = json.loads((tmp_path / "chaoslab_moments.csv.manifest.json").read_text())
    run_cfg = manifest["config"]["run"]
    assert run_cfg["q"] == "8..16" and run_cfg["seed"] == 0 and run_cfg["domain"] == "ball"


def test_moments_divergent_exit_code(capsys):
    code, _, err = run(capsys, "moments", "--model", "berry", "--d", "2", "--q", "2..4")
    assert code == EXIT_NUMERIC and "diverges" in err


def test_variance_json_embeds_full_config(capsys, tmp_path):
    code, out, _ = run(capsys, "variance", "--model", "exponential", "--phi", "hermite:1", "--t", "1,2",
                       "-o", "v.json")
    assert code == EXIT_OK and "loglog_slope=" in out
    rep = json.loads((tmp_path / "v.json").read_text())
    cfg = rep["config"]["run"]
    assert cfg["t"] == [1.0, 2.0] and cfg["n_reps"] == 2000 and cfg["seed"] == 0
    assert rep["config"]["model"] == {"alpha": 1.0, "d": 1, "kind": "exponential"}
    assert rep["results"][0]["sigma2"] == pytest.approx(2 * (1 - 1 + 2.718281828459045 ** -1))


def test_config_file_and_flag_precedence(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"model": "exponential", "t": [3.0], "phi": "hermite:2",
                                                 "seed": 5}))
    code, _, _ = run(capsys, "variance", "--config", "c.json", "--phi", "hermite:1", "-o", "o.json")
    assert code == EXIT_OK
    cfg = json.loads((tmp_path / "o.json").read_text())["config"]["run"]
    assert cfg["phi"] == "hermite:1" and cfg["t"] == [3.0] and cfg["seed"] == 5


@pytest.mark.parametrize("payload", [{"bogus": 1}, {"schema_version": 99}, {"command": "clt"}, [1, 2]])
def test_bad_config_files(capsys, tmp_path, payload):
    (tmp_path / "c.json").write_text(json.dumps(payload))
    code, _, err = run(capsys, "variance", "--config", "c.json")
    assert code == EXIT_CONFIG and "configuration error" in err


@pytest.mark.parametrize("argv", [
    ["moments", "--model", "nope"],
    ["variance", "--phi", "wavelet:3"],
    ["field", "--model", "berry", "--d", "1"],
    ["variance", "--seed", "-3"],
    ["clt", "--n-reps", "1"],
    ["variance", "--model", "berry", "--d", "2", "--alpha", "1.0"],
    ["variance", "--t", "abc"],
])
def test_configuration_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == EXIT_CONFIG


def test_env_seed_override(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "41")
    code, _, _ = run(capsys, "field", "--model", "exponential", "--d", "1", "--n", "32", "--seed", "3")
    assert code == EXIT_OK
    gf = GridField.from_bytes((tmp_path / "chaoslab_field.bin").read_bytes())
    assert gf.seed == 41 and gf.values.shape == (32,)
    man = json.loads((tmp_path / "chaoslab_field.bin.manifest.json").read_text())
    assert man["config"]["run"]["seed"] == 41


def test_field_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "field", "--model", "berry", "--d", "2", "--n", "4", "--K", "32",
                     "--format", "csv")
    assert code == EXIT_OK
    assert (tmp_path / "chaoslab_field.csv").read_bytes().decode().startswith("x0,x1,value\r\n")


def test_clt_excluded_case_is_recorded(capsys, tmp_path):
    code, out, err = run(capsys, "clt", "--model", "berry", "--d", "2", "--phi", "hermite:3", "--t", "2",
                         "--n-reps", "4", "--K", "32")
    assert code == EXIT_OK
    assert "excluded case for the Berry field" in err
    rep = json.loads((tmp_path / "chaoslab_clt.json").read_text())
    assert rep["warnings"] and "excluded case" in rep["warnings"][0]
    assert rep["config"]["run"]["carrier"] == "planewave"


def test_clt_thread_invariance(capsys, tmp_path):
    base = ["clt", "--model", "exponential", "--phi", "hermite:2", "--t", "4", "--n-reps", "30"]
    run(capsys, *base, "--threads", "1", "-o", "a.json")
    run(capsys, *base, "--threads", "2", "-o", "b.json")
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert a["results"] == b["results"]


def test_ascl_and_contractions(capsys, tmp_path):
    code, out, _ = run(capsys, "ascl", "--T", "50", "--horizons", "10", "--g", "cos,one")
    assert code == EXIT_OK and "nu(cos)=" in out
    rows = json.loads((tmp_path / "chaoslab_ascl.json").read_text())["results"]
    assert {r["T"] for r in rows} == {10.0, 50.0}
    code, out, _ = run(capsys, "contractions", "--t", "2", "--k1", "1", "--k2", "2", "--n-samples", "1000")
    assert code == EXIT_OK and out.startswith("mean(t=2)=")


def test_contractions_inconclusive_exit_4(capsys):
    code, out, _ = run(capsys, "contractions", "--model", "berry", "--d", "2", "--phi", "coeffs:0,0,1",
                       "--t", "4", "--m", "3", "--n-samples", "2000")
    assert code == EXIT_INCONCLUSIVE and "inconclusive" in out


def test_conditions(capsys):
    code, out, _ = run(capsys, "conditions", "--model", "berry", "--d", "3")
    assert code == EXIT_OK
    assert "cond5 delta=1 pass" in out and "cond6 alpha=2 pass" in out
