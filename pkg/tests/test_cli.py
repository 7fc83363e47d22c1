import json

import pytest

from randlegendre.cli import main
from randlegendre.config import ConfigError, from_dict, load, loads, shipped_configs

SMALL_DIRICHLET = {
    "model": {"kind": "dirichlet", "alphas": [5, 1, 2, 3]},
    "name": "small",
    "mc": {"enabled": True, "n": 4000, "seed": 17},
}


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def read_csv(path):
    return [line.split(",") for line in path.read_text().splitlines()]


class TestConfig:
    @pytest.mark.parametrize("name", shipped_configs())
    def test_round_trip(self, name):
        cfg = load(name)
        assert loads(cfg.dumps()).to_dict() == cfg.to_dict()

    def test_defaults(self):
        cfg = from_dict({"model": {"kind": "multinomial", "n": 10, "probs": [0.2, 0.3, 0.5]}})
        assert cfg.t_grid == [i / 10 for i in range(10)]
        assert cfg.M_list == [10, 20, 40, 80]
        assert cfg.to_dict()["schema_version"] == 1

    @pytest.mark.parametrize(
        "patch",
        [
            {"t_grid": []},
            {"t_grid": [0.5, 1.0]},
            {"M_list": [10, -1]},
            {"M_list": [10, 10]},
            {"mc": {"seed": -3}},
            {"mc": {"evaluator": "euler"}},
            {"mc": {"bogus": 1}},
            {"unknown": 1},
            {"schema_version": 2},
            {"model": {"kind": "beta"}},
            {"model": {"kind": "dirichlet"}},
            {"model": {"kind": "dirichlet", "alphas": [1, -1, 1, 1]}},
            {"output": {"formats": ["xlsx"]}},
        ],
    )
    def test_rejects(self, patch):
        raw = dict(SMALL_DIRICHLET, **patch)
        with pytest.raises(ConfigError):
            from_dict(raw)

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            loads("{not json")

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load("/nonexistent/config.json")


class TestValidate:
    @pytest.mark.parametrize("name, bound", [("example1.json", "1.0"), ("example2.json", "10.0"), ("example3.json", "14.0")])
    def test_bounded(self, capsys, name, bound):
        assert main(["validate", name]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == f"A-support bound: {bound}, PASS"

    def test_unbounded(self, capsys):
        assert main(["validate", "unbounded_multinormal.json"]) == 1
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "A-support bound: inf, FAIL"
        assert "UNBOUNDED A" in out

    def test_parse_error_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, dict(SMALL_DIRICHLET, t_grid=[]))
        assert main(["validate", path]) != 0
        assert "t_grid" in capsys.readouterr().err


class TestRun:
    def test_example1_tables(self, tmp_path, capsys):
        assert main(["run", "example1.json", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "expectation.csv")
        assert rows[0] == ["t", "M10", "M20", "M40", "M80", "MC"]
        assert rows[6][0] == "0.5" and rows[6][4] == "0.180172"
        assert (tmp_path / "expectation.csv").read_bytes().count(b"\r") == 0
        for name in ("variance.csv", "expectation.md", "variance.md", "stabilization.csv", "manifest.json"):
            assert (tmp_path / name).exists()

    def test_example2_variance_at_origin(self, tmp_path):
        cfg = load("example2.json")
        cfg.mc.enabled = False
        path = write_config(tmp_path, cfg.to_dict())
        assert main(["run", path, "--out", str(tmp_path / "o")]) == 0
        rows = read_csv(tmp_path / "o" / "variance.csv")
        assert rows[0] == ["t", "M10", "M20", "M40", "M80"]
        assert rows[1] == ["0", "2.1", "2.1", "2.1", "2.1"]

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path, SMALL_DIRICHLET)
        main(["run", path, "--out", str(tmp_path / "a")])
        main(["run", path, "--out", str(tmp_path / "b"), "--threads", "3"])
        for name in ("expectation.csv", "variance.csv", "expectation.md", "stabilization.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_reproduces_tables(self, tmp_path):
        path = write_config(tmp_path, SMALL_DIRICHLET)
        main(["run", path, "--out", str(tmp_path / "a"), "--seed", "99"])
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["seed"] == 99 and manifest["generator"] == "numpy.random.Philox"
        for key in ("numpy", "scipy", "package_version", "model", "validation", "cell_diagnostics", "wall_times_s"):
            assert key in manifest
        replay = write_config(tmp_path, manifest["config"], "replay.json")
        main(["run", replay, "--out", str(tmp_path / "b")])
        for name in ("expectation.csv", "variance.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unbounded_refused(self, tmp_path, capsys):
        assert main(["run", "unbounded_multinormal.json", "--out", str(tmp_path)]) == 3
        assert "UNBOUNDED" in capsys.readouterr().err
        assert not (tmp_path / "expectation.csv").exists()

    def test_unbounded_override(self, tmp_path):
        assert main(["run", "unbounded_multinormal.json", "--out", str(tmp_path), "--override-unbounded"]) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["validation"]["passed"] is False
        assert manifest["config"]["override_unbounded"] is True


class TestCompare:
    def test_refuses_without_mc(self, tmp_path, capsys):
        raw = dict(SMALL_DIRICHLET, mc={"enabled": False})
        assert main(["compare", write_config(tmp_path, raw), "--out", str(tmp_path)]) == 2
        assert "Monte Carlo" in capsys.readouterr().err

    def test_small_run(self, tmp_path, capsys):
        assert main(["compare", write_config(tmp_path, SMALL_DIRICHLET), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "comparison.csv").exists()
        header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
        assert header == "quantity,t,engine,mc,mc_se,ratio,flag"

    def test_example3_published_origin_flagged(self, tmp_path, capsys):
        assert main(["compare", "example3.json", "--out", str(tmp_path)]) == 0
        notes = (tmp_path / "comparison.md").read_text().split("Notes:")[1]
        assert "expectation t=0: published M80 value -2.01642 vs engine M80 -2" in notes
