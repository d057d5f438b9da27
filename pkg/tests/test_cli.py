import hashlib
import json
import math
import subprocess
import sys

import pytest

from prodlimits.cli import ConfigError, ExperimentConfig, load_config, main
from prodlimits.law import law_rank_one, law_symmetric, law_to_recipe

SMALL = {"n": 64, "ns": [8, 16], "replicates": 2000, "resolution": 64, "ys": [0.0, 1.0],
         "y": 1.0, "burn_in": 30}


def write_config(path, **fields):
    data = {**SMALL, **fields}
    path.write_text(json.dumps(data))
    return str(path)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = ExperimentConfig()
        assert ExperimentConfig.from_json(cfg.to_json()) == cfg

    def test_manifest_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.json", out=str(tmp_path / "o")))
        assert main(["check", "--config", str(tmp_path / "c.json"), "--quiet"]) == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert ExperimentConfig.from_dict(manifest["config"]) == cfg

    def test_layering(self, tmp_path):
        path = write_config(tmp_path / "c.json", seed=5, n=10)
        env = {"PRODLIMITS_N": "12", "PRODLIMITS_METHOD": "tilted"}
        cfg = load_config(path, env=env, overrides={"seed": 9, "out": None})
        assert (cfg.n, cfg.method, cfg.seed, cfg.replicates) == (12, "tilted", 9, 2000)

    @pytest.mark.parametrize("bad", [{"bogus": 1}, {"seed": -1}, {"n": 0},
                                     {"method": "x"}, {"law": {"kind": "nope"}}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**ExperimentConfig().to_dict(), **bad})


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


class TestExitCodes:
    def test_no_command(self, capsys):
        assert main([]) == 2

    def test_missing_config(self, tmp_path, capsys):
        assert main(["check", "--config", str(tmp_path / "none.json")]) == 2
        assert _error_line(capsys)["exit"] == 2

    def test_bad_json(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text("{not json")
        assert main(["check", "--config", str(tmp_path / "c.json")]) == 2

    def test_unknown_key(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.json", colour="blue")
        assert main(["check", "--config", path]) == 2
        assert _error_line(capsys)["error"] == "ConfigError"

    def test_bad_threads(self, tmp_path, capsys):
        assert main(["check", "--threads", "0", "--out", str(tmp_path)]) == 2

    def test_numeric_failure(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.json", y=2.0, n=16, out=str(tmp_path / "o"))
        assert main(["tilt", "--config", path]) == 3
        line = _error_line(capsys)
        assert line["exit"] == 3 and line["error"] == "SpectralRangeError"
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_degenerate_variance(self, tmp_path, capsys):
        path = write_config(tmp_path / "c.json", law=law_to_recipe(law_symmetric()),
                            out=str(tmp_path / "o"))
        assert main(["berry-esseen", "--config", path]) == 3


class TestCommands:
    def test_check_on_point_mass(self, tmp_path):
        path = write_config(tmp_path / "c.json", law=law_to_recipe(law_symmetric()),
                            out=str(tmp_path / "o"))
        assert main(["check", "--config", path, "--quiet"]) == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["arithmetic_warning"] is True

    def test_spectral_on_rank_one(self, tmp_path):
        path = write_config(tmp_path / "c.json", law=law_to_recipe(law_rank_one()),
                            resolution=512, out=str(tmp_path / "o"))
        assert main(["spectral", "--config", path, "--quiet"]) == 0
        gamma = json.loads((tmp_path / "o" / "spectral.json").read_text())["cumulants"]["gamma"]
        assert gamma == pytest.approx([math.log(2), 1.0, 0.0, -2.0, 0.0], abs=0.05)
        assert (tmp_path / "o" / "pressure.csv").exists()

    @pytest.mark.parametrize("command,files", [
        ("simulate", ["batch.csv"]),
        ("berry-esseen", ["berry_esseen.csv"]),
        ("mdr", ["mdr.csv"]),
        ("variance", ["variance.csv"]),
        ("regularity", ["regularity.csv", "regularity.json"]),
        ("tilt", ["tilted.csv", "tail.json"]),
    ])
    def test_outputs(self, tmp_path, command, files):
        path = write_config(tmp_path / "c.json", out=str(tmp_path / "o"),
                            law=law_to_recipe(law_rank_one()))
        assert main([command, "--config", path, "--quiet"]) == 0
        for f in ["manifest.json", *files]:
            assert (tmp_path / "o" / f).exists()

    def test_mdp(self, tmp_path):
        path = write_config(tmp_path / "c.json", out=str(tmp_path / "o"), ns=[64, 256],
                            law=law_to_recipe(law_rank_one()))
        assert main(["mdp", "--config", path, "--quiet"]) == 0
        assert (tmp_path / "o" / "mdp.csv").read_text().count("\n") == 3

    def test_summary_on_stdout(self, tmp_path, capsys):
        assert main(["check", "--out", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["command"] == "check" and "report.json" in out["files"]


class TestDeterminism:
    @pytest.mark.parametrize("command,csv", [("simulate", "batch.csv"), ("tilt", "tilted.csv"),
                                             ("variance", "variance.csv")])
    def test_thread_count_and_rerun(self, tmp_path, command, csv):
        hashes = []
        for i, threads in enumerate([1, 4, 1]):
            out = tmp_path / f"o{i}"
            path = write_config(tmp_path / "c.json", replicates=40_000, n=24, out=str(out),
                                y=0.5, law=law_to_recipe(law_rank_one()))
            assert main([command, "--config", path, "--threads", str(threads), "--quiet"]) == 0
            hashes.append(sha(out / csv))
        assert len(set(hashes)) == 1

    def test_env_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PRODLIMITS_THREADS", "3")
        path = write_config(tmp_path / "c.json", out=str(tmp_path / "a"))
        assert main(["simulate", "--config", path, "--quiet"]) == 0
        monkeypatch.delenv("PRODLIMITS_THREADS")
        path = write_config(tmp_path / "c.json", out=str(tmp_path / "b"))
        assert main(["simulate", "--config", path, "--quiet"]) == 0
        assert sha(tmp_path / "a" / "batch.csv") == sha(tmp_path / "b" / "batch.csv")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "prodlimits", "check", "--out", str(tmp_path),
                           "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "report.json").exists()
    proc = subprocess.run([sys.executable, "-m", "prodlimits", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "berry-esseen" in proc.stdout
