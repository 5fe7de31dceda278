import csv
import json
import subprocess
import sys

import pytest
import yaml

from sddefeller.cli import SEED_ENV, list_catalog, main
from sddefeller.model import CONDITIONS, catalog_names


def write_config(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestCatalog:
    def test_listing(self, capsys):
        assert main(["catalog"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Condition legend:")
        for name in catalog_names():
            assert name in out
        assert main(["catalog"]) == 0
        assert capsys.readouterr().out == out

    def test_profiles(self):
        entries = {e["name"]: e for e in list_catalog()}
        assert set(entries) == set(catalog_names())
        assert all(set(e["profile"]) == set(CONDITIONS) for e in entries.values())
        assert entries["sgn-delay-drift"]["profile"]["1.4"] is False
        assert entries["sgn-delay-diffusion"]["profile"]["1.3"] is False

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "sddefeller", "catalog"], capture_output=True, text=True)
        assert res.returncode == 0 and "linear-delay" in res.stdout


class TestConfigErrors:
    def test_unknown_model(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.yaml", {"model": {"name": "foo"}})
        assert main(["--config", cfg, "--out", str(tmp_path / "o"), "simulate"]) == 2
        err = capsys.readouterr().err
        assert "foo" in err and "linear-delay" in err
        assert not (tmp_path / "o").exists()

    def test_unknown_key(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", {"modle": "brownian"})
        assert main(["--config", cfg, "simulate"]) == 2

    def test_kind_mismatch(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.yaml", {"kind": "feller"})
        assert main(["--config", cfg, "simulate"]) == 2
        assert "kind" in capsys.readouterr().err

    def test_bad_grid_and_yaml(self, tmp_path):
        bad = write_config(tmp_path / "g.yaml", {"grid": {"r": 1.0, "T": 1.0, "dt": 0.3}})
        assert main(["--config", bad, "--out", str(tmp_path / "o"), "simulate"]) == 2
        (tmp_path / "y.yaml").write_text("model: [unclosed\n")
        assert main(["--config", str(tmp_path / "y.yaml"), "simulate"]) == 2

    def test_bad_criterion_number(self, tmp_path):
        assert main(["--out", str(tmp_path), "acceptance", "11"]) == 2


SIM = {"grid": {"r": 1.0, "T": 2.0, "dt": 0.01}, "model": {"name": "linear-delay"}, "initial": 0.5,
       "simulate": {"backend": "girsanov", "times": [1.0, 2.0]}}


class TestRuns:
    def test_simulate_manifest(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.yaml", {**SIM, "kind": "simulate"})
        out = tmp_path / "o"
        assert main(["--config", cfg, "--out", str(out), "--replicas", "2000", "--seed", "5", "simulate"]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "simulate" and man["seed"] == 5 and man["config"]["replicas"] == 2000
        assert set(man["versions"]) >= {"sddefeller", "numpy", "scipy", "python"}
        assert man["outputs"] == ["simulate.csv"] and all(man["checks"].values())
        assert man["wall_time_s"] >= 0
        rows = read_rows(out / "simulate.csv")
        assert [float(r["t"]) for r in rows] == [1.0, 2.0]
        assert "martingale: PASS" in capsys.readouterr().out

    @pytest.mark.parametrize("backend", ["girsanov", "direct", "driftfree"])
    def test_rerun_bitwise_identical(self, tmp_path, backend):
        cfg = write_config(tmp_path / "c.yaml", {**SIM, "simulate": {"backend": backend, "times": [1.0, 2.0]}})
        for d in ("a", "b"):
            assert main(["--config", cfg, "--out", str(tmp_path / d), "--replicas", "1500", "simulate"]) == 0
        assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "c.yaml", SIM)
        monkeypatch.setenv(SEED_ENV, "77")
        assert main(["--config", cfg, "--out", str(tmp_path / "e"), "--replicas", "200", "simulate"]) == 0
        assert json.loads((tmp_path / "e" / "manifest.json").read_text())["seed"] == 77
        assert main(["--config", cfg, "--out", str(tmp_path / "f"), "--replicas", "200", "--seed", "3",
                     "simulate"]) == 0
        assert json.loads((tmp_path / "f" / "manifest.json").read_text())["seed"] == 3
        monkeypatch.setenv(SEED_ENV, "x")
        assert main(["--config", cfg, "--out", str(tmp_path / "g"), "simulate"]) == 2

    def test_feller_counterexample_floor(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", {
            "kind": "feller", "grid": {"r": 1.0, "T": 2.0, "dt": 0.01}, "model": "sgn-delay-drift",
            "feller": {"backend": "direct", "t": 2.0, "deltas": [1 / 64], "functions": ["ind[s=-1,c=0]"],
                       "expect": {"min_gap": 0.6}}})
        out = tmp_path / "o"
        assert main(["--config", cfg, "--out", str(out), "--replicas", "20000", "feller"]) == 0
        rows = read_rows(out / "gaps.csv")
        assert len(rows) == 1 and float(rows[0]["gap"]) > 0.6 and rows[0]["backend"] == "direct"

    def test_failing_check_exits_one(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.yaml", {
            "grid": {"r": 1.0, "T": 2.0, "dt": 0.01}, "model": "linear-delay", "initial": 0.5,
            "feller": {"backend": "girsanov", "deltas": [0.01], "functions": ["tanh[s=0,c=0]"],
                       "expect": {"min_gap": 0.6}}})
        assert main(["--config", cfg, "--out", str(tmp_path / "o"), "--replicas", "500", "feller"]) == 1
        assert "failing criterion: gap-floor" in capsys.readouterr().err
        assert (tmp_path / "o" / "gaps.csv").exists()

    def test_convergence_examples(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", {"convergence": {"family": "random", "budget": 200}})
        assert main(["--config", cfg, "--out", str(tmp_path), "convergence"]) == 0
        ex = read_rows(tmp_path / "examples.csv")
        assert len(ex) == 2
