import csv
import json
import shutil
import subprocess

import pytest

from hmmqcd.cli import main


def g(mean, var=1.0):
    return {"kind": "gaussian", "mean": mean, "variance": var}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def config(tmp_path, **kw):
    doc = {"version": 1, "scenario": "illustrative", "output": {"directory": str(tmp_path / "out")}}
    doc.update(kw)
    return write(tmp_path / "cfg.json", doc)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


class TestBuild:
    def test_periodic(self, tmp_path, capsys):
        spec = write(tmp_path / "p.json", {"kind": "periodic", "f": [g(0), g(1)], "g": [g(2), g(3), g(4)],
                                            "p_g": [1, 0, 0], "rho": 0.01})
        assert main(["build", spec, "--out", str(tmp_path / "m.json")]) == 0
        assert "N=5" in capsys.readouterr().out
        model = json.loads((tmp_path / "m.json").read_text())
        assert model["n_alpha"] == 2 and model["n_beta"] == 3

    def test_multistream(self, tmp_path, capsys):
        spec = write(tmp_path / "m.json", {"kind": "multistream", "f_alpha": [g(0)] * 3, "f_beta": [g(1)] * 3,
                                            "p_subset": {"1": 0.5, "7": 0.5}, "rho": 0.01})
        assert main(["build", spec, "--out", str(tmp_path / "out.json")]) == 0
        assert "N=8" in capsys.readouterr().out

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["build", str(bad), "--out", str(tmp_path / "m.json")]) == 2
        assert not (tmp_path / "m.json").exists()

    def test_schema_error_reports_pointer(self, tmp_path, capsys):
        spec = write(tmp_path / "p.json", {"kind": "periodic", "f": [g(0)], "g": [g(1)], "p_g": [1], "rho": 2})
        assert main(["build", spec]) == 2
        assert "/rho" in capsys.readouterr().err


class TestSimulate:
    def test_horizon_one(self, tmp_path, capsys):
        assert main(["simulate", "--config", config(tmp_path, detector={"horizon": 1}), "--seed", "1"]) == 0
        rows = read_rows(tmp_path / "out" / "trajectory.csv")
        assert len(rows) == 1 and rows[0]["k"] == "1"
        assert len(read_rows(tmp_path / "out" / "trace.csv")) == 1

    def test_h_one_is_censored(self, tmp_path, capsys):
        assert main(["simulate", "--config", config(tmp_path, detector={"h": 1.0, "horizon": 200}),
                     "--seed", "2"]) == 0
        assert "censored" in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path):
        cfg = config(tmp_path, detector={"horizon": 300}, seed=77)
        main(["simulate", "--config", cfg])
        first = (tmp_path / "out" / "trace.csv").read_bytes()
        main(["simulate", "--config", cfg])
        assert (tmp_path / "out" / "trace.csv").read_bytes() == first

    def test_random_seed_is_reported(self, tmp_path, capsys):
        assert main(["simulate", "--config", config(tmp_path, detector={"horizon": 5})]) == 0
        assert "seed: " in capsys.readouterr().out


class TestDetect:
    def test_alarm(self, tmp_path, capsys):
        obs = tmp_path / "obs.csv"
        obs.write_text("k,y\n" + "".join(f"{k},{3.0 if k > 5 else 0.5}\n" for k in range(1, 60)))
        problem = {"kind": "periodic", "f": [g(0.5)], "g": [g(3.0)], "p_g": [1], "rho": 0.01}
        cfg = write(tmp_path / "cfg.json", {"version": 1, "problem": problem})
        assert main(["detect", "--config", cfg, "--observations", str(obs), "--out", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "alarm tau=" in out
        assert 6 <= int(out.split("tau=")[1].split()[0]) <= 8
        assert len(read_rows(tmp_path / "out" / "trace.csv")) == 59

    def test_missing_observations(self, tmp_path):
        assert main(["detect", "--config", config(tmp_path)]) == 2


class TestSweep:
    def test_single_point(self, tmp_path):
        cfg = config(tmp_path, experiment={"h_grid": [0.5], "runs": 1}, detector={"horizon": 500}, seed=1)
        assert main(["sweep", "--config", cfg]) == 0
        assert len(read_rows(tmp_path / "out" / "sweep.csv")) == 1
        doc = json.loads((tmp_path / "out" / "sweep.json").read_text())
        assert doc["rows"][0]["runs"] == 1 and doc["seed"] == 1

    def test_empty_grid(self, tmp_path):
        cfg = config(tmp_path, experiment={"h_grid": []})
        assert main(["sweep", "--config", cfg]) == 2
        assert not (tmp_path / "out" / "sweep.csv").exists()

    def test_unknown_field(self, tmp_path, capsys):
        assert main(["sweep", "--config", config(tmp_path, bogus=1)]) == 2
        assert main(["sweep", "--config", config(tmp_path, experiment={"runz": 3})]) == 2
        assert "/experiment" in capsys.readouterr().err

    def test_two_model_sources(self, tmp_path):
        assert main(["sweep", "--config", config(tmp_path, problem_path="x.json")]) == 2

    def test_table_batch(self, tmp_path):
        cfg = config(tmp_path, scenario="frontier", experiment={"h_grid": [0.5, 0.9], "runs": 2},
                     detector={"horizon": 300}, seed=3, output={"directory": str(tmp_path / "out"),
                                                                "formats": ["csv"]})
        assert main(["sweep", "--config", cfg]) == 0
        rows = read_rows(tmp_path / "out" / "sweep.csv")
        assert len(rows) == 16 and rows[0]["tag"] == "blue_x"
        assert not (tmp_path / "out" / "sweep.json").exists()

    def test_table_batch_only_for_sweep(self, tmp_path):
        assert main(["simulate", "--config", config(tmp_path, scenario="frontier")]) == 2

    def test_workers_invariant(self, tmp_path):
        base = dict(experiment={"h_grid": [0.5, 0.8], "runs": 12}, detector={"horizon": 500}, seed=4)
        main(["sweep", "--config", config(tmp_path, **base), "--format", "csv"])
        one = (tmp_path / "out" / "sweep.csv").read_bytes()
        main(["sweep", "--config", config(tmp_path, **base), "--format", "csv", "--workers", "2"])
        assert (tmp_path / "out" / "sweep.csv").read_bytes() == one


class TestCostCurve:
    def test_zero_penalty(self, tmp_path):
        cfg = config(tmp_path, experiment={"h_grid": [0.3, 0.6], "runs": 4}, detector={"c": 0, "horizon": 300},
                     seed=5)
        assert main(["cost-curve", "--config", cfg]) == 0
        rows = read_rows(tmp_path / "out" / "cost_curve.csv")
        assert [r["cost"] for r in rows] == [r["pfa_frac"] for r in rows]


class TestOptimize:
    def test_frozen_rate(self, tmp_path):
        cfg = config(tmp_path, experiment={"n_steps": 1, "eta0": 0, "h0": 0.3}, detector={"horizon": 300},
                     seed=6)
        assert main(["optimize", "--config", cfg]) == 0
        doc = json.loads((tmp_path / "out" / "optimize.json").read_text())
        assert doc["h_star"] == pytest.approx(0.3)
        assert len(read_rows(tmp_path / "out" / "optimizer_trace.csv")) == 1

    def test_negative_rate_rejected(self, tmp_path):
        assert main(["optimize", "--config", config(tmp_path, experiment={"eta0": -1})]) == 2


@pytest.mark.skipif(shutil.which("hmmqcd") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["hmmqcd", "simulate", "--config", config(tmp_path, detector={"horizon": 10}),
                          "--seed", "0"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
