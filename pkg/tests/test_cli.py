import csv
import json

import pytest

from lossysim import cli, fixture_path


def run(tmp_path, *args, out="out"):
    code = cli.main([*args, "--out", str(tmp_path / out)])
    return code, tmp_path / out


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        code, _ = run(tmp_path, "sample", "--set", "nonsense=1")
        assert code == cli.EXIT_INVALID
        assert "unknown config keys" in capsys.readouterr().err

    def test_config_file_and_override(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"ns": [4], "ls": [0, 1, 2]}))
        code, out = run(tmp_path, "dsep-curve", "--config", str(path), "--set", "oracle=false")
        assert code == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["config"]["oracle"] is False and meta["config"]["ns"] == [4]
        assert len(meta["config_sha256"]) == 64 and "wall_clock_s" in meta and meta["version"]

    def test_bad_json_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{oops")
        assert run(tmp_path, "dsep-curve", "--config", str(path))[0] == cli.EXIT_INVALID


class TestCurves:
    def test_dsep_curve(self, tmp_path):
        code, out = run(tmp_path, "dsep-curve", "--set", "ns=[4, 1000]", "--set", "ls=[0,1,2,3,4,10]")
        assert code == 0
        rows = list(csv.DictReader((out / "dsep_curve.csv").open()))
        by = {(int(r["n"]), int(r["l"])): r for r in rows}
        assert float(by[(4, 2)]["d_sep"]) == pytest.approx(0.25)
        assert float(by[(4, 2)]["oracle"]) == pytest.approx(0.25)
        assert all(float(r["d_sep"]) == 0 for r in rows if r["l"] == "1")
        assert float(by[(1000, 10)]["d_sep"]) == pytest.approx(0.044139, abs=1e-6)
        assert float(by[(1000, 10)]["asymptotic"]) == 0.05
        assert by[(1000, 10)]["oracle"] == ""

    def test_beta_curve(self, tmp_path):
        code, out = run(tmp_path, "beta-curve")
        assert code == 0
        for r in csv.DictReader((out / "beta_curve.csv").open()):
            assert float(r["lower"]) <= float(r["beta"]) <= float(r["upper"])


class TestTvExperiment:
    def test_identity_two_photons(self, tmp_path):
        code, out = run(tmp_path, "tv-experiment", "--set", "n=2", "--set", "m=2", "--set", "l=2",
                        "--set", "unitary=identity", "--set", "trials=1")
        report = json.loads((out / "tv_report.json").read_text())
        assert code == 0 and report["trials"][0]["tv"] == pytest.approx(0.5)

    def test_single_survivor_is_exact(self, tmp_path):
        code, out = run(tmp_path, "tv-experiment", "--set", "n=3", "--set", "l=1", "--set", "trials=3")
        report = json.loads((out / "tv_report.json").read_text())
        assert code == 0 and report["max_tv"] <= 1e-12

    def test_twenty_unitaries(self, tmp_path):
        code, out = run(tmp_path, "tv-experiment", "--set", "n=4", "--set", "m=4", "--set", "l=2")
        report = json.loads((out / "tv_report.json").read_text())
        assert code == 0 and report["all_pass"] and len(report["trials"]) == 20

    def test_binomial_mode(self, tmp_path):
        code, out = run(tmp_path, "tv-experiment", "--set", "n=3", "--set", "eta=0.5", "--set", "trials=2")
        assert code == 0
        assert json.loads((out / "tv_report.json").read_text())["bound_kind"] == "beta_upper"

    def test_flag_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli.metrics, "d_sep_closed_form", lambda n, l: -1.0)
        code, out = run(tmp_path, "tv-experiment", "--set", "trials=1")
        assert code == cli.EXIT_FLAG
        assert json.loads((out / "meta.json").read_text())["exit_code"] == cli.EXIT_FLAG


class TestExtract:
    def test_fig10(self, tmp_path):
        code, out = run(tmp_path, "extract", str(fixture_path("fig10.json")))
        report = json.loads((out / "extract_report.json").read_text())
        assert code == 0 and report["s"] == 2
        assert report["verification"]["pass"]

    def test_fig11(self, tmp_path):
        code, out = run(tmp_path, "extract", str(fixture_path("fig11.json")), "--set", "trace=true")
        report = json.loads((out / "extract_report.json").read_text())
        expected = json.loads(fixture_path("fig13_expected.json").read_text())
        assert code == 0 and report["s"] == 3
        got = [(p["mode"], p["segment"], len(p["etas"])) for p in report["placement"]]
        assert got == [(p["mode"], p["segment"], p["count"]) for p in expected["placement"]]
        assert report["trace"][-1] == ["pull_layer", 3]
        residual = json.loads((out / "residual.json").read_text())
        assert sum(e["type"] == "loss" for e in residual["elements"]) == 6

    def test_single_beamsplitter(self, tmp_path):
        net = tmp_path / "one.json"
        net.write_text(json.dumps({"m": 2, "elements": [
            {"type": "bs", "modes": [0, 1], "theta": 0.7, "phi": 0.0, "eta_in": [0.5, 0.5]}]}))
        code, out = run(tmp_path, "extract", str(net))
        report = json.loads((out / "extract_report.json").read_text())
        assert code == 0 and report["s"] == 1 and report["residual_loss_elements"] == 0

    def test_parse_error_diagnostics(self, tmp_path, capsys):
        net = tmp_path / "bad.json"
        net.write_text('{"m": 2,\n "elements": [\n  {"type": "bs", "modes": [0, 5], "theta": 1}\n ]}')
        code, _ = run(tmp_path, "extract", str(net))
        err = capsys.readouterr().err
        assert code == cli.EXIT_INVALID and "line 3" in err and "element 0" in err


class TestSample:
    def test_meanfield_vacuum(self, tmp_path):
        code, out = run(tmp_path, "sample", "--set", "sampler=meanfield_binomial", "--set", "eta=0",
                        "--set", "n=3", "--set", "m=3", "--set", "n_samples=20")
        lines = (out / "samples.jsonl").read_text().splitlines()
        assert code == 0 and json.loads(lines[0])["record"] == "header"
        assert all(json.loads(x) == [0, 0, 0] for x in lines[1:]) and len(lines) == 21

    def test_exact_hom(self, tmp_path):
        code, out = run(tmp_path, "sample", "--set", "sampler=exact", "--set", "unitary=hom",
                        "--set", "n=2", "--set", "m=2", "--set", "n_samples=5000")
        rows = {r["outcome"]: int(r["count"]) for r in csv.DictReader((out / "summary.csv").open())}
        assert code == 0 and rows.get("[1,1]", 0) == 0 and sum(rows.values()) == 5000

    def test_same_seed_byte_identical(self, tmp_path):
        args = ["sample", "--set", "sampler=meanfield_fixed", "--set", "n=3", "--set", "m=4",
                "--set", "l=2", "--set", "n_samples=3000", "--set", "seed=11"]
        _, a = run(tmp_path, *args, out="a")
        _, b = run(tmp_path, *args, out="b")
        for name in ("samples.jsonl", "summary.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_network_sampler(self, tmp_path):
        code, out = run(tmp_path, "sample", "--set", "sampler=meanfield_network", "--set", "n=2",
                        "--set", f"network={json.dumps(str(fixture_path('fig10.json')))}", "--set", "n_samples=100")
        assert code == 0

    def test_cap_exit_code(self, tmp_path):
        code, _ = run(tmp_path, "sample", "--set", "sampler=exact", "--set", "n=5", "--set", "m=5")
        assert code == cli.EXIT_CAP

    def test_distinguishable(self, tmp_path):
        code, out = run(tmp_path, "sample", "--set", "sampler=distinguishable", "--set", "input=[1,1]",
                        "--set", "m=2", "--set", "unitary=hom", "--set", "n_samples=100")
        assert code == 0
