"""Command-line runner: validation, outputs, manifests and reproducibility."""
import hashlib
import json

import pytest

from podes import cli

TINY = {
    "solve-ivp": ["--n", "20,40", "--draws", "3", "--save-draws"],
    "solve-dde": ["--n", "41", "--draws", "2"],
    "solve-pde": ["--grid", "6x8", "--draws", "2"],
    "solve-mbvp": ["--n", "30", "--L", "40", "--burn-in", "10", "--chains", "2"],
    "infer-heat": ["--grid", "5x6", "--L", "10", "--burn-in", "5"],
    "infer-dde": ["--n", "60", "--L", "3", "--burn-in", "2"],
    "convergence": ["--n", "20,40,80", "--draws", "2"],
}


def run_cli(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def data_files(out_dir):
    return sorted(p for p in out_dir.iterdir() if not p.name.endswith(".manifest.json"))


class TestValidation:
    def test_seed_is_mandatory(self, tmp_path, capsys):
        code, _, err = run_cli(["solve-ivp", "--out", str(tmp_path)], capsys)
        assert code == 2
        report = json.loads(err)
        assert report["status"] == "error"
        assert [e["field"] for e in report["errors"]] == ["seed"]
        assert not any(tmp_path.iterdir())

    def test_every_violation_is_reported(self, capsys):
        code, _, err = run_cli(["solve-mbvp", "--L", "0", "--xi", "2", "--ladder-low", "0"],
                               capsys)
        fields = {e["field"] for e in json.loads(err)["errors"]}
        assert code == 2 and fields == {"seed", "L", "xi", "ladder_low"}

    @pytest.mark.parametrize("args,field", [
        (["convergence", "--n", "50,100"], "n"),
        (["convergence", "--problem", "lane_emden"], "problem"),
        (["solve-ivp", "--problem", "heat"], "problem"),
        (["solve-ivp", "--problem", "nope"], "problem"),
        (["solve-ivp", "--family", "matern"], "family"),
        (["infer-heat", "--solver", "crank"], "solver"),
        (["infer-heat", "--grid", "8by25"], "grid"),
    ])
    def test_bad_fields(self, args, field, capsys):
        code, _, err = run_cli(args + ["--seed", "1"], capsys)
        assert code == 2
        assert field in {e["field"] for e in json.loads(err)["errors"]}

    def test_unknown_config_keys(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 1, "colour": "blue", "draws": "many"}))
        code, _, err = run_cli(["solve-ivp", "--config", str(cfg)], capsys)
        fields = {e["field"] for e in json.loads(err)["errors"]}
        assert code == 2 and {"colour", "draws"} <= fields

    def test_unreadable_config(self, tmp_path, capsys):
        code, _, err = run_cli(["solve-ivp", "--config", str(tmp_path / "missing.json")],
                               capsys)
        assert code == 2 and json.loads(err)["errors"][0]["field"] == "config"


class TestOutputs:
    @pytest.mark.parametrize("experiment", sorted(TINY))
    def test_tiny_run_writes_files_with_manifests(self, experiment, tmp_path, capsys):
        code, out, _ = run_cli([experiment, "--seed", "3", "--out", str(tmp_path)]
                               + TINY[experiment], capsys)
        assert code == 0
        files = json.loads(out)["files"]
        assert files and all(f.startswith(str(tmp_path)) for f in files)
        for path in data_files(tmp_path):
            manifest = json.loads(path.with_name(path.name + ".manifest.json").read_text())
            assert manifest["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
            assert manifest["seed"] == 3 and manifest["experiment"] == experiment
            assert len(manifest["config_hash"]) == 64 and manifest["version"]

    @pytest.mark.parametrize("experiment", ["solve-ivp", "solve-mbvp", "infer-heat"])
    def test_reruns_are_byte_identical(self, experiment, tmp_path, capsys):
        for name in ("a", "b"):
            run_cli([experiment, "--seed", "5", "--out", str(tmp_path / name)]
                    + TINY[experiment], capsys)
        a, b = data_files(tmp_path / "a"), data_files(tmp_path / "b")
        assert [p.name for p in a] == [p.name for p in b]
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_thread_count_does_not_change_results(self, tmp_path, capsys, monkeypatch):
        args = ["solve-ivp", "--seed", "2", "--n", "30", "--draws", "6", "--save-draws"]
        run_cli(args + ["--out", str(tmp_path / "serial")], capsys)
        monkeypatch.setenv("PODES_THREADS", "4")
        run_cli(args + ["--out", str(tmp_path / "threads")], capsys)
        for pa, pb in zip(data_files(tmp_path / "serial"), data_files(tmp_path / "threads")):
            assert pa.read_bytes() == pb.read_bytes()

    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 4, "n": [20], "draws": 5}))
        code, _, _ = run_cli(["solve-ivp", "--config", str(cfg), "--draws", "2",
                              "--out", str(tmp_path / "o")], capsys)
        summary = json.loads((tmp_path / "o" / "sinusoid_ivp_summary.json").read_text())
        assert code == 0 and summary["grids"][0]["draws"] == 2
        manifest = json.loads((tmp_path / "o" / "sinusoid_ivp_summary.json.manifest.json")
                              .read_text())
        assert manifest["config"]["params"]["draws"] == 2

    def test_chain_csv_header(self, tmp_path, capsys):
        run_cli(["solve-mbvp", "--seed", "1", "--out", str(tmp_path)] + TINY["solve-mbvp"],
                capsys)
        header = (tmp_path / "mbvp_chain.csv").read_text().splitlines()[0]
        assert header == "iteration,chain,temperature,u_a,log_lik,accepted"

    def test_benchmark_reports_ratios(self, tmp_path, capsys):
        code, _, _ = run_cli(["bench-scaling", "--seed", "0", "--n", "100,200", "--repeats",
                              "1", "--out", str(tmp_path)], capsys)
        report = json.loads((tmp_path / "bench_scaling.json").read_text())
        assert code == 0 and len(report["ratios"]) == 1 and report["ratios"][0] > 0


def test_config_hash_depends_on_every_field():
    base = cli.resolve("solve-ivp", {}, {"seed": 1})
    other = cli.resolve("solve-ivp", {}, {"seed": 1, "draws": 7})
    reseeded = cli.resolve("solve-ivp", {}, {"seed": 2})
    assert len({base.config_hash, other.config_hash, reseeded.config_hash}) == 3
