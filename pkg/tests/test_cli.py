import json
import subprocess
import sys

import numpy as np
import pytest

from mdra.cli import PRESETS, build_parser, main, resolve_run_config
from mdra.errors import MDRAError
from mdra.signals import read_dataset

FAST = ["--epochs", "1", "--L", "2", "--capacity", "2", "--fft", "false", "--batch-size", "16"]


@pytest.fixture
def periodic_file(tmp_path):
    path = tmp_path / "d.jsonl"
    assert main(["gen", "periodic", "--n-per-class", "6", "--base-length", "16", "--seed", "1",
                 "-o", str(path)]) == 0
    return path


@pytest.fixture
def trained_run(tmp_path, periodic_file):
    out = tmp_path / "run"
    assert main(["train", "--preset", "periodic", "-d", str(periodic_file), "-o", str(out),
                 "--max-outer-iters", "2", *FAST]) == 0
    return out


class TestGen:
    def test_periodic_count(self, tmp_path):
        path = tmp_path / "d.jsonl"
        assert main(["gen", "periodic", "--n-per-class", "100", "--seed", "1", "-o", str(path)]) == 0
        assert len(path.read_text().splitlines()) == 300

    def test_complex_periodic(self, tmp_path):
        path = tmp_path / "c.jsonl"
        assert main(["gen", "complex-periodic", "--n-per-type", "500", "--seed", "1", "-o", str(path)]) == 0
        data = read_dataset(path)
        assert len(data) == 1000 and {s.label for s in data} == {"A", "B"}

    def test_invalid_kind(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            main(["gen", "chirp", "-o", str(tmp_path / "x")])
        assert info.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_invalid_spec(self, tmp_path):
        assert main(["gen", "periodic", "--noise", "3", "-o", str(tmp_path / "x")]) == 2

    def test_idempotent(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for p in (a, b):
            main(["gen", "periodic", "--n-per-class", "3", "--seed", "4", "-o", str(p)])
        assert a.read_bytes() == b.read_bytes()


class TestIngest:
    def write_csv(self, path, rows, channels=4, seed=0):
        rng = np.random.default_rng(seed)
        data = np.column_stack([np.arange(rows) * 0.1, rng.normal(size=(rows, channels))])
        header = "time," + ",".join(f"c{i}" for i in range(channels))
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    def test_window_count(self, tmp_path):
        csv = tmp_path / "raw.csv"
        self.write_csv(csv, 1001)
        out = tmp_path / "w.jsonl"
        assert main(["ingest", str(csv), "--window", "512", "--slide", "8", "--threshold", "0",
                     "-o", str(out)]) == 0
        data = read_dataset(out)
        assert len(data) == 62
        assert all(s.values.shape == (512, 4) for s in data)

    def test_missing_file(self, tmp_path):
        assert main(["ingest", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "w.jsonl")]) == 2

    def test_too_short(self, tmp_path):
        csv = tmp_path / "raw.csv"
        self.write_csv(csv, 100)
        assert main(["ingest", str(csv), "-o", str(tmp_path / "w.jsonl")]) == 2


class TestTrain:
    def test_artifacts(self, trained_run):
        assert (trained_run / "checkpoint.json").exists()
        rows = (trained_run / "trace.tsv").read_text().splitlines()
        assert rows[0].startswith("iter\t") and len(rows) == 3

    def test_single_iteration(self, tmp_path, periodic_file):
        out = tmp_path / "one"
        assert main(["train", "--preset", "periodic", "-d", str(periodic_file), "-o", str(out),
                     "--max-outer-iters", "1", *FAST]) == 0
        assert len((out / "trace.tsv").read_text().splitlines()) == 2
        assert len(json.loads((out / "checkpoint.json").read_text())["trace"]) == 1

    def test_rerun_is_byte_identical(self, tmp_path, periodic_file, trained_run):
        out = tmp_path / "again"
        main(["train", "--preset", "periodic", "-d", str(periodic_file), "-o", str(out),
              "--max-outer-iters", "2", *FAST])
        assert (out / "checkpoint.json").read_bytes() == (trained_run / "checkpoint.json").read_bytes()

    def test_missing_dataset(self, tmp_path):
        assert main(["train", "--preset", "periodic", "-d", str(tmp_path / "x"), "-o", str(tmp_path)]) == 2

    def test_divergence_exit_code(self, tmp_path):
        path = tmp_path / "huge.jsonl"
        path.write_text(json.dumps({"id": 0, "values": [[1e200]] * 4}) + "\n")
        with np.errstate(all="ignore"):
            code = main(["train", "--preset", "periodic", "-d", str(path), "-o", str(tmp_path / "r"), *FAST])
        assert code == 3

    def test_config_file(self, tmp_path, periodic_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"K": 2, "max_outer_iters": 1, "epochs_per_outer": 1}))
        out = tmp_path / "cfgrun"
        assert main(["train", "--preset", "periodic", "--config", str(cfg), "-d", str(periodic_file),
                     "-o", str(out), "--L", "2", "--fft", "false", "--capacity", "1"]) == 0
        ck = json.loads((out / "checkpoint.json").read_text())
        assert ck["model"]["K"] == 2 and ck["config"]["hyper"]["theta0"] == 0.5

    def test_bad_config_key(self, tmp_path, periodic_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["train", "--preset", "periodic", "--config", str(cfg), "-d", str(periodic_file),
                     "-o", str(tmp_path / "r")]) == 2


class TestPrecedence:
    def test_preset_values(self):
        cfg = resolve_run_config("route")
        assert (cfg.hyper.K, cfg.hyper.theta0, cfg.hyper.nu0, cfg.hyper.lambda0) == (10, 10.0, 1.0, 5.0)
        assert (cfg.L, cfg.capacity, cfg.fft_style, cfg.cpx) == (4, 8, True, False)
        assert resolve_run_config("complex-periodic").hyper.theta0 == 1.0
        p = resolve_run_config("periodic")
        assert (p.hyper.K, p.hyper.theta0, p.hyper.nu0, p.hyper.lambda0) == (5, 0.5, 1.0, 0.01)

    def test_flags_over_config_over_preset(self):
        cfg = resolve_run_config("periodic", {"K": 3, "theta0": 2.0}, {"theta0": 7.0, "K": None})
        assert cfg.hyper.K == 3 and cfg.hyper.theta0 == 7.0 and cfg.hyper.lambda0 == 0.01

    def test_seed(self):
        assert resolve_run_config("periodic", None, {"seed": 9}).rng_seed == 9

    def test_without_preset(self):
        with pytest.raises(MDRAError):
            resolve_run_config(None, {"K": 2})
        cfg = resolve_run_config(None, {"K": 2, "theta0": 1, "nu0": 1, "lambda0": 1})
        assert cfg.hyper.K == 2

    def test_unknown_preset(self):
        with pytest.raises(MDRAError):
            resolve_run_config("nope")


class TestReport:
    def test_labeled(self, tmp_path, periodic_file, trained_run):
        out = tmp_path / "rep"
        assert main(["report", "-c", str(trained_run / "checkpoint.json"), "-d", str(periodic_file),
                     "-o", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert 0 <= rep["purity"] <= 1 and len(rep["assignments"]) == 18
        masses = [float(r.split("\t")[1]) for r in (out / "masses.tsv").read_text().splitlines()[1:]]
        assert abs(sum(masses) - 1) <= 1e-9
        emb = (out / "embedding.tsv").read_text().splitlines()
        assert emb[0].split("\t") == ["id", "x0", "x1", "assignment", "label"] and len(emb) == 19

    def test_unlabeled(self, tmp_path, periodic_file, trained_run):
        unlabeled = tmp_path / "u.jsonl"
        unlabeled.write_text("".join(
            json.dumps({"id": s.id, "values": s.values.tolist()}) + "\n" for s in read_dataset(periodic_file)
        ))
        out = tmp_path / "rep"
        assert main(["report", "-c", str(trained_run / "checkpoint.json"), "-d", str(unlabeled),
                     "-o", str(out), "--features", "h"]) == 0
        assert "purity" not in json.loads((out / "report.json").read_text())

    def test_size_mismatch(self, tmp_path, trained_run):
        other = tmp_path / "o.jsonl"
        main(["gen", "periodic", "--n-per-class", "2", "-o", str(other)])
        assert main(["report", "-c", str(trained_run / "checkpoint.json"), "-d", str(other),
                     "-o", str(tmp_path / "r")]) == 2


def test_mds_rgb(tmp_path, periodic_file, trained_run):
    out = tmp_path / "rgb.tsv"
    assert main(["mds", "-c", str(trained_run / "checkpoint.json"), "-d", str(periodic_file),
                 "--features", "h", "--rgb", "-o", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "id\tx\ty\tz\tr\tg\tb" and len(rows) == 19
    rgb = np.array([[float(v) for v in r.split("\t")[4:]] for r in rows[1:]])
    assert rgb.min() >= 0 and rgb.max() <= 1


def test_help_lists_presets():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    assert set(sub) == {"gen", "ingest", "train", "report", "mds"}
    for name, p in [("mdra", parser)] + list(sub.items()):
        text = p.format_help()
        for preset in PRESETS:
            assert preset in text, (name, preset)
    assert "--lambda0" in sub["train"].format_help()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mdra", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "complex-periodic" in res.stdout
