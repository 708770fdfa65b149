"""End-to-end CLI tests run through the installed console script."""

import csv
import subprocess
import sys

import numpy as np
import pytest

TINY_CONFIG = """\
method:
  name: ln
  temperature: 1.0
  floor: 0.7
  sigma_mode: diagonal
data:
  kind: two_moons
  n: 40
  noise_std: 0.1
  validation_fraction: 0.25
  test_n: 20
noise:
  kind: symmetric
  rate: 0.25
model:
  hidden: [6]
  activation: tanh
optimizer:
  kind: sgd
  learning_rate: 0.1
  epochs: 8
experiment:
  seed: 11
  eval_every: 4
"""

SWEEP_CONFIG = TINY_CONFIG + """\
sweep:
  grid:
    method.floor: [0.5, 1.0]
  repeats: 2
"""


def run_cli(*argv, cwd=None):
    return subprocess.run([sys.executable, "-m", "logitnoise.cli", *argv],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_CONFIG)
    return path


class TestTrain:
    def test_train_writes_metrics_and_checkpoint(self, tmp_path, config_path):
        out = tmp_path / "out"
        proc = run_cli("train", "--config", str(config_path), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert "train ok" in proc.stdout
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "epoch"
        assert [r[0] for r in rows[1:]] == ["4", "8"]
        assert (out / "model.npz").exists()

    def test_reruns_are_byte_identical(self, tmp_path, config_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            proc = run_cli("train", "--config", str(config_path), "--out", str(out))
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        assert (outs[0] / "metrics.csv").read_bytes() == (outs[1] / "metrics.csv").read_bytes()
        assert (outs[0] / "model.npz").read_bytes() == (outs[1] / "model.npz").read_bytes()

    def test_set_overrides_take_effect(self, tmp_path, config_path):
        out = tmp_path / "out"
        proc = run_cli("train", "--config", str(config_path), "--out", str(out),
                       "--set", "optimizer.epochs=3", "--set", "experiment.eval_every=1")
        assert proc.returncode == 0, proc.stderr
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert [r[0] for r in rows[1:]] == ["1", "2", "3"]

    def test_default_out_dir_uses_env_root(self, tmp_path, config_path):
        env_root = tmp_path / "envruns"
        proc = subprocess.run(
            [sys.executable, "-m", "logitnoise.cli", "train", "--config", str(config_path)],
            capture_output=True, text=True,
            env={"LOGITNOISE_OUT": str(env_root), "PATH": "/usr/bin:/bin"},
        )
        assert proc.returncode == 0, proc.stderr
        assert (env_root / "tiny" / "metrics.csv").exists()


class TestErrorPaths:
    def test_missing_config_exits_2_and_names_the_path(self, tmp_path):
        proc = run_cli("train", "--config", str(tmp_path / "absent.yaml"))
        assert proc.returncode == 2
        assert "absent.yaml" in proc.stderr

    def test_unknown_key_exits_1_and_names_the_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("method:\n  name: ce\n  temprature: 2.0\n")
        proc = run_cli("train", "--config", str(path), "--out", str(tmp_path / "o"))
        assert proc.returncode == 1
        assert "method.temprature" in proc.stderr
        assert "temperature" in proc.stderr  # the message lists the valid keys

    def test_unknown_section_exits_1(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("methods:\n  name: ce\n")
        proc = run_cli("train", "--config", str(path))
        assert proc.returncode == 1
        assert "methods" in proc.stderr

    def test_bad_value_through_set_exits_1(self, tmp_path, config_path):
        proc = run_cli("train", "--config", str(config_path), "--out", str(tmp_path / "o"),
                       "--set", "method.floor=-1")
        assert proc.returncode == 1
        assert "floor" in proc.stderr
        assert "Traceback" not in proc.stderr

    def test_malformed_override_exits_1(self, config_path):
        proc = run_cli("train", "--config", str(config_path), "--set", "floor=-1")
        assert proc.returncode == 1
        assert "section.key" in proc.stderr

    def test_invalid_yaml_exits_1(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("method: [unclosed\n")
        proc = run_cli("train", "--config", str(path))
        assert proc.returncode == 1

    def test_missing_subcommand_exits_1(self):
        proc = run_cli()
        assert proc.returncode == 1

    def test_help_exits_0(self):
        proc = run_cli("--help")
        assert proc.returncode == 0
        for name in ("train", "sweep", "gradcheck", "hist", "curve", "datagen"):
            assert name in proc.stdout


class TestSweepCommand:
    def test_sweep_writes_tables(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        path.write_text(SWEEP_CONFIG)
        out = tmp_path / "out"
        proc = run_cli("sweep", "--config", str(path), "--out", str(out),
                       "--set", "optimizer.epochs=4")
        assert proc.returncode == 0, proc.stderr
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["config_index", "val_acc", "is_winner"]
        assert len(rows) == 3  # two grid points
        assert sum(int(r[2]) for r in rows[1:]) == 1
        with open(out / "winner_seeds.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["seed", "test_acc"]
        assert [r[0] for r in rows[1:]] == ["11", "12"]  # winner seed + consecutive


class TestGradcheckCommand:
    def test_quick_pass(self, tmp_path):
        out = tmp_path / "gc"
        proc = run_cli("gradcheck", "--methods", "ce,ls", "--trials", "5", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert "gradcheck ok" in proc.stdout
        text = (out / "gradcheck.txt").read_text()
        assert "ce" in text and "ls" in text and "[ok]" in text

    def test_negative_control_fails(self):
        proc = run_cli("gradcheck", "--methods", "ce", "--trials", "3", "--perturbation", "1e-3")
        assert proc.returncode == 1
        assert "FAIL" in proc.stdout + proc.stderr

    def test_unknown_method_exits_1(self):
        proc = run_cli("gradcheck", "--methods", "mystery")
        assert proc.returncode == 1
        assert "mystery" in proc.stderr


class TestHistCommand:
    def test_hist_writes_reports(self, tmp_path, config_path):
        out = tmp_path / "out"
        proc = run_cli("hist", "--config", str(config_path), "--out", str(out),
                       "--sigma-eval", "identity")
        assert proc.returncode == 0, proc.stderr
        with open(out / "residuals.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 30  # training-split examples
        assert (out / "histogram.csv").exists()

    def test_hist_rejects_non_ln_methods(self, tmp_path, config_path):
        proc = run_cli("hist", "--config", str(config_path), "--out", str(tmp_path / "o"),
                       "--set", "method.name=ce")
        assert proc.returncode == 1
        assert "ln" in proc.stderr


class TestCurveCommand:
    def test_curve_rows_match_points(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli("curve", "--floor", "0.5", "--points", "40", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        with open(out / "curve.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["residual", "loss", "grad"]
        assert len(rows) == 41
        # Spot-check the saturation plateau on the parsed values.
        r = np.array([float(row[1]) for row in rows[1:]])
        assert r.max() <= 1.0 + 1e-12

    def test_curve_validation(self, tmp_path):
        proc = run_cli("curve", "--floor", "-0.5", "--out", str(tmp_path / "o"))
        assert proc.returncode == 1
        proc = run_cli("curve", "--floor", "0.5", "--r-min", "2.0", "--r-max", "1.0")
        assert proc.returncode == 1


class TestDatagenCommand:
    def test_datagen_exports_three_csvs(self, tmp_path, config_path):
        out = tmp_path / "out"
        proc = run_cli("datagen", "--config", str(config_path), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        for name, want_rows in (("train", 30), ("val", 10), ("test", 20)):
            with open(out / f"{name}.csv", newline="") as fh:
                rows = list(csv.reader(fh))
            assert rows[0] == ["index", "x0", "x1", "clean_label", "noisy_label", "corrupted"]
            assert len(rows) == 1 + want_rows
