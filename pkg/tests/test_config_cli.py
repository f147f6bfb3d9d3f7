import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from xorgame.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, main
from xorgame.config import ConfigError, RunConfig
from xorgame.tables import read_table

FAST = ["--set", "instances=40", "--set", "instances_per_setting=10"]


def files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


# -- configuration --------------------------------------------------------------

def test_defaults_mirror_experiment():
    cfg = RunConfig()
    assert (cfg.test_transmission, cfg.ancilla_transmission, cfg.visibility) == (0.35, 0.35, 0.94)
    assert (cfg.instances, cfg.instances_per_setting, cfg.mean_counts) == (240, 60, 500.0)
    assert cfg.lam == 1.0 and cfg.sigma is None and cfg.purity is None
    assert cfg.purity_floor == pytest.approx(0.545, abs=1e-15)


def test_exactly_one_decoherence_field():
    with pytest.raises(ConfigError):
        RunConfig(sigma=0.1, purity=0.9)
    snap = RunConfig(purity=0.8).snapshot()
    assert snap["purity"] == 0.8 and "sigma" not in snap and "lambda" not in snap
    assert snap["derived_purity"] == 0.8
    assert snap["derived_lambda"] == pytest.approx(math.sqrt((0.8 - 0.545) / (2 * 0.35 * 0.65)))
    assert snap["derived_sigma"] == pytest.approx(math.sqrt(-2 * math.log(snap["derived_lambda"])))
    assert RunConfig(sigma=0.2).with_decoherence(**{"lambda": 0.5}).lam == 0.5


@pytest.mark.parametrize("kw", [
    dict(visibility=1.5), dict(instances=100), dict(counts_mode="burst"), dict(rng="MT"),
    dict(eta_00=0.0), dict(purity=0.5), dict(sigma=-1.0), dict(workers=0), dict(test_transmission=1.0,
                                                                                 ancilla_transmission=0.0),
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_text_round_trip(tmp_path):
    cfg = RunConfig(purity=0.7123456789012345, seed=5, rng="Philox", eta_10=0.83, output_dir="o")
    path = tmp_path / "c.txt"
    cfg.write(path)
    assert RunConfig.from_file(path) == cfg
    assert RunConfig.from_text(cfg.to_text()).to_text() == cfg.to_text()


def test_parse_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_text("nonsense")
    with pytest.raises(ConfigError):
        RunConfig.from_text("bogus = 1")
    with pytest.raises(ConfigError):
        RunConfig.from_text("seed = 1\nseed = 2")
    with pytest.raises(ConfigError):
        RunConfig.from_text("visibility = high")
    assert RunConfig.from_text("# comment\nlambda = 0.5  # inline\n").lam == 0.5


def test_generators_are_independent_streams():
    cfg = RunConfig()
    a = cfg.generator(0, 1).random(4)
    assert np.array_equal(a, cfg.generator(0, 1).random(4))
    assert not np.array_equal(a, cfg.generator(0, 2).random(4))
    assert not np.array_equal(a, cfg.replace(seed=1).generator(0, 1).random(4))


# -- CLI ------------------------------------------------------------------------

def test_analytic_headline(tmp_path, capsys):
    assert main(["analytic", "--out", str(tmp_path)]) == 0
    meta, cols, rows = read_table(tmp_path / "analytic.csv")
    by_label = {r[0]: r for r in rows}
    assert float(by_label["configured"][cols.index("pwin_lambda")]) == pytest.approx(0.71385, abs=1e-12)
    assert float(by_label["pure_visibility_0.95"][cols.index("pwin_lambda")]) == pytest.approx(0.716125, abs=1e-12)
    assert meta["reference_max_pwin"] == "0.71619999999999995"
    assert meta["config.visibility"] == "0.93999999999999995"
    assert "xorgame_version" in meta
    assert "0.7162" in capsys.readouterr().out


def test_analytic_ideal_and_classical(tmp_path):
    out = tmp_path / "ideal"
    assert main(["analytic", "--out", str(out), "--set", "test_transmission=0.5", "--set",
                 "ancilla_transmission=0.5", "--set", "visibility=1"]) == 0
    _, cols, rows = read_table(out / "analytic.csv")
    assert float(rows[0][cols.index("pwin_lambda")]) == 0.75
    out = tmp_path / "classical"
    assert main(["analytic", "--out", str(out), "--set", "lambda=0"]) == 0
    _, cols, rows = read_table(out / "analytic.csv")
    assert float(rows[0][cols.index("pwin_lambda")]) == 0.5


def test_run_is_deterministic_across_workers(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", "--out", str(a), *FAST]) == 0
    assert main(["run", "--out", str(b), *FAST]) == 0
    assert main(["run", "--out", str(c), "--workers", "3", *FAST]) == 0
    assert files(a) == files(b) == files(c)
    assert set(files(a)) == {"run_record.json", "instances.csv"}


def test_run_classical_mode_is_half(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--set", "lambda=0"]) == 0
    meta, cols, rows = read_table(tmp_path / "instances.csv")
    rates = np.array([float(r[cols.index("win_rate")]) for r in rows])
    assert abs(rates.mean() - 0.5) < 3 * rates.std(ddof=1) / math.sqrt(len(rates))
    assert meta["config.lambda"] == "0"


def test_purity_sweep_endpoints(tmp_path):
    assert main(["purity-sweep", "--out", str(tmp_path), *FAST, "--set", "purity_points=3"]) == 0
    _, cols, rows = read_table(tmp_path / "purity_sweep.csv")
    model = [float(r[cols.index("model")]) for r in rows]
    assert float(rows[0][0]) == pytest.approx(0.545, abs=1e-15)
    assert model[0] == 0.5
    assert model[-1] == pytest.approx(0.71385, abs=1e-12)
    perfect = [float(r[cols.index("model_perfect_visibility")]) for r in rows]
    assert perfect[-1] == pytest.approx(0.7275, abs=1e-12)


def test_confidence_and_calibrate_outputs(tmp_path):
    assert main(["confidence", "--out", str(tmp_path), "--set", "repetitions=5", "--set", "max_events=60"]) == 0
    meta, cols, rows = read_table(tmp_path / "confidence.csv")
    assert meta["quantile_method"] == "midpoint"
    assert len(rows) == 60
    assert main(["calibrate", "--out", str(tmp_path)]) == 0
    _, cols, rows = read_table(tmp_path / "calibration.csv")
    est = {r[0]: float(r[1]) for r in rows}
    assert abs(est["hom_visibility"] - 0.94) < 0.02
    for name in ("hom_scan.csv", "phase_scan.csv", "efficiency_scan.csv"):
        assert (tmp_path / name).exists()


def test_config_file_seed_and_env(tmp_path, monkeypatch):
    cfgfile = tmp_path / "cfg.txt"
    RunConfig(instances=40, instances_per_setting=10, seed=11).write(cfgfile)
    env_out = tmp_path / "env"
    monkeypatch.setenv("XORGAME_OUT", str(env_out))
    assert main(["run", "--config", str(cfgfile)]) == 0
    assert (env_out / "instances.csv").exists()
    flag_out = tmp_path / "flag"
    assert main(["run", "--config", str(cfgfile), "--seed", "12", "--out", str(flag_out)]) == 0
    meta, _, _ = read_table(flag_out / "instances.csv")
    assert meta["config.seed"] == "12"
    assert files(env_out)["instances.csv"] != files(flag_out)["instances.csv"]
    assert main(["write-config", "--config", str(cfgfile), "--out", str(tmp_path / "w")]) == 0
    assert RunConfig.from_file(tmp_path / "w" / "config.txt").seed == 11


def test_exit_codes(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--set", "visibility=2"]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path), "--set", "purity=0.5"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.txt")]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["analytic", "--out", str(blocker / "sub")]) == EXIT_IO
    assert main(["calibrate", "--out", str(tmp_path), "--set", "phase_span=3"]) == EXIT_NUMERIC


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "xorgame", "analytic", "--out", str(tmp_path)],
                          capture_output=True, text=True, env={**os.environ})
    assert proc.returncode == 0, proc.stderr
    assert "0.71385" in proc.stdout
