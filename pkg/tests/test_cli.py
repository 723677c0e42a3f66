import json
import subprocess
import sys

import numpy as np
import pytest

from cmrf.cli import main
from cmrf.config import BUNDLED, ConfigError, ExperimentConfig, load_config
from cmrf.io import load_json, read_chain, read_csv
from cmrf.lattice import Lattice
from cmrf.priors import PriorSpec
from cmrf.samplers import SamplerConfig

from oracles import dense_normal_equations_map
from cmrf.forward import build_operator


def small_config(tmp_path, **changes):
    cfg = load_config("deconv1d").to_dict()
    cfg["grids"] = {"simulation": None, "data": [20], "reconstruction": [40]}
    cfg["kernel_s"] = 1 / 100
    cfg["n_chains"] = 2
    cfg["output_dir"] = str(tmp_path / "run")
    cfg["sampler"].update(n_adapt=100, n_samples=200, thin=10)
    cfg["optimizer"]["max_iter"] = 2000
    cfg["diagnostics"] = {"kde_nodes": [5, 20], "kde_points": 50, "max_lag": 10, "squared_v": False}
    cfg["realize"] = {"n": 50, "h": 1 / 49, "spde_shape": [30], "spde_ell": 1e-3}
    for key, value in changes.items():
        cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def run_all(path, workers=1):
    for cmd in ("simulate", "map"):
        assert main([cmd, "--config", str(path)]) == 0
    assert main(["sample", "--config", str(path), "--workers", str(workers)]) == 0
    assert main(["diagnose", "--config", str(path)]) == 0
    assert main(["realize", "--config", str(path)]) == 0


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig.from_json(small_config(tmp_path).read_text())
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert cfg.replace(output_dir="elsewhere").digest() == cfg.digest()
    assert cfg.replace(master_seed=5).digest() != cfg.digest()


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    cfg = load_config(name)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_bundled_1d_parameters():
    cfg = load_config("deconv1d")
    assert cfg.data_grid.shape == (67,) and cfg.recon_grid.shape == (200,)
    assert cfg.kernel_s == pytest.approx(1 / 500) and cfg.noise_sigma == 0.01
    assert cfg.sampler.thin == 10


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    d = load_config("deconv1d").to_dict()
    d["surprise"] = 1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)
    d = load_config("deconv1d").to_dict()
    d["grids"]["data"] = [8, 8]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_pipeline_outputs(tmp_path):
    path = small_config(tmp_path)
    run_all(path)
    out = tmp_path / "run"
    m = load_json(out / "measurement.json")
    assert len(m["y"]) == 20
    assert read_csv(out / "map_u.csv")["u"].shape == (40,)
    chain = read_chain(out / "chain_000")
    assert chain.samples.shape == (20, 40)  # 200 sweeps thinned by 10
    assert chain.seed == 1 and read_chain(out / "chain_001").seed == 2
    diag = read_csv(out / "diagnostics.csv")
    assert diag["psrf"].shape == (40,)
    kde = read_csv(out / "kde.csv")
    assert kde["x"].shape == (100,)
    walks = read_csv(out / "walks.csv")
    assert walks["walk2_cauchy"][0] == 0.0 and walks["walk2_cauchy"][1] == 0.0
    assert set(read_csv(out / "spde.csv")) == {"x", "spde_cauchy", "spde_gaussian"}
    manifest = load_json(out / "manifest.json")
    assert set(manifest["commands"]) == {"simulate", "map", "sample", "diagnose", "realize"}
    assert manifest["commands"]["sample"]["seeds"] == [1, 2]


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    pa, pb = small_config(a), small_config(b)
    run_all(pa, workers=1)
    run_all(pb, workers=2)
    files = sorted(p.name for p in (a / "run").iterdir())
    assert files == sorted(p.name for p in (b / "run").iterdir())
    for name in files:
        assert (a / "run" / name).read_bytes() == (b / "run" / name).read_bytes(), name


def test_gaussian_map_matches_linear_solve(tmp_path):
    prior = {"variant": "gauss_diff1", "sigma0": 10.0, "sigma1": 0.1}
    path = small_config(tmp_path, prior=prior)
    d = json.loads(path.read_text())
    d["optimizer"].update(grad_tol=1e-10, relative_tol=False)
    path.write_text(json.dumps(d))
    assert main(["simulate", "--config", str(path)]) == 0
    assert main(["map", "--config", str(path)]) == 0
    out = tmp_path / "run"
    y = np.array(load_json(out / "measurement.json")["y"])
    F = build_operator(Lattice.line(20), Lattice.line(40), 1 / 100).matrix.toarray()
    ref = dense_normal_equations_map(F, y, 0.01, 10.0, 0.1)
    assert np.max(np.abs(read_csv(out / "map_u.csv")["u"] - ref)) <= 1e-6


def test_noiseless_simulation(tmp_path):
    path = small_config(tmp_path, noise_sigma=0.0)
    assert main(["simulate", "--config", str(path)]) == 0
    # inference with sigma = 0 is a config error
    assert main(["map", "--config", str(path)]) == 2


def test_missing_inputs_exit_2(tmp_path, capsys):
    path = small_config(tmp_path)
    assert main(["map", "--config", str(path)]) == 2
    assert "simulate" in capsys.readouterr().err
    assert main(["simulate", "--config", str(path)]) == 0
    assert main(["sample", "--config", str(path)]) == 2
    assert main(["diagnose", "--config", str(path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2


def test_single_chain_diagnose_is_config_error(tmp_path):
    path = small_config(tmp_path, n_chains=1)
    for cmd in ("simulate", "map", "sample"):
        assert main([cmd, "--config", str(path)]) == 0
    assert main(["diagnose", "--config", str(path)]) == 2


def test_numeric_failure_exit_3(tmp_path):
    # a vanishing noise level overflows the likelihood at the start point
    path = small_config(tmp_path, noise_sigma=1e-200)
    assert main(["simulate", "--config", str(path)]) == 0
    assert main(["map", "--config", str(path)]) == 3


def test_cli_overrides(tmp_path):
    path = small_config(tmp_path)
    out = tmp_path / "other"
    assert main(["simulate", "--config", str(path), "--out", str(out), "--seed", "9"]) == 0
    assert load_json(out / "manifest.json")["commands"]["simulate"]["seeds"] == [9]


def test_console_entry_point(tmp_path):
    path = small_config(tmp_path)
    res = subprocess.run([sys.executable, "-m", "cmrf.cli", "realize", "--config", str(path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "walks.csv" in res.stdout
