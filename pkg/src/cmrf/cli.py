"""Command-line harness: ``cmrf simulate|map|sample|diagnose|realize``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

import cmrf
from cmrf import _backend
from cmrf.config import ConfigError, ExperimentConfig, load_config
from cmrf.diagnostics import DiagnosticsReport, kde, silverman_bandwidth
from cmrf.forward import (Measurement, Phantom2D, build_operator, phantom_on, simulate_data,
                          test_function_1d)
from cmrf.io import dump_json, load_json, read_chain, read_csv, write_chain, write_csv
from cmrf.lattice import Lattice
from cmrf.optimize import lbfgs_map
from cmrf.posterior import Posterior
from cmrf.realizations import NoiseSpec, normalize_max_abs, random_walk_1d, spde_realization
from cmrf.samplers import SamplerConfig, sample

log = logging.getLogger("cmrf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

MEASUREMENT = "measurement.json"
MAP_FIELD = "map_u.csv"


class InputError(ConfigError):
    """A required input file of the run directory is missing or unreadable."""


def _phantom(cfg: ExperimentConfig):
    return test_function_1d if cfg.phantom == "test_function_1d" else Phantom2D()


def _coords(lattice: Lattice):
    if lattice.dims == 1:
        return ["x"], [lattice.axis_coords(0)]
    xy = lattice.coords()
    return ["x", "y"], [xy[:, 0], xy[:, 1]]


def _write_field(path, lattice: Lattice, names, values):
    head, cols = _coords(lattice)
    write_csv(path, head + list(names), cols + [np.asarray(v, dtype=np.float64) for v in values])


def _read_field(path, lattice: Lattice, name: str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing input {path}; run the preceding command first")
    u = read_csv(path)[name]
    if u.shape[0] != lattice.size:
        raise InputError(f"{path} does not match the reconstruction grid")
    return u


def _load_measurement(out: Path) -> Measurement:
    path = out / MEASUREMENT
    if not path.is_file():
        raise InputError(f"missing input {path}; run `cmrf simulate` first")
    return Measurement.from_dict(load_json(path))


def build_posterior(cfg: ExperimentConfig, m: Measurement) -> Posterior:
    if m.grid != cfg.data_grid:
        raise InputError("measurement grid does not match the config")
    if cfg.noise_sigma <= 0:
        raise ConfigError("inference needs noise_sigma > 0")
    F = build_operator(cfg.data_grid, cfg.recon_grid, cfg.kernel_s)
    return Posterior(F, m.y, cfg.noise_sigma, cfg.prior)


def _update_manifest(out: Path, cfg: ExperimentConfig, command: str, seeds, outputs):
    path = out / "manifest.json"
    manifest = load_json(path) if path.is_file() else {}
    if manifest.get("config_sha256") != cfg.digest():
        manifest = {}
    manifest.update({
        "config_sha256": cfg.digest(),
        "versions": {"cmrf": cmrf.__version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "backend": _backend.BACKEND,
    })
    manifest.setdefault("commands", {})[command] = {
        "seeds": [int(s) for s in seeds], "outputs": sorted(outputs)}
    dump_json(path, manifest)


# -- commands ----------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path) -> list[str]:
    phantom = _phantom(cfg)
    m = simulate_data(phantom, cfg.data_grid, cfg.kernel_s, cfg.noise_sigma, cfg.master_seed,
                      sim_grid=cfg.sim_grid)
    dump_json(out / MEASUREMENT, m.to_dict())
    _write_field(out / "phantom.csv", cfg.recon_grid, ["value"], [phantom_on(phantom, cfg.recon_grid)])
    return [MEASUREMENT, "phantom.csv"]


def cmd_map(cfg: ExperimentConfig, out: Path) -> list[str]:
    p = build_posterior(cfg, _load_measurement(out))
    res = lbfgs_map(p, None, cfg.optimizer)
    if not res.converged:
        log.warning("MAP did not converge: %s", res.message)
    _write_field(out / MAP_FIELD, cfg.recon_grid, ["u"], [res.u_map])
    g = res.grad_norm_trace
    write_csv(out / "map_trace.csv", ["iteration", "grad_norm", "log10_grad_norm", "objective"],
              [np.arange(g.shape[0]), g, np.log10(np.maximum(g, 1e-300)), res.objective_trace])
    dump_json(out / "map.json", {"iterations": res.iterations, "converged": res.converged,
                                 "message": res.message,
                                 "log_posterior": -float(res.objective_trace[-1])})
    return [MAP_FIELD, "map_trace.csv", "map.json"]


def _chain_seeds(cfg: ExperimentConfig):
    return [cfg.master_seed + i for i in range(cfg.n_chains)]


def _run_chain(config_json: str, y, u0, seed: int):
    cfg = ExperimentConfig.from_json(config_json)
    m = Measurement(np.asarray(y), cfg.noise_sigma, cfg.master_seed, cfg.data_grid, cfg.kernel_s)
    p = build_posterior(cfg, m)
    scfg = SamplerConfig.from_dict({**cfg.sampler.to_dict(), "seed": seed})
    return sample(p, u0, scfg)


def cmd_sample(cfg: ExperimentConfig, out: Path, workers: int | None = None) -> list[str]:
    m = _load_measurement(out)
    build_posterior(cfg, m)  # validate before spawning workers
    u0 = _read_field(out / MAP_FIELD, cfg.recon_grid, "u")
    seeds = _chain_seeds(cfg)
    workers = workers or min(len(seeds), os.cpu_count() or 1)
    args = [(cfg.to_json(), m.y, u0, s) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_run_chain, *zip(*args)))
    else:
        chains = [_run_chain(*a) for a in args]
    outputs = []
    for i, chain in enumerate(chains):
        stem = f"chain_{i:03d}"
        write_chain(out / stem, chain)
        outputs += [f"{stem}.bin", f"{stem}.json"]
    return outputs


def cmd_diagnose(cfg: ExperimentConfig, out: Path) -> list[str]:
    chains = []
    for i in range(cfg.n_chains):
        stem = out / f"chain_{i:03d}"
        if not Path(f"{stem}.json").is_file():
            raise InputError(f"missing chain {stem}; run `cmrf sample` first")
        chains.append(read_chain(stem))
    if len(chains) < 2:
        raise ConfigError("PSRF needs at least two chains")
    opts = cfg.diagnostics
    report = DiagnosticsReport.from_chains(chains, opts["max_lag"], opts["squared_v"])
    report.to_csv(out / "diagnostics.csv")
    report.to_json(out / "diagnostics.json")
    _write_field(out / "cm.csv", cfg.recon_grid, ["cm", "variance"], [report.mean, report.variance])
    outputs = ["diagnostics.csv", "diagnostics.json", "cm.csv"]
    if opts["kde_nodes"]:
        pooled = np.concatenate([c.samples for c in chains])
        nodes, xs, dens = [], [], []
        for k in opts["kde_nodes"]:
            v = pooled[:, k]
            bw = silverman_bandwidth(v)
            grid = np.linspace(v.min() - 3 * bw, v.max() + 3 * bw, opts["kde_points"])
            nodes.append(np.full(grid.shape[0], k))
            xs.append(grid)
            dens.append(kde(v, grid, bw))
        write_csv(out / "kde.csv", ["node", "x", "density"],
                  [np.concatenate(nodes), np.concatenate(xs), np.concatenate(dens)])
        outputs.append("kde.csv")
    return outputs


def cmd_realize(cfg: ExperimentConfig, out: Path) -> list[str]:
    r = cfg.realize
    names, cols = [], []
    for order in r["orders"]:
        for fam in r["families"]:
            u = random_walk_1d(order, NoiseSpec(fam, r["noise_scale"], cfg.master_seed), r["n"], r["h"])
            names.append(f"walk{order}_{fam}")
            cols.append(normalize_max_abs(u) if r["normalize"] else u)
    write_csv(out / "walks.csv", ["x"] + names, [np.arange(r["n"]) * r["h"]] + cols)
    lattice = Lattice(tuple(r["spde_shape"]))
    fields = [spde_realization(lattice, r["spde_ell"], NoiseSpec(fam, r["noise_scale"], cfg.master_seed),
                               h=r["spde_h"], normalize=r["normalize"])
              for fam in r["families"]]
    _write_field(out / "spde.csv", lattice, [f"spde_{fam}" for fam in r["families"]], fields)
    return ["walks.csv", "spde.csv"]


COMMANDS = {"simulate": cmd_simulate, "map": cmd_map, "sample": cmd_sample,
            "diagnose": cmd_diagnose, "realize": cmd_realize}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmrf", description="Bayesian deconvolution with Cauchy Markov random field priors.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help="config JSON file or bundled name (deconv1d, deconv2d_desk, deconv2d_full)")
        sp.add_argument("--out", help="run directory (default: output_dir of the config)")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--chains", type=int, help="override n_chains")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "sample":
            sp.add_argument("--workers", type=int, help="worker processes (default: one per chain)")
    return parser


def run(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.chains is not None:
        changes["n_chains"] = args.chains
    if args.out is not None:
        changes["output_dir"] = args.out
    if changes:
        cfg = cfg.replace(**changes)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "sample":
        outputs = cmd_sample(cfg, out, args.workers)
        seeds = _chain_seeds(cfg)
    else:
        outputs = COMMANDS[args.command](cfg, out)
        seeds = [cfg.master_seed]
    _update_manifest(out, cfg, args.command, seeds, outputs)
    for name in outputs:
        print(out / name)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as err:
        print(f"cmrf: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as err:
        print(f"cmrf: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
