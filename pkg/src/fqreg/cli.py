"""Command line interface: ``fqreg fit | simulate | report | basis``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .exceptions import ConfigError, FQRError
from .gibbs import run_chains
from .inference import pointwise_summary, simultaneous_band, summarize
from .io import (
    canonical_json, digest, export_draws_csv, fmt, ingest, read_curves_csv,
    read_draws, write_bands_csv, write_curves_csv, write_design_csv,
    write_flags_csv, write_geweke_csv, write_matrix_csv, write_summary_csv,
    write_draws,
)
from .simgen import (
    REPORT_FIELDS, generate_dataset, get_setting, replicate_seeds,
    run_simulation_study, true_effect_curve,
)
from .wavelet import WaveletSpec, build_basis

log = logging.getLogger("fqreg")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tau_tag(tau):
    return f"tau{tau:g}"


def _portable(tree):
    # input files are identified by content digest, so only their names are
    # kept and outputs do not depend on where the inputs live
    tree = json.loads(canonical_json(tree))
    for k, v in tree.get("data", {}).items():
        if v is not None:
            tree["data"][k] = os.path.basename(v)
    return tree


class Manifest:
    """Run manifest. Its hash covers the command, the resolved config, input
    file digests and library versions, so it is known before any output is
    written and is stamped into every output file."""

    def __init__(self, command, config=None, inputs=None, extra=None):
        self.body = {
            "tool": "fqreg",
            "version": __version__,
            "command": command,
            "config": _portable(config.tree) if config is not None else None,
            "inputs": {k: file_sha256(p) for k, p in (inputs or {}).items()},
            "libraries": {"numpy": np.__version__, "scipy": scipy.__version__},
        }
        if extra:
            self.body.update(extra)
        self.hash = digest(self.body)
        self.outputs = {}
        self.results = {}

    @property
    def header(self):
        return [f"fqreg {__version__}", f"manifest_hash={self.hash}"]

    def record(self, path):
        self.outputs[os.path.basename(path)] = file_sha256(path)

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        doc = dict(self.body, manifest_hash=self.hash, outputs=self.outputs,
                   results=self.results)
        with open(path, "w") as fh:
            fh.write(json.dumps(json.loads(canonical_json(doc)), indent=2,
                                sort_keys=True) + "\n")
        return path


def _out_dir(args, cfg):
    d = args.out or cfg["output"]["dir"]
    os.makedirs(d, exist_ok=True)
    return d


def write_inference(out_dir, tag, draws, grid, inf, manifest):
    """Summary, flags, plot-band and Geweke CSVs for one draws object."""
    res = summarize(draws.b_draws, inf["alpha"], inf["delta"], int(inf["min_run"]),
                    inf["threshold"])
    paths = {}
    paths["summary"] = os.path.join(out_dir, f"summary_{tag}.csv")
    write_summary_csv(paths["summary"], res, grid, manifest.header)
    paths["flags"] = os.path.join(out_dir, f"flags_{tag}.csv")
    write_flags_csv(paths["flags"], res, grid, manifest.header)
    rows = []
    for a in range(draws.b_draws.shape[1]):
        d = draws.b_draws[:, a]
        for alpha in sorted(set(inf["alphas"]) | {inf["alpha"]}):
            mean, _, plo, phi = pointwise_summary(d, alpha)
            lo, hi = simultaneous_band(d, alpha)
            rows.extend((a, alpha, grid[l], mean[l], lo[l], hi[l], plo[l], phi[l],
                         hi[l] - lo[l]) for l in range(d.shape[1]))
    paths["bands"] = os.path.join(out_dir, f"bands_{tag}.csv")
    write_bands_csv(paths["bands"], rows, manifest.header)
    paths["geweke"] = os.path.join(out_dir, f"geweke_{tag}.csv")
    write_geweke_csv(paths["geweke"], draws, grid, manifest.header)
    for p in paths.values():
        manifest.record(p)
    return res


# -- commands -------------------------------------------------------------------

def cmd_fit(args):
    cfg = load_config(args.config, args.set, require_data=True)
    data, X = ingest(cfg["data"]["curves"], cfg["data"]["design"])
    out = _out_dir(args, cfg)
    man = Manifest("fit", cfg, {"curves": cfg["data"]["curves"],
                                "design": cfg["data"]["design"]})
    inf = cfg["inference"]
    for tau in cfg["model"]["taus"]:
        spec = cfg.model_spec(tau, data.grid_len)
        t0 = time.perf_counter()
        draws = run_chains(data, X, spec, threads=args.threads)
        log.info("tau=%g: %d chains, %d draws, %.1fs", tau, spec.mcmc.n_chains,
                 draws.n_draws, time.perf_counter() - t0)
        tag = tau_tag(tau)
        path = os.path.join(out, f"draws_{tag}.fqrd")
        write_draws(path, draws, man.hash)
        man.record(path)
        if inf["export_draws_csv"]:
            cpath = os.path.join(out, f"draws_{tag}.csv")
            export_draws_csv(cpath, draws, man.header)
            man.record(cpath)
        res = write_inference(out, tag, draws, data.grid, inf, man)
        man.results[tag] = {
            "n_draws": draws.n_draws,
            "jitter_retries": draws.meta["jitter_retries"],
            "n_flagged_runs": [len(r) for r in res.flags],
        }
    man.write(out)
    return 0


def cmd_report(args):
    cfg = load_config(args.config, args.set)
    draws = read_draws(args.draws)
    T = draws.b_draws.shape[2]
    grid_src = args.grid or cfg["data"]["curves"]
    if grid_src is not None:
        grid = read_curves_csv(grid_src).grid
        if grid.size != T:
            raise ConfigError(f"{grid_src} has {grid.size} grid points, draws have {T}")
    else:
        grid = np.arange(T, dtype=float)
    out = _out_dir(args, cfg)
    inputs = {"draws": args.draws}
    if grid_src is not None:
        inputs["grid"] = grid_src
    man = Manifest("report", None, inputs, {"inference": cfg["inference"]})
    tag = tau_tag(draws.tau)
    write_inference(out, tag, draws, grid, cfg["inference"], man)
    man.write(out)
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config, args.set)
    sim = cfg["simulation"]
    setting = get_setting(sim["setting"])
    out = _out_dir(args, cfg)
    man = Manifest("simulate", cfg, extra={"setting": setting.metadata()})
    mcmc = cfg.mcmc_spec()
    levels = cfg.wavelet_spec(setting.grid_len).levels
    n_rep = int(sim["n_replicates"])
    if sim["write_datasets"]:
        ddir = os.path.join(out, "datasets")
        os.makedirs(ddir, exist_ok=True)
        for r in range(n_rep):
            data, X = generate_dataset(setting, replicate_seeds(sim["master_seed"], r)[0])
            for kind, writer, obj in (("curves", write_curves_csv, data),
                                      ("design", write_design_csv, X)):
                p = os.path.join(ddir, f"rep{r:03d}_{kind}.csv")
                writer(p, obj, man.header)
                man.outputs[f"datasets/{os.path.basename(p)}"] = file_sha256(p)
    for tau in sim["taus"]:
        truth = true_effect_curve(setting, tau, n_mc=int(sim["n_mc"]))
        p = os.path.join(out, f"truth_{tau_tag(tau)}.csv")
        write_matrix_csv(p, np.column_stack([setting.grid, truth]),
                         header=["grid_value", "effect"], header_lines=man.header)
        man.record(p)
    t0 = time.perf_counter()
    report = run_simulation_study(
        setting, tuple(sim["taus"]), tuple(sim["methods"]), n_rep, mcmc,
        int(sim["master_seed"]), args.threads, tuple(cfg["inference"]["alphas"]),
        float(sim["delta"]), int(sim["n_mc"]), levels)
    log.info("simulation finished in %.1fs", time.perf_counter() - t0)
    p = os.path.join(out, "metrics.csv")
    report.to_csv(p, man.header)
    man.record(p)
    p = os.path.join(out, "replicate_metrics.csv")
    with open(p, "w") as fh:
        for line in man.header:
            fh.write(f"# {line}\n")
        fh.write("replicate,method,tau,alpha,sensitivity,fpr,imse,ivar\n")
        for r in report.records:
            for a, (sens, fpr) in r["rates"].items():
                fh.write(f"{r['replicate']},{r['method']},{fmt(r['tau'])},{fmt(a)},"
                         f"{_na(sens)},{_na(fpr)},{fmt(r['imse'])},{fmt(r['ivar'])}\n")
    man.record(p)
    man.write(out)
    return 0


def _na(v):
    return "NA" if np.isnan(v) else fmt(v)


def cmd_basis(args):
    if args.family == "identity":
        spec = WaveletSpec(family="identity")
    else:
        from .config import auto_levels
        levels = auto_levels(args.length) if args.levels == "auto" else int(args.levels)
        spec = WaveletSpec(order=args.order, levels=levels)
    basis = build_basis(args.length, spec)
    header = [f"fqreg {__version__}",
              f"basis family={spec.family} order={spec.order} levels={spec.levels} "
              f"grid_len={basis.grid_len} padded_len={basis.padded_len}",
              "rows: basis functions; first column: regularization group"]
    rows = np.column_stack([basis.groups, basis.phi])
    cols = ["group"] + [f"t{l}" for l in range(basis.grid_len)]
    write_matrix_csv(args.export, rows, header=cols, header_lines=header)
    return 0


# -- entry point ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="fqreg",
                                description="Bayesian functional quantile regression")
    p.add_argument("--version", action="version", version=f"fqreg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required,
                        help="TOML configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value, e.g. mcmc.n_iter=500")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for chains or replicates")

    fit = sub.add_parser("fit", help="fit the model at each configured tau")
    common(fit, True)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="run the simulation study")
    common(sim, False)
    sim.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", help="summaries and plot data from a draws file")
    rep.add_argument("draws", help="binary draws file")
    rep.add_argument("--grid", help="curves CSV whose first row gives the grid")
    common(rep, False)
    rep.set_defaults(func=cmd_report)

    bas = sub.add_parser("basis", help="export the basis matrix")
    bas.add_argument("--export", required=True, metavar="PATH")
    bas.add_argument("--length", type=int, required=True, help="grid length T")
    bas.add_argument("--family", choices=["daubechies", "identity"],
                     default="daubechies")
    bas.add_argument("--order", type=int, default=4)
    bas.add_argument("--levels", default="auto")
    bas.set_defaults(func=cmd_basis)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        print("fqreg: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except FQRError as exc:
        print(f"fqreg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        # invalid values that reached the model layer through the config
        print(f"fqreg: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
