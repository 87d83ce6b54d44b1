"""Run configuration: a TOML file plus ``--set key=value`` overrides.

Example::

    [data]
    curves = "curves.csv"
    design = "design.csv"

    [model]
    taus = [0.1, 0.25, 0.5, 0.75, 0.9]
    wavelet_order = 4
    levels = "auto"          # 7 for grids padded to <= 512, 8 above
    prior = "horseshoe"
    global_scale = "vague"

    [mcmc]
    n_iter = 8000
    burn_in = 2000
    thin = 3
    n_chains = 1
    seed = 0

    [inference]
    alpha = 0.05
    alphas = [0.001, 0.01, 0.05, 0.1]
    delta = 1.5
    min_run = 3

    [output]
    dir = "out"
"""
from __future__ import annotations

import copy
import math
import os
import sys
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .gibbs import MCMCSpec, ModelSpec, PriorSpec
from .wavelet import WaveletSpec, next_dyadic

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["RunConfig", "DEFAULTS", "load_config", "apply_overrides", "auto_levels"]

DEFAULTS = {
    "data": {"curves": None, "design": None},
    "model": {
        "taus": [0.1, 0.25, 0.5, 0.75, 0.9],
        "basis": "daubechies",
        "wavelet_order": 4,
        "levels": "auto",
        "prior": "horseshoe",
        "global_scale": "vague",
        "fixed_psi": None,
        "sigma_prior": [0.01, 0.01],
    },
    "mcmc": {"n_iter": 8000, "burn_in": 2000, "thin": 3, "n_chains": 1, "seed": 0},
    "inference": {
        "alpha": 0.05,
        "alphas": [0.001, 0.01, 0.05, 0.1],
        "delta": 1.5,
        "min_run": 3,
        "threshold": None,
        "export_draws_csv": False,
    },
    "simulation": {
        "setting": "symmetric_heavy_tailed",
        "taus": [0.9],
        "methods": ["bayes_fqr", "bayes_qr"],
        "n_replicates": 100,
        "master_seed": 0,
        "n_mc": 1_000_000,
        "delta": 0.3,
        "write_datasets": True,
    },
    "output": {"dir": "fqreg_out"},
}


def auto_levels(grid_len):
    """Default decomposition depth: 7 up to 512 padded points, 8 above."""
    k = int(math.log2(next_dyadic(grid_len)))
    return max(1, min(k - 2, 7 if k <= 9 else 8))


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(tree, overrides):
    """Apply ``section.key=value`` strings; values use TOML syntax when valid."""
    tree = copy.deepcopy(tree)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"--set key must look like section.key, got {key!r}")
        sec, name = parts
        if sec not in DEFAULTS or name not in DEFAULTS[sec]:
            raise ConfigError(f"unknown configuration key {key!r}")
        tree.setdefault(sec, {})[name] = _parse_value(text.strip())
    return tree


def _merge(defaults, given, where=""):
    out = copy.deepcopy(defaults)
    for sec, body in given.items():
        if sec not in defaults:
            raise ConfigError(f"unknown configuration section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for k, v in body.items():
            if k not in defaults[sec]:
                raise ConfigError(f"unknown key {k!r} in [{sec}]{where}")
            out[sec][k] = v
    return out


def _resolve(base, p):
    if p is None or os.path.isabs(p):
        return p
    return os.path.normpath(os.path.join(base, p))


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration tree. ``tree`` is the merged, resolved dict."""

    tree: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        t = self.tree
        for tau in list(t["model"]["taus"]) + list(t["simulation"]["taus"]):
            if not isinstance(tau, (int, float)) or not 0 < tau < 1:
                raise ConfigError(f"tau values must lie in (0, 1), got {tau!r}")
        if not t["model"]["taus"]:
            raise ConfigError("model.taus is empty")
        inf = t["inference"]
        for a in [inf["alpha"], *inf["alphas"]]:
            if not 0 < a < 1:
                raise ConfigError(f"alpha values must lie in (0, 1), got {a!r}")
        if not inf["delta"] > 1:
            raise ConfigError("inference.delta is a fold change and must exceed 1")
        if int(inf["min_run"]) < 1:
            raise ConfigError("inference.min_run must be >= 1")
        if t["model"]["basis"] not in ("daubechies", "identity"):
            raise ConfigError("model.basis must be 'daubechies' or 'identity'")
        lv = t["model"]["levels"]
        if lv != "auto" and not (isinstance(lv, int) and lv >= 1):
            raise ConfigError("model.levels must be 'auto' or a positive integer")
        sim = t["simulation"]
        if int(sim["n_replicates"]) < 1:
            raise ConfigError("simulation.n_replicates must be >= 1")
        # constructing the specs runs their own validation
        self.mcmc_spec()
        self.prior_spec()

    # -- loading -----------------------------------------------------------
    @classmethod
    def from_file(cls, path=None, overrides=(), require_data=False):
        given, base = {}, os.getcwd()
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    given = tomllib.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: invalid TOML ({exc})") from None
            base = os.path.dirname(os.path.abspath(path))
        tree = apply_overrides(_merge(DEFAULTS, given), overrides)
        for k in ("curves", "design"):
            tree["data"][k] = _resolve(base, tree["data"][k])
        if require_data:
            for k in ("curves", "design"):
                p = tree["data"][k]
                if p is None:
                    raise ConfigError(f"data.{k} is required")
                if not os.path.exists(p):
                    raise ConfigError(f"data.{k} does not exist: {p}")
        return cls(tree)

    # -- views -------------------------------------------------------------
    def __getitem__(self, section):
        return self.tree[section]

    def mcmc_spec(self):
        m = self.tree["mcmc"]
        return MCMCSpec(int(m["n_iter"]), int(m["burn_in"]), int(m["thin"]),
                        int(m["n_chains"]), int(m["seed"]))

    def prior_spec(self):
        m = self.tree["model"]
        return PriorSpec(m["prior"], m["global_scale"], m["fixed_psi"])

    def wavelet_spec(self, grid_len):
        m = self.tree["model"]
        if m["basis"] == "identity":
            return WaveletSpec(family="identity")
        lv = auto_levels(grid_len) if m["levels"] == "auto" else int(m["levels"])
        return WaveletSpec(order=int(m["wavelet_order"]), levels=lv)

    def model_spec(self, tau, grid_len):
        return ModelSpec(tau, self.wavelet_spec(grid_len), self.prior_spec(),
                         tuple(self.tree["model"]["sigma_prior"]), self.mcmc_spec())


def load_config(path=None, overrides=(), require_data=False):
    return RunConfig.from_file(path, overrides, require_data)
