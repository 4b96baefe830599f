"""Experiment configuration: YAML file merged over the shipped defaults, env overrides, validation."""
from __future__ import annotations

import copy
import math
import os
import re
from dataclasses import dataclass
from importlib import resources

import yaml

from .bifurcation import SweepParams
from .cocycle import IntegratorConfig
from .galerkin import ModelConfig
from .hull import Forcing
from .manifold import TruncationConfig

ENV_PREFIX = "NABIF_"
BLOCKS = ("model", "forcing", "spectral", "integrator", "lp", "simulate", "pullback", "sweep", "output")


class ConfigError(ValueError):
    """Validation failure; the message names the offending field."""


def default_config() -> dict:
    text = resources.files("nabif").joinpath("default_config.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a block")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def env_overrides(environ=None) -> dict:
    """NABIF_<BLOCK>__<KEY>=value (or NABIF_SEED=...), values parsed as YAML scalars."""
    env = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _length(v, where):
    if isinstance(v, (int, float)):
        return float(v)
    m = re.fullmatch(r"\s*([0-9.eE+-]*)\s*\*?\s*pi\s*", str(v))
    if m:
        factor = float(m.group(1)) if m.group(1) else 1.0
        return factor * math.pi
    raise ConfigError(f"{where}: expected a number or a multiple of pi, got {v!r}")


def _num(block, key, where, *, positive=False, integer=False, allow_none=False):
    v = block.get(key)
    if v is None and allow_none:
        return None
    if isinstance(v, str):  # PyYAML reads 1.0e6 (no exponent sign) as a string
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    return int(v) if integer else float(v)


@dataclass
class Experiment:
    raw: dict
    model: ModelConfig
    k: int
    integrator: IntegratorConfig
    truncation: TruncationConfig
    lp: dict
    simulate: dict
    pullback: dict
    sweep: SweepParams
    lambdas: list
    n_fibers: int
    tol_curve: float
    out_dir: str
    seed: int


def _wrap(fn, where):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def resolve(raw: dict) -> Experiment:
    """Validate a merged config dict and build the typed pieces."""
    m, f = raw["model"], raw["forcing"]
    forcing = _wrap(lambda: Forcing(
        frequencies=tuple(f["frequencies"]), symbol=f["symbol"],
        coeffs=None if f.get("coeffs") is None else tuple(f["coeffs"]),
        delta=_num(f, "delta", "forcing", positive=True), sign=int(m["sign"])), "forcing")
    model = _wrap(lambda: ModelConfig(
        L=_length(m["L"], "model.L"), n_modes=_num(m, "n_modes", "model", integer=True),
        lam=_num(m, "lambda", "model"), alpha=_num(m, "alpha", "model"), forcing=forcing), "model")
    k = _num(raw["spectral"], "k", "spectral", integer=True)
    if not 1 <= k <= model.n_modes:
        raise ConfigError(f"spectral.k: must lie in 1..{model.n_modes}")
    ic = raw["integrator"]
    integ = _wrap(lambda: IntegratorConfig(dt=_num(ic, "dt", "integrator", positive=True), scheme=ic["scheme"],
                                           blowup_threshold=_num(ic, "blowup_threshold", "integrator",
                                                                 positive=True)), "integrator")
    lp = dict(raw["lp"])
    trunc = _wrap(lambda: TruncationConfig(rho=_num(lp, "rho", "lp", positive=True)), "lp")
    for key in ("dt", "tol", "grid_radius"):
        _num(lp, key, "lp", positive=True)
    _num(lp, "T", "lp", positive=True, allow_none=True)
    n_grid = _num(lp, "n_grid", "lp", integer=True)
    if n_grid < 3 or n_grid % 2 == 0:
        raise ConfigError("lp.n_grid: must be odd and >= 3")
    sim = dict(raw["simulate"])
    if len(sim["x0"]) > model.n_modes:
        raise ConfigError("simulate.x0: more coefficients than modes")
    if len(sim["fiber"]) != forcing.m:
        raise ConfigError(f"simulate.fiber: expected {forcing.m} phases")
    _num(sim, "t_final", "simulate", positive=True)
    _num(sim, "stride", "simulate", positive=True, integer=True)
    pb = dict(raw["pullback"])
    for key in ("cloud_size", "n_stages", "n_fibers"):
        _num(pb, key, "pullback", positive=True, integer=True)
    for key in ("cloud_radius", "t0", "tol"):
        _num(pb, key, "pullback", positive=True)
    sw = raw["sweep"]
    lambdas = sw["lambdas"]
    if not isinstance(lambdas, list) or not lambdas:
        raise ConfigError("sweep.lambdas: expected a nonempty list")
    prm = SweepParams(
        rho=_num(sw, "rho", "sweep", positive=True), ball_radius=_num(sw, "ball_radius", "sweep", positive=True),
        n_grid=_num(sw, "n_grid", "sweep", integer=True), phase_nodes=_num(sw, "phase_nodes", "sweep",
                                                                           positive=True, integer=True),
        T=_num(sw, "T", "sweep", positive=True), dt=_num(sw, "dt", "sweep", positive=True),
        lp_tol=_num(sw, "lp_tol", "sweep", positive=True),
        cloud_size=_num(sw, "cloud_size", "sweep", positive=True, integer=True),
        t0=_num(sw, "t0", "sweep", positive=True), n_stages=_num(sw, "n_stages", "sweep", positive=True,
                                                                 integer=True),
        pullback_tol=_num(sw, "tol", "sweep", positive=True),
        reduced_dt=_num(sw, "reduced_dt", "sweep", positive=True),
        repeller_radii=tuple(float(r) for r in sw["repeller_radii"]),
        repeller_deadline=_num(sw, "repeller_deadline", "sweep", positive=True),
    )
    if prm.n_grid < 3 or prm.n_grid % 2 == 0:
        raise ConfigError("sweep.n_grid: must be odd and >= 3")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed: expected an unsigned 64-bit integer")
    return Experiment(raw, model, k, integ, trunc, lp, sim, pb, prm, [float(v) for v in lambdas],
                      _num(sw, "n_fibers", "sweep", positive=True, integer=True),
                      _num(sw, "tol_curve", "sweep", positive=True), str(raw["output"]["dir"]), int(seed))


def load(path=None, *, environ=None, overrides: dict | None = None) -> Experiment:
    """Defaults <- file <- environment <- explicit overrides, then validate."""
    raw = default_config()
    if path is not None:
        with open(path) as fh:
            try:
                user = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: not valid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = _merge(raw, user)
    raw = _merge(raw, env_overrides(environ))
    if overrides:
        raw = _merge(raw, overrides)
    return resolve(raw)
