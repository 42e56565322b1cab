"""Run configuration, experiment-matrix expansion, CSV logging, and run
management for the training CLIs.

A :class:`RunConfig` names an algorithm, environment, representation head,
seed list, and optional sweep axes.  ``run_experiment`` expands the matrix
(seeds x sweep cells), trains each cell into its own directory with a
manifest, metrics CSV, and final checkpoint, then writes an aggregate
summary.  All artifacts are written to temp names and atomically renamed.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os
import subprocess
import time
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import diagnostics as dg
from . import heads as hd
from . import nonstat as ns
from . import ppo as ppo_mod
from . import td3 as td3_mod
from .autodiff import Rng
from .envs import SynthConfig, env_spec, make_env


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class HeadConfig:
    kind: str = "baseline"        # baseline | sem | gumbel | vq | crelu
    L: int = 8
    V: int = 16
    tau: float = 1.0
    beta: float = 0.25
    codebook_size: int = 64
    placement: str = "actor"      # actor | critic | both

    def __post_init__(self):
        if self.kind not in ("baseline", "sem", "gumbel", "vq", "crelu"):
            raise ConfigError(f"unknown head kind {self.kind!r}")
        if self.L < 1 or self.V < 1:
            raise ConfigError("head.L and head.V must be >= 1")
        if self.tau <= 0:
            raise ConfigError("head.tau must be > 0")


@dataclass
class RunConfig:
    algorithm: str = "td3"        # td3 | ppo | nonstat
    env: str = "pointmass"
    head: HeadConfig = field(default_factory=HeadConfig)
    seeds: List[int] = field(default_factory=lambda: [0])
    total_steps: int = 100_000
    eval_interval: int = 5_000
    out_dir: str = "runs"
    # optional algorithm overrides (None -> algorithm default)
    num_envs: Optional[int] = None
    buffer_capacity: Optional[int] = None
    batch_size: Optional[int] = None
    use_cdq: Optional[bool] = None
    use_c51: Optional[bool] = None
    sigma_explore: Optional[float] = None
    hidden: Optional[int] = None
    learning_starts: Optional[int] = None
    eval_episodes: Optional[int] = None
    # nonstat knobs
    epochs: int = 100
    shuffle_period: int = 20
    stationary: bool = False
    # sweep axes: dotted field name -> list of candidate values
    sweep: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ("td3", "ppo", "nonstat"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")


_SCALAR_FIELDS = {f.name: f for f in fields(RunConfig) if f.name not in ("head", "sweep")}
_HEAD_FIELDS = {f.name: f for f in fields(HeadConfig)}

_COERCE = {
    int: int,
    float: float,
    str: str,
    bool: lambda v: v if isinstance(v, bool) else
        {"true": True, "1": True, "false": False, "0": False}[str(v).lower()],
}


def _field_base_type(f) -> type:
    t = f.type
    mapping = {"int": int, "float": float, "str": str, "bool": bool,
               "Optional[int]": int, "Optional[float]": float,
               "Optional[bool]": bool, "List[int]": list,
               "Dict[str, list]": dict}
    return mapping.get(t, str)


def _coerce(name: str, value, target: type):
    if target is list:
        if isinstance(value, (list, tuple)):
            return [int(v) for v in value]
        return [int(v) for v in str(value).split(",")]
    try:
        return _COERCE[target](value)
    except (ValueError, KeyError) as exc:
        raise ConfigError(
            f"config key {name!r}: expected {target.__name__}, got {value!r}") from exc


def _assign(cfg: RunConfig, dotted: str, value):
    if dotted.startswith("head."):
        key = dotted[len("head."):]
        if key not in _HEAD_FIELDS:
            raise ConfigError(f"unknown config key {dotted!r}")
        setattr(cfg.head, key, _coerce(dotted, value, _field_base_type(_HEAD_FIELDS[key])))
        return
    if dotted == "sweep":
        if not isinstance(value, dict):
            raise ConfigError("config key 'sweep': expected mapping of axis -> values")
        cfg.sweep = {str(k): list(v) for k, v in value.items()}
        return
    if dotted not in _SCALAR_FIELDS:
        raise ConfigError(f"unknown config key {dotted!r}")
    setattr(cfg, dotted, _coerce(dotted, value, _field_base_type(_SCALAR_FIELDS[dotted])))


def config_parse(path: Optional[str] = None,
                 overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus dotted CLI overrides.

    File values are applied first, then overrides; unknown keys raise
    ConfigError naming the key.
    """
    cfg = RunConfig()
    if path is not None:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError("config file must be a key-value mapping")
        for key, value in _flatten(doc):
            _assign(cfg, key, value)
    for key, value in (overrides or {}).items():
        _assign(cfg, key, value)
    cfg.__post_init__()
    cfg.head.__post_init__()
    return cfg


def _flatten(doc: dict, prefix: str = ""):
    for key, value in doc.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and dotted != "sweep":
            yield from _flatten(value, dotted + ".")
        else:
            yield dotted, value


def head_from_config(hc: HeadConfig, hidden: int) -> hd.HeadKind:
    if hc.kind == "baseline":
        return hd.Baseline()
    if hc.kind == "sem":
        return hd.Sem(hd.SemConfig(hc.L, hc.V, hc.tau))
    if hc.kind == "gumbel":
        return hd.GumbelST(hd.GumbelConfig(hc.L, hc.V, hc.tau))
    if hc.kind == "vq":
        return hd.Vq(hd.VqConfig(hc.codebook_size, hidden, hc.beta))
    return hd.CRelu()


# ---------------------------------------------------------------------------
# logging
# ---------------------------------------------------------------------------

def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


class CsvLogger:
    """Appends MetricsRow records; header once, 9-sig-digit floats, empty
    fields for missing metrics.  The file is materialized atomically on
    close()."""

    def __init__(self, path: str, jsonl_mirror: bool = False):
        self.path = path
        self._tmp = path + ".tmp"
        self._fh = open(self._tmp, "w")
        self._wrote_header = False
        self._jsonl = open(path[:-4] + ".jsonl.tmp", "w") if jsonl_mirror else None

    def log(self, row: dg.MetricsRow):
        names = [f.name for f in dataclasses.fields(row)]
        if names != dg.METRICS_COLUMNS:
            raise ConfigError("metrics schema drift: row fields do not match schema")
        if not self._wrote_header:
            self._fh.write(",".join(dg.METRICS_COLUMNS) + "\n")
            self._wrote_header = True
        values = [getattr(row, n) for n in dg.METRICS_COLUMNS]
        self._fh.write(",".join(_render(v) for v in values) + "\n")
        if self._jsonl is not None:
            self._jsonl.write(json.dumps(
                {n: (None if v is None else float(v))
                 for n, v in zip(dg.METRICS_COLUMNS, values)}) + "\n")

    def close(self):
        self._fh.close()
        os.replace(self._tmp, self.path)
        if self._jsonl is not None:
            self._jsonl.close()
            os.replace(self.path[:-4] + ".jsonl.tmp", self.path[:-4] + ".jsonl")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics_csv(path: str) -> Dict[str, np.ndarray]:
    """Parse a metrics CSV back into column arrays (NaN for empty fields)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        cols[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
    return cols


def _atomic_write_text(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# run management
# ---------------------------------------------------------------------------

def _build_identifier() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(run_dir: str, cfg_echo: dict, seed: int, status: str,
                    started: float, ended: Optional[float] = None):
    manifest = {
        "config": cfg_echo,
        "build": _build_identifier(),
        "seed": seed,
        "started": started,
        "ended": ended,
        "status": status,
    }
    _atomic_write_text(os.path.join(run_dir, "manifest.json"),
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cell_overrides(cfg: RunConfig):
    """Expand sweep axes into a deterministic list of (label, {key: value})."""
    if not cfg.sweep:
        return [("default", {})]
    axes = sorted(cfg.sweep.items())
    cells = []
    for combo in itertools.product(*(values for _, values in axes)):
        assignment = {key: value for (key, _), value in zip(axes, combo)}
        label = "_".join(f"{k.replace('.', '-')}={v}" for k, v in assignment.items())
        cells.append((label, assignment))
    return cells


def _make_td3_config(cfg: RunConfig) -> td3_mod.Td3Config:
    kw = dict(total_steps=cfg.total_steps, eval_interval=cfg.eval_interval,
              placement=cfg.head.placement)
    for name in ("num_envs", "buffer_capacity", "batch_size", "use_cdq",
                 "use_c51", "sigma_explore", "learning_starts", "eval_episodes"):
        value = getattr(cfg, name)
        if value is not None:
            kw[name] = value
    if cfg.hidden is not None:
        kw["hidden_actor"] = cfg.hidden
        kw["hidden_critic"] = cfg.hidden
    return td3_mod.Td3Config(**kw)


def _make_ppo_config(cfg: RunConfig) -> ppo_mod.PpoConfig:
    kw = dict(total_steps=cfg.total_steps, eval_interval=cfg.eval_interval)
    for src, dst in (("num_envs", "num_envs"), ("batch_size", "minibatch_size"),
                     ("hidden", "hidden"), ("eval_episodes", "eval_episodes")):
        value = getattr(cfg, src)
        if value is not None:
            kw[dst] = value
    return ppo_mod.PpoConfig(**kw)


def _make_nonstat_config(cfg: RunConfig) -> ns.NonstatConfig:
    return ns.NonstatConfig(width=cfg.hidden or 256, epochs=cfg.epochs,
                            shuffle_period=cfg.shuffle_period,
                            stationary=cfg.stationary)


def run_cell(cfg: RunConfig, seed: int, run_dir: str) -> dict:
    """Train one (config, seed) cell into run_dir; returns summary numbers."""
    os.makedirs(run_dir, exist_ok=True)
    started = time.time()
    echo = dataclasses.asdict(cfg)
    _write_manifest(run_dir, echo, seed, "running", started)
    csv_path = os.path.join(run_dir, "metrics.csv")
    status = "ok"
    result = {}
    try:
        with CsvLogger(csv_path) as logger:
            if cfg.algorithm == "td3":
                acfg = _make_td3_config(cfg)
                head = head_from_config(cfg.head, acfg.hidden_actor)
                result = td3_mod.td3_train(
                    lambda: make_env(cfg.env), acfg, head, seed, logger, run_dir)
            elif cfg.algorithm == "ppo":
                acfg = _make_ppo_config(cfg)
                head = head_from_config(cfg.head, acfg.hidden)
                result = ppo_mod.ppo_train(
                    lambda: make_env(cfg.env), acfg, head, seed, logger, run_dir)
            else:
                acfg = _make_nonstat_config(cfg)
                head = head_from_config(cfg.head, acfg.width)
                out = ns.nonstationary_train(acfg, head, seed, logger)
                result = {"final_return": out["final_train_acc"],
                          "auc": float(np.mean([r.eval_return for r in out["rows"]])),
                          "rows": out["rows"]}
    except Exception as exc:  # cell aborts are recorded; siblings continue
        status = f"aborted: {type(exc).__name__}: {exc}"
    _write_manifest(run_dir, echo, seed, status, started, time.time())
    result["status"] = status
    return result


def _random_policy_return(env_name: str, episodes: int = 10) -> float:
    """Deterministic random-policy score used as the normalization floor."""
    spec = env_spec(env_name)
    rng = Rng(0, (999,))
    totals = []
    for ep in range(episodes):
        env = make_env(env_name)
        obs = env.reset(seed=ep)
        total, done = 0.0, False
        while not done:
            if spec.action_kind == "discrete":
                act = int(rng.integers(0, spec.action_dim))
            else:
                act = rng.uniform(-1.0, 1.0, spec.action_dim)
            obs, r, done = env.step(act)
            total += r
        totals.append(total)
    return float(np.mean(totals))


def summarize(out_dir: str, cfg: Optional[RunConfig] = None) -> dict:
    """Aggregate every cell directory under out_dir into summary.json.

    Per cell: mean +- std of final eval return and of area-under-curve across
    seeds, plus a min-max normalized return declared against the recorded
    (random-policy floor, solve-threshold ceiling) bounds.
    """
    cells: Dict[str, dict] = {}
    for root, _, files in sorted(os.walk(out_dir)):
        if "metrics.csv" not in files:
            continue
        cols = read_metrics_csv(os.path.join(root, "metrics.csv"))
        returns = cols["eval_return"][~np.isnan(cols["eval_return"])]
        if len(returns) == 0:
            continue
        cell = os.path.relpath(os.path.dirname(root), out_dir)
        entry = cells.setdefault(cell, {"finals": [], "aucs": []})
        entry["finals"].append(float(returns[-1]))
        entry["aucs"].append(float(returns.mean()))

    norm_bounds = None
    if cfg is not None and cfg.algorithm in ("td3", "ppo"):
        spec = env_spec(cfg.env)
        norm_bounds = (_random_policy_return(cfg.env), spec.solve_threshold)

    summary = {"cells": {}, "normalization": None}
    if norm_bounds is not None:
        summary["normalization"] = {"floor_random_policy": norm_bounds[0],
                                    "ceiling_solve_threshold": norm_bounds[1]}
    for cell, entry in sorted(cells.items()):
        finals = np.array(entry["finals"])
        aucs = np.array(entry["aucs"])
        info = {
            "seeds": len(finals),
            "final_return_mean": float(finals.mean()),
            "final_return_std": float(finals.std()),
            "auc_mean": float(aucs.mean()),
            "auc_std": float(aucs.std()),
        }
        if norm_bounds is not None and norm_bounds[1] != norm_bounds[0]:
            lo, hi = norm_bounds
            info["normalized_return_mean"] = float((finals.mean() - lo) / (hi - lo))
        summary["cells"][cell] = info
    _atomic_write_text(os.path.join(out_dir, "summary.json"),
                       json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_experiment(cfg: RunConfig) -> int:
    """Expand (sweep cells x seeds), run each into its own directory, then
    summarize.  Returns 0 if every cell finished, 1 if any aborted."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    any_failed = False
    for label, assignment in _cell_overrides(cfg):
        cell_cfg = dataclasses.replace(
            cfg, head=dataclasses.replace(cfg.head), sweep={})
        for key, value in assignment.items():
            _assign(cell_cfg, key, value)
        for seed in cfg.seeds:
            run_dir = os.path.join(cfg.out_dir, label, f"seed{seed}")
            result = run_cell(cell_cfg, seed, run_dir)
            if result["status"] != "ok":
                any_failed = True
    summarize(cfg.out_dir, cfg)
    return 1 if any_failed else 0
