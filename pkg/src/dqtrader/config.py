"""Experiment configuration: an INI-style file with sections.

Example::

    [run]
    seed = 7
    mode = all
    representations = windowed, vanilla

    [asset:BTC-USD]
    path = data/BTC-USD.csv
    split = 2018-01-01

    [env]
    initial_cash = 1000
    transaction_cost = 0

    [train]
    episodes = 50
    gamma = 0.9

    [per]
    alpha = 0.6

Relative data paths resolve against the config file's directory.
"""
from __future__ import annotations

import configparser
import dataclasses
import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

from .agent import TrainConfig
from .env import EnvConfig
from .market_data import Representation

MODES = ("train", "eval", "baseline", "all")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class AssetSpec:
    symbol: str
    path: str
    split: dt.date


@dataclass(frozen=True)
class RunConfig:
    assets: tuple
    representations: tuple = (Representation.WINDOWED,)
    env: EnvConfig = EnvConfig()
    train: TrainConfig = TrainConfig()
    seed: int = 0
    mode: str = "all"
    out: str = "runs"

    def resolved(self) -> dict:
        """Every effective setting, output directory excluded (it does not
        influence any result)."""
        t = dataclasses.asdict(self.train)
        t["hidden"] = list(t["hidden"])
        per = {"alpha": t.pop("alpha"), "beta_start": t.pop("beta_start"),
               "beta_end": t.pop("beta_end"), "eps": t.pop("per_eps")}
        return {
            "run": {
                "seed": self.seed,
                "mode": self.mode,
                "representations": [r.value for r in self.representations],
            },
            "assets": [{"symbol": a.symbol, "path": a.path, "split": a.split.isoformat()}
                       for a in self.assets],
            "env": {
                "initial_cash": self.env.initial_cash,
                "transaction_cost": self.env.transaction_cost_rate,
                "window": self.env.window,
            },
            "train": t,
            "per": per,
        }

    def dump(self) -> str:
        return json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


# accepted keys per section and their value parsers
_ENV_KEYS = {"initial_cash": float, "transaction_cost": float, "window": int}
_RUN_KEYS = {"seed": int, "mode": str, "representations": str, "out": str}
_TRAIN_KEYS = {
    "episodes": int, "gamma": float, "batch_size": int, "replay_capacity": int,
    "sync_every": int, "l2": float, "lr": float, "sigma_init": float, "noisy": bool,
    "double": bool, "epsilon_floor": float, "hidden": tuple,
}
_PER_KEYS = {"alpha": "alpha", "beta_start": "beta_start", "beta_end": "beta_end", "eps": "per_eps"}
_ASSET_KEYS = ("path", "split")


def _convert(raw: str, kind):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is tuple:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if kind is int:
        return int(raw)
    return kind(raw.strip())


def validate_config(path, seed: Optional[int] = None, mode: Optional[str] = None,
                    out: Optional[str] = None) -> RunConfig:
    """Parse and check a config file; raise :class:`ConfigError` listing every
    problem with its ``section.key`` path."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ConfigError([f"{path}: config file not found"])
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    base = os.path.dirname(os.path.abspath(path))
    problems = []

    def section_values(name, allowed):
        values = {}
        if not parser.has_section(name):
            return values
        for key, raw in parser.items(name):
            if key not in allowed:
                problems.append(f"{name}.{key}: unknown key")
                continue
            try:
                values[key] = _convert(raw, allowed[key])
            except ValueError as exc:
                problems.append(f"{name}.{key}: {exc}")
        return values

    assets = []
    for name in parser.sections():
        if name.startswith("asset:"):
            symbol = name.split(":", 1)[1].strip()
            items = dict(parser.items(name))
            for key in items:
                if key not in _ASSET_KEYS:
                    problems.append(f"{name}.{key}: unknown key")
            if "path" not in items:
                problems.append(f"{name}.path: missing")
                continue
            data_path = items["path"]
            if not os.path.isabs(data_path):
                data_path = os.path.normpath(os.path.join(base, data_path))
            if not os.path.isfile(data_path):
                problems.append(f"{name}.path: data file not found: {data_path}")
            try:
                split = dt.date.fromisoformat(items.get("split", "").strip())
            except ValueError:
                problems.append(f"{name}.split: expected an ISO date, got {items.get('split')!r}")
                continue
            assets.append(AssetSpec(symbol, data_path, split))
        elif name not in ("run", "env", "train", "per"):
            problems.append(f"{name}: unknown section")
    if not assets:
        problems.append("asset: at least one [asset:<symbol>] section is required")

    run = section_values("run", _RUN_KEYS)
    env_vals = section_values("env", _ENV_KEYS)
    train_vals = section_values("train", _TRAIN_KEYS)
    per_vals = section_values("per", {k: float for k in _PER_KEYS})

    if seed is not None:
        run["seed"] = seed
    if mode is not None:
        run["mode"] = mode
    if out is not None:
        run["out"] = out
    run_mode = run.get("mode", "all")
    if run_mode not in MODES:
        problems.append(f"run.mode: must be one of {', '.join(MODES)}, got {run_mode!r}")

    reprs = []
    for item in str(run.get("representations", "windowed")).split(","):
        try:
            reprs.append(Representation.parse(item))
        except ValueError as exc:
            problems.append(f"run.representations: {exc}")
    if not reprs:
        problems.append("run.representations: empty")

    env = None
    try:
        env = EnvConfig(
            initial_cash=env_vals.get("initial_cash", 1000.0),
            transaction_cost_rate=env_vals.get("transaction_cost", 0.0),
            window=env_vals.get("window", 3),
        )
    except ValueError as exc:
        problems.append(f"env: {exc}")

    train_kwargs = dict(train_vals)
    for key, attr in _PER_KEYS.items():
        if key in per_vals:
            train_kwargs[attr] = per_vals[key]
    train_kwargs["seed"] = run.get("seed", 0)
    defaults = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    merged = {**defaults, **train_kwargs}
    # run the invariant checks without raising on the first one
    checker = object.__new__(TrainConfig)
    for k, v in merged.items():
        object.__setattr__(checker, k, v)
    per_keys = {attr: key for key, attr in _PER_KEYS.items()}
    for attr, message in TrainConfig.problems(checker):
        key = f"per.{per_keys[attr]}" if attr in per_keys else f"train.{attr}"
        problems.append(f"{key}: {message}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        assets=tuple(assets),
        representations=tuple(dict.fromkeys(reprs)),
        env=env,
        train=TrainConfig(**merged),
        seed=int(run.get("seed", 0)),
        mode=run_mode,
        out=run.get("out", "runs"),
    )
