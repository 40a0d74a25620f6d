"""Experiment configuration: schema, defaults and validation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import yaml

from leaper.envs.layout import BUILTIN_LAYOUTS
from leaper.physics import ModelKind

COMMANDS = ("plan", "train", "evaluate", "baseline", "cartpole-study", "reproduce")
REPRODUCE_TARGETS = ("fig6-desk", "table1-desk", "fig3-desk", "planning-times")
CONTROLLERS = ("open_loop", "velocity_feedback", "ilqr")

# Nested keys accepted under ``overrides`` and their defaults.
OVERRIDE_DEFAULTS: dict[str, dict[str, Any]] = {
    "planner": {
        "goal_bias": 0.1,
        "n_controls": 10,
        "control_duration_range": [0.5, 2.0],
        "max_iterations": 20000,
    },
    "ddpg": {
        "hidden": [256, 256, 256],
        "gamma": 0.98,
        "polyak": 0.95,
        "lr_actor": 0.01,
        "lr_critic": 0.01,
        "batch_size": 256,
        "buffer_size": 1_000_000,
        "updates_per_cycle": 40,
        "random_eps": 0.3,
        "noise_eps": 0.2,
        "action_l2": 1.0,
        "her_k": 4,
    },
    "env": {
        "obs_noise": [0.01, 0.1],
        "randomize": True,
        "randomize_scale": 2.0,
        "goal_radius": 0.05,
    },
    "train": {
        "eval_interval": 50,
        "eval_episodes": 20,
        "uniform": 0.0,
        "threshold": 0.8,
    },
    "baseline": {
        "controller": "open_loop",
        "trials": 50,
        "ilqr_iterations": 10,
        "ilqr_fd_step": 1e-3,
        "feedback_gain": 1.0,
    },
    "evaluate": {
        "checkpoint": None,
        "episodes": 20,
    },
    "cartpole": {
        "episodes": 1000,
        "eval_interval": 50,
    },
}

TOP_DEFAULTS: dict[str, Any] = {
    "layout": "1",
    "model": "quasistatic",
    "alpha": 0.5,
    "seeds": [0],
    "episodes": 1000,
    "output_dir": None,
    "trajectory": None,
    "target": None,
    "overrides": {},
}
REQUIRED = ("command",)


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    layout: str = "1"
    model: str = "quasistatic"
    alpha: float = 0.5
    seeds: tuple[int, ...] = (0,)
    episodes: int = 1000
    output_dir: str | None = None
    trajectory: str | None = None
    target: str | None = None
    overrides: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.overrides[name]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "layout": self.layout,
            "model": self.model,
            "alpha": self.alpha,
            "seeds": list(self.seeds),
            "episodes": self.episodes,
            "output_dir": self.output_dir,
            "trajectory": self.trajectory,
            "target": self.target,
            "overrides": copy.deepcopy(self.overrides),
        }


def parse_seeds(v) -> list[int]:
    """Accept an int, a list of ints, "3", "1,4,7" or the range form "1..5"."""
    if isinstance(v, bool):
        raise ValueError("seeds must be integers")
    if isinstance(v, int):
        return [v]
    if isinstance(v, (list, tuple)):
        out = []
        for x in v:
            out.extend(parse_seeds(x))
        return out
    if isinstance(v, str):
        v = v.strip()
        if ".." in v:
            lo, hi = v.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {v!r}")
            return list(range(lo, hi + 1))
        return [int(x) for x in v.split(",") if x.strip()]
    raise ValueError(f"cannot read seeds from {v!r}")


def validate_dict(raw: Any) -> ExperimentConfig:
    """Validate a parsed mapping, collecting every problem before failing."""
    errors: list[str] = []
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    for k in REQUIRED:
        if k not in raw:
            errors.append(f"{k}: required field missing")
    for k in raw:
        if k not in REQUIRED and k not in TOP_DEFAULTS:
            errors.append(f"{k}: unknown key")
    data = copy.deepcopy(TOP_DEFAULTS)
    data.update({k: v for k, v in raw.items() if k in TOP_DEFAULTS})

    cmd = raw.get("command")
    if cmd is not None and cmd not in COMMANDS:
        errors.append(f"command: must be one of {list(COMMANDS)}, got {cmd!r}")
    if cmd == "reproduce" and data["target"] not in REPRODUCE_TARGETS:
        errors.append(f"target: reproduce needs one of {list(REPRODUCE_TARGETS)}, got {data['target']!r}")

    layout = str(data["layout"])
    if layout not in ("1", "2", "3") and layout not in BUILTIN_LAYOUTS and not layout.endswith((".yaml", ".yml")):
        errors.append(f"layout: expected 1, 2, 3, a built-in name or a .yaml path, got {layout!r}")
    try:
        ModelKind(data["model"])
    except ValueError:
        errors.append(f"model: must be one of {[m.value for m in ModelKind]}, got {data['model']!r}")

    alpha = data["alpha"]
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        errors.append(f"alpha: expected a number, got {alpha!r}")
    elif not 0.0 <= alpha <= 1.0:
        errors.append(f"alpha: {alpha} outside [0, 1]")

    try:
        seeds = parse_seeds(data["seeds"])
        if not seeds:
            errors.append("seeds: at least one seed is required")
    except ValueError as exc:
        errors.append(f"seeds: {exc}")
        seeds = []

    episodes = data["episodes"]
    if isinstance(episodes, bool) or not isinstance(episodes, int):
        errors.append(f"episodes: expected an integer, got {episodes!r}")
    elif episodes < 0:
        errors.append(f"episodes: must be >= 0, got {episodes}")

    overrides = copy.deepcopy(OVERRIDE_DEFAULTS)
    raw_over = data["overrides"] or {}
    if not isinstance(raw_over, dict):
        errors.append("overrides: expected a mapping")
        raw_over = {}
    for section, values in raw_over.items():
        if section not in OVERRIDE_DEFAULTS:
            errors.append(f"overrides.{section}: unknown section")
            continue
        if not isinstance(values, dict):
            errors.append(f"overrides.{section}: expected a mapping")
            continue
        for k, v in values.items():
            if k not in OVERRIDE_DEFAULTS[section]:
                errors.append(f"overrides.{section}.{k}: unknown key")
                continue
            default = OVERRIDE_DEFAULTS[section][k]
            if default is not None and not _same_kind(default, v):
                errors.append(f"overrides.{section}.{k}: expected {type(default).__name__}, got {v!r}")
                continue
            overrides[section][k] = v
    ctrl = overrides["baseline"]["controller"]
    if ctrl not in CONTROLLERS:
        errors.append(f"overrides.baseline.controller: must be one of {list(CONTROLLERS)}, got {ctrl!r}")
    gb = overrides["planner"]["goal_bias"]
    if not 0.0 <= gb <= 1.0:
        errors.append(f"overrides.planner.goal_bias: {gb} outside [0, 1]")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        command=cmd,
        layout=layout,
        model=ModelKind(data["model"]).value,
        alpha=float(alpha),
        seeds=tuple(seeds),
        episodes=int(episodes),
        output_dir=data["output_dir"],
        trajectory=data["trajectory"],
        target=data["target"],
        overrides=overrides,
    )


def _same_kind(default, v) -> bool:
    if isinstance(default, bool):
        return isinstance(v, bool)
    if isinstance(default, (int, float)):
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if isinstance(default, list):
        return isinstance(v, (list, tuple))
    return isinstance(v, type(default))


def validate_config(raw_text: str) -> ExperimentConfig:
    """Parse YAML text and validate it; raises ConfigError listing every problem."""
    try:
        data = yaml.safe_load(raw_text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "<text>"
        raise ConfigError([f"{where}: {getattr(exc, 'problem', exc)}"]) from None
    return validate_dict(data)
