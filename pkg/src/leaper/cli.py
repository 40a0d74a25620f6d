"""Command-line entry point: ``leaper <command> [options]``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

import leaper
from leaper import experiments as ex
from leaper.baselines.tracking import ilqr_controller, ilqr_track, openloop_rollout, velocity_feedback_rollout
from leaper.config import COMMANDS, ConfigError, ExperimentConfig, validate_dict
from leaper.envs.layout import LayoutError, load_layout
from leaper.envs.rearrange import RearrangeEnvConfig
from leaper.planner import PlannedTrajectory, PlannerConfig, PlanningFailed, densify
from leaper.rl import DDPGAgent, DDPGConfig
from leaper.trainer import CartPoleStudyConfig, episodes_to_threshold, evaluate
from leaper.util import atomic_write_text, sha256_file, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANNER = 3
EXIT_TRAINING = 4
OUTPUT_ROOT_ENV = "LEAPER_OUTPUT_ROOT"
MANIFEST_SCHEMA_VERSION = 1


class RunContext:
    """Tracks emitted files and timings, then writes the run manifest."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.files: list[Path] = []
        self.timings: dict[str, float] = {}
        self.seeds: dict[str, dict] = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def record_seed(self, seed: int) -> None:
        self.seeds[str(seed)] = {k: g.bit_generator.state for k, g in ex.seed_streams(seed).items()}

    def write_manifest(self) -> Path:
        manifest = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "code_version": leaper.__version__,
            "config": self.cfg.to_dict(),
            "rng_states": self.seeds,
            "timings_seconds": self.timings,
            "outputs": {str(p.relative_to(self.out)): sha256_file(p) for p in self.files},
        }
        path = self.out / "manifest.json"
        atomic_write_text(path, json.dumps(manifest, indent=1, default=str) + "\n")
        return path


def _ddpg(cfg: ExperimentConfig) -> DDPGConfig:
    d = dict(cfg.section("ddpg"))
    d["hidden"] = tuple(d["hidden"])
    return DDPGConfig(**d)


def _planner(cfg: ExperimentConfig) -> PlannerConfig:
    p = dict(cfg.section("planner"))
    p["control_duration_range"] = tuple(p["control_duration_range"])
    return PlannerConfig(model=cfg.model, **p)


def _env_overrides(cfg: ExperimentConfig) -> dict:
    e = dict(cfg.section("env"))
    e["obs_noise"] = tuple(e["obs_noise"])
    return e


def _trajectory(cfg: ExperimentConfig, layout, seed: int, ctx: RunContext) -> PlannedTrajectory:
    if cfg.trajectory:
        return PlannedTrajectory.load(cfg.trajectory)
    t0 = time.perf_counter()
    traj = ex.plan_for_seed(layout, cfg.model, seed, _planner(cfg))
    ctx.timings[f"plan_seed_{seed}"] = time.perf_counter() - t0
    traj.save(ctx.path(f"trajectory_seed_{seed}.json"))
    return traj


def cmd_plan(cfg: ExperimentConfig, ctx: RunContext) -> None:
    layout = load_layout(cfg.layout)
    rows = []
    for seed in cfg.seeds:
        ctx.record_seed(seed)
        traj = _trajectory(replace(cfg, trajectory=None), layout, seed, ctx)
        final = traj.states[-1].object_poses[layout.scene.target_index]
        rows.append((seed, cfg.model, traj.stats["iterations"], traj.stats["nodes"], len(traj), final.x, final.y))
    write_csv(ctx.path("plans.csv"), "plan_summary/v1", ("seed", "model", "iterations", "nodes", "length", "target_x", "target_y"), rows)


def cmd_train(cfg: ExperimentConfig, ctx: RunContext) -> None:
    layout = load_layout(cfg.layout)
    tr = cfg.section("train")
    curves = []
    for seed in cfg.seeds:
        ctx.record_seed(seed)
        traj = _trajectory(cfg, layout, seed, ctx) if cfg.alpha > 0.0 else None
        t0 = time.perf_counter()
        run = ex.train_seed(
            layout, cfg.model, cfg.alpha, seed, cfg.episodes, _ddpg(cfg), tr["eval_interval"], tr["eval_episodes"],
            config_id=f"{cfg.model}-a{cfg.alpha}" if cfg.alpha > 0.0 else "her",
            env_overrides=_env_overrides(cfg), uniform=tr["uniform"], trajectory=traj,
        )
        ctx.timings[f"train_seed_{seed}"] = time.perf_counter() - t0
        write_csv(ctx.path(f"curve_seed_{seed}.csv"), "learning_curve/v1", ("episode", "success_rate", "seed", "config_id"), run.curve.rows())
        run.agent.save(ctx.path(f"checkpoint_seed_{seed}.npz"), extra={"layout": layout.name, "seed": seed})
        curves.append(run.curve)
    med, p20, p80 = episodes_to_threshold(curves, tr["threshold"]) if curves else (float("inf"),) * 3
    write_csv(
        ctx.path("aggregate.csv"), "curve_summary/v1",
        ("config_id", "seeds", "threshold", "median_episodes", "p20_episodes", "p80_episodes"),
        [(curves[0].config_id if curves else "", len(curves), tr["threshold"], med, p20, p80)],
    )


def cmd_evaluate(cfg: ExperimentConfig, ctx: RunContext) -> None:
    ev = cfg.section("evaluate")
    if not ev["checkpoint"]:
        raise ConfigError(["overrides.evaluate.checkpoint: required for evaluate"])
    agent, _ = DDPGAgent.load(ev["checkpoint"])
    layout = load_layout(cfg.layout)
    env_cfg = RearrangeEnvConfig.for_layout(layout, **_env_overrides(cfg))
    rows = []
    for seed in cfg.seeds:
        ctx.record_seed(seed)
        rate = evaluate(agent, env_cfg, ev["episodes"], ex.seed_streams(seed)["eval"])
        rows.append((layout.name, seed, ev["episodes"], rate))
    write_csv(ctx.path("evaluation.csv"), "evaluation/v1", ("layout", "seed", "episodes", "success_rate"), rows)


def cmd_baseline(cfg: ExperimentConfig, ctx: RunContext) -> None:
    b = cfg.section("baseline")
    layout = load_layout(cfg.layout)
    env_cfg = RearrangeEnvConfig.for_layout(layout, **_env_overrides(cfg))
    rows = []
    for seed in cfg.seeds:
        ctx.record_seed(seed)
        ref = densify(_trajectory(cfg, layout, seed, ctx), layout)
        rng = ex.seed_streams(seed)["baseline"]
        if b["controller"] == "open_loop":
            rate = openloop_rollout(ref, env_cfg, rng, b["trials"])
        elif b["controller"] == "velocity_feedback":
            rate = velocity_feedback_rollout(ref, env_cfg, rng, b["trials"], b["feedback_gain"])
        else:
            sol, _ = ilqr_controller(ref, env_cfg, b["ilqr_iterations"], fd_step=b["ilqr_fd_step"])
            rate = ilqr_track(ref, env_cfg, rng, b["trials"], solution=sol)
        n = b["trials"]
        rows.append((b["controller"], layout.name, n, round(rate * n), rate, seed))
    write_csv(ctx.path("baseline.csv"), "controller_results/v1", ("controller", "layout", "trials", "successes", "success_rate", "seed"), rows)


def _study_config(cfg: ExperimentConfig) -> CartPoleStudyConfig:
    c = cfg.section("cartpole")
    return CartPoleStudyConfig(episodes=c["episodes"], eval_interval=c["eval_interval"])


def _write_fig3(ctx: RunContext, results) -> None:
    rows = [(name, seed, ep, kl) for name, per_seed in results.items() for seed, series in per_seed.items() for ep, kl in series]
    write_csv(ctx.path("kl_series.csv"), "kl_series/v1", ("config_id", "seed", "episode", "kl"), rows)
    summary = [(name, len(per_seed), ex.final_kl(per_seed)) for name, per_seed in results.items()]
    write_csv(ctx.path("kl_summary.csv"), "kl_summary/v1", ("config_id", "seeds", "median_final_kl"), summary)


def cmd_cartpole_study(cfg: ExperimentConfig, ctx: RunContext) -> None:
    for seed in cfg.seeds:
        ctx.record_seed(seed)
    _write_fig3(ctx, ex.fig3_desk(cfg.seeds, _study_config(cfg)))


def cmd_reproduce(cfg: ExperimentConfig, ctx: RunContext) -> None:
    for seed in cfg.seeds:
        ctx.record_seed(seed)
    t0 = time.perf_counter()
    if cfg.target == "fig6-desk":
        res = ex.fig6_desk(cfg.seeds, cfg.episodes, cfg.layout, ddpg=_ddpg(cfg))
        write_csv(ctx.path("curves.csv"), "learning_curve/v1", ("episode", "success_rate", "seed", "config_id"), res.curve_rows())
        write_csv(
            ctx.path("fig6_summary.csv"), "fig6_summary/v1",
            ("config_id", "seeds", "reached", "median_episodes", "p20_episodes", "p80_episodes"), res.summary_rows(),
        )
    elif cfg.target == "table1-desk":
        b = cfg.section("baseline")
        layout = load_layout(cfg.layout)
        if cfg.alpha <= 0.0:
            raise ConfigError(["alpha: table1-desk compares a policy trained with planned resets, alpha must be > 0"])
        runs = [ex.train_seed(layout, cfg.model, cfg.alpha, seed, cfg.episodes, _ddpg(cfg)) for seed in cfg.seeds]
        results = ex.table1_desk(runs, layout, b["trials"], b["ilqr_iterations"], b["ilqr_fd_step"])
        write_csv(ctx.path("table1.csv"), "controller_results/v1", ("controller", "layout", "trials", "successes", "success_rate", "seed"), [r.row() for r in results])
    elif cfg.target == "fig3-desk":
        _write_fig3(ctx, ex.fig3_desk(cfg.seeds, _study_config(cfg)))
    elif cfg.target == "planning-times":
        trials = ex.planning_times(cfg.layout, len(cfg.seeds), base_seed=cfg.seeds[0], config=_planner(cfg))
        for t in trials:
            ctx.timings[f"plan_{t.model}_{t.trial}"] = t.seconds
        write_csv(ctx.path("planning.csv"), "planning_trials/v1", ("model", "trial", "seed", "iterations", "nodes", "plan_length"), [t.row() for t in trials])
    ctx.timings["total"] = time.perf_counter() - t0


HANDLERS = {
    "plan": cmd_plan,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "cartpole-study": cmd_cartpole_study,
    "reproduce": cmd_reproduce,
}

# Desk-scale defaults per reproduce target, applied before explicit flags.
REPRODUCE_DEFAULTS = {
    "fig6-desk": {"layout": "reduced", "seeds": "0..4", "episodes": ex.DESK_EPISODES},
    "table1-desk": {"layout": "reduced", "seeds": "0..4", "episodes": ex.DESK_EPISODES, "alpha": 0.5},
    "fig3-desk": {"seeds": "0..4"},
    "planning-times": {"layout": "3", "seeds": "0..9"},
}
DESK_DDPG_OVERRIDES = {"hidden": [64, 64, 64], "batch_size": 128, "lr_actor": 1e-3, "lr_critic": 1e-3, "action_l2": 0.0}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leaper", description="Planning, learning and baselines for planar rearrangement.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("target", nargs="?", help="reproduce target (fig6-desk, table1-desk, fig3-desk, planning-times)")
    p.add_argument("--config", help="YAML experiment config; flags override it")
    p.add_argument("--layout")
    p.add_argument("--model", choices=("dynamic", "quasistatic", "weld"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", dest="seeds", help="alias of --seeds")
    p.add_argument("--seeds", dest="seeds", help="e.g. 3, 1,4,7 or 1..5")
    p.add_argument("--episodes", type=int)
    p.add_argument("--trajectory", help="planned trajectory JSON to use instead of planning")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override, e.g. ddpg.hidden=[64,64]")
    return p


def assemble(argv: list[str]) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    raw: dict = {}
    if args.config:
        try:
            raw = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"--config: {exc}"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["--config: expected a mapping"])
    raw["command"] = args.command
    if args.command == "reproduce":
        raw["target"] = args.target or raw.get("target")
        for k, v in REPRODUCE_DEFAULTS.get(raw["target"], {}).items():
            raw.setdefault(k, v)
        over = raw.setdefault("overrides", {})
        if isinstance(over, dict):
            ddpg = over.setdefault("ddpg", {})
            for k, v in DESK_DDPG_OVERRIDES.items():
                ddpg.setdefault(k, v)
    elif args.target:
        raise ConfigError([f"unexpected positional argument {args.target!r}"])
    for key in ("layout", "model", "alpha", "seeds", "episodes", "trajectory", "output_dir"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    errors = []
    for item in args.set:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            errors.append(f"--set {item!r}: expected SECTION.KEY=VALUE")
            continue
        raw.setdefault("overrides", {}).setdefault(section, {})[name] = yaml.safe_load(value)
    if errors:
        raise ConfigError(errors)
    return validate_dict(raw)


def _error(code: int, kind: str, message: str, out_dir: Path | None, details=None) -> int:
    record = {"status": "error", "exit_code": code, "kind": kind, "message": message, "details": details}
    text = json.dumps(record, default=str)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            atomic_write_text(out_dir / "error.json", text + "\n")
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = assemble(argv)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), None, exc.errors)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    name = cfg.command if cfg.command != "reproduce" else f"reproduce-{cfg.target}"
    out_dir = Path(cfg.output_dir) if cfg.output_dir else Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / name
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out_dir)
    try:
        HANDLERS[cfg.command](cfg, ctx)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "config", str(exc), out_dir, exc.errors)
    except (LayoutError, FileNotFoundError) as exc:
        return _error(EXIT_CONFIG, "missing_input", str(exc), out_dir)
    except PlanningFailed as exc:
        return _error(EXIT_PLANNER, "planner", str(exc), out_dir, exc.stats)
    except ValueError as exc:
        code = EXIT_TRAINING if cfg.command in ("train", "evaluate", "cartpole-study") else EXIT_CONFIG
        return _error(code, "invalid_input", str(exc), out_dir)
    except (FloatingPointError, RuntimeError, np.linalg.LinAlgError) as exc:
        return _error(EXIT_TRAINING, "training", str(exc), out_dir)
    manifest = ctx.write_manifest()
    print(json.dumps({"status": "ok", "manifest": str(manifest), "outputs": [str(p) for p in ctx.files]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
