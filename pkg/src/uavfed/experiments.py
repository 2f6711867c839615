"""Experiment runner: algorithms, per-seed metrics files, cross-seed summary."""

from dataclasses import replace
import csv
import json
from pathlib import Path

import numpy as np

from . import a3c, baselines
from .config import SimConfig
from .env import Env
from .errors import InvalidConfigError
from .nets import load_checkpoint

ALGOS = ("a3c-afl", "a3c-sfl", "grad-afl", "afl-select", "afl-random", "sfl-select")

ROUND_COLUMNS = [
    "round", "cell", "selected_count", "responder_count", "selected_ids",
    "responder_ids", "t_global", "latency", "c_time_raw", "c_loss_raw",
    "c_time_norm", "c_loss_norm", "system_cost", "cost_scaled", "reward",
    "accuracy", "sim_time", "violations",
]
DEVICE_COLUMNS = [
    "round", "cell", "device", "t_local", "t_up", "t_down", "t_global",
    "t_total", "responded",
]
EPISODE_COLUMNS = [
    "episode", "mean_cost", "mean_reward", "mean_c_time", "mean_c_loss",
    "violations",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mode_for(algo: str) -> str:
    return "sfl" if algo.endswith("sfl") or algo == "sfl-select" else "afl"


def run_rounds(cfg: SimConfig, algo: str, rounds: int, actor_params=None):
    """Run `rounds` scheduling slots of one algorithm on a fresh environment.

    Returns the per-round metrics list. For the a3c-* algorithms
    `actor_params` must hold trained actor parameters; actions are taken
    deterministically (head modes).
    """
    if algo not in ALGOS:
        raise InvalidConfigError(f"unknown algorithm {algo!r} (expected one of {ALGOS})")
    cfg = replace(cfg, fl_mode=_mode_for(algo)).validate()
    env = Env(cfg)
    snap = env.reset(a3c._episode_seed(cfg.seed, 0))
    sel_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4000)))
    act_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4001)))

    actor_net = layout = None
    if algo.startswith("a3c"):
        if actor_params is None:
            raise InvalidConfigError(f"{algo} needs trained actor parameters")
        actor_net, _, layout = a3c.build_nets(cfg)
        if tuple(actor_params.sizes) != actor_net.sizes:
            raise InvalidConfigError(
                f"checkpoint shape {actor_params.sizes} does not match config "
                f"{actor_net.sizes}"
            )

    history = []
    for _ in range(rounds):
        if algo.startswith("a3c"):
            actions = a3c.policy_actions(
                actor_net, layout, actor_params, snap, cfg, act_rng,
                deterministic=True,
            )
        else:
            actions = []
            for cell in range(cfg.num_uavs):
                if algo == "grad-afl":
                    actions.append(baselines.baseline_gradient_scheduler(env, cell))
                    continue
                if algo == "afl-random":
                    ids = baselines.baseline_select_random(
                        env, cell, cfg.select_count, sel_rng
                    )
                else:  # afl-select / sfl-select
                    ids = baselines.baseline_select_topk(env, cell, cfg.select_count)
                actions.append(baselines.make_static_action(env, cell, ids))
        snap, metrics = env.step(actions)
        history.append(metrics)
    return history


def write_round_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROUND_COLUMNS)
        for m in history:
            for c in m.cells:
                w.writerow([
                    m.round_index, c.cell, len(c.selected), len(c.responders),
                    ";".join(str(d) for d in c.selected),
                    ";".join(str(d) for d in c.responders),
                    _fmt(c.t_global), _fmt(c.latency), _fmt(c.c_time_raw),
                    _fmt(c.c_loss_raw), _fmt(c.c_time_norm), _fmt(c.c_loss_norm),
                    _fmt(c.cost_norm), _fmt(c.cost_scaled), _fmt(c.reward),
                    _fmt(m.accuracy), _fmt(m.sim_time), m.violations,
                ])


def write_device_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DEVICE_COLUMNS)
        for m in history:
            for c in m.cells:
                for dev in c.selected:
                    w.writerow([
                        m.round_index, c.cell, dev, _fmt(c.t_local[dev]),
                        _fmt(c.t_up[dev]), _fmt(c.t_down[dev]), _fmt(c.t_global),
                        _fmt(c.t_total[dev]), int(dev in c.responders),
                    ])


def write_episode_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for r in rows:
            w.writerow([
                r.episode, _fmt(r.mean_cost), _fmt(r.mean_reward),
                _fmt(r.mean_c_time), _fmt(r.mean_c_loss), r.violations,
            ])


def read_episode_costs(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [float(row["mean_cost"]) for row in csv.DictReader(fh)]


def round_curves(history):
    """Per-round curves of one run: accuracy, cumulative time, mean scaled cost."""
    acc = [m.accuracy for m in history]
    times = [m.sim_time for m in history]
    costs = [
        float(np.mean([c.cost_scaled for c in m.cells])) if m.cells else float("nan")
        for m in history
    ]
    return {"accuracy": acc, "sim_time": times, "cost_scaled": costs}


def run_experiment(cfg: SimConfig, algo: str, seeds, rounds: int, out_dir,
                   actor_params=None, actor_ckpt=None):
    """Per-seed metrics CSVs plus one summary JSON with mean/std curves."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if actor_params is None and actor_ckpt is not None:
        actor_params = load_checkpoint(actor_ckpt)
    curves = []
    for seed in seeds:
        run_cfg = replace(cfg, seed=int(seed))
        history = run_rounds(run_cfg, algo, rounds, actor_params=actor_params)
        write_round_csv(out / f"{algo}_seed{seed}_rounds.csv", history)
        write_device_csv(out / f"{algo}_seed{seed}_devices.csv", history)
        curves.append(round_curves(history))

    summary = {"algo": algo, "rounds": rounds, "seeds": [int(s) for s in seeds]}
    for key in ("accuracy", "sim_time", "cost_scaled"):
        stacked = np.array([c[key] for c in curves])
        summary[f"{key}_mean"] = [float(v) for v in stacked.mean(axis=0)]
        summary[f"{key}_std"] = [float(v) for v in stacked.std(axis=0)]
    with open(out / f"{algo}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def train_policy(cfg: SimConfig, out_dir=None, progress=None):
    """Train the scheduler on `cfg`; optionally checkpoint and log episodes."""
    store, rows = a3c.train(cfg, env_factory=Env, progress=progress)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        store.save(out)
        write_episode_csv(out / "episodes.csv", rows)
    return store, rows
