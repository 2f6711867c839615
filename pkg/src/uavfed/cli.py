"""Command-line interface.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime aborts.
"""

from dataclasses import replace
import argparse
import sys
from pathlib import Path

from .config import SimConfig
from .data import generate_dataset, save_dataset
from .errors import InvalidConfigError, UavFedError
from .experiments import ALGOS, run_experiment, train_policy
from .nets import checkpoint_to_text, load_checkpoint


def _load_config(args) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else SimConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg.rl.workers = args.workers
    return cfg.validate()


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)

    def progress(row):
        if args.verbose and row.episode % 25 == 0:
            print(f"episode {row.episode}: cost {row.mean_cost:.4f} "
                  f"reward {row.mean_reward:.4f}")

    train_policy(cfg, out_dir=out, progress=progress)
    print(f"wrote {out / 'actor.ckpt'}, {out / 'critic.ckpt'}, {out / 'episodes.csv'}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    actor = load_checkpoint(args.checkpoint) if args.checkpoint else None
    summary = run_experiment(
        cfg, args.algo, seeds=[cfg.seed], rounds=args.rounds,
        out_dir=args.out, actor_params=actor,
    )
    print(f"final accuracy {summary['accuracy_mean'][-1]:.4f} "
          f"after {args.rounds} rounds ({args.algo})")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    actor = load_checkpoint(args.checkpoint) if args.checkpoint else None
    for algo in args.algos.split(","):
        algo = algo.strip()
        params = actor
        if algo.startswith("a3c") and params is None:
            raise InvalidConfigError(f"{algo} in a sweep needs --checkpoint")
        summary = run_experiment(
            cfg, algo, seeds=seeds, rounds=args.rounds,
            out_dir=args.out, actor_params=params,
        )
        print(f"{algo}: mean final accuracy {summary['accuracy_mean'][-1]:.4f}")
    return 0


def _cmd_gen_data(args) -> int:
    ds = generate_dataset(args.seed, args.samples, args.features, args.classes)
    save_dataset(args.out, ds)
    print(f"wrote {args.out} ({args.samples} samples, "
          f"{args.features} features, {args.classes} classes)")
    return 0


def _cmd_dump_ckpt(args) -> int:
    sys.stdout.write(checkpoint_to_text(args.checkpoint))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavfed")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the scheduler policy")
    t.add_argument("--config", help="JSON config file (defaults otherwise)")
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="run one algorithm from a checkpoint")
    e.add_argument("--checkpoint", help="actor checkpoint (a3c-* algorithms)")
    e.add_argument("--algo", required=True, choices=ALGOS)
    e.add_argument("--rounds", type=int, required=True)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", default="eval-out")
    e.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("sweep", help="run several algorithms over several seeds")
    s.add_argument("--algos", required=True, help="comma-separated algorithm ids")
    s.add_argument("--seeds", required=True, help="comma-separated seeds")
    s.add_argument("--rounds", type=int, default=40)
    s.add_argument("--config")
    s.add_argument("--checkpoint")
    s.add_argument("--out", default="sweep-out")
    s.set_defaults(func=_cmd_sweep)

    g = sub.add_parser("gen-data", help="emit a seeded dataset file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--samples", type=int, default=2000)
    g.add_argument("--features", type=int, default=20)
    g.add_argument("--classes", type=int, default=10)
    g.set_defaults(func=_cmd_gen_data)

    d = sub.add_parser("dump-ckpt", help="print a checkpoint as text")
    d.add_argument("--checkpoint", required=True)
    d.set_defaults(func=_cmd_dump_ckpt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UavFedError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
