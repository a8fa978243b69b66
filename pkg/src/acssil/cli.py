"""Command-line entry points: train, gen-demos, eval, suite, curves, bench.

Training configuration resolves in three layers, later winning: a config
file (--config), repeated --set key=value overrides, then the dedicated
flags (--env, --alpha, ...). Every command exits nonzero when any seed or
suite cell fails, so shell pipelines notice broken runs.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import envs as E
from . import harness as H
from ._kernels import active_backend, set_backend
from .agent import Agent, checkpoint_extra, train_step
from .buffers import ReplayBuffer, Transition
from .errors import AcssilError, ConfigError

# dedicated train flags and the config keys they override
_TRAIN_FLAG_KEYS = (
    ("env", "env.name"),
    ("variant", "agent.variant"),
    ("alpha", "agent.alpha"),
    ("k", "agent.k"),
    ("demos", "run.demo_path"),
    ("steps", "run.total_env_steps"),
    ("seed", "run.seed_base"),
    ("seeds", "run.n_seeds"),
    ("out", "run.out_dir"),
)


def _parse_sets(pairs):
    items = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        items[key.strip()] = value.strip()
    return items


def _print_aggregate(agg):
    if agg.get("n_seeds_ok", 0) == 0:
        print("no seeds completed")
        return
    print(
        f"seeds_ok={agg['n_seeds_ok']}"
        f" final_success={agg['mean_final_success']:.3f}"
        f"±{agg['std_final_success']:.3f}"
        f" final_return={agg['mean_final_return']:.2f}"
        f"±{agg['std_final_return']:.2f}"
    )


def _report_failures(failed, where=""):
    for key, err in sorted(failed.items()):
        print(f"FAILED {where}{key}: {err}", file=sys.stderr)


def cmd_train(args):
    items = {}
    if args.config:
        items.update(H.parse_config_text(Path(args.config).read_text()))
    items.update(_parse_sets(args.set))
    for flag, key in _TRAIN_FLAG_KEYS:
        value = getattr(args, flag)
        if value is not None:
            items[key] = str(value)
    if args.three_d:
        items["env.three_d"] = "true"
    cfg = H.make_config(items)
    report = H.run_training(cfg, workers=args.workers)
    print(f"run dir: {cfg.out_dir}")
    _print_aggregate(report.aggregate)
    _report_failures(report.failed, where="seed ")
    return 1 if report.failed else 0


def cmd_gen_demos(args):
    spec = E.env_spec(args.env, args.three_d)
    attempts = E.generate_demos(
        spec, args.episodes, args.seed,
        include_actions=args.with_actions, out_path=args.out,
    )
    kind = "labeled" if args.with_actions else "state-only"
    print(f"wrote {args.episodes} {kind} episodes to {args.out}"
          f" ({attempts} expert rollouts)")
    return 0


def cmd_eval(args):
    extra = checkpoint_extra(args.checkpoint)
    if "env_name" not in extra:
        raise ConfigError(
            f"{args.checkpoint}: no environment recorded in the checkpoint"
        )
    spec = E.env_spec(extra["env_name"], extra.get("three_d", False))
    result = H.evaluate(args.checkpoint, spec, args.episodes, args.seed)
    print(
        f"{extra['env_name']}: success_rate={result.success_rate:.3f}"
        f" mean_return={result.mean_return:.2f}"
        f" over {args.episodes} episodes"
    )
    return 0


def cmd_suite(args):
    overrides = _parse_sets(args.set)
    summary, n_failed = H.run_suite(
        args.name, args.out, n_seeds=args.seeds,
        overrides=overrides, workers=args.workers,
    )
    for name, cell in summary["cells"].items():
        print(f"{name}:")
        _print_aggregate(cell["aggregate"])
        _report_failures(cell["failed"], where=f"{name} seed ")
    print(f"suite dir: {Path(args.out) / args.name}")
    return 1 if n_failed else 0


def cmd_curves(args):
    reports = [H.load_report(d) for d in args.in_dirs]
    warnings = H.emit_curves(reports, args.out)
    for line in warnings:
        print(f"warning: {line}", file=sys.stderr)
    print(f"curve files in {args.out}")
    return 0


# ---------------------------------------------------------------------------
# backend benchmark


def _bench_setup(variant, demo_path):
    spec = E.env_spec("pick_place2d")
    cfg = H.make_config({
        "env.name": "pick_place2d",
        "agent.variant": variant,
        "agent.alpha": "0.1",
        "run.demo_path": str(demo_path) if variant != "base_ac" else "",
    })
    agent = Agent(H.agent_config_for(cfg, spec), seed=0)
    expert = H.load_expert(cfg, spec)
    replay = ReplayBuffer(
        10_000, E.state_dim(spec), spec.action_dim, spec.goal_dim,
        E.goal_reward_fn(spec),
    )
    rng = np.random.default_rng(0)
    state = E.env_reset(spec, seed=0)
    episode_id, step_index = 0, 0
    for _ in range(2_000):
        action = rng.uniform(-1.0, 1.0, spec.action_dim)
        nxt, reward, done, success = E.env_step(state, action)
        replay.push(Transition(
            E.flat_state(state), action, reward, E.flat_state(nxt),
            bool(success), episode_id, step_index,
        ))
        step_index += 1
        if done:
            state = E.env_reset(spec, seed=int(rng.integers(1 << 31)))
            episode_id, step_index = episode_id + 1, 0
        else:
            state = nxt
    return agent, replay, expert


def _bench_loop(agent, replay, expert, steps):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for _ in range(steps):
        train_step(agent, replay, expert, rng=rng)
    return (time.perf_counter() - t0) / steps * 1e3


def cmd_bench(args):
    demo_path = H.ensure_demos(Path(args.demo_dir), "pick_place2d", 100)
    rows = []
    restore = active_backend()
    try:
        for backend in ("cython", "numpy"):
            try:
                set_backend(backend)
            except ImportError:
                print(f"{backend}: extension not built, skipping")
                continue
            for variant in ("base_ac", "ac_ssil"):
                agent, replay, expert = _bench_setup(variant, demo_path)
                _bench_loop(agent, replay, expert, steps=30)  # warm-up
                ms = _bench_loop(agent, replay, expert, args.steps)
                rows.append((backend, variant, ms))
                print(f"{backend:7s} {variant:8s} {ms:7.3f} ms/train_step")
    finally:
        set_backend(restore)
    by_key = {(b, v): ms for b, v, ms in rows}
    for variant in ("base_ac", "ac_ssil"):
        pair = by_key.get(("cython", variant)), by_key.get(("numpy", variant))
        if None not in pair:
            print(f"{variant}: compiled is {pair[1] / pair[0]:.2f}x faster")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="acssil",
        description="Train and evaluate actor-critic agents guided by "
                    "state-only demonstrations on toy manipulation tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one configuration over its seeds")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--env", choices=E.ENV_NAMES)
    p.add_argument("--three-d", action="store_true",
                   help="use the 3-D variant of the task")
    p.add_argument("--variant", choices=H.VARIANTS)
    p.add_argument("--alpha", type=float, help="imitation penalty weight")
    p.add_argument("--k", type=int, help="nearest neighbours per pseudo label")
    p.add_argument("--demos", help="demo file path")
    p.add_argument("--steps", type=int, help="environment step budget")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-demos", help="record scripted-expert episodes")
    p.add_argument("--env", required=True, choices=E.ENV_NAMES)
    p.add_argument("--three-d", action="store_true")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--with-actions", action="store_true",
                   help="store expert actions alongside states")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="demo file to write")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("eval", help="evaluate a saved agent checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("suite", help="run a named experiment suite")
    p.add_argument("--name", required=True, choices=H.SUITES)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default="runs", help="suite output root")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override applied to every cell (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("curves", help="emit curve CSVs from finished runs")
    p.add_argument("--in", dest="in_dirs", nargs="+", required=True,
                   metavar="RUN_DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("bench", help="time train steps on both kernel backends")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--demo-dir", default="runs/demos")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AcssilError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
