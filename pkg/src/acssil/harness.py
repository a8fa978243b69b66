"""Seeded experiment execution: training runs, evaluation, curves, suites.

A run trains one agent configuration over several seeds, writing one
metrics CSV per seed plus an aggregate JSON report; completed seeds are
skipped on rerun. Suites expand to a matrix of runs and emit a combined
summary. All randomness is derived from the config, so identical configs
reproduce identical artifacts byte for byte.
"""

import csv
import dataclasses
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs as E
from .agent import (
    VARIANTS,
    Agent,
    AgentConfig,
    load_agent,
    save_agent,
    select_action,
    train_step,
)
from .buffers import ReplayBuffer, Transition, load_demos
from .errors import ConfigError

# fixed column order of the per-seed metrics CSV
CSV_COLUMNS = (
    "step",
    "eval_success",
    "eval_return",
    "critic_loss",
    "actor_objective",
    "q_mean",
    "target_mean",
)

# evaluation episodes reuse the same seeds at every eval point and across
# variants, so curves are comparable; offset keeps them out of training seeds
_EVAL_SEED_BASE = 1_000_000_000
_EVAL_SEED_STRIDE = 10_000


@dataclass
class ExperimentConfig:
    """Everything one training run needs, addressable as dotted keys.

    Config files and CLI overrides use `env.*`, `agent.*`, and `run.*`
    prefixes (see key_to_field); the dataclass itself stays flat.
    """

    env_name: str = "reach2d"
    three_d: bool = False
    variant: str = "base_ac"
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 5.0
    k: int = 5
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    batch_size: int = 64
    exploration_noise_std: float = 0.1
    update_to_step: float = 1.0
    hidden_dims: tuple = (64, 64)
    std_bonus_weight: float = 1.0
    std_bonus_decay: float = 1.0
    total_env_steps: int = 20_000
    eval_every: int = 2_000
    n_eval_episodes: int = 20
    n_seeds: int = 10
    seed_base: int = 0
    her_ratio: float = 0.8
    warmup_steps: int = 1_000
    random_action_prob: float = 0.1
    random_action_hold: int = 10
    replay_capacity: int = 100_000
    demo_path: str = ""
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        for name in ("total_env_steps", "eval_every", "n_eval_episodes",
                     "n_seeds", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eval_every > self.total_env_steps:
            raise ConfigError(
                f"eval_every {self.eval_every} exceeds budget {self.total_env_steps}"
            )
        if not 0.0 <= self.her_ratio <= 1.0:
            raise ConfigError(f"her_ratio must be in [0,1], got {self.her_ratio}")
        if not 0.0 <= self.random_action_prob <= 1.0:
            raise ConfigError(
                f"random_action_prob must be in [0,1], got {self.random_action_prob}"
            )
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.random_action_hold < 1:
            raise ConfigError(
                f"random_action_hold must be >= 1, got {self.random_action_hold}"
            )
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)

    def seeds(self):
        """Distinct per-run seeds, seed_base + index."""
        return [self.seed_base + i for i in range(self.n_seeds)]


# dotted config keys: section -> key -> dataclass field
_AGENT_KEYS = (
    "variant", "gamma", "tau", "alpha", "k", "actor_lr", "critic_lr",
    "batch_size", "exploration_noise_std", "update_to_step", "hidden_dims",
    "std_bonus_weight", "std_bonus_decay",
)
_RUN_KEYS = (
    "total_env_steps", "eval_every", "n_eval_episodes", "n_seeds", "seed_base",
    "her_ratio", "warmup_steps", "random_action_prob", "random_action_hold",
    "replay_capacity", "demo_path", "out_dir",
)
_SECTIONS = {
    "env": {"name": "env_name", "three_d": "three_d"},
    "agent": {k: k for k in _AGENT_KEYS},
    "run": {k: k for k in _RUN_KEYS},
}
_FIELD_TO_KEY = {
    fname: f"{sec}.{key}"
    for sec, keys in _SECTIONS.items()
    for key, fname in keys.items()
}


def key_to_field(key):
    """Map a dotted config key to its ExperimentConfig field name."""
    sec, _, rest = key.partition(".")
    try:
        return _SECTIONS[sec][rest]
    except KeyError:
        raise ConfigError(f"unknown config key {key!r}") from None


def _coerce(fname, raw):
    ftype = ExperimentConfig.__dataclass_fields__[fname].type
    raw = raw.strip()
    if ftype is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{_FIELD_TO_KEY[fname]}: expected a boolean, got {raw!r}")
    try:
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is tuple:
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{_FIELD_TO_KEY[fname]}: bad value {raw!r}") from None
    return raw


def parse_config_text(text):
    """Parse `key = value` lines into a dotted-key dict; later keys win."""
    items = {}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {no}: expected key=value, got {line!r}")
        items[key.strip()] = value.strip()
    return items


def make_config(items):
    """Build an ExperimentConfig from dotted-key string items."""
    kwargs = {}
    for key, raw in items.items():
        fname = key_to_field(key)
        kwargs[fname] = _coerce(fname, raw)
    return ExperimentConfig(**kwargs)


def load_config(path, overrides=None):
    """Read a config file and apply override items on top."""
    items = parse_config_text(Path(path).read_text())
    items.update(overrides or {})
    return make_config(items)


def config_items(cfg):
    """Resolved config as dotted key -> string value, sorted by key."""
    out = {}
    for fname, value in dataclasses.asdict(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out[_FIELD_TO_KEY[fname]] = str(value)
    return dict(sorted(out.items()))


def agent_config_for(cfg, spec):
    return AgentConfig(
        state_dim=E.state_dim(spec),
        action_dim=spec.action_dim,
        variant=cfg.variant,
        gamma=cfg.gamma,
        tau=cfg.tau,
        alpha=cfg.alpha,
        k=cfg.k,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        batch_size=cfg.batch_size,
        exploration_noise_std=cfg.exploration_noise_std,
        update_to_step=cfg.update_to_step,
        hidden_dims=cfg.hidden_dims,
        std_bonus_weight=cfg.std_bonus_weight,
        std_bonus_decay=cfg.std_bonus_decay,
    )


def load_expert(cfg, spec):
    """Demo buffer for the configured variant; None when none is needed."""
    if cfg.variant == "base_ac":
        return None
    if not cfg.demo_path:
        raise ConfigError(f"variant {cfg.variant!r} requires run.demo_path")
    expert = load_demos(cfg.demo_path)
    want = E.state_dim(spec)
    if expert.states.shape[1] != want:
        raise ConfigError(
            f"demo state width {expert.states.shape[1]} != {want} for {cfg.env_name}"
        )
    if cfg.variant == "ac_bc" and expert.actions is None:
        raise ConfigError("ac_bc requires action-labeled demos")
    return expert


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    """Per-episode outcomes of one deterministic policy evaluation."""

    successes: np.ndarray
    returns: np.ndarray

    @property
    def success_rate(self):
        return float(self.successes.mean())

    @property
    def mean_return(self):
        return float(self.returns.mean())


def _as_policy(policy):
    if isinstance(policy, Agent):
        agent = policy
        return lambda st: select_action(agent, E.flat_state(st), explore=False)
    if isinstance(policy, (str, Path)):
        return _as_policy(load_agent(policy))
    if callable(policy):
        return policy
    raise ConfigError(f"cannot evaluate object of type {type(policy).__name__}")


def evaluate(policy, spec, n_episodes, seed_base):
    """Roll a frozen policy on fresh episodes seeded seed_base + i.

    policy may be an Agent, a checkpoint path, or a callable mapping an
    environment state to an action. Success means the episode ended in
    success; returns are undiscounted reward sums.
    """
    if n_episodes < 1:
        raise ConfigError(f"n_episodes must be positive, got {n_episodes}")
    act = _as_policy(policy)
    successes = np.zeros(n_episodes, dtype=bool)
    returns = np.zeros(n_episodes)
    for i in range(n_episodes):
        state = E.env_reset(spec, seed_base + i)
        done = False
        total = 0.0
        success = False
        while not done:
            state, reward, done, success = E.env_step(state, act(state))
            total += reward
        successes[i] = success
        returns[i] = total
    return EvalResult(successes, returns)


# ---------------------------------------------------------------------------
# single-seed training


def _write_text_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([row[col] for col in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path):
    """Parse a per-seed metrics CSV back into row dicts."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {header}")
        rows = []
        for rec in reader:
            row = {"step": int(rec[0])}
            for col, tok in zip(CSV_COLUMNS[1:], rec[1:]):
                row[col] = float(tok)
            rows.append(row)
    return rows


def train_one_seed(cfg, seed_index, expert=None, csv_path=None, ckpt_path=None):
    """Train one seeded agent; returns the metric rows (CSV_COLUMNS order).

    The checkpoint is written before the CSV, so an existing CSV marks a
    fully persisted seed.
    """
    spec = E.env_spec(cfg.env_name, cfg.three_d)
    if expert is None and cfg.variant != "base_ac":
        expert = load_expert(cfg, spec)
    agent = Agent(agent_config_for(cfg, spec), seed=cfg.seed_base + seed_index)
    # streams owned by this seed: episode seeds / random actions / sampling
    env_rng, sample_rng = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence([cfg.seed_base + seed_index, 211]).spawn(2)
    ]
    replay = ReplayBuffer(
        cfg.replay_capacity,
        E.state_dim(spec),
        spec.action_dim,
        spec.goal_dim,
        E.goal_reward_fn(spec),
    )
    eval_seed = _EVAL_SEED_BASE + seed_index * _EVAL_SEED_STRIDE

    state = E.env_reset(spec, int(env_rng.integers(2**63 - 1)))
    episode_id = 0
    step_index = 0
    owed = 0.0
    window = dict.fromkeys(CSV_COLUMNS[3:], 0.0)
    window_n = 0
    rows = []
    rand_action = None
    rand_hold = 0
    for t in range(1, cfg.total_env_steps + 1):
        # random actions persist a few steps so exploration can e.g. keep a
        # gripper closed long enough to carry something
        if rand_hold > 0 or t <= cfg.warmup_steps \
                or env_rng.random() < cfg.random_action_prob:
            if rand_hold == 0:
                rand_action = env_rng.uniform(-1.0, 1.0, spec.action_dim)
                rand_hold = int(env_rng.integers(1, cfg.random_action_hold + 1))
            action = rand_action
            rand_hold -= 1
        else:
            action = select_action(agent, E.flat_state(state), explore=True)
        nstate, reward, done, success = E.env_step(state, action)
        # stored done is success only: time limits must not stop bootstrapping
        replay.push(
            Transition(
                E.flat_state(state), action, reward, E.flat_state(nstate),
                bool(success), episode_id, step_index,
            )
        )
        if done:
            state = E.env_reset(spec, int(env_rng.integers(2**63 - 1)))
            episode_id += 1
            step_index = 0
            rand_hold = 0
        else:
            state = nstate
            step_index += 1
        if t > cfg.warmup_steps:
            owed += cfg.update_to_step
            while owed >= 1.0:
                stats = train_step(
                    agent, replay, expert=expert, rng=sample_rng,
                    her_ratio=cfg.her_ratio,
                )
                for key in window:
                    window[key] += stats[key]
                window_n += 1
                owed -= 1.0
        if t % cfg.eval_every == 0:
            result = evaluate(agent, spec, cfg.n_eval_episodes, eval_seed)
            row = {
                "step": t,
                "eval_success": result.success_rate,
                "eval_return": result.mean_return,
            }
            for key in window:
                row[key] = window[key] / window_n if window_n else math.nan
                window[key] = 0.0
            window_n = 0
            rows.append(row)

    if ckpt_path is not None:
        save_agent(
            agent, ckpt_path,
            extra={"env_name": cfg.env_name, "three_d": cfg.three_d},
        )
    if csv_path is not None:
        _write_text_atomic(csv_path, _rows_to_csv(rows))
    return rows


# ---------------------------------------------------------------------------
# multi-seed runs


@dataclass
class EvalReport:
    """Aggregate outcome of one configuration across seeds."""

    config: dict
    seeds: dict = field(default_factory=dict)     # seed -> per-seed record
    failed: dict = field(default_factory=dict)    # seed -> error string
    aggregate: dict = field(default_factory=dict)
    curve_steps: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "config": dict(self.config),
            "seeds": {str(k): v for k, v in self.seeds.items()},
            "failed": {str(k): v for k, v in self.failed.items()},
            "aggregate": dict(self.aggregate),
            "curve_steps": list(self.curve_steps),
            "curves": {k: list(v) for k, v in self.curves.items()},
            "warnings": list(self.warnings),
        }


def _json_dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _shared_grid(step_lists):
    """Largest step grid present in every list, plus whether any differ."""
    sets = [set(steps) for steps in step_lists]
    shared = sorted(set.intersection(*sets)) if sets else []
    return shared, any(s != sets[0] for s in sets[1:])


def _build_report(cfg, rows_by_seed, failed):
    report = EvalReport(config=config_items(cfg), failed=dict(failed))
    finals_s, finals_r = [], []
    for seed_index, rows in sorted(rows_by_seed.items()):
        succ = [row["eval_success"] for row in rows]
        ret = [row["eval_return"] for row in rows]
        report.seeds[seed_index] = {
            "status": "ok",
            "final_success": succ[-1],
            "final_return": ret[-1],
            "steps": [row["step"] for row in rows],
            "eval_success": succ,
            "eval_return": ret,
        }
        finals_s.append(succ[-1])
        finals_r.append(ret[-1])
    if finals_s:
        fs, fr = np.array(finals_s), np.array(finals_r)
        report.aggregate = {
            "n_seeds_ok": len(finals_s),
            "mean_final_success": float(fs.mean()),
            "std_final_success": float(fs.std()),
            "mean_final_return": float(fr.mean()),
            "std_final_return": float(fr.std()),
        }
    else:
        report.aggregate = {"n_seeds_ok": 0}
    grids = [rec["steps"] for rec in report.seeds.values()]
    if grids:
        shared, mismatched = _shared_grid(grids)
        if mismatched:
            report.warnings.append(
                "eval step grids differ across seeds; aggregate curves use "
                f"the {len(shared)}-point shared grid"
            )
        report.curve_steps = shared
        for metric in ("eval_success", "eval_return"):
            per_step = []
            for step in shared:
                vals = [
                    rec[metric][rec["steps"].index(step)]
                    for rec in report.seeds.values()
                ]
                per_step.append(np.array(vals))
            short = metric.split("_", 1)[1]
            report.curves[f"mean_{short}"] = [float(v.mean()) for v in per_step]
            report.curves[f"std_{short}"] = [float(v.std()) for v in per_step]
    return report


def _seed_job(cfg_kwargs, seed_index, csv_path, ckpt_path):
    cfg = ExperimentConfig(**cfg_kwargs)
    train_one_seed(cfg, seed_index, csv_path=csv_path, ckpt_path=ckpt_path)


def run_training(cfg, workers=1):
    """Train every seed of a configuration, resuming past completed seeds.

    Writes seed_<i>.csv, seed_<i>_agent.npz, config.txt and report.json
    under cfg.out_dir and returns the EvalReport. A seed whose module
    raises is recorded as failed and does not stop the others.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text_atomic(
        out / "config.txt",
        "".join(f"{k}={v}\n" for k, v in config_items(cfg).items()),
    )
    paths = {i: out / f"seed_{i}.csv" for i in range(cfg.n_seeds)}
    todo = [i for i, p in paths.items() if not p.exists()]
    failed = {}
    if workers > 1 and len(todo) > 1:
        cfg_kwargs = dataclasses.asdict(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(
                    _seed_job, cfg_kwargs, i, paths[i], out / f"seed_{i}_agent.npz"
                ): i
                for i in todo
            }
            for fut, i in futures.items():
                try:
                    fut.result()
                except Exception as exc:
                    failed[i] = f"{type(exc).__name__}: {exc}"
    else:
        spec = E.env_spec(cfg.env_name, cfg.three_d)
        expert = load_expert(cfg, spec) if todo else None
        for i in todo:
            try:
                train_one_seed(
                    cfg, i, expert=expert, csv_path=paths[i],
                    ckpt_path=out / f"seed_{i}_agent.npz",
                )
            except Exception as exc:
                failed[i] = f"{type(exc).__name__}: {exc}"
    rows_by_seed = {
        i: read_metrics_csv(p) for i, p in paths.items() if p.exists()
    }
    report = _build_report(cfg, rows_by_seed, failed)
    _write_text_atomic(out / "report.json", _json_dumps(report.to_json_dict()))
    return report


def load_report(run_dir):
    """Rebuild an EvalReport from a run directory written by run_training.

    The report is recomputed from config.txt and the per-seed CSVs (the
    same path run_training takes), so it stays true to the raw metrics
    even if report.json was edited or deleted; failure records are carried
    over from report.json when present.
    """
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.txt")
    failed = {}
    report_path = run_dir / "report.json"
    if report_path.exists():
        stored = json.loads(report_path.read_text())
        failed = {int(k): v for k, v in stored.get("failed", {}).items()}
    rows_by_seed = {}
    for i in range(cfg.n_seeds):
        path = run_dir / f"seed_{i}.csv"
        if path.exists():
            rows_by_seed[i] = read_metrics_csv(path)
    return _build_report(cfg, rows_by_seed, failed)


# ---------------------------------------------------------------------------
# curve emission


def emit_curves(reports, out_dir, labels=None):
    """Write long-format and aggregate curve CSVs for external plotting.

    Long rows are (variant, seed, step, eval_success, eval_return); the
    aggregate carries mean and std per step. Reports whose seeds disagree
    on eval steps are resampled to the largest shared grid, recorded as a
    warning. Returns the list of warnings.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("emit_curves needs at least one report")
    if labels is None:
        labels = [rep.config.get("agent.variant", "?") for rep in reports]
    if len(labels) != len(reports):
        raise ConfigError(f"{len(labels)} labels for {len(reports)} reports")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings = []

    long_buf = io.StringIO()
    writer = csv.writer(long_buf, lineterminator="\n")
    writer.writerow(("variant", "seed", "step", "eval_success", "eval_return"))
    agg_buf = io.StringIO()
    agg = csv.writer(agg_buf, lineterminator="\n")
    agg.writerow(
        ("variant", "step", "mean_success", "std_success",
         "mean_return", "std_return", "n_seeds")
    )
    for label, rep in zip(labels, reports):
        grids = [rec["steps"] for rec in rep.seeds.values()]
        if not grids:
            warnings.append(f"{label}: no completed seeds, skipped")
            continue
        shared, mismatched = _shared_grid(grids)
        if mismatched:
            warnings.append(
                f"{label}: eval step grids differ across seeds; resampled "
                f"to the {len(shared)}-point shared grid"
            )
        for seed_index, rec in sorted(rep.seeds.items()):
            lookup = dict(zip(rec["steps"], zip(rec["eval_success"],
                                                rec["eval_return"])))
            for step in shared:
                succ, ret = lookup[step]
                writer.writerow((label, seed_index, step, succ, ret))
        for step in shared:
            vals = np.array([
                dict(zip(rec["steps"], zip(rec["eval_success"], rec["eval_return"])))[step]
                for rec in rep.seeds.values()
            ])
            agg.writerow(
                (label, step,
                 float(vals[:, 0].mean()), float(vals[:, 0].std()),
                 float(vals[:, 1].mean()), float(vals[:, 1].std()),
                 vals.shape[0])
            )
    _write_text_atomic(out / "curves.csv", long_buf.getvalue())
    _write_text_atomic(out / "curves_aggregate.csv", agg_buf.getvalue())
    if warnings:
        _write_text_atomic(out / "curves_warnings.txt",
                           "".join(w + "\n" for w in warnings))
    return warnings


# ---------------------------------------------------------------------------
# suites


SUITES = ("comparison", "analysis", "ablation", "sensitivity_k", "sensitivity_demos")

# desk-scale budgets: simpler tasks converge sooner
BUDGETS = {"reach2d": 20_000, "pick_place2d": 60_000, "handover2d": 100_000}

_DEMO_SEED = 20_240
_SUITE_DEMOS = 100


def _demo_file(demo_dir, env_name, n_episodes, labeled):
    kind = "labeled" if labeled else "states"
    return Path(demo_dir) / f"{env_name}_{n_episodes}ep_{kind}.demo"


def ensure_demos(demo_dir, env_name, n_episodes, labeled=False):
    """Generate a demo file once; reruns reuse the existing file."""
    path = _demo_file(demo_dir, env_name, n_episodes, labeled)
    if not path.exists():
        Path(demo_dir).mkdir(parents=True, exist_ok=True)
        E.generate_demos(
            E.env_spec(env_name), n_episodes, _DEMO_SEED,
            include_actions=labeled, out_path=path,
        )
    return path


def suite_cells(suite, demo_dir, n_seeds=5):
    """Expand a suite name into (cell_name, ExperimentConfig-kwargs) pairs.

    Demo files the cells need are generated under demo_dir on the spot.
    """
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    cells = []

    def add(env, variant, tag="", **extra):
        demo = ""
        if variant == "ac_bc":
            demo = str(ensure_demos(demo_dir, env, _SUITE_DEMOS, labeled=True))
        elif variant != "base_ac":
            n = extra.pop("_n_demos", _SUITE_DEMOS)
            demo = str(ensure_demos(demo_dir, env, n, labeled=False))
        name = f"{env}__{variant}{tag}"
        cells.append(
            (
                name,
                dict(
                    env_name=env,
                    variant=variant,
                    total_env_steps=BUDGETS[env],
                    n_seeds=n_seeds,
                    demo_path=demo,
                    **extra,
                ),
            )
        )

    if suite == "comparison":
        for env in ("reach2d", "pick_place2d", "handover2d"):
            for variant in ("base_ac", "ac_ssil"):
                add(env, variant)
    elif suite == "analysis":
        for variant in ("base_ac", "ac_bc", "ac_std", "ac_ssil"):
            add("pick_place2d", variant)
    elif suite == "ablation":
        for variant in ("base_ac", "actor_ssil", "ac_ssil"):
            add("handover2d", variant)
    elif suite == "sensitivity_k":
        for k in (1, 2, 5, 10, 20):
            add("pick_place2d", "ac_ssil", tag=f"__k{k}", k=k)
    else:  # sensitivity_demos
        for n in (10, 25, 50, 100):
            add("pick_place2d", "ac_ssil", tag=f"__d{n}", _n_demos=n)
    return cells


def run_suite(suite, out_root, n_seeds=5, overrides=None, workers=1):
    """Run every cell of a named suite under out_root/<suite>/<cell>.

    overrides are dotted config items applied to every cell after its
    manifest values. Completed seeds resume from disk; summary.json and
    combined curve CSVs are rewritten from all persisted results. Returns
    (summary dict, number of failed seeds).
    """
    out_root = Path(out_root)
    cells = suite_cells(suite, out_root / "demos", n_seeds=n_seeds)
    suite_dir = out_root / suite
    suite_dir.mkdir(parents=True, exist_ok=True)
    summary_cells = {}
    reports = []
    labels = []
    n_failed = 0
    for name, kwargs in cells:
        items = {_FIELD_TO_KEY[f]: str(v) for f, v in kwargs.items()}
        items["run.out_dir"] = str(suite_dir / name)
        items.update(overrides or {})
        cfg = make_config(items)
        report = run_training(cfg, workers=workers)
        reports.append(report)
        labels.append(name)
        n_failed += len(report.failed)
        summary_cells[name] = {
            "aggregate": report.aggregate,
            "failed": {str(k): v for k, v in report.failed.items()},
        }
    summary = {
        "suite": suite,
        "overrides": dict(sorted((overrides or {}).items())),
        "cells": summary_cells,
    }
    _write_text_atomic(suite_dir / "summary.json", _json_dumps(summary))
    emit_curves(reports, suite_dir, labels=labels)
    return summary, n_failed
