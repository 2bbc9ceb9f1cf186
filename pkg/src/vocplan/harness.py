"""Benchmark harness: paired-seed experiment runs, grid search, CSV output.

Every instance draws its hidden environment from a seed derived only from
(master seed, instance index), so all policies and budgets face identical
environments. Policy randomness is derived from (master seed, instance,
policy index, budget index); reruns with one master seed are bit-identical.

Timing capture is off by default: wall_ns is written as 0 so that reruns
produce byte-identical files. Set ``record_timing=True`` (or --timing on the
CLI) to capture real nanosecond timings for meta-computation comparisons;
those files are not rerun-stable by nature.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .belief import Kernel, NormalPrior
from .envs import ROOT, bandit_tree_build, bandit_tree_optimal, peg_env, popcount, random_board
from .policies import MetaPolicyConfig, plan

CSV_HEADER = "env,policy,budget,instance,seed,metric,value,wall_ns"


@dataclass(frozen=True)
class BanditTreeSpec:
    depth: int = 5
    p: float = 0.9
    kernel: Kernel = field(default_factory=lambda: Kernel("white", 1.0))
    arm_noise_var: float = 0.01
    mean_shift: float = 0.5

    @property
    def name(self) -> str:
        return f"bandit-tree-d{self.depth}"


@dataclass(frozen=True)
class PegSpec:
    pegs: int = 9

    @property
    def name(self) -> str:
        return f"peg-{self.pegs}"


@dataclass
class ExperimentConfig:
    env: BanditTreeSpec | PegSpec
    policies: list  # [(name, MetaPolicyConfig)]
    budgets: list
    instances: int
    master_seed: int = 0
    out_path: str | None = None
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if self.instances < 1:
            raise ValueError("need at least one instance")
        if not self.budgets or any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be non-empty and strictly increasing")
        if not self.policies:
            raise ValueError("need at least one policy")


@dataclass(frozen=True)
class RegretRecord:
    env: str
    policy: str
    budget: int
    instance: int
    seed: int
    metric: str
    value: float
    wall_ns: int


def instance_seed(master_seed: int, instance: int) -> int:
    return int(np.random.SeedSequence([master_seed, 1, instance]).generate_state(1)[0])


def _env_rng(master_seed: int, instance: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, 1, instance]))


def _policy_rng(master_seed, instance, policy_idx, budget_idx) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, 2, instance, policy_idx, budget_idx])
    )


def _bandit_instance_records(args) -> list[RegretRecord]:
    config, instance = args
    spec: BanditTreeSpec = config.env
    env = bandit_tree_build(
        spec.depth,
        spec.p,
        spec.kernel,
        _env_rng(config.master_seed, instance),
        arm_noise_var=spec.arm_noise_var,
        mean_shift=spec.mean_shift,
    )
    oracle = bandit_tree_optimal(env)
    best = float(oracle.max())
    seed = instance_seed(config.master_seed, instance)
    records = []
    for p_idx, (pname, pcfg) in enumerate(config.policies):
        regrets = []
        for b_idx, budget in enumerate(config.budgets):
            rng = _policy_rng(config.master_seed, instance, p_idx, b_idx)
            cfg = replace(pcfg, budget=budget)
            t0 = time.perf_counter_ns()
            action, _ = plan(env, ROOT, cfg, rng)
            wall = time.perf_counter_ns() - t0 if config.record_timing else 0
            sr = best - float(oracle[action])
            regrets.append(sr)
            records.append(
                RegretRecord(spec.name, pname, budget, instance, seed, "simple_regret", sr, wall)
            )
        for b_idx, budget in enumerate(config.budgets):
            records.append(
                RegretRecord(
                    spec.name, pname, budget, instance, seed,
                    "cumulative_regret", float(np.sum(regrets[: b_idx + 1])), 0,
                )
            )
    return records


def _peg_instance_records(args) -> list[RegretRecord]:
    config, instance = args
    spec: PegSpec = config.env
    board0 = random_board(spec.pegs, _env_rng(config.master_seed, instance))
    env = peg_env(board0)
    seed = instance_seed(config.master_seed, instance)
    records = []
    for p_idx, (pname, pcfg) in enumerate(config.policies):
        for b_idx, budget in enumerate(config.budgets):
            rng = _policy_rng(config.master_seed, instance, p_idx, b_idx)
            cfg = replace(pcfg, budget=budget)
            t0 = time.perf_counter_ns()
            board = board0
            while not env.is_terminal(board):
                move, _ = plan(env, board, cfg, rng)
                (board, _, _), = env.transitions(board, move)
            wall = time.perf_counter_ns() - t0 if config.record_timing else 0
            records.append(
                RegretRecord(
                    spec.name, pname, budget, instance, seed,
                    "pegs_remaining", float(popcount(board)), wall,
                )
            )
    return records


def _run_instances(config: ExperimentConfig, worker) -> list[RegretRecord]:
    jobs = [(config, i) for i in range(config.instances)]
    if config.workers > 1:
        with get_context("fork").Pool(config.workers) as pool:
            chunks = pool.map(worker, jobs)
    else:
        chunks = [worker(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=_record_sort_key)
    return records


def _record_sort_key(r: RegretRecord):
    return (r.policy, r.budget, r.instance, r.metric)


def run_bandit_tree(config: ExperimentConfig) -> list[RegretRecord]:
    if not isinstance(config.env, BanditTreeSpec):
        raise ValueError("config.env must be a BanditTreeSpec")
    return _run_instances(config, _bandit_instance_records)


def run_peg(config: ExperimentConfig) -> list[RegretRecord]:
    if not isinstance(config.env, PegSpec):
        raise ValueError("config.env must be a PegSpec")
    return _run_instances(config, _peg_instance_records)


def run_experiment(config: ExperimentConfig) -> list[RegretRecord]:
    if isinstance(config.env, BanditTreeSpec):
        return run_bandit_tree(config)
    return run_peg(config)


# -- CSV -----------------------------------------------------------------------


def _format_value(v: float) -> str:
    return repr(float(v))


def write_csv(records: list[RegretRecord], path) -> None:
    path = Path(path)
    rows = [CSV_HEADER]
    for r in sorted(records, key=_record_sort_key):
        rows.append(
            f"{r.env},{r.policy},{r.budget},{r.instance},{r.seed},"
            f"{r.metric},{_format_value(r.value)},{r.wall_ns}"
        )
    try:
        path.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> list[RegretRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header in {path}: {lines[:1]}")
    out = []
    for line in lines[1:]:
        env, policy, budget, instance, seed, metric, value, wall = line.split(",")
        out.append(
            RegretRecord(
                env, policy, int(budget), int(instance), int(seed),
                metric, float(value), int(wall),
            )
        )
    return out


# -- grid search -----------------------------------------------------------------


def _apply_param(cfg: MetaPolicyConfig, key: str, value) -> MetaPolicyConfig:
    """Set a possibly-dotted config field, e.g. 'uct_c' or 'prior.mean0'."""
    if "." in key:
        head, rest = key.split(".", 1)
        inner = getattr(cfg, head)
        if inner is None:
            raise ValueError(f"cannot set {key}: {head} is unset")
        return replace(cfg, **{head: replace(inner, **{rest: value})})
    return replace(cfg, **{key: value})


@dataclass(frozen=True)
class GridResult:
    best: dict  # policy name -> MetaPolicyConfig
    table: list  # (policy, params dict, mean metric)


def grid_search(config: ExperimentConfig, grid: dict, holdout_offset: int = 777_000) -> GridResult:
    """Evaluate every grid point per policy on a held-out seed block; the
    lowest mean metric wins, first grid point on ties."""
    if not grid:
        raise ValueError("grid must be non-empty")
    keys = sorted(grid.keys())
    combos = list(itertools.product(*(grid[k] for k in keys)))
    best: dict = {}
    table: list = []
    for pname, pcfg in config.policies:
        best_score, best_cfg, best_params = None, None, None
        for combo in combos:
            params = dict(zip(keys, combo))
            cfg = pcfg
            for k, v in params.items():
                cfg = _apply_param(cfg, k, v)
            sub = ExperimentConfig(
                env=config.env,
                policies=[(pname, cfg)],
                budgets=config.budgets,
                instances=config.instances,
                master_seed=config.master_seed + holdout_offset,
                workers=config.workers,
            )
            records = run_experiment(sub)
            primary = "pegs_remaining" if isinstance(config.env, PegSpec) else "simple_regret"
            vals = [r.value for r in records if r.metric == primary]
            score = float(np.mean(vals))
            table.append((pname, params, score))
            if best_score is None or score < best_score:
                best_score, best_cfg, best_params = score, cfg, params
        best[pname] = best_cfg
    return GridResult(best=best, table=table)


# -- policy defaults -----------------------------------------------------------------

PEG_PRIOR = NormalPrior(3.0, 4.0, 1.0)


def default_policy(
    kind: str,
    env,
    *,
    horizon: int | None = None,
    uct_c: float = 1.0,
    correlated: bool = False,
    belief_kernel: Kernel | None = None,
    mc_outer: int = 64,
    mc_inner: int = 128,
    prior: NormalPrior | None = None,
) -> MetaPolicyConfig:
    """Sensible starting configuration for a policy on a benchmark env.

    Bandit-tree priors mirror the arm-sampling distribution (mean shift and
    kernel signal variance) with the arm noise as observation noise; the
    bound-gradient policy gets an optimistic prior mean three prior widths up.
    """
    graph_kinds = {"voc-phi", "voc-psi", "voc-prime-phi", "bayes-uct", "voi"}
    if isinstance(env, BanditTreeSpec):
        if prior is None:
            prior = NormalPrior(env.mean_shift, env.kernel.signal_var, env.arm_noise_var)
        horizon = horizon if horizon is not None else min(4, env.depth)
        rollout_depth = env.depth + 1
        kernel = belief_kernel if belief_kernel is not None else env.kernel
    else:
        if prior is None:
            prior = PEG_PRIOR
        horizon = horizon if horizon is not None else 2
        rollout_depth = 16
        kernel = belief_kernel
    if kind == "ueb":
        bump = 3.0 * float(np.sqrt(prior.var0)) if prior.var0 > 0 else 1.0
        prior = NormalPrior(prior.mean0 + bump, prior.var0, prior.noise_var)
    use_kernel = kernel if (correlated and kind in graph_kinds and kind != "ueb") else None
    return MetaPolicyConfig(
        kind=kind,
        horizon=horizon,
        budget=1,
        uct_c=uct_c,
        prior=prior,
        kernel=use_kernel,
        mc_outer=mc_outer,
        mc_inner=mc_inner,
        rollout_depth=rollout_depth,
    )


# -- summary helpers ----------------------------------------------------------------


def summarize(records: list[RegretRecord], metric: str) -> dict:
    """(policy, budget) -> (mean, se, n) over instances."""
    groups: dict = {}
    for r in records:
        if r.metric != metric:
            continue
        groups.setdefault((r.policy, r.budget), []).append(r.value)
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out[key] = (float(arr.mean()), se, arr.size)
    return out


def paired_se_diff(records, policy_a: str, policy_b: str, budget: int, metric: str) -> tuple:
    """(mean_a - mean_b, SE of the paired per-instance difference)."""
    by_instance: dict = {}
    for r in records:
        if r.metric == metric and r.budget == budget and r.policy in (policy_a, policy_b):
            by_instance.setdefault(r.instance, {})[r.policy] = r.value
    diffs = [
        v[policy_a] - v[policy_b] for v in by_instance.values() if len(v) == 2
    ]
    arr = np.asarray(diffs)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se
