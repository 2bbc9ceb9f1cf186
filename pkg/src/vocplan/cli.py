"""Command-line interface: selftest, benchmarks, and grid search.

Flags can come from a flat ``key = value`` config file (keys mirror the flag
names, '#' starts a comment); explicit flags override file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .belief import Kernel
from .harness import (
    BanditTreeSpec,
    ExperimentConfig,
    PegSpec,
    default_policy,
    grid_search,
    run_experiment,
    summarize,
    write_csv,
)
from .policies import POLICY_KINDS


def parse_config_file(path) -> dict:
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (need key = value): {raw!r}")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill argparse defaults from the config file; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    file_vals = parse_config_file(args.config)
    defaults = {a.dest: a.default for a in parser._actions}
    for key, raw in file_vals.items():
        if key in ("env",):
            continue
        if not hasattr(args, key):
            raise ValueError(f"unknown config key {key!r}")
        if getattr(args, key) == defaults.get(key):
            setattr(args, key, raw)
    return args


def _parse_int_list(text) -> list:
    if isinstance(text, list):
        return text
    return [int(x) for x in str(text).split(",") if x.strip()]


def _parse_policies(text) -> list:
    names = [p.strip() for p in str(text).split(",") if p.strip()]
    for n in names:
        if n not in POLICY_KINDS:
            raise ValueError(f"unknown policy {n!r}; choose from {', '.join(POLICY_KINDS)}")
    return names


def _bandit_flags(sub):
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--depth", type=int, default=5)
    sub.add_argument("--horizon", type=int, default=None)
    sub.add_argument("--p", type=float, default=0.9, help="intended-child transition probability")
    sub.add_argument("--kernel", choices=["white", "rbf"], default="white")
    sub.add_argument("--lengthscale", type=float, default=8.0)
    sub.add_argument("--signal-var", dest="signal_var", type=float, default=1.0)
    sub.add_argument("--noise-var", dest="noise_var", type=float, default=0.01)
    sub.add_argument("--correlated", choices=["auto", "on", "off"], default="auto")
    _common_flags(sub)


def _peg_flags(sub):
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--pegs", type=int, default=9)
    sub.add_argument("--horizon", type=int, default=None)
    _common_flags(sub)


def _common_flags(sub):
    sub.add_argument("--budgets", default="20,50,100", help="comma-separated, increasing")
    sub.add_argument("--instances", type=int, default=100)
    sub.add_argument("--policies", default="voc-phi,uct")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None, help="CSV output path")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--uct-c", dest="uct_c", type=float, default=1.0)
    sub.add_argument("--timing", action="store_true", help="record real wall_ns (breaks rerun byte-identity)")


def _build_bandit_config(args) -> ExperimentConfig:
    kernel = Kernel(str(args.kernel), float(args.signal_var), float(args.lengthscale))
    spec = BanditTreeSpec(
        depth=int(args.depth),
        p=float(args.p),
        kernel=kernel,
        arm_noise_var=float(args.noise_var),
    )
    correlated = {"auto": kernel.kind == "rbf", "on": True, "off": False}[str(args.correlated)]
    horizon = int(args.horizon) if args.horizon is not None else None
    policies = [
        (
            name,
            default_policy(
                name, spec, horizon=horizon, uct_c=float(args.uct_c), correlated=correlated
            ),
        )
        for name in _parse_policies(args.policies)
    ]
    return ExperimentConfig(
        env=spec,
        policies=policies,
        budgets=_parse_int_list(args.budgets),
        instances=int(args.instances),
        master_seed=int(args.seed),
        out_path=args.out,
        workers=int(args.workers),
        record_timing=bool(args.timing),
    )


def _build_peg_config(args) -> ExperimentConfig:
    spec = PegSpec(pegs=int(args.pegs))
    horizon = int(args.horizon) if args.horizon is not None else None
    policies = [
        (name, default_policy(name, spec, horizon=horizon, uct_c=float(args.uct_c)))
        for name in _parse_policies(args.policies)
    ]
    return ExperimentConfig(
        env=spec,
        policies=policies,
        budgets=_parse_int_list(args.budgets),
        instances=int(args.instances),
        master_seed=int(args.seed),
        out_path=args.out,
        workers=int(args.workers),
        record_timing=bool(args.timing),
    )


def _report(records, metric):
    table = summarize(records, metric)
    print(f"metric: {metric}")
    print(f"{'policy':<16}{'budget':>8}{'mean':>12}{'se':>10}{'n':>6}")
    for (policy, budget), (mean, se, n) in sorted(table.items()):
        print(f"{policy:<16}{budget:>8}{mean:>12.4f}{se:>10.4f}{n:>6}")


def cmd_selftest(_args) -> int:
    from .selftest import run_selftest

    results = run_selftest(verbose=True)
    failed = [name for name, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_bench(args, parser) -> int:
    args = _merge_config(args, parser)
    if args.env_kind == "bandit-tree":
        config = _build_bandit_config(args)
        metric = "simple_regret"
    else:
        config = _build_peg_config(args)
        metric = "pegs_remaining"
    records = run_experiment(config)
    if config.out_path:
        write_csv(records, config.out_path)
        print(f"wrote {len(records)} records to {config.out_path}")
    _report(records, metric)
    return 0


def cmd_grid(args, parser) -> int:
    if not args.config:
        raise ValueError("grid needs --config FILE")
    file_vals = parse_config_file(args.config)
    grid = {}
    for key in list(file_vals):
        if key.startswith("grid."):
            grid[key[len("grid.") :]] = [float(v) for v in file_vals.pop(key).split(",")]
    env_kind = file_vals.pop("env", "bandit-tree").replace("_", "-")
    sub = argparse.ArgumentParser()
    if env_kind == "bandit-tree":
        _bandit_flags(sub)
    elif env_kind == "peg":
        _peg_flags(sub)
    else:
        raise ValueError(f"unknown env {env_kind!r} in grid config")
    ns = sub.parse_args([])
    for key, val in file_vals.items():
        if not hasattr(ns, key):
            raise ValueError(f"unknown config key {key!r}")
        setattr(ns, key, val)
    config = _build_bandit_config(ns) if env_kind == "bandit-tree" else _build_peg_config(ns)
    if not grid:
        raise ValueError("grid config needs at least one grid.<param> line")
    result = grid_search(config, grid)
    print(f"{'policy':<16}{'params':<40}{'mean metric':>12}")
    for policy, params, score in result.table:
        print(f"{policy:<16}{str(params):<40}{score:>12.4f}")
    print("\nbest per policy:")
    for policy, cfg in result.best.items():
        chosen = {k: _dig(cfg, k) for k in grid}
        print(f"  {policy}: {chosen}")
    return 0


def _dig(cfg, dotted):
    obj = cfg
    for part in dotted.split("."):
        obj = getattr(obj, part)
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vocplan", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    subs.add_parser("selftest", help="run the invariant suite")

    bench = subs.add_parser("bench", help="run a benchmark")
    bench_subs = bench.add_subparsers(dest="env_kind", required=True)
    bt = bench_subs.add_parser("bandit-tree")
    _bandit_flags(bt)
    peg = bench_subs.add_parser("peg")
    _peg_flags(peg)

    grid = subs.add_parser("grid", help="grid-search policy hyperparameters")
    grid.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args)
    if args.command == "bench":
        sub = bt if args.env_kind == "bandit-tree" else peg
        return cmd_bench(args, sub)
    if args.command == "grid":
        return cmd_grid(args, grid)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
