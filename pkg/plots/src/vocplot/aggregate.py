"""Aggregate benchmark CSVs into per-(policy, budget) summary curves.

The input follows the benchmark harness schema::

    env,policy,budget,instance,seed,metric,value,wall_ns

Aggregation is pure: the same CSV always yields the same tidy table, which
is the golden artifact for testing; the rendered figure sits on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

EXPECTED_HEADER = "env,policy,budget,instance,seed,metric,value,wall_ns"
TIDY_HEADER = "policy,budget,mean,se,n"


class SchemaError(ValueError):
    """Input file does not match the benchmark CSV contract."""


@dataclass(frozen=True)
class PlotSpec:
    input_csv: str
    metric: str
    output: str
    data_out: str | None = None


@dataclass(frozen=True)
class CurvePoint:
    policy: str
    budget: int
    mean: float
    se: float
    n: int


def read_rows(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != EXPECTED_HEADER:
        raise SchemaError(
            f"unexpected header in {path}: got {lines[:1]}, want columns {EXPECTED_HEADER}"
        )
    columns = EXPECTED_HEADER.split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise SchemaError(f"{path}:{i}: expected {len(columns)} fields, got {len(parts)}")
        rows.append(dict(zip(columns, parts)))
    return rows


def aggregate(rows: list[dict], metric: str) -> list[CurvePoint]:
    """Mean, standard error (ddof=1), and count per (policy, budget)."""
    present = sorted({r["metric"] for r in rows})
    if metric not in present:
        raise SchemaError(f"metric {metric!r} not in file; available metrics: {present}")
    groups: dict = {}
    for r in rows:
        if r["metric"] != metric:
            continue
        key = (r["policy"], int(r["budget"]))
        groups.setdefault(key, []).append(float(r["value"]))
    points = []
    for (policy, budget), values in sorted(groups.items()):
        n = len(values)
        mean = math.fsum(values) / n
        if n > 1:
            var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = 0.0
        points.append(CurvePoint(policy, budget, mean, se, n))
    return points


def write_tidy(points: list[CurvePoint], path) -> None:
    lines = [TIDY_HEADER]
    for p in points:
        lines.append(f"{p.policy},{p.budget},{repr(p.mean)},{repr(p.se)},{p.n}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def emit_plot_data(spec: PlotSpec) -> list[CurvePoint]:
    points = aggregate(read_rows(spec.input_csv), spec.metric)
    if spec.data_out:
        write_tidy(points, spec.data_out)
    return points


def plot_metric_curves(spec: PlotSpec) -> list[CurvePoint]:
    """Render one mean curve per policy with standard-error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    points = emit_plot_data(spec)
    policies = sorted({p.policy for p in points})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for policy in policies:
        curve = [p for p in points if p.policy == policy]
        xs = [p.budget for p in curve]
        ys = [p.mean for p in curve]
        es = [p.se for p in curve]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=policy)
    ax.set_xlabel("computation budget")
    ax.set_ylabel(spec.metric.replace("_", " "))
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output, metadata=_stable_metadata(spec.output))
    plt.close(fig)
    return points


def _stable_metadata(path) -> dict | None:
    suffix = Path(path).suffix.lower()
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".png":
        return {"Software": None}
    return None
