"""Root-action valuations over a search graph and a frontier belief.

* static value: replace every frontier posterior by its mean, back up, max.
* dynamic value: expectation of the backed-up maximum over the joint frontier
  posterior; no closed form, estimated by Monte Carlo.
* the Lai-Robbins bound: an upper bound on the dynamic value that needs only
  marginal CDFs, tightened by a one-dimensional line search over its anchor c.
* optimal Bayesian simple regret: expected best achievable value minus the
  best current valuation.

Beliefs are either a mapping ``key -> NodeBelief`` (independent) or a
``CorrelatedBelief``; both expose one posterior per unique frontier key of
the graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import CorrelatedBelief, NodeBelief
from .graph import SearchGraph, sample_transition_table, table_frontier
from .normals import expected_excess, std_cdf, std_pdf

C_SEARCH_TOL = 1e-9
C_SEARCH_MAX_ITER = 200


def frontier_stats(graph: SearchGraph, belief) -> tuple[np.ndarray, np.ndarray]:
    """(posterior means, posterior stds), one per unique frontier key."""
    if isinstance(belief, CorrelatedBelief):
        cols = [belief.index[k] for k in graph.keys]
        means = belief.mean[cols]
        stds = np.sqrt(np.clip(np.diag(belief.cov)[cols], 0.0, None))
        return means, stds
    means = np.empty(graph.n_keys)
    stds = np.empty(graph.n_keys)
    for i, k in enumerate(graph.keys):
        node: NodeBelief = belief[k]
        means[i] = node.post_mean
        stds[i] = node.post_std
    return means, stds


def sample_frontier_values(graph: SearchGraph, belief, z: np.ndarray) -> np.ndarray:
    """Map standard normal draws ``z [m, K]`` to joint frontier value samples."""
    if isinstance(belief, CorrelatedBelief):
        cols = [belief.index[k] for k in graph.keys]
        cov = belief.cov[np.ix_(cols, cols)]
        root = _psd_sqrt(cov)
        return belief.mean[cols][None, :] + z @ root.T
    means, stds = frontier_stats(graph, belief)
    return means[None, :] + stds[None, :] * z


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _action_candidates(graph: SearchGraph, action, means: np.ndarray) -> np.ndarray:
    idx = graph.entries_by_action[action]
    vals = [
        graph.frontier[i].path_reward + graph.frontier[i].scale * means[graph.frontier[i].belief_index]
        for i in idx
    ]
    vals.extend(graph.terminal_values[action])
    return np.asarray(vals)


def static_value(graph: SearchGraph, belief) -> dict:
    """phi per root action: point-estimate backup of frontier means."""
    means, _ = frontier_stats(graph, belief)
    if graph.deterministic:
        return {a: float(_action_candidates(graph, a, means).max()) for a in graph.root_actions}
    q = graph.induction_plan().root_values(means[None, :])[0]
    return dict(zip(graph.root_actions, map(float, q)))


def _backed_up_samples(graph: SearchGraph, vals: np.ndarray) -> dict:
    """Per-action arrays of backed-up sample values; vals is [m, K]."""
    if graph.deterministic:
        out = {}
        for a in graph.root_actions:
            idx = graph.entries_by_action[a]
            if idx:
                b = np.array([graph.frontier[i].path_reward for i in idx])
                scale = np.array([graph.frontier[i].scale for i in idx])
                cols = np.array([graph.frontier[i].belief_index for i in idx], dtype=np.intp)
                y = b[None, :] + scale[None, :] * vals[:, cols]
                best = y.max(axis=1)
            else:
                best = np.full(vals.shape[0], -np.inf)
            for t in graph.terminal_values[a]:
                best = np.maximum(best, t)
            out[a] = best
        return out
    q = graph.induction_plan().root_values(vals)
    return {a: q[:, i] for i, a in enumerate(graph.root_actions)}


def dynamic_value_mc(
    graph: SearchGraph, belief, m: int, rng: np.random.Generator, z: np.ndarray | None = None
) -> dict:
    """psi per root action as (estimate, standard error) from m joint draws.

    ``z`` lets callers reuse one standard normal matrix across comparisons
    (common random numbers).
    """
    if m < 2:
        raise ValueError("dynamic value estimation needs m >= 2")
    if z is None:
        z = rng.standard_normal((m, graph.n_keys))
    vals = sample_frontier_values(graph, belief, z)
    samples = _backed_up_samples(graph, vals)
    return {
        a: (float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s))))
        for a, s in samples.items()
    }


def optimal_c(mus, sigmas, c0: float | None = None) -> float:
    """Anchor of the Lai-Robbins bound: solve sum_j (1 - F_j(c)) = 1.

    Monotone root search over a bracket of +-10 posterior widths to a
    residual of 1e-9. With all-Gaussian marginals the function is smooth and
    a bracket-safeguarded Newton iteration (optionally warm-started at
    ``c0``) converges fast; point masses make it a step function, handled by
    plain bisection. When no root lies inside the bracket (single node, or
    all point masses), c clamps to the nearest bracket end.
    """
    mus = np.asarray(mus, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if mus.size == 0:
        raise ValueError("optimal_c needs at least one frontier belief")
    smax = float(sigmas.max())
    lo = float(mus.min()) - 10.0 * smax
    hi = float(mus.max()) + 10.0 * smax
    smooth = bool(np.all(sigmas > 0.0))
    pos = sigmas > 0.0
    mu_p, sg_p = mus[pos], sigmas[pos]
    mu_z = mus[~pos]

    def g(c: float) -> float:
        total = float((1.0 - std_cdf((c - mu_p) / sg_p)).sum()) if mu_p.size else 0.0
        total += float((mu_z > c).sum())
        return total - 1.0

    if g(lo) <= 0.0:
        return lo
    if g(hi) >= 0.0:
        return hi

    a, b = lo, hi
    if smooth:
        c = c0 if c0 is not None and lo < c0 < hi else 0.5 * (lo + hi)
        for _ in range(C_SEARCH_MAX_ITER):
            val = g(c)
            if abs(val) <= C_SEARCH_TOL:
                return c
            if val > 0.0:
                a = c
            else:
                b = c
            slope = -float((std_pdf((c - mu_p) / sg_p) / sg_p).sum())
            step_ok = slope < 0.0
            if step_ok:
                nxt = c - val / slope
                step_ok = a < nxt < b
            c = nxt if step_ok else 0.5 * (a + b)
        return c
    for _ in range(C_SEARCH_MAX_ITER):
        mid = 0.5 * (a + b)
        val = g(mid)
        if abs(val) <= C_SEARCH_TOL:
            return mid
        if val > 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def lambda_from_marginals(
    mus: np.ndarray, sigmas: np.ndarray, c0: float | None = None
) -> tuple[float, float]:
    c = optimal_c(mus, sigmas, c0=c0)
    lam = c + float(np.sum(expected_excess(mus, sigmas, c)))
    return lam, c


def _action_marginals(graph: SearchGraph, action, means, stds):
    b, sc, cols = graph.action_entry_arrays(action)
    mus = b + sc * means[cols]
    sgs = sc * stds[cols]
    terms = graph.terminal_values[action]
    if terms:
        mus = np.concatenate([mus, np.asarray(terms)])
        sgs = np.concatenate([sgs, np.zeros(len(terms))])
    return mus, sgs


def lr_bound_rect(
    mus: np.ndarray, sigmas: np.ndarray, c0: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Batched (lambda, c*) for rows of all-Gaussian marginals.

    One safeguarded Newton iteration per row, vectorized; rows must have
    sigma > 0 everywhere (the scalar path handles point masses).
    """
    n_rows, width = mus.shape
    lo = mus.min(axis=1) - 10.0 * sigmas.max(axis=1)
    hi = mus.max(axis=1) + 10.0 * sigmas.max(axis=1)
    c = np.clip(c0 if c0 is not None else 0.5 * (lo + hi), lo, hi)

    def g_and_slope(cv):
        zz = (cv[:, None] - mus) / sigmas
        g = (1.0 - std_cdf(zz)).sum(axis=1) - 1.0
        slope = -(std_pdf(zz) / sigmas).sum(axis=1)
        return g, slope

    if width >= 2:
        # With >= 2 all-Gaussian rows the root provably lies inside the
        # 10-width bracket: g(lo) >= width - 1 - eps > 0 and g(hi) < 0.
        done_lo = np.zeros(n_rows, dtype=bool)
        done_hi = np.zeros(n_rows, dtype=bool)
    else:
        g_lo, _ = g_and_slope(lo)
        g_hi, _ = g_and_slope(hi)
        done_lo = g_lo <= 0.0
        done_hi = g_hi >= 0.0
    a, bb = lo.copy(), hi.copy()
    for _ in range(C_SEARCH_MAX_ITER):
        g, slope = g_and_slope(c)
        if np.all(np.abs(g) <= C_SEARCH_TOL):
            break
        a = np.where(g > 0.0, c, a)
        bb = np.where(g > 0.0, bb, c)
        newton = c - g / np.where(slope < 0.0, slope, -1.0)
        inside = (newton > a) & (newton < bb) & (slope < 0.0)
        c = np.where(inside, newton, 0.5 * (a + bb))
    c = np.where(done_lo, lo, np.where(done_hi, hi, c))
    z = (mus - c[:, None]) / sigmas
    lam = c + ((mus - c[:, None]) * std_cdf(z) + sigmas * std_pdf(z)).sum(axis=1)
    return lam, c


def lr_bound(
    graph: SearchGraph, belief, c_cache: dict | None = None, stats=None
) -> dict:
    """Per root action (lambda, c*) on a deterministic tree.

    lambda = c + sum over the action's frontier descendants of E[(Y - c)+]
    at the line-searched c; an upper bound on the dynamic value. ``c_cache``
    warm-starts the line search from the previous anchor per action;
    ``stats`` lets callers pass precomputed (means, stds).
    """
    if not graph.deterministic:
        raise ValueError("lr_bound needs a deterministic tree; see lr_bound_stochastic")
    means, stds = stats if stats is not None else frontier_stats(graph, belief)
    shapes = {len(graph.entries_by_action[a]) for a in graph.root_actions}
    no_terms = all(not graph.terminal_values[a] for a in graph.root_actions)
    if len(shapes) == 1 and 0 not in shapes and no_terms:
        stacked = [
            _action_marginals(graph, a, means, stds) for a in graph.root_actions
        ]
        mus = np.stack([m for m, _ in stacked])
        sgs = np.stack([s for _, s in stacked])
        if np.all(sgs > 0.0):
            c0 = (
                np.array([c_cache.get(a, np.nan) for a in graph.root_actions])
                if c_cache
                else None
            )
            if c0 is not None and np.any(np.isnan(c0)):
                c0 = None
            lam, c = lr_bound_rect(mus, sgs, c0=c0)
            out = {
                a: (float(lam[i]), float(c[i])) for i, a in enumerate(graph.root_actions)
            }
            if c_cache is not None:
                c_cache.update({a: out[a][1] for a in graph.root_actions})
            return out
    out = {}
    for a in graph.root_actions:
        mus, sgs = _action_marginals(graph, a, means, stds)
        c0 = c_cache.get(a) if c_cache is not None else None
        out[a] = lambda_from_marginals(mus, sgs, c0=c0)
        if c_cache is not None:
            c_cache[a] = out[a][1]
    return out


def lr_bound_stochastic(
    mdp, graph: SearchGraph, belief, k: int, rng: np.random.Generator
) -> dict:
    """Per root action: mean of lambda over k sampled deterministic transition
    tables, each restricted to the frontier reachable under that table."""
    if k < 1:
        raise ValueError("need at least one sampled table")
    if graph.deterministic:
        return {a: lam for a, (lam, _) in lr_bound(graph, belief).items()}
    means, stds = frontier_stats(graph, belief)
    acc = {a: 0.0 for a in graph.root_actions}
    for _ in range(k):
        table = sample_transition_table(mdp, graph, rng)
        for a in graph.root_actions:
            entries, terminals = table_frontier(graph, table, a)
            mus = [b + scale * means[graph.key_index[key]] for key, b, scale in entries]
            sgs = [scale * stds[graph.key_index[key]] for key, b, scale in entries]
            mus.extend(terminals)
            sgs.extend([0.0] * len(terminals))
            lam, _ = lambda_from_marginals(np.asarray(mus), np.asarray(sgs))
            acc[a] += lam
    return {a: total / k for a, total in acc.items()}


def bsr_star(
    graph: SearchGraph,
    belief,
    kind: str = "static",
    m: int = 10_000,
    rng: np.random.Generator | None = None,
    z: np.ndarray | None = None,
) -> float:
    """Optimal Bayesian simple regret: E[max_a backed-up value] - max_a f.

    ``kind`` selects f as the static or (MC-estimated, same draws) dynamic
    valuation. Non-negative up to Monte Carlo error.
    """
    if kind not in ("static", "dynamic"):
        raise ValueError(f"unknown valuation kind {kind!r}")
    if m < 2:
        raise ValueError("bsr_star needs m >= 2")
    if z is None:
        if rng is None:
            raise ValueError("need rng or preset draws")
        z = rng.standard_normal((m, graph.n_keys))
    vals = sample_frontier_values(graph, belief, z)
    samples = _backed_up_samples(graph, vals)
    stacked = np.stack([samples[a] for a in graph.root_actions], axis=1)
    e_max = float(stacked.max(axis=1).mean())
    if kind == "static":
        best = max(static_value(graph, belief).values())
    else:
        best = max(float(samples[a].mean()) for a in graph.root_actions)
    return e_max - best


@dataclass(frozen=True)
class ValueReport:
    """Per-root-action diagnostics: static, dynamic (with SE), bound, anchor."""

    actions: tuple
    static: dict
    dynamic_est: dict
    dynamic_se: dict
    lam: dict
    c_star: dict


def evaluate_values(
    graph: SearchGraph,
    belief,
    m: int = 1000,
    rng: np.random.Generator | None = None,
    mdp=None,
    k_tables: int = 32,
) -> ValueReport:
    """Bundle the three valuations for inspection or final action choice."""
    rng = rng if rng is not None else np.random.default_rng(0)
    stat = static_value(graph, belief)
    dyn = dynamic_value_mc(graph, belief, m, rng)
    if graph.deterministic:
        lam_c = lr_bound(graph, belief)
        lam = {a: v for a, (v, _) in lam_c.items()}
        c_star = {a: c for a, (_, c) in lam_c.items()}
    else:
        if mdp is None:
            raise ValueError("stochastic graphs need the mdp to sample tables")
        lam = lr_bound_stochastic(mdp, graph, belief, k_tables, rng)
        c_star = {a: math.nan for a in graph.root_actions}
    return ValueReport(
        actions=tuple(graph.root_actions),
        static=stat,
        dynamic_est={a: v for a, (v, _) in dyn.items()},
        dynamic_se={a: s for a, (_, s) in dyn.items()},
        lam=lam,
        c_star=c_star,
    )
