"""Meta-policies: which computation to run next, and which action to take.

All graph-based policies share one loop: expand the current state to the
spatial horizon, hold a Gaussian belief over the frontier, and per iteration
(1) pick a frontier key by the policy's selection rule, (2) simulate the
frontier action, growing that successor's UCT subtree by one rollout,
(3) feed the discounted return back into the belief as a noisy value sample.
UCT and Thompson instead run their incremental tree directly from the root.

Every iteration costs exactly one rollout, so a fixed budget is comparable
across policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..belief import (
    CorrelatedBelief,
    Kernel,
    NodeBelief,
    NormalPrior,
    ObservationLog,
    correlated_from_kernel,
    update_correlated,
    update_independent,
)
from ..envs.base import MdpModel
from ..graph import SearchGraph, expand
from ..values import dynamic_value_mc, frontier_stats, lr_bound, static_value
from ..voc import (
    ueb_scores,
    voc_phi_all,
    voc_phi_stochastic_all,
    voc_prime,
    voc_psi_all,
)
from .uct import ThompsonTree, UctTree

POLICY_KINDS = (
    "voc-phi",
    "voc-psi",
    "voc-prime-phi",
    "ueb",
    "uct",
    "voi",
    "bayes-uct",
    "thompson",
)
_VOC_KINDS = {"voc-phi", "voc-psi", "voc-prime-phi", "voi"}
_GRAPH_KINDS = _VOC_KINDS | {"ueb", "bayes-uct"}
_OPEN_BUDGET_CAP = 1_000_000


@dataclass
class MetaPolicyConfig:
    """Everything a meta-policy needs besides the environment and the rng."""

    kind: str
    horizon: int = 2
    budget: int | None = None
    stop_threshold: float | None = None
    uct_c: float = 1.0
    prior: NormalPrior = field(default_factory=lambda: NormalPrior(0.0, 1.0, 1.0))
    kernel: Kernel | None = None
    mc_outer: int = 64
    mc_inner: int = 256
    mc_final: int = 2000
    rollout_depth: int = 16
    prior_fn: Callable | None = None  # per-key prior override (independent only)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.budget is None and self.stop_threshold is None:
            raise ValueError("need a budget, a stop threshold, or both")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.stop_threshold is not None and self.kind not in _VOC_KINDS:
            raise ValueError(f"stop threshold needs a VOC-valued policy, not {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class PlanDiagnostics:
    kind: str
    computations: int
    values: dict
    log: ObservationLog


def plan(mdp: MdpModel, state, config: MetaPolicyConfig, rng: np.random.Generator):
    """Run one planning episode at ``state``; returns (action, diagnostics)."""
    if config.kind == "uct":
        return _plan_uct(mdp, state, config, rng)
    if config.kind == "thompson":
        return _plan_thompson(mdp, state, config, rng)
    return _plan_graph(mdp, state, config, rng)


def _plan_uct(mdp, state, config, rng):
    tree = UctTree(mdp, state, uct_c=config.uct_c, rollout_depth=config.rollout_depth)
    log = ObservationLog()
    for t in range(config.budget):
        g = tree.iterate(rng)
        log.append((state, None), g, t + 1)
    return tree.best_root_action(), PlanDiagnostics(
        "uct", config.budget, tree.root_action_values(), log
    )


def _plan_thompson(mdp, state, config, rng):
    tree = ThompsonTree(mdp, state, prior=config.prior, rollout_depth=config.rollout_depth)
    log = ObservationLog()
    for t in range(config.budget):
        g = tree.iterate(rng)
        log.append((state, None), g, t + 1)
    values = {a: tree.root.beliefs[a].post_mean for a in tree.root.actions}
    return tree.best_root_action(), PlanDiagnostics(
        "thompson", config.budget, values, log
    )


def _plan_graph(mdp, state, config, rng):
    horizon = 1 if config.kind == "voi" else config.horizon
    graph = _expand_feasible(mdp, state, horizon)
    beliefs = _init_beliefs(graph, mdp, config)
    subtrees: dict = {}
    visits: dict = {}
    c_cache: dict = {}
    scratch: dict = {}
    log = ObservationLog()
    budget = config.budget if config.budget is not None else _OPEN_BUDGET_CAP

    t = 0
    while t < budget:
        key, stop = _choose_computation(
            graph, beliefs, mdp, config, rng, visits, c_cache, scratch
        )
        if stop:
            break
        obs = _run_computation(mdp, graph, key, subtrees, config, rng)
        beliefs = _apply_observation(beliefs, key, obs)
        t += 1
        log.append(key, obs, t)

    action, values = _final_action(graph, beliefs, config, rng)
    return action, PlanDiagnostics(config.kind, t, values, log)


def _expand_feasible(mdp, state, horizon: int) -> SearchGraph:
    """Expand to the requested horizon, shrinking it when every path ends in
    a terminal state before the boundary (a horizon of 1 always works)."""
    from ..errors import EmptyFrontierError

    for h in range(horizon, 0, -1):
        try:
            return expand(mdp, state, h)
        except EmptyFrontierError:
            if h == 1:
                raise
    raise AssertionError("unreachable")


def _init_beliefs(graph: SearchGraph, mdp, config: MetaPolicyConfig):
    if config.kernel is not None:
        if config.kind == "ueb":
            raise ValueError("bound-gradient scores support independent beliefs only")
        coord_fn = getattr(mdp, "frontier_coordinate", None)
        if coord_fn is None:
            raise ValueError("correlated beliefs need an environment with coordinates")
        coords = [coord_fn(s, a) for s, a in graph.keys]
        return correlated_from_kernel(
            graph.keys, coords, config.kernel, config.prior.mean0, config.prior.noise_var
        )
    prior_fn = config.prior_fn or (lambda key: config.prior)
    return {k: NodeBelief(prior=prior_fn(k)) for k in graph.keys}


def _apply_observation(beliefs, key, obs: float):
    if isinstance(beliefs, CorrelatedBelief):
        return update_correlated(beliefs, beliefs.index[key], obs)
    node = beliefs[key]
    beliefs[key] = update_independent(node, node.prior, obs)
    return beliefs


def _run_computation(mdp, graph, key, subtrees, config, rng) -> float:
    """Simulate the frontier action once; the observation is its sampled
    immediate reward plus the discounted return of one UCT-subtree rollout
    from the sampled successor."""
    s_star, a_star = key
    s2, r = mdp.sample_transition(s_star, a_star, rng)
    if mdp.is_terminal(s2) or not mdp.actions(s2):
        return r
    tree = subtrees.get(s2)
    if tree is None:
        tree = UctTree(mdp, s2, uct_c=config.uct_c, rollout_depth=config.rollout_depth)
        subtrees[s2] = tree
    return r + mdp.gamma * tree.iterate(rng)


def _choose_computation(graph, beliefs, mdp, config, rng, visits, c_cache=None, scratch=None):
    kind = config.kind
    if kind == "bayes-uct":
        key = _bayes_uct_descend(graph, beliefs, config, rng, visits)
        return key, False
    if kind == "ueb":
        report = ueb_scores(graph, beliefs, c_cache=c_cache, scratch=scratch)
        scores = np.array([report.scores[k] for k in graph.keys])
        return graph.keys[int(np.argmin(scores))], False

    if kind == "voc-phi":
        if graph.deterministic:
            scores = voc_phi_all(graph, beliefs)
        else:
            scores = voc_phi_stochastic_all(graph, beliefs, config.mc_outer, rng)
    elif kind in ("voc-prime-phi", "voi"):
        scores = np.array(
            [
                voc_prime(graph, beliefs, k, f="static", m=config.mc_outer, rng=rng)
                for k in graph.keys
            ]
        )
    elif kind == "voc-psi":
        scores = voc_psi_all(graph, beliefs, config.mc_outer, config.mc_inner, rng)
    else:
        raise AssertionError(kind)

    if config.stop_threshold is not None and scores.max() < config.stop_threshold:
        return None, True
    return graph.keys[_argmax_tie_seeded(scores, rng)], False


def _argmax_tie_seeded(scores: np.ndarray, rng: np.random.Generator) -> int:
    best = scores.max()
    ties = np.flatnonzero(scores == best)
    if ties.size == 1:
        return int(ties[0])
    return int(ties[int(rng.integers(ties.size))])


def bayes_uct_select(mus, sigmas, n_parent: int, uct_c: float, rng: np.random.Generator) -> int:
    """argmax of mu + uct_c * sigma * sqrt(2 ln N(parent)), ties seeded."""
    bonus = math.sqrt(2.0 * math.log(max(n_parent, 1)))
    scores = np.asarray(mus) + uct_c * np.asarray(sigmas) * bonus
    return _argmax_tie_seeded(scores, rng)


def _bayes_summaries(graph: SearchGraph, beliefs):
    """Gaussian (mu, sigma) per expanded (depth, state, action).

    Posteriors propagate up the graph by max-of-means, the same backbone the
    static value uses: a state's summary is the (mean, scale) of its
    best-mean action; an interior action mixes child summaries over the
    transition probabilities.
    """
    means, stds = frontier_stats(graph, beliefs)
    gamma = graph.gamma
    last = graph.horizon - 1
    mu: dict = {}
    sd: dict = {}
    v_mu: dict = {}
    v_sd: dict = {}
    for s in graph.layers[last]:
        acts = graph.actions_at(last, s)
        for a in acts:
            i = graph.key_index[(s, a)]
            mu[(last, s, a)] = means[i]
            sd[(last, s, a)] = stds[i]
            if (last, s) not in v_mu or means[i] > v_mu[(last, s)]:
                v_mu[(last, s)], v_sd[(last, s)] = means[i], stds[i]
        if not acts:
            v_mu[(last, s)], v_sd[(last, s)] = 0.0, 0.0
    for depth in range(last - 1, -1, -1):
        for s in graph.layers[depth]:
            acts = graph.actions_at(depth, s)
            for a in acts:
                m = 0.0
                var = 0.0
                for s2, p, r in graph.rows(depth, s, a):
                    m += p * (r + gamma * v_mu.get((depth + 1, s2), 0.0))
                    var += (p * gamma * v_sd.get((depth + 1, s2), 0.0)) ** 2
                mu[(depth, s, a)] = m
                sd[(depth, s, a)] = math.sqrt(var)
                if (depth, s) not in v_mu or m > v_mu[(depth, s)]:
                    v_mu[(depth, s)], v_sd[(depth, s)] = m, sd[(depth, s, a)]
            if not acts:
                v_mu[(depth, s)], v_sd[(depth, s)] = 0.0, 0.0
    return mu, sd


def _bayes_uct_descend(graph, beliefs, config, rng, visits):
    mu, sd = _bayes_summaries(graph, beliefs)
    for _ in range(20):
        s = graph.sink
        for depth in range(graph.horizon):
            acts = graph.actions_at(depth, s)
            if not acts:
                break
            visits[(depth, s)] = visits.get((depth, s), 0) + 1
            idx = bayes_uct_select(
                [mu[(depth, s, a)] for a in acts],
                [sd[(depth, s, a)] for a in acts],
                visits[(depth, s)],
                config.uct_c,
                rng,
            )
            a = acts[idx]
            if depth == graph.horizon - 1:
                return (s, a)
            rows = graph.rows(depth, s, a)
            probs = np.array([p for _, p, _ in rows])
            s = rows[int(rng.choice(len(rows), p=probs / probs.sum()))][0]
    # dead-ended on terminal states repeatedly: fall back to a uniform key
    return graph.keys[int(rng.integers(graph.n_keys))]


def voi_policy_choose(graph: SearchGraph, beliefs, config, rng) -> tuple:
    """Root action to sample under the one-step information-value rule."""
    if graph.horizon != 1:
        raise ValueError("the information-value rule scores root actions only")
    scores = np.array(
        [
            voc_prime(graph, beliefs, k, f="static", m=config.mc_outer, rng=rng)
            for k in graph.keys
        ]
    )
    return graph.keys[_argmax_tie_seeded(scores, rng)]


def _final_action(graph, beliefs, config, rng):
    kind = config.kind
    if kind == "voc-psi":
        est = dynamic_value_mc(graph, beliefs, config.mc_final, rng)
        values = {a: v for a, (v, _) in est.items()}
    elif kind == "ueb":
        values = {a: lam for a, (lam, _) in lr_bound(graph, beliefs).items()}
    else:
        values = static_value(graph, beliefs)
    best = max(values[a] for a in graph.root_actions)
    action = next(a for a in graph.root_actions if values[a] == best)
    return action, values
