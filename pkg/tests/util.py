"""Shared fixtures: random deterministic trees and belief constructors."""

import numpy as np

from vocplan.belief import NodeBelief, NormalPrior, update_independent
from vocplan.envs import TabularMdp
from vocplan.graph import expand


def random_tree_mdp(rng, depth=3, branching=2, gamma=1.0, reward_scale=1.0):
    """Deterministic tree MDP with random edge rewards; states are path tuples."""
    table = {}

    def rec(state, d):
        if d == depth:
            return
        for a in range(branching):
            child = state + (a,)
            table[(state, a)] = [(child, 1.0, float(rng.normal(0.0, reward_scale)))]
            rec(child, d + 1)

    rec((), 0)
    terminals = {s for s in _all_states(depth, branching) if len(s) == depth}
    return TabularMdp(table, gamma=gamma, terminal_states=terminals)


def _all_states(depth, branching):
    states = [()]
    frontier = [()]
    for _ in range(depth):
        nxt = []
        for s in frontier:
            for a in range(branching):
                nxt.append(s + (a,))
        states.extend(nxt)
        frontier = nxt
    return states


def prior_beliefs(graph, priors):
    """Belief mapping with one fresh NodeBelief per frontier key.

    ``priors`` is either a single NormalPrior or a callable key -> prior.
    """
    if callable(priors):
        return {k: NodeBelief(prior=priors(k)) for k in graph.keys}
    return {k: NodeBelief(prior=priors) for k in graph.keys}


def random_instance(rng, depth=None, horizon=None, gamma=None, observations=0):
    """(graph, beliefs) on a random deterministic tree with random priors."""
    depth = depth if depth is not None else int(rng.integers(2, 5))
    horizon = horizon if horizon is not None else int(rng.integers(1, depth + 1))
    gamma = gamma if gamma is not None else float(rng.choice([1.0, 0.9, 0.7]))
    mdp = random_tree_mdp(rng, depth=depth, gamma=gamma)
    graph = expand(mdp, (), horizon)

    def make_prior(_key):
        return NormalPrior(
            mean0=float(rng.normal()),
            var0=float(rng.uniform(0.1, 2.0)),
            noise_var=float(rng.uniform(0.1, 2.0)),
        )

    beliefs = prior_beliefs(graph, make_prior)
    for _ in range(observations):
        key = graph.keys[int(rng.integers(len(graph.keys)))]
        node = beliefs[key]
        beliefs[key] = update_independent(node, node.prior, float(rng.normal()))
    return mdp, graph, beliefs


def point_belief(mean, noise_var=1.0):
    return NodeBelief(prior=NormalPrior(mean, 0.0, noise_var))


def gaussian_belief(mean, var, noise_var=1.0):
    return NodeBelief(prior=NormalPrior(mean, var, noise_var))
