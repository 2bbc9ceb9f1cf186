"""Incremental search trees: UCT and the Thompson-sampling variant.

These trees serve two roles: as standalone baselines planning from the root,
and as the sampling subroutine invoked beyond the spatial horizon by the
graph-based meta-policies (one tree per sampled frontier successor; each
computation expands its tree once and rolls out).
"""

from __future__ import annotations

import math

import numpy as np

from ..belief import NodeBelief, NormalPrior, update_independent
from ..envs.base import MdpModel


class _ActionStat:
    __slots__ = ("visits", "mean")

    def __init__(self):
        self.visits = 0
        self.mean = 0.0

    def add(self, value: float) -> None:
        self.visits += 1
        self.mean += (value - self.mean) / self.visits


class UctNode:
    __slots__ = ("state", "actions", "stats", "children", "untried", "visits")

    def __init__(self, state, actions):
        self.state = state
        self.actions = list(actions)
        self.stats = {a: _ActionStat() for a in self.actions}
        self.children: dict = {}  # (action, next_state) -> UctNode
        self.untried = list(self.actions)
        self.visits = 0


def uct_select(tree: "UctTree", node: UctNode, uct_c: float, rng: np.random.Generator):
    """UCB1 child choice: unvisited actions first (seeded random order), then
    argmax of mean + uct_c * sqrt(2 ln N(node) / N(child)), ties seeded."""
    if node.untried:
        i = int(rng.integers(len(node.untried))) if len(node.untried) > 1 else 0
        return node.untried[i]
    log_n = math.log(max(node.visits, 1))
    best, best_score = [], -math.inf
    for a in node.actions:
        st = node.stats[a]
        score = st.mean + uct_c * math.sqrt(2.0 * log_n / st.visits)
        if score > best_score:
            best, best_score = [a], score
        elif score == best_score:
            best.append(a)
    if len(best) == 1:
        return best[0]
    return best[int(rng.integers(len(best)))]


class UctTree:
    """One UCT search tree rooted at a fixed state."""

    def __init__(self, mdp: MdpModel, root_state, uct_c: float = 1.0, rollout_depth: int = 16):
        self.mdp = mdp
        self.uct_c = uct_c
        self.rollout_depth = rollout_depth
        self.root = UctNode(root_state, mdp.actions(root_state))

    def iterate(self, rng: np.random.Generator) -> float:
        """Select, expand once, roll out, back up; returns the discounted
        return collected from the root."""
        mdp = self.mdp
        if mdp.is_terminal(self.root.state):
            return 0.0
        path: list[tuple[UctNode, object, float]] = []
        node = self.root
        while True:
            expanding = bool(node.untried)
            action = uct_select(self, node, self.uct_c, rng)
            if expanding:
                node.untried.remove(action)
            s2, r = mdp.sample_transition(node.state, action, rng)
            path.append((node, action, r))
            if mdp.is_terminal(s2):
                tail = 0.0
                break
            child = node.children.get((action, s2))
            if child is None:
                child = UctNode(s2, mdp.actions(s2))
                node.children[(action, s2)] = child
                tail = self._rollout(s2, rng)
                break
            if expanding:
                tail = self._rollout(s2, rng)
                break
            node = child
        g = tail
        for node, action, reward in reversed(path):
            g = reward + mdp.gamma * g
            node.stats[action].add(g)
            node.visits += 1
        return g

    def _rollout(self, state, rng: np.random.Generator) -> float:
        mdp = self.mdp
        g, discount = 0.0, 1.0
        for _ in range(self.rollout_depth):
            if mdp.is_terminal(state):
                break
            actions = mdp.actions(state)
            if not actions:
                break
            a = actions[int(rng.integers(len(actions)))]
            state, r = mdp.sample_transition(state, a, rng)
            g += discount * r
            discount *= mdp.gamma
        return g

    def root_action_values(self) -> dict:
        return {a: self.root.stats[a].mean for a in self.root.actions}

    def root_visit_counts(self) -> dict:
        return {a: self.root.stats[a].visits for a in self.root.actions}

    def best_root_action(self):
        vals = self.root_action_values()
        best = max(vals.values())
        return next(a for a in self.root.actions if vals[a] == best)


def thompson_select(beliefs: list[NodeBelief], rng: np.random.Generator) -> int:
    """Draw one posterior value sample per child, return the argmax index."""
    best_i, best_v = 0, -math.inf
    for i, b in enumerate(beliefs):
        v = b.post_mean
        if b.post_var > 0.0:
            v += math.sqrt(b.post_var) * float(rng.standard_normal())
        if v > best_v:
            best_i, best_v = i, v
    return best_i


class ThompsonNode:
    __slots__ = ("state", "actions", "beliefs", "children")

    def __init__(self, state, actions, prior: NormalPrior):
        self.state = state
        self.actions = list(actions)
        self.beliefs = {a: NodeBelief(prior=prior) for a in self.actions}
        self.children: dict = {}


class ThompsonTree:
    """Thompson-sampling tree policy with conjugate Normal action posteriors."""

    def __init__(
        self,
        mdp: MdpModel,
        root_state,
        prior: NormalPrior,
        rollout_depth: int = 16,
    ):
        self.mdp = mdp
        self.prior = prior
        self.rollout_depth = rollout_depth
        self.root = ThompsonNode(root_state, mdp.actions(root_state), prior)

    def iterate(self, rng: np.random.Generator) -> float:
        mdp = self.mdp
        if mdp.is_terminal(self.root.state):
            return 0.0
        path: list[tuple[ThompsonNode, object, float]] = []
        node = self.root
        while True:
            blist = [node.beliefs[a] for a in node.actions]
            action = node.actions[thompson_select(blist, rng)]
            s2, r = mdp.sample_transition(node.state, action, rng)
            path.append((node, action, r))
            if mdp.is_terminal(s2):
                tail = 0.0
                break
            child = node.children.get((action, s2))
            if child is None:
                child = ThompsonNode(s2, mdp.actions(s2), self.prior)
                node.children[(action, s2)] = child
                tail = self._rollout(s2, rng)
                break
            node = child
        g = tail
        for node, action, reward in reversed(path):
            g = reward + mdp.gamma * g
            node.beliefs[action] = update_independent(
                node.beliefs[action], self.prior, g
            )
        return g

    def _rollout(self, state, rng: np.random.Generator) -> float:
        mdp = self.mdp
        g, discount = 0.0, 1.0
        for _ in range(self.rollout_depth):
            if mdp.is_terminal(state):
                break
            actions = mdp.actions(state)
            if not actions:
                break
            a = actions[int(rng.integers(len(actions)))]
            state, r = mdp.sample_transition(state, a, rng)
            g += discount * r
            discount *= mdp.gamma
        return g

    def best_root_action(self):
        vals = {a: self.root.beliefs[a].post_mean for a in self.root.actions}
        best = max(vals.values())
        return next(a for a in self.root.actions if vals[a] == best)
