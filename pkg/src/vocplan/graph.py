"""Uniform n-step expansion of the current state into a search graph.

Two structures are built depending on the environment. Deterministic MDPs
get a pure tree: every root-to-frontier path is unique, so each frontier
entry carries the discounted path-reward constant ``b`` and the scale
``gamma^d`` that turn a frontier posterior into the path's value
distribution. Stochastic MDPs get a layered DAG merged on (state, depth),
evaluated by expectimax backward induction instead.

Belief state is keyed by the frontier (state, action) pair in both cases, so
two tree paths that reach the same pair share one posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.base import MdpModel
from .errors import EmptyFrontierError, UnsupportedStructureError


@dataclass(frozen=True)
class FrontierEntry:
    """One sampleable boundary node of the expansion."""

    key: tuple  # (state, action)
    depth: int  # number of transitions from the sink, = horizon - 1
    path_reward: float  # b: discounted rewards along the unique path (tree only)
    scale: float  # gamma^depth
    belief_index: int  # column of this entry's posterior


@dataclass(frozen=True)
class DeterministicTransitionTable:
    """One sampled deterministic transition function over the expansion."""

    successors: dict  # (state, action) -> (next_state, expected_reward)

    def __getitem__(self, key):
        return self.successors[key]

    def __contains__(self, key):
        return key in self.successors


class SearchGraph:
    """Expansion of ``sink`` to a fixed spatial horizon."""

    def __init__(self, mdp: MdpModel, sink, horizon: int):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.sink = sink
        self.horizon = horizon
        self.gamma = mdp.gamma
        self.root_actions = list(mdp.actions(sink))
        if mdp.is_terminal(sink) or not self.root_actions:
            raise EmptyFrontierError(f"sink state {sink!r} has no actions")

        self.deterministic = self._probe_deterministic(mdp)
        self.keys: list[tuple] = []
        self.key_index: dict[tuple, int] = {}
        self.frontier: list[FrontierEntry] = []
        self.layers: list[list] = []
        self._rows: dict = {}  # (depth, state, action) -> transition rows
        self._actions_at: dict = {}  # (depth, state) -> action list
        if self.deterministic:
            self.entries_by_action: dict = {a: [] for a in self.root_actions}
            self.terminal_values: dict = {a: [] for a in self.root_actions}
            self._build_tree(mdp)
            self._build_dag(mdp, intern=False)
        else:
            self._build_dag(mdp, intern=True)
        if not self.frontier:
            raise EmptyFrontierError(
                f"no frontier at horizon {horizon} from {sink!r} (all paths terminal)"
            )
        self._plan = None

    # -- construction ---------------------------------------------------------

    def _probe_deterministic(self, mdp: MdpModel) -> bool:
        if self.horizon == 1:
            return True
        seen = {self.sink}
        states = [self.sink]
        for _ in range(self.horizon - 1):
            nxt = []
            for s in states:
                for a in mdp.actions(s):
                    rows = mdp.transitions(s, a)
                    if len(rows) > 1:
                        return False
                    s2 = rows[0][0]
                    if s2 not in seen and not mdp.is_terminal(s2):
                        seen.add(s2)
                        nxt.append(s2)
            states = nxt
        return True

    def _intern_key(self, key) -> int:
        if key not in self.key_index:
            self.key_index[key] = len(self.keys)
            self.keys.append(key)
        return self.key_index[key]

    def _build_tree(self, mdp: MdpModel) -> None:
        d = self.horizon - 1
        for root_action in self.root_actions:
            # Convergent action paths can reproduce the same (key, shift)
            # pair; those are the same random variable and collapse.
            seen: set = set()
            terminals: set = set()
            stack = [(self.sink, root_action, 0, 0.0)]
            while stack:
                state, action, depth, b = stack.pop()
                if depth == d:
                    if ((state, action), b) in seen:
                        continue
                    seen.add(((state, action), b))
                    idx = self._intern_key((state, action))
                    self.entries_by_action[root_action].append(len(self.frontier))
                    self.frontier.append(
                        FrontierEntry((state, action), d, b, self.gamma**d, idx)
                    )
                    continue
                (s2, _, r), = mdp.transitions(state, action)
                b2 = b + (self.gamma**depth) * r
                if mdp.is_terminal(s2) or not mdp.actions(s2):
                    if b2 not in terminals:
                        terminals.add(b2)
                        self.terminal_values[root_action].append(b2)
                    continue
                for a2 in mdp.actions(s2):
                    stack.append((s2, a2, depth + 1, b2))

    def _build_dag(self, mdp: MdpModel, intern: bool) -> None:
        self.layers = [[self.sink]]
        for depth in range(self.horizon - 1):
            seen: set = set()
            nxt: list = []
            for s in self.layers[depth]:
                if mdp.is_terminal(s):
                    continue
                acts = list(mdp.actions(s))
                self._actions_at[(depth, s)] = acts
                for a in acts:
                    rows = mdp.transitions(s, a)
                    self._rows[(depth, s, a)] = rows
                    for s2, _, _ in rows:
                        if s2 not in seen:
                            seen.add(s2)
                            nxt.append(s2)
            self.layers.append(nxt)
        last_depth = self.horizon - 1
        for s in self.layers[-1]:
            if mdp.is_terminal(s):
                continue
            acts = list(mdp.actions(s))
            self._actions_at[(last_depth, s)] = acts
            if not intern:
                continue
            for a in acts:
                idx = self._intern_key((s, a))
                self.frontier.append(
                    FrontierEntry((s, a), last_depth, 0.0, self.gamma**last_depth, idx)
                )

    # -- accessors --------------------------------------------------------------

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    def rows(self, depth: int, state, action):
        return self._rows[(depth, state, action)]

    def actions_at(self, depth: int, state) -> list:
        return self._actions_at.get((depth, state), [])

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(path_reward b, scale gamma^d, belief column) per frontier entry."""
        if not hasattr(self, "_entry_arrays"):
            b = np.array([e.path_reward for e in self.frontier])
            scale = np.array([e.scale for e in self.frontier])
            cols = np.array([e.belief_index for e in self.frontier], dtype=np.intp)
            self._entry_arrays = (b, scale, cols)
        return self._entry_arrays

    def action_entry_arrays(self, action) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """entry_arrays restricted to one root action's tree descendants."""
        if not hasattr(self, "_action_arrays"):
            self._action_arrays = {}
        if action not in self._action_arrays:
            idx = self.entries_by_action[action]
            b = np.array([self.frontier[i].path_reward for i in idx])
            scale = np.array([self.frontier[i].scale for i in idx])
            cols = np.array([self.frontier[i].belief_index for i in idx], dtype=np.intp)
            self._action_arrays[action] = (b, scale, cols)
        return self._action_arrays[action]

    def induction_plan(self) -> "_InductionPlan":
        if self._plan is None:
            self._plan = _InductionPlan(self)
        return self._plan


class _InductionPlan:
    """Index structures for batched expectimax over a layered DAG."""

    def __init__(self, graph: SearchGraph):
        self.gamma = graph.gamma
        last_depth = graph.horizon - 1
        last = graph.layers[-1]
        self.frontier_cols = [
            [graph.key_index[(s, a)] for a in graph.actions_at(last_depth, s)]
            for s in last
        ]
        # One block per layer, deepest first; the final block is the root.
        self.mid: list[list[list]] = []
        for depth in range(last_depth - 1, -1, -1):
            nxt_pos = {s: i for i, s in enumerate(graph.layers[depth + 1])}
            ops = []
            for s in graph.layers[depth]:
                acts = []
                for a in graph.actions_at(depth, s):
                    rows = graph.rows(depth, s, a)
                    pos = np.array([nxt_pos[s2] for s2, _, _ in rows], dtype=np.intp)
                    probs = np.array([p for _, p, _ in rows])
                    rewards = np.array([r for _, _, r in rows])
                    acts.append((pos, probs, rewards))
                ops.append(acts)
            self.mid.append(ops)

    def root_values(self, means: np.ndarray) -> np.ndarray:
        """Expectimax root Q-values, batched: means [B, K] -> [B, n_actions]."""
        means = np.atleast_2d(means)
        batch = means.shape[0]
        v = np.zeros((batch, len(self.frontier_cols)))
        for i, cols in enumerate(self.frontier_cols):
            if cols:
                v[:, i] = means[:, cols].max(axis=1)
        root_q = None
        for k, ops in enumerate(self.mid):
            nv = np.zeros((batch, len(ops)))
            for i, acts in enumerate(ops):
                if not acts:
                    continue
                qs = np.stack(
                    [
                        (probs * (rewards + self.gamma * v[:, pos])).sum(axis=1)
                        for pos, probs, rewards in acts
                    ],
                    axis=1,
                )
                if k == len(self.mid) - 1:
                    root_q = qs
                nv[:, i] = qs.max(axis=1)
            v = nv
        return root_q


def expand(mdp: MdpModel, state, horizon: int) -> SearchGraph:
    """Breadth-first n-step expansion of ``state``; see :class:`SearchGraph`."""
    return SearchGraph(mdp, state, horizon)


def y_mean(entry: FrontierEntry, mean: float, graph: SearchGraph | None = None) -> float:
    """Expected path value b + gamma^d * posterior mean for a tree entry."""
    if graph is not None and not graph.deterministic:
        raise UnsupportedStructureError("Y statistics need a deterministic tree")
    return entry.path_reward + entry.scale * mean


def sample_transition_table(
    mdp: MdpModel, graph: SearchGraph, rng: np.random.Generator
) -> DeterministicTransitionTable:
    """Fix one successor per expanded (state, action), sampled from the model."""
    successors = {}
    if graph.deterministic:
        seen = {graph.sink}
        stack = [(graph.sink, 0)]
        while stack:
            s, depth = stack.pop()
            if depth >= graph.horizon or mdp.is_terminal(s):
                continue
            for a in mdp.actions(s):
                (s2, _, r), = mdp.transitions(s, a)
                successors[(s, a)] = (s2, r)
                if s2 not in seen:
                    seen.add(s2)
                    stack.append((s2, depth + 1))
        return DeterministicTransitionTable(successors)
    for depth in range(graph.horizon):
        for s in graph.layers[depth]:
            for a in graph.actions_at(depth, s):
                if (s, a) in successors:
                    continue
                rows = (
                    graph.rows(depth, s, a)
                    if depth < graph.horizon - 1
                    else mdp.transitions(s, a)
                )
                probs = np.array([p for _, p, _ in rows])
                i = int(rng.choice(len(rows), p=probs / probs.sum()))
                successors[(s, a)] = (rows[i][0], rows[i][2])
    return DeterministicTransitionTable(successors)


def table_frontier(
    graph: SearchGraph, table: DeterministicTransitionTable, root_action
) -> tuple[list[tuple], list[float]]:
    """Frontier reachable from ``root_action`` when transitions follow ``table``.

    Returns ``([(key, b, scale)], [terminal b])`` mirroring the deterministic
    tree decomposition; only valid for stochastic (layered) graphs.
    """
    if graph.deterministic:
        raise UnsupportedStructureError("table_frontier applies to stochastic graphs")
    entries: list[tuple] = []
    terminals: list[float] = []
    seen: set = set()
    seen_terminal: set = set()
    d = graph.horizon - 1
    stack = [(graph.sink, root_action, 0, 0.0)]
    while stack:
        state, action, depth, b = stack.pop()
        if depth == d:
            if ((state, action), b) not in seen:
                seen.add(((state, action), b))
                entries.append(((state, action), b, graph.gamma**d))
            continue
        s2, r = table[(state, action)]
        b2 = b + (graph.gamma**depth) * r
        acts = graph.actions_at(depth + 1, s2)
        if not acts:
            if b2 not in seen_terminal:
                seen_terminal.add(b2)
                terminals.append(b2)
            continue
        for a2 in acts:
            stack.append((s2, a2, depth + 1, b2))
    return entries, terminals
