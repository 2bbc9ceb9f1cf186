"""MDP interface plus a small tabular implementation for tests and fixtures."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Hashable, Sequence

import numpy as np

State = Hashable
Action = Hashable


class MdpModel(ABC):
    """Finite MDP with explicit transition lists.

    ``transitions(s, a)`` returns ``[(next_state, probability, expected_reward)]``
    with probabilities summing to one. Environments are immutable after
    construction; all randomness comes from caller-supplied generators.
    """

    gamma: float = 1.0

    @abstractmethod
    def actions(self, state: State) -> Sequence[Action]: ...

    @abstractmethod
    def transitions(self, state: State, action: Action) -> list[tuple[State, float, float]]: ...

    @abstractmethod
    def is_terminal(self, state: State) -> bool: ...

    def sample_transition(
        self, state: State, action: Action, rng: np.random.Generator
    ) -> tuple[State, float]:
        """Draw (next_state, sampled_reward). Default reward is the expected one."""
        rows = self.transitions(state, action)
        if len(rows) == 1:
            s2, _, r = rows[0]
        else:
            u = rng.random()
            acc = 0.0
            s2, _, r = rows[-1]
            for cand, p, rew in rows:
                acc += p
                if u < acc:
                    s2, r = cand, rew
                    break
        return s2, self.sample_reward(state, action, s2, rng, expected=r)

    def sample_reward(
        self,
        state: State,
        action: Action,
        next_state: State,
        rng: np.random.Generator,
        expected: float,
    ) -> float:
        """Hook for reward noise; the base model is noise-free."""
        return expected


class TabularMdp(MdpModel):
    """MDP specified by explicit dictionaries; handy for fixtures."""

    def __init__(
        self,
        transitions: dict[tuple[State, Action], list[tuple[State, float, float]]],
        gamma: float = 1.0,
        terminal_states: set | None = None,
    ):
        self._table: dict[State, dict[Action, list[tuple[State, float, float]]]] = {}
        for (s, a), rows in transitions.items():
            total = sum(p for _, p, _ in rows)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"transition probabilities for {(s, a)} sum to {total}")
            self._table.setdefault(s, {})[a] = list(rows)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {gamma}")
        self.gamma = gamma
        self._terminal = set(terminal_states or ())

    def actions(self, state: State) -> list[Action]:
        if state in self._terminal:
            return []
        return sorted(self._table.get(state, {}).keys(), key=repr)

    def transitions(self, state: State, action: Action) -> list[tuple[State, float, float]]:
        try:
            return self._table[state][action]
        except KeyError:
            raise ValueError(f"no transition defined for {(state, action)}") from None

    def is_terminal(self, state: State) -> bool:
        return state in self._terminal or state not in self._table


def chain_mdp(length: int, rewards: Sequence[float] | None = None, gamma: float = 1.0) -> TabularMdp:
    """Deterministic single-action chain 0 -> 1 -> ... -> length (terminal).

    ``rewards[i]`` is collected on the i-th transition; defaults to all ones.
    Used as a transparent oracle environment in tests.
    """
    if length < 1:
        raise ValueError("chain length must be >= 1")
    rewards = list(rewards) if rewards is not None else [1.0] * length
    if len(rewards) != length:
        raise ValueError("need one reward per transition")
    table: dict[tuple[Any, Any], list] = {}
    for i in range(length):
        table[(i, "fwd")] = [(i + 1, 1.0, float(rewards[i]))]
    return TabularMdp(table, gamma=gamma, terminal_states={length})
