"""Bandit-tree benchmark environment.

A complete binary tree of internal decision states with bandit arms at the
leaves. LEFT moves to the left child with probability ``p`` and to the right
child otherwise; RIGHT has the probabilities swapped. All internal rewards
are zero; transitioning into a leaf pays that arm's hidden mean plus Gaussian
noise and ends the episode.

States are heap-indexed node ids: root is 1, children of ``s`` are ``2s`` and
``2s + 1``; nodes >= 2^depth are leaves, and leaf ``2^depth + j`` is arm ``j``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..belief import Kernel, kernel_matrix
from .base import MdpModel

LEFT, RIGHT = 0, 1
ROOT = 1


class BanditTreeEnv(MdpModel):
    """Binary decision tree over hidden bandit arms.

    ``arm_means`` is oracle-only state: policies must not read it. The arm
    noise is Gaussian with variance ``arm_noise_var``.
    """

    gamma = 1.0

    def __init__(self, depth: int, p: float, arm_means: np.ndarray, arm_noise_var: float = 0.01):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        self.depth = depth
        self.p = p
        self.n_arms = 2**depth
        self.arm_means = np.asarray(arm_means, dtype=np.float64)
        if self.arm_means.shape != (self.n_arms,):
            raise ValueError(f"need {self.n_arms} arm means, got {self.arm_means.shape}")
        self.arm_noise_var = float(arm_noise_var)
        self._leaf_base = 2**depth
        self._rows: dict = {}

    # -- MdpModel interface -------------------------------------------------

    def actions(self, state: int) -> list[int]:
        return [] if self.is_terminal(state) else [LEFT, RIGHT]

    def is_terminal(self, state: int) -> bool:
        return state >= self._leaf_base

    def transitions(self, state: int, action: int) -> list[tuple[int, float, float]]:
        cached = self._rows.get((state, action))
        if cached is not None:
            return cached
        if self.is_terminal(state) or action not in (LEFT, RIGHT):
            raise ValueError(f"invalid state-action ({state}, {action})")
        left, right = 2 * state, 2 * state + 1
        p_left = self.p if action == LEFT else 1.0 - self.p
        rows = []
        for child, prob in ((left, p_left), (right, 1.0 - p_left)):
            if prob > 0.0:
                rows.append((child, prob, self._expected_reward(child)))
        self._rows[(state, action)] = rows
        return rows

    def sample_reward(self, state, action, next_state, rng, expected) -> float:
        if self.is_terminal(next_state):
            return expected + float(rng.normal(0.0, math.sqrt(self.arm_noise_var)))
        return expected

    def _expected_reward(self, child: int) -> float:
        if child >= self._leaf_base:
            return float(self.arm_means[child - self._leaf_base])
        return 0.0

    # -- oracle and planner hooks -------------------------------------------

    def node_depth(self, state: int) -> int:
        return state.bit_length() - 1

    def arm_span(self, state: int) -> tuple[int, int]:
        """Inclusive range of arm coordinates under ``state``'s subtree."""
        level = self.node_depth(state)
        width = 2 ** (self.depth - level)
        lo = (state - 2**level) * width
        return lo, lo + width - 1

    def frontier_coordinate(self, state: int, action: int) -> float:
        """Spatial coordinate of a frontier state-action: the center of the
        arm block under the action's intended child."""
        child = 2 * state + (1 if action == RIGHT else 0)
        lo, hi = self.arm_span(child)
        return (lo + hi) / 2.0

    def max_return(self) -> float:
        """Oracle-only: best achievable expected return from the root."""
        return float(max(self.optimal_root_values()))

    def optimal_root_values(self) -> np.ndarray:
        """Exact Q*(ROOT, [LEFT, RIGHT]) via dynamic programming."""
        q = self.optimal_values()
        return q[ROOT]

    def optimal_values(self) -> dict[int, np.ndarray]:
        """Q*(s, [LEFT, RIGHT]) for every internal state, bottom-up."""
        values: dict[int, float] = {}
        q: dict[int, np.ndarray] = {}
        for state in range(2 ** (self.depth + 1) - 1, 0, -1):
            if self.is_terminal(state):
                values[state] = 0.0
                continue
            left, right = 2 * state, 2 * state + 1
            v_left = self._expected_reward(left) + values[left]
            v_right = self._expected_reward(right) + values[right]
            q_left = self.p * v_left + (1.0 - self.p) * v_right
            q_right = (1.0 - self.p) * v_left + self.p * v_right
            q[state] = np.array([q_left, q_right])
            values[state] = float(max(q_left, q_right))
        return q

    def simple_regret(self, action: int) -> float:
        root_q = self.optimal_root_values()
        return float(root_q.max() - root_q[action])


def bandit_tree_build(
    depth: int,
    p: float,
    kernel: Kernel,
    rng: np.random.Generator,
    arm_noise_var: float = 0.01,
    mean_shift: float = 0.5,
) -> BanditTreeEnv:
    """Sample a bandit-tree instance: arm means ~ N(mean_shift * 1, K).

    ``K`` is the kernel covariance over the unit-spaced arm coordinates
    ``0 .. 2^depth - 1``.
    """
    coords = np.arange(2**depth, dtype=np.float64)
    cov = kernel_matrix(kernel, coords)
    try:
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise ValueError("kernel matrix is not positive semi-definite") from exc
    means = mean_shift + chol @ rng.standard_normal(cov.shape[0])
    return BanditTreeEnv(depth, p, means, arm_noise_var=arm_noise_var)


def bandit_tree_step(
    env: BanditTreeEnv, state: int, action: int, rng: np.random.Generator
) -> tuple[int, float]:
    """One environment step: (next_state, sampled reward)."""
    return env.sample_transition(state, action, rng)


def bandit_tree_optimal(env: BanditTreeEnv) -> np.ndarray:
    """Oracle Q*(ROOT, [LEFT, RIGHT])."""
    return env.optimal_root_values()


def leaf_coordinates(depth: int) -> Sequence[float]:
    return np.arange(2**depth, dtype=np.float64)
