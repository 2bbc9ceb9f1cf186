"""Expansion structure, Y statistics, and sampled transition tables."""

import math

import numpy as np
import pytest

from vocplan.envs import LEFT, RIGHT, ROOT, chain_mdp
from vocplan.envs.bandit_tree import BanditTreeEnv
from vocplan.errors import EmptyFrontierError, UnsupportedStructureError
from vocplan.graph import expand, sample_transition_table, table_frontier, y_mean


def tree_env(depth, p=1.0):
    return BanditTreeEnv(depth, p, np.arange(2.0**depth))


class TestExpand:
    def test_deterministic_binary_tree_horizon4(self):
        g = expand(tree_env(5, p=1.0), ROOT, 4)
        assert g.deterministic
        assert len(g.frontier) == 16  # 2^4 paths
        assert all(e.depth == 3 and e.scale == 1.0 for e in g.frontier)

    def test_horizon_one_is_root_actions(self):
        g = expand(tree_env(3), ROOT, 1)
        assert [e.key for e in g.frontier] == [(ROOT, LEFT), (ROOT, RIGHT)]
        assert all(e.path_reward == 0.0 and e.scale == 1.0 for e in g.frontier)

    def test_stochastic_frontier_matches_reachability_bfs(self):
        env = tree_env(4, p=0.6)
        g = expand(env, ROOT, 2)
        assert not g.deterministic
        # brute-force: all states reachable in 1 step with positive prob
        reach = set()
        for a in (LEFT, RIGHT):
            for s2, p, _ in env.transitions(ROOT, a):
                if p > 0:
                    reach.add(s2)
        want = {(s, a) for s in reach for a in (LEFT, RIGHT)}
        assert set(g.keys) == want

    def test_terminal_sink_raises(self):
        env = tree_env(1)
        with pytest.raises(EmptyFrontierError):
            expand(env, 2, 1)  # leaf node is terminal

    def test_frontier_count_binary_tree(self):
        for n in (1, 2, 3):
            g = expand(tree_env(4, p=1.0), ROOT, n)
            assert len(g.frontier) == 2**n

    def test_early_terminal_paths_become_constants(self):
        # Chain of length 2 expanded to horizon 3: the single path terminates
        # after 2 transitions, leaving that root action with a known value.
        mdp = chain_mdp(2, rewards=[1.0, 2.0], gamma=0.5)
        with pytest.raises(EmptyFrontierError):
            expand(mdp, 0, 3)  # no frontier anywhere -> error
        g = expand(mdp, 0, 2)
        assert [e.key for e in g.frontier] == [(1, "fwd")]
        assert g.frontier[0].path_reward == 1.0


class TestYMean:
    def test_zero_rewards_gamma_one(self):
        g = expand(tree_env(3, p=1.0), ROOT, 2)
        e = g.frontier[0]
        assert y_mean(e, 0.25, g) == pytest.approx(0.25)

    def test_discounted_shift_example(self):
        mdp = chain_mdp(3, rewards=[1.0, 1.0, 0.0], gamma=0.9)
        g = expand(mdp, 0, 3)
        (e,) = g.frontier
        assert e.path_reward == pytest.approx(1.0 + 0.9)
        assert e.scale == pytest.approx(0.81)
        assert y_mean(e, 2.0, g) == pytest.approx(3.52, rel=1e-12)

    def test_affine_shift(self):
        g = expand(tree_env(4, p=1.0), ROOT, 3)
        e = g.frontier[5]
        delta = 0.37
        assert y_mean(e, 1.0 + delta, g) - y_mean(e, 1.0, g) == pytest.approx(
            e.scale * delta, rel=1e-12
        )

    def test_stochastic_graph_rejected(self):
        g = expand(tree_env(3, p=0.5), ROOT, 2)
        with pytest.raises(UnsupportedStructureError):
            y_mean(g.frontier[0], 0.0, g)

    def test_path_reward_recompute(self):
        mdp = chain_mdp(4, rewards=[0.5, 1.5, 2.5, 0.0], gamma=0.8)
        g = expand(mdp, 0, 4)
        (e,) = g.frontier
        rewards = [0.5, 1.5, 2.5]
        b = sum(r * 0.8**i for i, r in enumerate(rewards))
        assert e.path_reward == pytest.approx(b, rel=1e-12)


class TestDagLayers:
    def test_states_once_per_layer(self):
        g = expand(tree_env(4, p=0.5), ROOT, 3)
        for layer in g.layers:
            assert len(layer) == len(set(layer))

    def test_keys_shared_across_paths(self):
        g = expand(tree_env(4, p=0.5), ROOT, 3)
        # depth-2 layer has 4 states; frontier = 8 unique keys even though
        # many root-action paths reach each one
        assert len(g.keys) == 8
        assert len(g.frontier) == 8


class TestTransitionTable:
    def test_deterministic_table_is_unique_map(self):
        env = tree_env(3, p=1.0)
        g = expand(env, ROOT, 3)
        t1 = sample_transition_table(env, g, np.random.default_rng(0))
        t2 = sample_transition_table(env, g, np.random.default_rng(99))
        assert t1.successors == t2.successors
        assert t1[(ROOT, LEFT)][0] == 2

    def test_sampled_frequency(self):
        env = tree_env(2, p=0.7)
        g = expand(env, ROOT, 2)
        rng = np.random.default_rng(1)
        n = 10_000
        hits = sum(
            sample_transition_table(env, g, rng)[(ROOT, LEFT)][0] == 2 for _ in range(n)
        )
        assert abs(hits / n - 0.7) < 3 * math.sqrt(0.21 / n)

    def test_support_is_positive_probability(self):
        env = tree_env(3, p=0.7)
        g = expand(env, ROOT, 3)
        rng = np.random.default_rng(2)
        for _ in range(50):
            table = sample_transition_table(env, g, rng)
            for (s, a), (s2, _) in table.successors.items():
                assert any(row[0] == s2 and row[1] > 0 for row in env.transitions(s, a))

    def test_table_frontier_walk(self):
        env = tree_env(3, p=0.5)
        g = expand(env, ROOT, 3)
        table = sample_transition_table(env, g, np.random.default_rng(3))
        entries, terminals = table_frontier(g, table, LEFT)
        assert terminals == []
        # one depth-2 state is reached; both its actions are on the frontier
        assert len(entries) == 2
        states = {key[0] for key, _, _ in entries}
        assert len(states) == 1
