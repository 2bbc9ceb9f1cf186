"""Bandit-tree and peg solitaire environment contracts against brute force."""

import math

import numpy as np
import pytest

from vocplan.belief import Kernel
from vocplan.envs import (
    LEFT,
    RIGHT,
    ROOT,
    bandit_tree_build,
    bandit_tree_optimal,
    bandit_tree_step,
    board_from_text,
    board_to_text,
    chain_mdp,
    peg_apply,
    peg_env,
    peg_legal_moves,
    popcount,
    random_board,
    reachable_min_pegs,
)
from vocplan.envs.bandit_tree import BanditTreeEnv
from vocplan.envs.peg import Move, cell_index


def make_tree(depth, p, arms):
    return BanditTreeEnv(depth, p, np.asarray(arms, dtype=float))


class TestBanditTreeStructure:
    def test_depth_three_counts(self):
        env = bandit_tree_build(3, 0.9, Kernel("white", 1.0), np.random.default_rng(0))
        assert env.n_arms == 8
        internal = [s for s in range(1, 16) if not env.is_terminal(s)]
        assert len(internal) == 7

    def test_depth_seven_coordinates(self):
        env = bandit_tree_build(7, 0.9, Kernel("white", 1.0), np.random.default_rng(0))
        assert env.n_arms == 128
        lo, hi = env.arm_span(ROOT)
        assert (lo, hi) == (0, 127)

    def test_white_kernel_sample_covariance_is_diagonal(self):
        rng = np.random.default_rng(123)
        n_builds, depth = 10_000, 2
        draws = np.stack(
            [
                bandit_tree_build(depth, 1.0, Kernel("white", 1.0), rng).arm_means
                for _ in range(n_builds)
            ]
        )
        cov = np.cov(draws.T)
        se = 1.0 / math.sqrt(n_builds)
        off = cov[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) < 3 * se)
        assert np.all(np.abs(np.diag(cov) - 1.0) < 3 * math.sqrt(2.0 / n_builds) + 0.02)
        assert abs(draws.mean() - 0.5) < 3 * se

    def test_transition_rows_sum_to_one(self):
        env = make_tree(3, 0.37, np.arange(8.0))
        for s in range(1, 8):
            for a in (LEFT, RIGHT):
                total = sum(p for _, p, _ in env.transitions(s, a))
                assert total == pytest.approx(1.0, abs=1e-9)


class TestBanditTreeStep:
    def test_deterministic_limit(self):
        env = make_tree(2, 1.0, [0, 1, 2, 3])
        rng = np.random.default_rng(0)
        for _ in range(50):
            s2, r = bandit_tree_step(env, ROOT, LEFT, rng)
            assert s2 == 2 and r == 0.0

    def test_left_frequency_p07(self):
        env = make_tree(2, 0.7, [0, 1, 2, 3])
        rng = np.random.default_rng(1)
        n = 10_000
        hits = sum(bandit_tree_step(env, ROOT, LEFT, rng)[0] == 2 for _ in range(n))
        band = 3 * math.sqrt(0.7 * 0.3 / n)
        assert abs(hits / n - 0.7) < band

    def test_symmetric_p05(self):
        env = make_tree(1, 0.5, [0.0, 0.0])
        rng = np.random.default_rng(2)
        n = 10_000
        hits = sum(bandit_tree_step(env, ROOT, LEFT, rng)[0] == 2 for _ in range(n))
        assert abs(hits / n - 0.5) < 3 * math.sqrt(0.25 / n)

    def test_leaf_reward_noise_variance(self):
        env = make_tree(1, 1.0, [2.0, 0.0])
        rng = np.random.default_rng(3)
        rewards = np.array([bandit_tree_step(env, ROOT, LEFT, rng)[1] for _ in range(20_000)])
        assert rewards.mean() == pytest.approx(2.0, abs=3 * 0.1 / math.sqrt(20_000))
        assert rewards.var() == pytest.approx(0.01, rel=0.1)

    def test_invalid_action_rejected(self):
        env = make_tree(1, 1.0, [0.0, 1.0])
        with pytest.raises(ValueError):
            env.transitions(ROOT, 5)


class TestBanditTreeOracle:
    def test_depth_one_deterministic(self):
        q = bandit_tree_optimal(make_tree(1, 1.0, [0.0, 1.0]))
        assert q[LEFT] == 0.0 and q[RIGHT] == 1.0

    def test_depth_one_p08(self):
        q = bandit_tree_optimal(make_tree(1, 0.8, [0.0, 1.0]))
        assert q[LEFT] == pytest.approx(0.2)
        assert q[RIGHT] == pytest.approx(0.8)

    @pytest.mark.parametrize("depth,p,seed", [(2, 0.6, 0), (3, 0.85, 1), (3, 0.5, 2)])
    def test_dp_equals_path_enumeration(self, depth, p, seed):
        rng = np.random.default_rng(seed)
        arms = rng.normal(0.5, 1.0, size=2**depth)
        env = make_tree(depth, p, arms)

        def brute(state, policy_bits):
            # expectation over all stochastic outcomes for a fixed action plan
            if env.is_terminal(state):
                return arms[state - 2**depth]
            a = policy_bits[0]
            rows = env.transitions(state, a)
            return sum(pr * brute(s2, policy_bits[1:]) for s2, pr, _ in rows)

        def best_from(state):
            if env.is_terminal(state):
                return arms[state - 2**depth]
            # open-loop enumeration is not enough: optimal play is closed-loop,
            # so enumerate recursively over actions at every reached state
            vals = []
            for a in (LEFT, RIGHT):
                rows = env.transitions(state, a)
                vals.append(sum(pr * best_from(s2) for s2, pr, _ in rows))
            return max(vals)

        for a in (LEFT, RIGHT):
            rows = env.transitions(ROOT, a)
            expect = sum(pr * best_from(s2) for s2, pr, _ in rows)
            assert bandit_tree_optimal(env)[a] == pytest.approx(expect, rel=1e-12)

    def test_oracle_regret_zero_when_deterministic(self):
        env = bandit_tree_build(3, 1.0, Kernel("white", 1.0), np.random.default_rng(9))
        q = bandit_tree_optimal(env)
        assert env.simple_regret(int(np.argmax(q))) == 0.0

    def test_identical_seeds_identical_envs(self):
        e1 = bandit_tree_build(4, 0.8, Kernel("rbf", 1.0, 4.0), np.random.default_rng(77))
        e2 = bandit_tree_build(4, 0.8, Kernel("rbf", 1.0, 4.0), np.random.default_rng(77))
        np.testing.assert_array_equal(e1.arm_means, e2.arm_means)


def brute_force_moves(board):
    """Oracle: scan all 16 cells x 4 directions explicitly."""
    moves = []
    for r in range(4):
        for c in range(4):
            for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                r1, c1, r2, c2 = r + dr, c + dc, r + 2 * dr, c + 2 * dc
                if not (0 <= r2 < 4 and 0 <= c2 < 4):
                    continue
                src, over, dst = cell_index(r, c), cell_index(r1, c1), cell_index(r2, c2)
                if board & (1 << src) and board & (1 << over) and not board & (1 << dst):
                    moves.append((src, over, dst))
    return sorted(moves)


class TestPeg:
    def test_single_peg_no_moves(self):
        assert peg_legal_moves(1 << 5) == []

    def test_full_board_no_moves(self):
        assert peg_legal_moves(0xFFFF) == []

    def test_two_pegs_one_move(self):
        board = (1 << cell_index(0, 0)) | (1 << cell_index(0, 1))
        moves = peg_legal_moves(board)
        assert len(moves) == 1
        assert moves[0] == Move(cell_index(0, 0), cell_index(0, 1), cell_index(0, 2))

    def test_apply_hand_example(self):
        board = (1 << cell_index(0, 0)) | (1 << cell_index(0, 1))
        after = peg_apply(board, peg_legal_moves(board)[0])
        assert after == 1 << cell_index(0, 2)

    def test_apply_decrements_popcount(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            board = random_board(9, rng)
            for m in peg_legal_moves(board):
                assert popcount(peg_apply(board, m)) == popcount(board) - 1

    def test_illegal_apply_rejected(self):
        board = 1 << cell_index(0, 0)
        with pytest.raises(ValueError):
            peg_apply(board, Move(cell_index(0, 0), cell_index(0, 1), cell_index(0, 2)))

    def test_move_generator_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for pegs in (2, 5, 9, 12):
            for _ in range(100):
                board = random_board(pegs, rng)
                ours = sorted((m.src, m.over, m.dst) for m in peg_legal_moves(board))
                assert ours == brute_force_moves(board)

    def test_no_reverse_onto_occupied(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            board = random_board(9, rng)
            for m in peg_legal_moves(board):
                after = peg_apply(board, m)
                reverse = Move(m.dst, m.over, m.src)
                assert reverse not in peg_legal_moves(after) or not (after & (1 << m.src)) == 0

    def test_episode_reward_telescopes(self):
        rng = np.random.default_rng(7)
        env = peg_env()
        for _ in range(50):
            board = random_board(9, rng)
            start = popcount(board)
            total, steps = 0.0, 0
            while not env.is_terminal(board):
                move = env.actions(board)[0]
                (board2, p, r), = env.transitions(board, move)
                total += r
                board = board2
                steps += 1
            assert total == start - popcount(board)
            assert steps <= start - 1

    def test_dfs_oracle_on_solid_row(self):
        # A solid row of four pegs has no landing cell: stuck at 4.
        board = sum(1 << cell_index(0, c) for c in range(4))
        assert peg_legal_moves(board) == []
        assert reachable_min_pegs(board) == 4

    def test_dfs_oracle_on_gapped_row(self):
        # Pegs at (0,0),(0,1),(0,3): jump to (0,2), then back over -> one peg.
        board = (1 << cell_index(0, 0)) | (1 << cell_index(0, 1)) | (1 << cell_index(0, 3))
        assert reachable_min_pegs(board) == 1

    def test_board_text_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            board = random_board(9, rng)
            assert board_from_text(board_to_text(board)) == board

    def test_board_text_shape(self):
        text = board_to_text(random_board(9, np.random.default_rng(9)))
        lines = text.split("\n")
        assert text.endswith("\n") and len(lines) == 5 and all(len(l) == 4 for l in lines[:4])


class TestChain:
    def test_chain_terminal_and_rewards(self):
        mdp = chain_mdp(3, rewards=[1.0, 2.0, 3.0], gamma=0.5)
        assert mdp.actions(3) == []
        assert mdp.is_terminal(3)
        assert mdp.transitions(1, "fwd") == [(2, 1.0, 2.0)]
