from .base import MdpModel, TabularMdp, chain_mdp
from .bandit_tree import (
    LEFT,
    RIGHT,
    ROOT,
    BanditTreeEnv,
    bandit_tree_build,
    bandit_tree_optimal,
    bandit_tree_step,
)
from .peg import (
    Move,
    PegEnv,
    board_from_text,
    board_to_text,
    peg_apply,
    peg_env,
    peg_legal_moves,
    popcount,
    random_board,
    reachable_min_pegs,
)

__all__ = [
    "MdpModel",
    "TabularMdp",
    "chain_mdp",
    "LEFT",
    "RIGHT",
    "ROOT",
    "BanditTreeEnv",
    "bandit_tree_build",
    "bandit_tree_optimal",
    "bandit_tree_step",
    "Move",
    "PegEnv",
    "board_from_text",
    "board_to_text",
    "peg_apply",
    "peg_env",
    "peg_legal_moves",
    "popcount",
    "random_board",
    "reachable_min_pegs",
]
