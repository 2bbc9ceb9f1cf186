"""Peg solitaire on a 4x4 board, bitmask representation.

Cell (row, col) maps to bit ``4 * row + col`` of a 16-bit occupancy mask.
A move jumps a peg over an orthogonal neighbor onto the empty cell behind
it and removes the jumped peg, so every move lowers the peg count by one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .base import MdpModel

SIZE = 4
N_CELLS = SIZE * SIZE


def cell_index(row: int, col: int) -> int:
    return SIZE * row + col


def popcount(board: int) -> int:
    return bin(board & 0xFFFF).count("1")


@dataclass(frozen=True, order=True)
class Move:
    """Jump from ``src`` over ``over`` landing on ``dst`` (cell indices)."""

    src: int
    over: int
    dst: int


def _move_candidates() -> list[Move]:
    moves = []
    for r in range(SIZE):
        for c in range(SIZE):
            for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                r2, c2 = r + 2 * dr, c + 2 * dc
                if 0 <= r2 < SIZE and 0 <= c2 < SIZE:
                    moves.append(
                        Move(cell_index(r, c), cell_index(r + dr, c + dc), cell_index(r2, c2))
                    )
    return moves


_ALL_MOVES = _move_candidates()


def peg_legal_moves(board: int) -> list[Move]:
    """All legal jumps on ``board``, in a fixed deterministic order."""
    out = []
    for m in _ALL_MOVES:
        if board & (1 << m.src) and board & (1 << m.over) and not board & (1 << m.dst):
            out.append(m)
    return out


def peg_apply(board: int, move: Move) -> int:
    """Apply a move; raises if it is not legal on ``board``."""
    if not (board & (1 << move.src) and board & (1 << move.over)) or board & (1 << move.dst):
        raise ValueError(f"illegal move {move} on board {board:#06x}")
    return board ^ (1 << move.src) ^ (1 << move.over) ^ (1 << move.dst)


def random_board(n_pegs: int, rng: np.random.Generator) -> int:
    """Uniformly place ``n_pegs`` pegs on distinct cells."""
    if not 0 <= n_pegs <= N_CELLS:
        raise ValueError(f"peg count must be in [0, {N_CELLS}]")
    cells = rng.choice(N_CELLS, size=n_pegs, replace=False)
    board = 0
    for c in cells:
        board |= 1 << int(c)
    return board


def board_to_text(board: int) -> str:
    """Fixture format: 4 lines of 4 chars, '#'=peg '.'=empty, newline-terminated."""
    rows = []
    for r in range(SIZE):
        rows.append(
            "".join("#" if board & (1 << cell_index(r, c)) else "." for c in range(SIZE))
        )
    return "\n".join(rows) + "\n"


def board_from_text(text: str) -> int:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != SIZE or any(len(ln) != SIZE for ln in lines):
        raise ValueError("board text must be 4 lines of 4 characters")
    board = 0
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#":
                board |= 1 << cell_index(r, c)
            elif ch != ".":
                raise ValueError(f"unexpected character {ch!r} in board text")
    return board


class PegEnv(MdpModel):
    """Deterministic MDP view: +1 reward per jump, terminal when stuck.

    With gamma = 1 the episodic return equals the number of pegs removed,
    so maximizing return minimizes the pegs remaining.
    """

    gamma = 1.0

    def actions(self, state: int) -> list[Move]:
        return peg_legal_moves(state)

    def transitions(self, state: int, action: Move) -> list[tuple[int, float, float]]:
        return [(peg_apply(state, action), 1.0, 1.0)]

    def is_terminal(self, state: int) -> bool:
        return not peg_legal_moves(state)


def peg_env(board: int = 0) -> PegEnv:
    """The peg MDP; state is carried by the caller, ``board`` is just a hint."""
    return PegEnv()


def reachable_min_pegs(board: int, _cache: dict | None = None) -> int:
    """Brute-force DFS oracle: fewest pegs reachable from ``board``."""
    if _cache is None:
        _cache = {}
    if board in _cache:
        return _cache[board]
    moves = peg_legal_moves(board)
    if not moves:
        best = popcount(board)
    else:
        best = min(reachable_min_pegs(peg_apply(board, m), _cache) for m in moves)
    _cache[board] = best
    return best


def play_out(board: int, policy, rng: np.random.Generator) -> Iterator[int]:
    """Yield successive boards under ``policy(board) -> Move`` until terminal."""
    yield board
    while peg_legal_moves(board):
        board = peg_apply(board, policy(board))
        yield board
