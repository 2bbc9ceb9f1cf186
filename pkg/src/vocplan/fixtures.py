"""Hand-built instances with known analytic behavior."""

from __future__ import annotations

import math

from .belief import NormalPrior
from .envs import TabularMdp

# Exact best VOC on the early-stop instance: (1/sqrt(2)) * pdf(0) = 1/(2 sqrt(pi)).
EARLY_STOP_BEST_VOC = 1.0 / (2.0 * math.sqrt(math.pi))


def early_stop_counterexample():
    """Two-step deterministic MDP where the incumbent-baselined VOC is zero
    everywhere while the plain VOC is not.

    Root S: action L reaches X (two unknown frontier values, both N(0, 1)
    with unit observation noise); action R reaches W whose single frontier
    value is known to be -1. One sample can never flip the root choice away
    from L, so the incumbent-baselined criterion stops immediately, although
    sampling under X is worth 1/(2 sqrt(pi)) in expectation.

    Returns (mdp, sink, horizon, prior_fn).
    """
    table = {
        ("S", "L"): [("X", 1.0, 0.0)],
        ("S", "R"): [("W", 1.0, 0.0)],
        ("X", "L"): [("TL", 1.0, 0.0)],
        ("X", "R"): [("TR", 1.0, 0.0)],
        ("W", "a"): [("TW", 1.0, 0.0)],
    }
    mdp = TabularMdp(table, gamma=1.0, terminal_states={"TL", "TR", "TW"})
    priors = {
        ("X", "L"): NormalPrior(0.0, 1.0, 1.0),
        ("X", "R"): NormalPrior(0.0, 1.0, 1.0),
        ("W", "a"): NormalPrior(-1.0, 0.0, 1.0),
    }
    return mdp, "S", 2, priors.__getitem__
