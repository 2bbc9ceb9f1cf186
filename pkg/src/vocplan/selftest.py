"""Invariant suite: every module's structural properties, runnable anywhere.

Each check is a function raising AssertionError on violation and returning a
short detail string otherwise. ``run_selftest`` executes all of them in a
fixed order with fixed seeds and reports one pass/fail line per check.
Designed to finish well inside two minutes single-threaded.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .belief import (
    CorrelatedBelief,
    Kernel,
    NodeBelief,
    NormalPrior,
    correlated_from_kernel,
    kernel_matrix,
    update_correlated,
    update_independent,
)
from .envs import (
    LEFT,
    RIGHT,
    ROOT,
    bandit_tree_build,
    bandit_tree_optimal,
    peg_apply,
    peg_env,
    peg_legal_moves,
    popcount,
    random_board,
)
from .envs.base import TabularMdp
from .graph import expand
from .normals import std_cdf, std_pdf
from .values import (
    dynamic_value_mc,
    frontier_stats,
    lambda_from_marginals,
    lr_bound,
    optimal_c,
    static_value,
)
from .voc import (
    d_mean_dn,
    d_std_dn,
    posterior_mean_continuous,
    posterior_std_continuous,
    voc_phi_all,
    voc_phi_correlated,
    voc_phi_independent,
    voc_prime,
    voc_psi_mc,
)

CHECKS = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn

    return register


# -- shared instance builders -----------------------------------------------------


def _random_tree(rng, depth=3, branching=2, gamma=1.0):
    table = {}

    def rec(state, d):
        if d == depth:
            return
        for a in range(branching):
            child = state + (a,)
            table[(state, a)] = [(child, 1.0, float(rng.normal()))]
            rec(child, d + 1)

    rec((), 0)
    terminals = set()

    def collect(state, d):
        if d == depth:
            terminals.add(state)
            return
        for a in range(branching):
            collect(state + (a,), d + 1)

    collect((), 0)
    return TabularMdp(table, gamma=gamma, terminal_states=terminals)


def _random_instance(rng, observations=2):
    depth = int(rng.integers(2, 4))
    horizon = int(rng.integers(1, depth + 1))
    mdp = _random_tree(rng, depth=depth, gamma=float(rng.choice([1.0, 0.9])))
    graph = expand(mdp, (), horizon)
    beliefs = {}
    for k in graph.keys:
        prior = NormalPrior(
            float(rng.normal()), float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.2, 2.0))
        )
        beliefs[k] = NodeBelief(prior=prior)
    for _ in range(observations):
        key = graph.keys[int(rng.integers(len(graph.keys)))]
        node = beliefs[key]
        beliefs[key] = update_independent(node, node.prior, float(rng.normal()))
    return mdp, graph, beliefs


def _resampled_updates(graph, beliefs, key, n_draws, rng):
    """Posterior means/stds of ``key`` after each of n predictive draws."""
    node = beliefs[key]
    pred_sd = math.sqrt(node.post_var + node.prior.noise_var)
    draws = node.post_mean + pred_sd * rng.standard_normal(n_draws)
    kappa = node.post_var / (node.post_var + node.prior.noise_var)
    new_means = node.post_mean + kappa * (draws - node.post_mean)
    new_var = node.post_var * node.prior.noise_var / (node.post_var + node.prior.noise_var)
    return new_means, new_var


# -- belief checks ------------------------------------------------------------------


@check("conjugate-batch-vs-sequential")
def _check_batch_sequential():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        prior = NormalPrior(
            float(rng.normal()), float(rng.uniform(0.05, 3.0)), float(rng.uniform(0.05, 3.0))
        )
        obs = rng.normal(size=int(rng.integers(1, 25)))
        node = NodeBelief(prior=prior)
        for o in obs:
            node = update_independent(node, prior, float(o))
        n, r_hat = len(obs), float(np.mean(obs))
        batch_mean = (n * prior.var0 * r_hat + prior.noise_var * prior.mean0) / (
            n * prior.var0 + prior.noise_var
        )
        rel = abs(node.post_mean - batch_mean) / max(abs(batch_mean), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-12, f"sequential vs batch drift {rel}"
    return f"max relative drift {worst:.2e}"


@check("belief-order-invariance")
def _check_order_invariance():
    rng = np.random.default_rng(102)
    prior = NormalPrior(0.0, 1.0, 0.5)
    for _ in range(100):
        obs = rng.normal(size=8)
        fwd = NodeBelief(prior=prior)
        rev = NodeBelief(prior=prior)
        for o in obs:
            fwd = update_independent(fwd, prior, float(o))
        for o in obs[::-1]:
            rev = update_independent(rev, prior, float(o))
        assert abs(fwd.post_mean - rev.post_mean) <= 1e-12 * max(1.0, abs(fwd.post_mean))
    return "permutation-stable to 1e-12"


@check("belief-variance-monotone")
def _check_variance_monotone():
    prior = NormalPrior(0.0, 2.0, 0.3)
    node = NodeBelief(prior=prior)
    for k in range(50):
        nxt = update_independent(node, prior, 0.1 * k)
        assert nxt.post_var < node.post_var, f"variance rose at step {k}"
        node = nxt
    return "strictly decreasing over 50 updates"


@check("belief-martingale")
def _check_belief_martingale():
    rng = np.random.default_rng(103)
    prior = NormalPrior(0.4, 1.2, 0.6)
    node = update_independent(NodeBelief(prior=prior), prior, 0.9)
    n = 100_000
    pred_sd = math.sqrt(node.post_var + prior.noise_var)
    draws = node.post_mean + pred_sd * rng.standard_normal(n)
    kappa = node.post_var / (node.post_var + prior.noise_var)
    updated = node.post_mean + kappa * (draws - node.post_mean)
    se = updated.std(ddof=1) / math.sqrt(n)
    gap = abs(updated.mean() - node.post_mean)
    assert gap < 3 * se, f"martingale violated: gap {gap} vs 3se {3*se}"
    return f"gap {gap:.2e} within 3se {3*se:.2e}"


@check("correlated-white-equals-independent")
def _check_correlated_equivalence():
    rng = np.random.default_rng(104)
    prior = NormalPrior(0.2, 1.5, 0.4)
    keys = list(range(5))
    corr = correlated_from_kernel(keys, np.arange(5.0), Kernel("white", 1.5), 0.2, 0.4)
    indep = {k: NodeBelief(prior=prior) for k in keys}
    for _ in range(60):
        k = int(rng.integers(5))
        o = float(rng.normal())
        corr = update_correlated(corr, k, o)
        indep[k] = update_independent(indep[k], prior, o)
        for j in keys:
            assert abs(corr.mean[j] - indep[j].post_mean) <= 1e-12 * max(
                1.0, abs(indep[j].post_mean)
            )
            assert abs(corr.cov[j, j] - indep[j].post_var) <= 1e-12
    return "means and variances equal to 1e-12 over 60 updates"


@check("psd-preservation")
def _check_psd():
    rng = np.random.default_rng(105)
    cov = kernel_matrix(Kernel("rbf", 1.0, 2.5), np.arange(10.0))
    belief = CorrelatedBelief(np.zeros(10), cov, np.full(10, 0.005))
    for _ in range(100):
        belief = update_correlated(belief, int(rng.integers(10)), float(rng.normal()))
        w_min = float(np.linalg.eigvalsh(belief.cov)[0])
        assert w_min >= -1e-9 * max(np.trace(belief.cov), 1e-300)
    return "min eigenvalue stayed above -1e-9 * trace for 100 updates"


# -- environment checks ---------------------------------------------------------------


@check("transition-rows-sum-to-one")
def _check_rows():
    rng = np.random.default_rng(106)
    env = bandit_tree_build(4, 0.73, Kernel("white", 1.0), rng)
    for s in range(1, 16):
        for a in (LEFT, RIGHT):
            total = sum(p for _, p, _ in env.transitions(s, a))
            assert abs(total - 1.0) <= 1e-9
    board = random_board(9, rng)
    env2 = peg_env()
    for m in peg_legal_moves(board):
        total = sum(p for _, p, _ in env2.transitions(board, m))
        assert abs(total - 1.0) <= 1e-9
    return "bandit-tree and peg rows normalized"


@check("deterministic-tree-zero-oracle-regret")
def _check_oracle_regret():
    rng = np.random.default_rng(107)
    for _ in range(20):
        env = bandit_tree_build(3, 1.0, Kernel("white", 1.0), rng)
        q = bandit_tree_optimal(env)
        assert env.simple_regret(int(np.argmax(q))) == 0.0
    return "oracle action regret exactly 0 on 20 deterministic instances"


@check("peg-strictly-decreasing-acyclic")
def _check_peg_acyclic():
    rng = np.random.default_rng(108)
    for _ in range(50):
        board = random_board(9, rng)
        seen = {board}
        while True:
            moves = peg_legal_moves(board)
            if not moves:
                break
            nxt = peg_apply(board, moves[int(rng.integers(len(moves)))])
            assert popcount(nxt) == popcount(board) - 1
            assert nxt not in seen
            seen.add(nxt)
            board = nxt
    return "peg count strictly decreases; no revisits in 50 episodes"


@check("seeded-environments-identical")
def _check_env_determinism():
    e1 = bandit_tree_build(5, 0.8, Kernel("rbf", 1.0, 6.0), np.random.default_rng(9))
    e2 = bandit_tree_build(5, 0.8, Kernel("rbf", 1.0, 6.0), np.random.default_rng(9))
    assert np.array_equal(e1.arm_means, e2.arm_means)
    b1 = random_board(9, np.random.default_rng(10))
    b2 = random_board(9, np.random.default_rng(10))
    assert b1 == b2
    return "same seeds give bit-identical environments"


# -- graph checks ------------------------------------------------------------------


@check("frontier-count-binary-tree")
def _check_frontier_count():
    env = bandit_tree_build(5, 1.0, Kernel("white", 1.0), np.random.default_rng(11))
    for n in (1, 2, 3, 4):
        g = expand(env, ROOT, n)
        assert len(g.frontier) == 2**n, f"horizon {n}: {len(g.frontier)} entries"
    return "b^n entries for horizons 1..4"


@check("path-reward-recompute")
def _check_path_reward():
    rng = np.random.default_rng(12)
    mdp = _random_tree(rng, depth=4, gamma=0.85)
    g = expand(mdp, (), 4)
    for e in g.frontier:
        state = e.key[0]
        b = 0.0
        for depth in range(len(state)):
            prefix = state[:depth]
            (_s2, _, r), = mdp.transitions(prefix, state[depth])
            b += (0.85**depth) * r
        assert abs(b - e.path_reward) <= 1e-12 * max(1.0, abs(b))
    return "stored shifts equal re-walked discounted rewards"


# -- value checks -----------------------------------------------------------------


@check("psi-dominates-phi")
def _check_psi_ge_phi():
    rng = np.random.default_rng(13)
    for _ in range(100):
        _, graph, beliefs = _random_instance(rng)
        phi = static_value(graph, beliefs)
        psi = dynamic_value_mc(graph, beliefs, 400, rng)
        for a in graph.root_actions:
            est, se = psi[a]
            assert est >= phi[a] - 3 * se - 1e-9
    return "dynamic >= static within 3 SE on 100 instances"


@check("psi-martingale-resampling")
def _check_psi_martingale():
    # Each resampled value gets fresh inner noise, so the 10^4 estimates are
    # independent and unbiased; their scatter covers both noise sources.
    rng = np.random.default_rng(14)
    _, graph, beliefs = _random_instance(rng, observations=1)
    action = graph.root_actions[0]
    key = graph.keys[0]
    m_inner, n_draws = 256, 10_000
    means, stds = frontier_stats(graph, beliefs)
    col = graph.key_index[key]
    idx = graph.entries_by_action[action]
    b = np.array([graph.frontier[i].path_reward for i in idx])
    sc = np.array([graph.frontier[i].scale for i in idx])
    cols = np.array([graph.frontier[i].belief_index for i in idx])
    terms = graph.terminal_values[action]

    def psi_batch(mean_rows, std_vec, z):
        # mean_rows [C, K], z [C, m_inner, K] -> [C]
        vals = mean_rows[:, None, :] + std_vec[None, None, :] * z
        y = b[None, None, :] + sc[None, None, :] * vals[:, :, cols]
        best = y.max(axis=2)
        for t in terms:
            best = np.maximum(best, t)
        return best.mean(axis=1)

    base_z = rng.standard_normal((8, 25_000, graph.n_keys))
    base_chunks = psi_batch(np.tile(means, (8, 1)), stds, base_z)
    base = float(base_chunks.mean())
    base_se = float(base_chunks.std(ddof=1) / math.sqrt(8))

    new_means, new_var = _resampled_updates(graph, beliefs, key, n_draws, rng)
    new_stds = stds.copy()
    new_stds[col] = math.sqrt(new_var)
    vals = np.empty(n_draws)
    chunk = 500
    for lo in range(0, n_draws, chunk):
        hi = min(lo + chunk, n_draws)
        mean_rows = np.tile(means, (hi - lo, 1))
        mean_rows[:, col] = new_means[lo:hi]
        z = rng.standard_normal((hi - lo, m_inner, graph.n_keys))
        vals[lo:hi] = psi_batch(mean_rows, new_stds, z)
    se = math.sqrt(vals.var(ddof=1) / n_draws + base_se**2)
    gap = abs(vals.mean() - base)
    assert gap < 3 * se + 1e-9, f"psi drifted by {gap} (3se {3*se})"
    return f"resampled psi gap {gap:.2e} within 3se {3*se:.2e}"


@check("phi-dominance-resampling")
def _check_phi_dominance():
    rng = np.random.default_rng(15)
    _, graph, beliefs = _random_instance(rng, observations=1)
    action = graph.root_actions[0]
    key = graph.keys[0]
    means, _ = frontier_stats(graph, beliefs)
    col = graph.key_index[key]
    idx = graph.entries_by_action[action]
    b = np.array([graph.frontier[i].path_reward for i in idx])
    sc = np.array([graph.frontier[i].scale for i in idx])
    cols = np.array([graph.frontier[i].belief_index for i in idx])

    def phi_of(mean_vec):
        best = (b + sc * mean_vec[cols]).max()
        for t in graph.terminal_values[action]:
            best = max(best, t)
        return best

    base = phi_of(means)
    new_means, _ = _resampled_updates(graph, beliefs, key, 10_000, rng)
    vals = np.empty(10_000)
    for i in range(10_000):
        mv = means.copy()
        mv[col] = new_means[i]
        vals[i] = phi_of(mv)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert vals.mean() >= base - 3 * se - 1e-9
    return f"resampled phi mean {vals.mean():.4f} >= current {base:.4f} - 3se"


@check("lambda-dominates-psi")
def _check_lambda_ge_psi():
    rng = np.random.default_rng(16)
    for _ in range(100):
        _, graph, beliefs = _random_instance(rng)
        bounds = lr_bound(graph, beliefs)
        psi = dynamic_value_mc(graph, beliefs, 400, rng)
        for a in graph.root_actions:
            est, se = psi[a]
            assert bounds[a][0] >= est - 3 * se - 1e-9
    return "bound >= dynamic estimate within 3 SE on 100 instances"


@check("optimal-c-residual")
def _check_c_residual():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 10))
        mus = rng.normal(0, 2, n)
        sigmas = rng.uniform(0.05, 2.0, n)
        c = optimal_c(mus, sigmas)
        resid = abs(float((1.0 - std_cdf((c - mus) / sigmas)).sum()) - 1.0)
        worst = max(worst, resid)
        assert resid <= 1e-6, f"residual {resid}"
    return f"max residual {worst:.2e} <= 1e-6"


# -- computation-value checks -----------------------------------------------------


@check("voc-nonnegative-and-dominates-prime")
def _check_voc_vs_prime():
    rng = np.random.default_rng(18)
    for _ in range(60):
        _, graph, beliefs = _random_instance(rng)
        for k in graph.keys:
            v = voc_phi_independent(graph, beliefs, k)
            vp = voc_prime(graph, beliefs, k, f="static")
            assert v >= -1e-12
            assert vp >= -1e-12
            assert v >= vp - 1e-9
    return "0 <= VOC' <= VOC on 60 instances"


@check("voc-correlated-white-equivalence")
def _check_voc_correlated_white():
    rng = np.random.default_rng(19)
    env = bandit_tree_build(2, 1.0, Kernel("white", 1.0), rng)
    graph = expand(env, ROOT, 2)
    prior = NormalPrior(0.3, 1.1, 0.4)
    indep = {k: NodeBelief(prior=prior) for k in graph.keys}
    corr = correlated_from_kernel(
        graph.keys, np.arange(len(graph.keys), dtype=float), Kernel("white", 1.1), 0.3, 0.4
    )
    for _ in range(6):
        k = graph.keys[int(rng.integers(len(graph.keys)))]
        o = float(rng.normal())
        indep[k] = update_independent(indep[k], prior, o)
        corr = update_correlated(corr, corr.index[k], o)
    worst = 0.0
    for k in graph.keys:
        a = voc_phi_independent(graph, indep, k)
        b = voc_phi_correlated(graph, corr, k)
        worst = max(worst, abs(a - b))
        assert abs(a - b) <= 1e-9, f"white-kernel mismatch {abs(a-b)}"
    return f"max gap {worst:.2e} <= 1e-9"


@check("voc-psi-equals-prime-psi")
def _check_voc_psi_prime():
    rng = np.random.default_rng(20)
    env = bandit_tree_build(2, 1.0, Kernel("white", 1.0), rng)
    graph = expand(env, ROOT, 2)
    beliefs = {
        k: NodeBelief(prior=NormalPrior(0.1 * i, 0.8, 0.5)) for i, k in enumerate(graph.keys)
    }
    omega = graph.keys[1]
    est, se = voc_psi_mc(graph, beliefs, omega, 400, 1500, rng)
    prime = voc_prime(graph, beliefs, omega, f="dynamic", m=1500, rng=rng)
    gap = abs(est - prime)
    assert gap < 3 * se + 0.02, f"VOC(psi) vs VOC'(psi) gap {gap}"
    return f"gap {gap:.3f} within tolerance"


@check("ueb-chain-vs-finite-differences")
def _check_ueb_fd():
    prior = NormalPrior(0.6, 1.4, 0.8)
    h = 1e-4
    worst = 0.0
    for n in (1.0, 3.0, 9.0, 30.0):
        fd = (posterior_std_continuous(prior, n + h) - posterior_std_continuous(prior, n - h)) / (
            2 * h
        )
        rel = abs(d_std_dn(prior, n) - fd) / max(abs(fd), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-4
        fd_mu = (
            posterior_mean_continuous(prior, n + h, 1.3)
            - posterior_mean_continuous(prior, n - h, 1.3)
        ) / (2 * h)
        rel_mu = abs(d_mean_dn(prior, n, 1.3) - fd_mu) / max(abs(fd_mu), 1e-12)
        worst = max(worst, rel_mu)
        assert rel_mu <= 1e-4
    # bound partials: envelope argument against full-lambda finite differences
    rng = np.random.default_rng(21)
    for _ in range(20):
        k = int(rng.integers(2, 6))
        mus = rng.normal(0, 1, k)
        sigmas = rng.uniform(0.3, 1.5, k)
        j = int(rng.integers(k))
        _, c0 = lambda_from_marginals(mus, sigmas)
        z = (mus[j] - c0) / sigmas[j]

        def lam(mu_j, sd_j):
            m2, s2 = mus.copy(), sigmas.copy()
            m2[j], s2[j] = mu_j, sd_j
            return lambda_from_marginals(m2, s2)[0]

        fd_mu = (lam(mus[j] + h, sigmas[j]) - lam(mus[j] - h, sigmas[j])) / (2 * h)
        fd_sd = (lam(mus[j], sigmas[j] + h) - lam(mus[j], sigmas[j] - h)) / (2 * h)
        rel1 = abs(float(std_cdf(z)) - fd_mu) / max(abs(fd_mu), 1e-9)
        rel2 = abs(float(std_pdf(z)) - fd_sd) / max(abs(fd_sd), 1e-6)
        worst = max(worst, rel1, rel2)
        assert rel1 <= 1e-4 and rel2 <= 1e-3, f"partials off by {rel1}, {rel2}"
    return f"max relative error {worst:.2e}"


def run_selftest(verbose: bool = True):
    """Run all checks; returns list of (name, passed, detail)."""
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = fn() or ""
            ok = True
        except AssertionError as exc:
            detail = str(exc)
            ok = False
        dt = time.perf_counter() - t0
        results.append((name, ok, detail))
        if verbose:
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {name} ({dt:.1f}s) {detail}")
    return results
