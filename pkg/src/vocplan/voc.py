"""Value-of-computation estimators and the bound-gradient scores.

A computation targets one frontier key; its value is the expected improvement
of the best root-action valuation once the computation's predicted outcome is
folded into the belief. For static valuations on deterministic trees the
preposterior root value is a maximum of functions affine in the hypothetical
observation, so the expectation is exact (upper envelope + Gaussian segment
integrals). Dynamic valuations and stochastic graphs fall back to Monte Carlo
with common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .belief import CorrelatedBelief, NodeBelief, NormalPrior, predictive_moments
from .graph import SearchGraph
from .normals import expected_max_affine, std_cdf, std_pdf
from .values import (
    dynamic_value_mc,
    frontier_stats,
    lr_bound,
    sample_frontier_values,
    static_value,
)


# -- preposterior geometry ----------------------------------------------------


def mean_update_direction(graph: SearchGraph, belief, key) -> tuple[float, float, np.ndarray]:
    """(predictive mean, predictive variance, per-column mean sensitivity).

    After observing value ``o`` at ``key``, every posterior mean moves to
    mean + w * (o - pred_mean); for independent beliefs only the key's own
    column has nonzero weight.
    """
    col = graph.key_index[key]
    if isinstance(belief, CorrelatedBelief):
        bcol = belief.index[graph.keys[col]]
        denom = float(belief.noise_vars[bcol] + belief.cov[bcol, bcol])
        w_full = belief.cov[:, bcol] / denom if denom > 0 else np.zeros(belief.size)
        w = np.array([w_full[belief.index[k]] for k in graph.keys])
        return float(belief.mean[bcol]), denom, w
    node: NodeBelief = belief[key]
    denom = node.post_var + node.prior.noise_var
    w = np.zeros(graph.n_keys)
    if denom > 0:
        w[col] = node.post_var / denom
    return node.post_mean, denom, w


def _entry_lines(graph: SearchGraph, means: np.ndarray, w: np.ndarray, pred_sd: float):
    """Per-entry (intercept, slope) of the y-mean as a function of the
    standardized observation, plus terminal constants."""
    intercepts = []
    slopes = []
    for e in graph.frontier:
        intercepts.append(e.path_reward + e.scale * means[e.belief_index])
        slopes.append(e.scale * w[e.belief_index] * pred_sd)
    for a in graph.root_actions:
        for t in graph.terminal_values[a]:
            intercepts.append(t)
            slopes.append(0.0)
    return np.asarray(intercepts), np.asarray(slopes)


# -- static-value VOC ---------------------------------------------------------


def voc_phi_independent(graph: SearchGraph, belief: Mapping, omega) -> float:
    """Exact VOC of sampling ``omega`` under the static valuation,
    independent Normal beliefs, deterministic tree.

    With one affected entry this is the classic preposterior increment
    s * pdf(z) + (beta - C) * cdf(z) - max(0, beta - C) where s is the
    discounted preposterior standard deviation of the entry's mean, beta its
    current value, and C the best competing value.
    """
    if not graph.deterministic:
        raise ValueError("use voc_phi_stochastic_mc for stochastic graphs")
    means, _ = frontier_stats(graph, belief)
    pred_mean, pred_var, w = mean_update_direction(graph, belief, omega)
    if pred_var <= 0.0 or w[graph.key_index[omega]] == 0.0:
        return 0.0
    pred_sd = math.sqrt(pred_var)
    col = graph.key_index[omega]

    affected = [e for e in graph.frontier if e.belief_index == col]
    others = [
        e.path_reward + e.scale * means[e.belief_index]
        for e in graph.frontier
        if e.belief_index != col
    ]
    for a in graph.root_actions:
        others.extend(graph.terminal_values[a])

    if len(affected) == 1:
        e = affected[0]
        beta = e.path_reward + e.scale * means[col]
        s = e.scale * w[col] * pred_sd
        if s <= 0.0:
            return 0.0
        if not others:
            return 0.0
        c_best = max(others)
        z = (beta - c_best) / s
        return float(s * std_pdf(z) + (beta - c_best) * std_cdf(z) - max(0.0, beta - c_best))

    intercepts = [e.path_reward + e.scale * means[col] for e in affected]
    slopes = [e.scale * w[col] * pred_sd for e in affected]
    if others:
        intercepts.append(max(others))
        slopes.append(0.0)
    current = max(intercepts)
    return max(0.0, expected_max_affine(intercepts, slopes) - current)


def voc_phi_correlated(graph: SearchGraph, belief: CorrelatedBelief, omega) -> float:
    """Exact VOC under the static valuation with a joint Normal belief.

    Every frontier mean is affine in the scalar observation, so the
    preposterior best root value is a max of affines; its expectation is the
    upper-envelope Gaussian integral (O(N^2 log N) over all candidates).
    """
    if not graph.deterministic:
        raise ValueError("use voc_phi_stochastic_mc for stochastic graphs")
    means, _ = frontier_stats(graph, belief)
    _, pred_var, w = mean_update_direction(graph, belief, omega)
    if pred_var <= 0.0:
        return 0.0
    intercepts, slopes = _entry_lines(graph, means, w, math.sqrt(pred_var))
    current = float(intercepts.max())
    return max(0.0, expected_max_affine(intercepts, slopes) - current)


def voc_phi_stochastic_mc(
    graph: SearchGraph,
    belief,
    omega,
    m_outer: int,
    rng: np.random.Generator,
    z_outer: np.ndarray | None = None,
) -> float:
    """VOC under the static valuation on a stochastic graph: Monte Carlo over
    predictive outcomes with a full expectimax recomputation per draw."""
    pred_mean, pred_var, w = mean_update_direction(graph, belief, omega)
    if pred_var <= 0.0:
        return 0.0
    means, _ = frontier_stats(graph, belief)
    if z_outer is None:
        z_outer = rng.standard_normal(m_outer)
    shifted = means[None, :] + np.outer(z_outer * math.sqrt(pred_var), w)
    plan = graph.induction_plan()
    new_best = plan.root_values(shifted).max(axis=1)
    current = plan.root_values(means[None, :])[0].max()
    return max(0.0, float(new_best.mean() - current))


# -- dynamic-value VOC ----------------------------------------------------------


def _updated_belief(belief, graph: SearchGraph, omega, obs: float):
    from .belief import update_correlated, update_independent

    if isinstance(belief, CorrelatedBelief):
        return update_correlated(belief, belief.index[omega], obs)
    new = dict(belief)
    node = belief[omega]
    new[omega] = update_independent(node, node.prior, obs)
    return new


def voc_psi_mc(
    graph: SearchGraph,
    belief,
    omega,
    m_outer: int,
    m_inner: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """VOC under the dynamic valuation: outer MC over the predictive outcome,
    inner MC (shared noise matrix) for the dynamic values themselves."""
    if m_outer < 2 or m_inner < 2:
        raise ValueError("voc_psi_mc needs m_outer, m_inner >= 2")
    pred_mean, pred_var, _ = mean_update_direction(graph, belief, omega)
    z_inner = rng.standard_normal((m_inner, graph.n_keys))
    base = dynamic_value_mc(graph, belief, m_inner, rng, z=z_inner)
    baseline = max(est for est, _ in base.values())
    if pred_var <= 0.0:
        return 0.0, 0.0
    draws = pred_mean + math.sqrt(pred_var) * rng.standard_normal(m_outer)
    vals = np.empty(m_outer)
    for i, obs in enumerate(draws):
        upd = _updated_belief(belief, graph, omega, float(obs))
        est = dynamic_value_mc(graph, upd, m_inner, rng, z=z_inner)
        vals[i] = max(v for v, _ in est.values())
    se = float(vals.std(ddof=1) / math.sqrt(m_outer))
    return float(vals.mean() - baseline), se


# -- the alternative baseline (policy-change gains only) -------------------------


def voc_prime(
    graph: SearchGraph,
    belief,
    omega,
    f: str = "static",
    m: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """VOC against the refreshed value of the incumbent best action.

    For the static valuation on a deterministic tree both terms are piecewise
    linear in the observation and integrate exactly; the dynamic valuation
    uses paired Monte Carlo. Always >= 0, and <= the plain VOC for f=static.
    """
    if f not in ("static", "dynamic"):
        raise ValueError(f"unknown valuation kind {f!r}")
    if f == "static" and graph.deterministic:
        return _voc_prime_static_exact(graph, belief, omega)
    if rng is None:
        raise ValueError("Monte Carlo evaluation needs an rng")
    if f == "static":
        return _voc_prime_static_mc(graph, belief, omega, m, rng)
    return _voc_prime_dynamic_mc(graph, belief, omega, m, rng)


def _incumbent(graph: SearchGraph, values: dict):
    best = max(values[a] for a in graph.root_actions)
    for a in graph.root_actions:
        if values[a] == best:
            return a
    raise AssertionError("unreachable")


def _voc_prime_static_exact(graph: SearchGraph, belief, omega) -> float:
    means, _ = frontier_stats(graph, belief)
    pred_mean, pred_var, w = mean_update_direction(graph, belief, omega)
    if pred_var <= 0.0:
        return 0.0
    intercepts, slopes = _entry_lines(graph, means, w, math.sqrt(pred_var))
    star = _incumbent(graph, static_value(graph, belief))
    mask = _entry_action_mask(graph, star)
    first = expected_max_affine(intercepts, slopes)
    second = expected_max_affine(intercepts[mask], slopes[mask])
    return max(0.0, first - second)


def _entry_action_mask(graph: SearchGraph, action) -> np.ndarray:
    mask = []
    owned = set(graph.entries_by_action[action])
    for i, _ in enumerate(graph.frontier):
        mask.append(i in owned)
    for a in graph.root_actions:
        mask.extend([a == action] * len(graph.terminal_values[a]))
    return np.asarray(mask, dtype=bool)


def _voc_prime_static_mc(graph, belief, omega, m, rng) -> float:
    pred_mean, pred_var, w = mean_update_direction(graph, belief, omega)
    if pred_var <= 0.0:
        return 0.0
    means, _ = frontier_stats(graph, belief)
    plan = graph.induction_plan()
    star_idx = int(np.argmax(plan.root_values(means[None, :])[0]))
    draws = pred_mean + math.sqrt(pred_var) * rng.standard_normal(m)
    shifted = means[None, :] + np.outer(draws - pred_mean, w)
    q = plan.root_values(shifted)
    return max(0.0, float((q.max(axis=1) - q[:, star_idx]).mean()))


def _voc_prime_dynamic_mc(graph, belief, omega, m, rng) -> float:
    pred_mean, pred_var, _ = mean_update_direction(graph, belief, omega)
    z_inner = rng.standard_normal((m, graph.n_keys))
    base = dynamic_value_mc(graph, belief, m, rng, z=z_inner)
    star = _incumbent(graph, {a: est for a, (est, _) in base.items()})
    if pred_var <= 0.0:
        return 0.0
    m_outer = max(2, m // 8)
    draws = pred_mean + math.sqrt(pred_var) * rng.standard_normal(m_outer)
    total = 0.0
    for obs in draws:
        upd = _updated_belief(belief, graph, omega, float(obs))
        est = dynamic_value_mc(graph, upd, m, rng, z=z_inner)
        total += max(v for v, _ in est.values()) - est[star][0]
    return max(0.0, total / m_outer)


# -- bound-gradient (UEB) scores -------------------------------------------------


@dataclass(frozen=True)
class UebScore:
    """Per-frontier derivative of the incumbent action's bound with respect to
    that node's sample count; the policy samples the argmin."""

    alpha: object
    scores: dict  # frontier key -> d lambda / d n (0 for non-descendants)
    c_star: float


def posterior_std_continuous(prior: NormalPrior, n: float) -> float:
    """Posterior standard deviation with the sample count embedded continuously."""
    return math.sqrt(prior.var0 * prior.noise_var / (n * prior.var0 + prior.noise_var))


def posterior_mean_continuous(prior: NormalPrior, n: float, r_hat: float) -> float:
    return (n * prior.var0 * r_hat + prior.noise_var * prior.mean0) / (
        n * prior.var0 + prior.noise_var
    )


def d_std_dn(prior: NormalPrior, n: float) -> float:
    """d/dn of the posterior std: -sig_eps * sig0^3 / (2 (n sig0^2 + sig_eps^2)^1.5)."""
    s0 = math.sqrt(prior.var0)
    se = math.sqrt(prior.noise_var)
    return -se * s0**3 / (2.0 * (n * prior.var0 + prior.noise_var) ** 1.5)


def d_mean_dn(prior: NormalPrior, n: float, r_hat: float) -> float:
    """d/dn of the posterior mean at fixed sample mean r_hat."""
    denom = (n * prior.var0 + prior.noise_var) ** 2
    return prior.noise_var * prior.var0 * (r_hat - prior.mean0) / denom


def ueb_scores(
    graph: SearchGraph,
    belief: Mapping,
    c_cache: dict | None = None,
    scratch: dict | None = None,
) -> UebScore:
    """Chain-rule derivative of the incumbent bound per frontier key.

    alpha is the bound-maximizing root action; for each of its frontier
    descendants the derivative combines the bound's sensitivity to that
    node's posterior scale and mean with the conjugate-update rates of both
    in the sample count. Keys outside alpha's subtree score zero.
    """
    if not graph.deterministic:
        raise ValueError("bound-gradient scores need a deterministic tree")
    n_keys = graph.n_keys
    if scratch is not None and "prior" in scratch:
        var0_k, noise_k, mean0_k = scratch["prior"]
    else:
        var0_k = np.array([belief[k].prior.var0 for k in graph.keys])
        noise_k = np.array([belief[k].prior.noise_var for k in graph.keys])
        mean0_k = np.array([belief[k].prior.mean0 for k in graph.keys])
        if scratch is not None:
            scratch["prior"] = (var0_k, noise_k, mean0_k)
    counts_k = np.empty(n_keys)
    r_hat_k = np.empty(n_keys)
    for j, k in enumerate(graph.keys):
        node: NodeBelief = belief[k]
        counts_k[j] = node.count
        r_hat_k[j] = node.sample_mean if node.count > 0 else node.prior.mean0
    denom_k = counts_k * var0_k + noise_k
    means = (counts_k * var0_k * r_hat_k + noise_k * mean0_k) / denom_k
    stds = np.sqrt(var0_k * noise_k / denom_k)

    bounds = lr_bound(graph, belief, c_cache=c_cache, stats=(means, stds))
    lam_by_action = {a: lam for a, (lam, _) in bounds.items()}
    best = max(lam_by_action.values())
    alpha = next(a for a in graph.root_actions if lam_by_action[a] == best)
    c_star = bounds[alpha][1]

    idx = graph.entries_by_action[alpha]
    scores = {key: 0.0 for key in graph.keys}
    if idx:
        e_b, e_scale, e_cols = graph.action_entry_arrays(alpha)
        sd_y = e_scale * stds[e_cols]
        mu_y = e_b + e_scale * means[e_cols]
        live = sd_y > 0.0
        z = np.where(live, (mu_y - c_star) / np.where(live, sd_y, 1.0), 0.0)
        dlam_dsigma = std_pdf(z) * e_scale
        dlam_dmu = std_cdf(z) * e_scale
        denom = denom_k[e_cols]
        d_sd = -np.sqrt(noise_k[e_cols]) * var0_k[e_cols] ** 1.5 / (2.0 * denom**1.5)
        d_mu = noise_k[e_cols] * var0_k[e_cols] * (r_hat_k[e_cols] - mean0_k[e_cols]) / (
            denom * denom
        )
        terms = np.where(live, dlam_dsigma * d_sd + dlam_dmu * d_mu, 0.0)
        for i, term in zip(idx, terms):
            scores[graph.frontier[i].key] += float(term)
    return UebScore(alpha=alpha, scores=scores, c_star=c_star)


# -- batched evaluation used by the meta-policies ---------------------------------


def voc_phi_all(graph: SearchGraph, belief) -> np.ndarray:
    """Static-valuation VOC for every frontier key at once (deterministic tree)."""
    if isinstance(belief, CorrelatedBelief):
        return np.array([voc_phi_correlated(graph, belief, k) for k in graph.keys])
    return _voc_phi_all_fast_independent(graph, belief)


def _voc_phi_all_fast_independent(graph: SearchGraph, belief) -> np.ndarray:
    """Vectorized closed form across candidates (single-entry keys), falling
    back to the per-key envelope where several entries share one key."""
    means, _ = frontier_stats(graph, belief)
    b, scale, cols = graph.entry_arrays()
    y = b + scale * means[cols]

    n_keys = graph.n_keys
    key_best = np.full(n_keys, -np.inf)
    np.maximum.at(key_best, cols, y)
    entry_count = np.bincount(cols, minlength=n_keys)

    consts = [t for a in graph.root_actions for t in graph.terminal_values[a]]
    best_const = max(consts) if consts else -np.inf

    # top two of {per-key best} + constants, remembering which key owns top1
    order = np.argsort(key_best)
    top1_key = int(order[-1])
    top1 = key_best[top1_key]
    top2 = key_best[order[-2]] if n_keys > 1 else -np.inf
    top1_val = max(top1, best_const)
    if best_const >= top1:
        owner = -1  # a constant owns the top; no key excludes it
        top2_for_owner = top1
    else:
        owner = top1_key
        top2_for_owner = max(top2, best_const)

    comp = np.full(n_keys, top1_val)
    if owner >= 0:
        comp[owner] = top2_for_owner

    sig_tilde = np.empty(n_keys)
    betas = np.empty(n_keys)
    entry_scale = np.zeros(n_keys)
    for k_idx, key in enumerate(graph.keys):
        node: NodeBelief = belief[key]
        denom = node.post_var + node.prior.noise_var
        sig_tilde[k_idx] = node.post_var / math.sqrt(denom) if denom > 0 else 0.0
    first_entry = {}
    for i, e in enumerate(graph.frontier):
        if e.belief_index not in first_entry:
            first_entry[e.belief_index] = i
            entry_scale[e.belief_index] = e.scale
    betas = key_best  # single-entry keys: best == the entry's value

    out = np.zeros(n_keys)
    simple = (entry_count == 1) & (sig_tilde > 0)
    if np.any(simple):
        s = entry_scale[simple] * sig_tilde[simple]
        beta = betas[simple]
        c = comp[simple]
        finite = np.isfinite(c)
        c_safe = np.where(finite, c, beta)  # no competitor -> zero gain
        z = (beta - c_safe) / np.where(s > 0, s, 1.0)
        val = s * std_pdf(z) + (beta - c_safe) * std_cdf(z) - np.maximum(0.0, beta - c_safe)
        out[simple] = np.where(finite, np.maximum(val, 0.0), 0.0)
    for k_idx in np.nonzero(entry_count > 1)[0]:
        out[k_idx] = voc_phi_independent(graph, belief, graph.keys[int(k_idx)])
    return out


def voc_phi_stochastic_all(
    graph: SearchGraph, belief, m_outer: int, rng: np.random.Generator
) -> np.ndarray:
    """Stochastic-graph VOC for every key at once.

    Shares one outer noise vector across candidates and stacks every
    candidate's shifted belief means into a single batched expectimax pass.
    """
    means, _ = frontier_stats(graph, belief)
    plan = graph.induction_plan()
    z_outer = rng.standard_normal(m_outer)
    blocks = []
    live = []
    for i, key in enumerate(graph.keys):
        _, pred_var, w = mean_update_direction(graph, belief, key)
        if pred_var <= 0.0:
            continue
        blocks.append(means[None, :] + np.outer(z_outer * math.sqrt(pred_var), w))
        live.append(i)
    out = np.zeros(graph.n_keys)
    if not blocks:
        return out
    stacked = np.concatenate([means[None, :]] + blocks, axis=0)
    q_best = plan.root_values(stacked).max(axis=1)
    current = q_best[0]
    for j, i in enumerate(live):
        sl = q_best[1 + j * m_outer : 1 + (j + 1) * m_outer]
        out[i] = max(0.0, float(sl.mean() - current))
    return out


def voc_prime_all(
    graph: SearchGraph, belief, m: int, rng: np.random.Generator
) -> np.ndarray:
    return np.array(
        [voc_prime(graph, belief, k, f="static", m=m, rng=rng) for k in graph.keys]
    )


def voc_psi_all(
    graph: SearchGraph,
    belief,
    m_outer: int,
    m_inner: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Dynamic-valuation VOC for every key with shared inner/outer noise.

    Vectorized for independent beliefs on deterministic trees (the benchmark
    hot path); the general case defers to voc_psi_mc per key.
    """
    if graph.deterministic and not isinstance(belief, CorrelatedBelief):
        return _voc_psi_all_fast(graph, belief, m_outer, m_inner, rng)
    return np.array(
        [voc_psi_mc(graph, belief, k, m_outer, m_inner, rng)[0] for k in graph.keys]
    )


def _voc_psi_all_fast(graph, belief, m_outer, m_inner, rng) -> np.ndarray:
    n_keys = graph.n_keys
    post_mean = np.empty(n_keys)
    post_var = np.empty(n_keys)
    noise = np.empty(n_keys)
    for j, k in enumerate(graph.keys):
        node: NodeBelief = belief[k]
        post_mean[j] = node.post_mean
        post_var[j] = node.post_var
        noise[j] = node.prior.noise_var
    means, stds = post_mean, np.sqrt(post_var)

    z = rng.standard_normal((m_inner, n_keys))
    vals = means[None, :] + stds[None, :] * z
    b, scale, cols = graph.entry_arrays()
    y = b[None, :] + scale[None, :] * vals[:, cols]  # [m_inner, E]

    entry_count = np.bincount(cols, minlength=n_keys)
    if np.any(entry_count != 1):
        return _voc_psi_all_shared_keys(graph, belief, means, stds, y, z, m_outer, rng)

    psi_base = {}
    for a in graph.root_actions:
        idx = graph.entries_by_action[a]
        best = y[:, idx].max(axis=1) if idx else np.full(m_inner, -np.inf)
        for t in graph.terminal_values[a]:
            best = np.maximum(best, t)
        psi_base[a] = float(best.mean())
    base_best = max(psi_base.values())

    # Preposterior draw geometry per key (one entry per key on this path).
    pred_var = post_var + noise
    kappa = np.where(pred_var > 0, post_var / pred_var, 0.0)
    new_sd = np.sqrt(np.where(pred_var > 0, post_var * noise / pred_var, 0.0))
    z_outer = rng.standard_normal(m_outer)
    new_means = post_mean[:, None] + (kappa * np.sqrt(pred_var))[:, None] * z_outer[None, :]

    out = np.zeros(n_keys)
    shapes = {len(graph.entries_by_action[a]) for a in graph.root_actions}
    no_terms = all(not graph.terminal_values[a] for a in graph.root_actions)
    if len(shapes) == 1 and 0 not in shapes and no_terms:
        # Rectangular case (every action owns the same number of entries,
        # no terminal constants): one tensor pass over all actions.
        idx_m = np.array([graph.entries_by_action[a] for a in graph.root_actions])
        n_actions, k_a = idx_m.shape
        ya = y[:, idx_m]  # [m_inner, A, Ka]
        arg = ya.argmax(axis=2)
        mi = np.arange(m_inner)[:, None]
        ai = np.arange(n_actions)[None, :]
        row_max = ya[mi, ai, arg]
        if k_a > 1:
            masked = ya.copy()
            masked[mi, ai, arg] = -np.inf
            second = masked.max(axis=2)
        else:
            second = np.full(row_max.shape, -np.inf)
        excl = np.where(
            arg[:, :, None] == np.arange(k_a)[None, None, :],
            second[:, :, None],
            row_max[:, :, None],
        )
        cols_m = cols[idx_m]  # [A, Ka]
        b_m = b[idx_m]
        sc_m = scale[idx_m]
        noise_part = new_sd[cols_m][None] * z[:, cols_m]  # [m_inner, A, Ka]
        cand = (
            b_m[None, :, :, None]
            + sc_m[None, :, :, None] * (noise_part[..., None] + new_means[cols_m][None])
        )
        psi = np.maximum(excl[..., None], cand).mean(axis=0)  # [A, Ka, m_outer]
        base_vec = np.array([psi_base[a] for a in graph.root_actions])
        top = base_vec.max()
        arg_top = int(base_vec.argmax())
        second_base = (
            np.partition(base_vec, -2)[-2] if base_vec.size > 1 else -np.inf
        )
        other = np.where(np.arange(base_vec.size) == arg_top, second_base, top)
        gain = np.maximum(psi, other[:, None, None]).mean(axis=2) - base_best
        live = pred_var[cols_m] > 0
        out[cols_m[live]] = np.maximum(gain[live], 0.0)
        return out

    for a in graph.root_actions:
        idx = graph.entries_by_action[a]
        if not idx:
            continue
        b_a, sc_a, cols_a = graph.action_entry_arrays(a)
        ya = y[:, idx]  # [m_inner, Ka]
        k_a = ya.shape[1]
        rows = np.arange(m_inner)
        arg = ya.argmax(axis=1)
        row_max = ya[rows, arg]
        if k_a > 1:
            masked = ya.copy()
            masked[rows, arg] = -np.inf
            second = masked.max(axis=1)
        else:
            second = np.full(m_inner, -np.inf)
        excl = np.where(arg[:, None] == np.arange(k_a)[None, :], second[:, None], row_max[:, None])
        for t in graph.terminal_values[a]:
            excl = np.maximum(excl, t)

        noise_part = new_sd[cols_a][None, :] * z[:, cols_a]  # [m_inner, Ka]
        cand = (
            b_a[None, :, None]
            + sc_a[None, :, None] * (noise_part[:, :, None] + new_means[cols_a][None, :, :])
        )  # [m_inner, Ka, m_outer]
        psi_a = np.maximum(excl[:, :, None], cand).mean(axis=0)  # [Ka, m_outer]

        other = max(
            (psi_base[a2] for a2 in graph.root_actions if a2 != a), default=-np.inf
        )
        gain = np.maximum(psi_a, other).mean(axis=1) - base_best  # [Ka]
        live = pred_var[cols_a] > 0
        out[cols_a[live]] = np.maximum(gain[live], 0.0)
    return out


def _voc_psi_all_shared_keys(graph, belief, means, stds, y, z, m_outer, rng) -> np.ndarray:
    """Keys shared by several entries (convergent paths): per-key loop."""
    m_inner = z.shape[0]
    psi_base = {}
    for a in graph.root_actions:
        idx = graph.entries_by_action[a]
        best = y[:, idx].max(axis=1) if idx else np.full(m_inner, -np.inf)
        for t in graph.terminal_values[a]:
            best = np.maximum(best, t)
        psi_base[a] = float(best.mean())
    z_outer = rng.standard_normal(m_outer)
    out = np.empty(graph.n_keys)
    for col, key in enumerate(graph.keys):
        node: NodeBelief = belief[key]
        pred_var = node.post_var + node.prior.noise_var
        if node.post_var <= 0.0:
            out[col] = 0.0
            continue
        kappa = node.post_var / pred_var
        new_means = node.post_mean + kappa * math.sqrt(pred_var) * z_outer
        new_std = math.sqrt(node.post_var * node.prior.noise_var / pred_var)
        entry_ids = {i for i, e in enumerate(graph.frontier) if e.belief_index == col}
        psi_new = np.empty((m_outer, len(graph.root_actions)))
        for ai, a in enumerate(graph.root_actions):
            idx = graph.entries_by_action[a]
            moved = [i for i in idx if i in entry_ids]
            if not moved:
                psi_new[:, ai] = psi_base[a]
                continue
            keep = [i for i in idx if i not in entry_ids]
            partial = y[:, keep].max(axis=1) if keep else np.full(m_inner, -np.inf)
            for t in graph.terminal_values[a]:
                partial = np.maximum(partial, t)
            base_noise = new_std * z[:, col]
            best_moved = None
            for i in moved:
                e = graph.frontier[i]
                cand = e.path_reward + e.scale * (base_noise[:, None] + new_means[None, :])
                best_moved = cand if best_moved is None else np.maximum(best_moved, cand)
            psi_new[:, ai] = np.maximum(best_moved, partial[:, None]).mean(axis=0)
        out[col] = max(0.0, float(psi_new.max(axis=1).mean()) - max(psi_base.values()))
    return out
