"""Gaussian belief state over frontier action values.

Two belief families live here. ``NodeBelief`` is the independent conjugate
Normal model: each frontier node carries its own posterior, updated from
noisy value samples with known noise variance. ``CorrelatedBelief`` is the
joint multivariate Normal model whose prior covariance comes from a kernel
over node coordinates; observations trigger rank-one mean/covariance updates.

All posterior algebra is kept in variance form so that a zero prior variance
(a point-mass belief) is an ordinary, fully supported case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateBeliefError
from .normals import std_cdf

PSD_TOLERANCE = 1e-9  # min eigenvalue >= -PSD_TOLERANCE * trace


@dataclass(frozen=True)
class NormalPrior:
    """Conjugate Normal prior: value ~ N(mean0, var0), samples add N(0, noise_var)."""

    mean0: float
    var0: float
    noise_var: float

    def __post_init__(self):
        if not (self.var0 >= 0.0 and math.isfinite(self.var0)):
            raise ValueError(f"prior variance must be finite and >= 0, got {self.var0}")
        if not (self.noise_var > 0.0 and math.isfinite(self.noise_var)):
            raise ValueError(f"noise variance must be finite and > 0, got {self.noise_var}")


@dataclass(frozen=True)
class NodeBelief:
    """Independent Normal posterior for one frontier node."""

    prior: NormalPrior
    count: int = 0
    sample_mean: float = 0.0

    @property
    def post_mean(self) -> float:
        n, p = self.count, self.prior
        if n == 0:
            return p.mean0
        return (n * p.var0 * self.sample_mean + p.noise_var * p.mean0) / (
            n * p.var0 + p.noise_var
        )

    @property
    def post_var(self) -> float:
        n, p = self.count, self.prior
        if n == 0:
            return p.var0
        return p.var0 * p.noise_var / (n * p.var0 + p.noise_var)

    @property
    def post_std(self) -> float:
        return math.sqrt(self.post_var)

    def cdf(self, x: float) -> float:
        """Posterior CDF at x (step function when the posterior is degenerate)."""
        sd = self.post_std
        if sd == 0.0:
            return 1.0 if x >= self.post_mean else 0.0
        return float(std_cdf((x - self.post_mean) / sd))


def update_independent(belief: NodeBelief, prior: NormalPrior, obs_value: float) -> NodeBelief:
    """Fold one noisy observation into an independent Normal belief.

    The posterior is recomputed from (count, running mean) with the batch
    formula, so sequential updates and a one-shot batch agree to rounding.
    """
    if not math.isfinite(obs_value):
        raise ValueError(f"observation must be finite, got {obs_value}")
    n = belief.count + 1
    mean = belief.sample_mean + (obs_value - belief.sample_mean) / n
    return NodeBelief(prior=prior, count=n, sample_mean=mean)


@dataclass(frozen=True)
class CorrelatedBelief:
    """Joint Normal posterior over all frontier nodes.

    ``index`` maps frontier keys to columns of ``mean``/``cov``. Updates
    return new instances; arrays are never mutated in place.
    """

    mean: np.ndarray
    cov: np.ndarray
    noise_vars: np.ndarray
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        noise = np.asarray(self.noise_vars, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "noise_vars", noise)
        n = mean.shape[0]
        if cov.shape != (n, n) or noise.shape != (n,):
            raise ValueError("mean/cov/noise_vars shapes disagree")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")

    @property
    def size(self) -> int:
        return self.mean.shape[0]

    def column(self, key) -> int:
        return self.index[key]

    def marginal_var(self, node: int) -> float:
        return float(self.cov[node, node])


def update_correlated(belief: CorrelatedBelief, node: int, obs_value: float) -> CorrelatedBelief:
    """Rank-one conjugate update of the joint Normal after observing one node.

    The denominator uses the node's noise *variance* plus its marginal
    variance; the O(N^2) outer-product downdate keeps the posterior exact.
    Accumulated rounding can push the covariance slightly indefinite, in
    which case negative eigenvalues are clamped to zero.
    """
    if not math.isfinite(obs_value):
        raise ValueError(f"observation must be finite, got {obs_value}")
    if not 0 <= node < belief.size:
        raise ValueError(f"node index {node} out of range")
    denom = float(belief.noise_vars[node] + belief.cov[node, node])
    if denom <= 0.0:
        raise DegenerateBeliefError(f"noise_var + marginal var = {denom} at node {node}")

    col = belief.cov[:, node]
    mean = belief.mean + ((obs_value - belief.mean[node]) / denom) * col
    cov = belief.cov - np.outer(col, col) / denom
    cov = 0.5 * (cov + cov.T)
    cov = _repair_psd(cov)
    return replace(belief, mean=mean, cov=cov)


def _repair_psd(cov: np.ndarray) -> np.ndarray:
    trace = float(np.trace(cov))
    diag_ok = np.all(np.diag(cov) >= -PSD_TOLERANCE * max(trace, 0.0))
    if diag_ok:
        # Cheap Gershgorin-style screen before paying for an eigendecomposition.
        w_min = float(np.linalg.eigvalsh(cov)[0]) if cov.shape[0] else 0.0
        if w_min >= -PSD_TOLERANCE * max(trace, 1e-300):
            return cov
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


def predictive_sample(belief, node, rng: np.random.Generator) -> float:
    """Draw from the posterior predictive of one node's next observation."""
    mean, var = predictive_moments(belief, node)
    return float(rng.normal(mean, math.sqrt(var)))


def predictive_moments(belief, node) -> tuple[float, float]:
    """(mean, variance) of the posterior predictive at ``node``."""
    if isinstance(belief, NodeBelief):
        return belief.post_mean, belief.post_var + belief.prior.noise_var
    if isinstance(belief, CorrelatedBelief):
        return float(belief.mean[node]), float(
            belief.cov[node, node] + belief.noise_vars[node]
        )
    raise TypeError(f"unknown belief type {type(belief).__name__}")


@dataclass(frozen=True)
class Kernel:
    """Prior covariance builder over node coordinates."""

    kind: str  # "white" | "rbf"
    signal_var: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("white", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not (self.signal_var > 0.0):
            raise ValueError("signal_var must be > 0")


def kernel_matrix(kernel: Kernel, coords: Sequence[float]) -> np.ndarray:
    """Covariance matrix at the given coordinates.

    White kernel ignores coordinates entirely; the RBF kernel uses squared
    distance over the configured lengthscale.
    """
    x = np.asarray(coords, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("coordinates must be finite")
    if kernel.kind == "white":
        return kernel.signal_var * np.eye(x.shape[0])
    if kernel.lengthscale <= 0.0:
        raise ValueError("rbf lengthscale must be > 0")
    d = x[:, None] - x[None, :]
    return kernel.signal_var * np.exp(-(d * d) / (2.0 * kernel.lengthscale**2))


def correlated_from_kernel(
    keys: Sequence,
    coords: Sequence[float],
    kernel: Kernel,
    mean0: float,
    noise_var: float,
) -> CorrelatedBelief:
    """Joint prior with kernel covariance and a constant mean vector."""
    keys = list(keys)
    cov = kernel_matrix(kernel, coords)
    n = len(keys)
    return CorrelatedBelief(
        mean=np.full(n, float(mean0)),
        cov=cov,
        noise_vars=np.full(n, float(noise_var)),
        index={k: i for i, k in enumerate(keys)},
    )


@dataclass
class ObservationLog:
    """Append-only record of (frontier key, observed value, step index)."""

    entries: list = field(default_factory=list)

    def append(self, key, value: float, step: int) -> None:
        if self.entries and step <= self.entries[-1][2]:
            raise ValueError(
                f"step index must increase: got {step} after {self.entries[-1][2]}"
            )
        self.entries.append((key, float(value), int(step)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)
