"""Random bipartite matching: blocking-pair bounds, threshold graphs, DKW statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from icbounds.seeding import derive_rng
from icbounds.snr_matching import BipartiteGraph, max_matching


def _log_comb(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def walkup_no_matching_bound(n_side: int, p: float, clamp: bool = False) -> float:
    """Blocking-pair bound on P(no complete matching) in an N x N random bipartite graph.

    ``2 * sum_{k=1}^{floor((N+1)/2)} C(N,k) C(N,k-1) (1-p)^{k(N-k+1)}``,
    evaluated in log space.  The raw value can exceed one; ``clamp`` caps it.
    """
    if n_side < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("need N >= 1 and 0 <= p <= 1")
    k = np.arange(1, (n_side + 1) // 2 + 1, dtype=float)
    log_q = math.log1p(-p) if p < 1.0 else -math.inf
    with np.errstate(invalid="ignore"):
        exponent = k * (n_side - k + 1) * log_q
    terms = _log_comb(n_side, k) + _log_comb(n_side, k - 1) + exponent
    value = float(2.0 * np.exp(logsumexp(terms))) if np.isfinite(terms).any() else 0.0
    return min(value, 1.0) if clamp else value


def walkup_no_matching_bound_direct(n_side: int, p: float) -> float:
    """Same sum by exact integer binomials and plain floating powers (reference)."""
    total = 0.0
    for k in range(1, (n_side + 1) // 2 + 1):
        total += math.comb(n_side, k) * math.comb(n_side, k - 1) * (1.0 - p) ** (k * (n_side - k + 1))
    return 2.0 * total


def walkup_split_bound(n_side: int, p: float) -> float:
    """``2 sqrt(N) N^(2 sqrt N) exp(-p(N+1)/2) + 2^(2N) exp(-p N^(3/2)/2)``."""
    if n_side < 1:
        raise ValueError("need N >= 1")
    n = float(n_side)
    root = math.sqrt(n)
    first = math.log(2.0) + 0.5 * math.log(n) + 2.0 * root * math.log(n) - p * (n + 1) / 2.0
    second = 2.0 * n * math.log(2.0) - p * n**1.5 / 2.0
    return float(math.exp(logsumexp([first, second])))


@dataclass
class ThresholdBipartiteSample:
    """Left vertex ``i`` joins right vertex ``j`` iff ``U_i <= W_ij <= V_j``."""

    n: int
    u_labels: np.ndarray
    v_labels: np.ndarray
    w: np.ndarray
    seed: int | None = None

    @property
    def mask(self) -> np.ndarray:
        return (self.u_labels[:, None] <= self.w) & (self.w <= self.v_labels[None, :])

    @property
    def graph(self) -> BipartiteGraph:
        return BipartiteGraph.from_mask(self.mask)


def sample_threshold_bipartite(n: int, seed: int) -> ThresholdBipartiteSample:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = derive_rng(seed, "threshold_graph")
    u = rng.random(n)
    v = rng.random(n)
    w = rng.random((n, n))
    return ThresholdBipartiteSample(n, u, v, w, seed)


@dataclass
class TrimReport:
    gamma: float
    discarded_left: list[int]
    discarded_right: list[int]
    surviving_size: int

    @property
    def trim_size(self) -> int:
        return len(self.discarded_left)


def trim_size(n: int, gamma: float) -> int:
    return int(math.ceil(3.0 * n**gamma))


def trim_extremes(sample: ThresholdBipartiteSample, gamma: float) -> TrimReport:
    """Drop the ``ceil(3 n^gamma)`` largest-U left and smallest-V right vertices."""
    if gamma < 2.0 / 3.0:
        raise ValueError(f"gamma must be >= 2/3, got {gamma}")
    t = trim_size(sample.n, gamma)
    if t >= sample.n:
        raise ValueError(f"trim size {t} leaves no vertices out of n={sample.n}")
    # stable sorts give the index tie-break
    left = np.argsort(-sample.u_labels, kind="stable")[:t]
    right = np.argsort(sample.v_labels, kind="stable")[:t]
    return TrimReport(gamma, sorted(left.tolist()), sorted(right.tolist()), sample.n - t)


def trimmed_graph(sample: ThresholdBipartiteSample, trim: TrimReport) -> BipartiteGraph:
    keep_left = np.setdiff1d(np.arange(sample.n), trim.discarded_left)
    keep_right = np.setdiff1d(np.arange(sample.n), trim.discarded_right)
    graph = BipartiteGraph.from_mask(sample.mask[np.ix_(keep_left, keep_right)])
    graph.left_ids = keep_left.tolist()
    graph.right_ids = keep_right.tolist()
    return graph


def matching_deficiency(sample: ThresholdBipartiteSample, gamma: float) -> dict:
    trim = trim_extremes(sample, gamma)
    size = max_matching(trimmed_graph(sample, trim)).size
    deficiency = trim.surviving_size - size
    return {
        "deficiency_after_trim": deficiency,
        "total_unmatched": deficiency + 2 * trim.trim_size,
    }


def dkw_statistic(samples) -> float:
    """``sup_t |F_n(t) - t|`` for samples in [0, 1], exact over the step points."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("need at least one sample")
    ranks = np.arange(1, n + 1)
    above = np.max(ranks / n - x)
    below = np.max(x - (ranks - 1) / n)
    return float(max(above, below))


def massart_bound(n: int, epsilon: float) -> float:
    """``P(sup |F_n - F| > eps) <= 2 exp(-2 n eps^2)``."""
    return 2.0 * math.exp(-2.0 * n * epsilon**2)
