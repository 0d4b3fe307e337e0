"""Upper bound for an arbitrary SNR/INR matrix via SNR-sorted categories.

Links are sorted by SNR and cut into ``2M`` consecutive categories.  Within
each pair of neighbouring categories a bipartite graph joins a low-SNR link
``j`` to a high-SNR link ``i`` when ``SNR_j <= INR_ji <= SNR_i``; every edge of
a maximum matching is a two-user channel whose sum rate is bounded by
``log2(1 + INR_ji + SNR_i)``.  Unmatched links fall back to the single-user
bound.  Sweeping ``M`` and keeping the smallest result gives the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from icbounds.capacity_bounds import (
    BoundsReport,
    lower_bound_ia,
    single_user_bound,
    two_user_bottleneck_bound,
)
from icbounds.net_model import NetworkInstance


@dataclass
class BipartiteGraph:
    """Adjacency lists from left vertices ``0..left_size-1`` to right vertices.

    ``left_ids`` / ``right_ids`` optionally carry the network link index of
    each vertex.
    """

    left_size: int
    right_size: int
    adjacency: list[list[int]]
    left_ids: list[int] | None = None
    right_ids: list[int] | None = None

    def __post_init__(self):
        if len(self.adjacency) != self.left_size:
            raise ValueError("adjacency needs one list per left vertex")
        for u, nbrs in enumerate(self.adjacency):
            if len(set(nbrs)) != len(nbrs):
                raise ValueError(f"duplicate edge at left vertex {u}")
            if any(not 0 <= v < self.right_size for v in nbrs):
                raise ValueError(f"edge out of range at left vertex {u}")

    @classmethod
    def from_edges(cls, left_size: int, right_size: int, edges: Iterable[tuple[int, int]]) -> BipartiteGraph:
        adjacency: list[list[int]] = [[] for _ in range(left_size)]
        seen = set()
        for u, v in edges:
            if (u, v) not in seen:
                seen.add((u, v))
                adjacency[u].append(v)
        return cls(left_size, right_size, adjacency)

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> BipartiteGraph:
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.shape[0], mask.shape[1], [np.flatnonzero(row).tolist() for row in mask])

    @property
    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in enumerate(self.adjacency) for v in nbrs]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency[u]


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.pairs)

    def is_valid(self, graph: BipartiteGraph) -> bool:
        lefts = [u for u, _ in self.pairs]
        rights = [v for _, v in self.pairs]
        return (
            len(set(lefts)) == len(lefts)
            and len(set(rights)) == len(rights)
            and all(graph.has_edge(u, v) for u, v in self.pairs)
        )


def max_matching(graph: BipartiteGraph) -> Matching:
    """Maximum-cardinality matching by Hopcroft-Karp, O(E sqrt(V)).

    Each phase layers the graph by BFS from the free left vertices, stopping at
    the first layer that reaches a free right vertex, then extracts a maximal
    set of vertex-disjoint shortest augmenting paths by iterative DFS.
    """
    adj = graph.adjacency
    n_left = graph.left_size
    match_l = [-1] * n_left
    match_r = [-1] * graph.right_size

    while True:
        dist = [-1] * n_left
        queue = [u for u in range(n_left) if match_l[u] == -1]
        for u in queue:
            dist[u] = 0
        limit = -1
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            if limit != -1 and dist[u] >= limit:
                continue
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    if limit == -1:
                        limit = dist[u]
                elif dist[w] == -1:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if limit == -1:
            break

        cursor = [0] * n_left
        for root in range(n_left):
            if match_l[root] != -1 or dist[root] != 0:
                continue
            stack = [root]
            via: list[int] = []
            while stack:
                u = stack[-1]
                nbrs = adj[u]
                pushed = False
                while cursor[u] < len(nbrs):
                    v = nbrs[cursor[u]]
                    cursor[u] += 1
                    w = match_r[v]
                    if w == -1:
                        if dist[u] != limit:
                            continue
                        via.append(v)
                        for x, y in zip(stack, via):
                            match_l[x] = y
                            match_r[y] = x
                        stack = []
                        pushed = True
                        break
                    if dist[w] == dist[u] + 1 and dist[w] <= limit:
                        via.append(v)
                        stack.append(w)
                        pushed = True
                        break
                if not pushed:
                    # dead end for this phase
                    dist[u] = -1
                    stack.pop()
                    if via:
                        via.pop()

    return Matching([(u, v) for u, v in enumerate(match_l) if v != -1])


@dataclass
class CategoryPartition:
    m: int
    categories: list[list[int]]

    def pairs(self) -> list[tuple[list[int], list[int]]]:
        return [(self.categories[2 * r], self.categories[2 * r + 1]) for r in range(self.m)]


def partition_by_snr(network: NetworkInstance, m: int) -> CategoryPartition:
    """Sort links by SNR (stable in index) and cut into ``2m`` near-equal blocks.

    Block sizes are ``floor(K/2m)`` or ``ceil(K/2m)``, the larger ones first.
    """
    k = network.k
    if not (isinstance(m, (int, np.integer)) and 1 <= m and 2 * m <= k):
        raise ValueError(f"m must satisfy 1 <= m <= K/2 (K={k}), got {m}")
    order = np.argsort(network.snr, kind="stable").tolist()
    n_blocks = 2 * m
    base, extra = divmod(k, n_blocks)
    categories, start = [], 0
    for r in range(n_blocks):
        size = base + (1 if r < extra else 0)
        categories.append(order[start : start + size])
        start += size
    return CategoryPartition(int(m), categories)


def build_bipartite(cat_low: Sequence[int], cat_high: Sequence[int], network: NetworkInstance) -> BipartiteGraph:
    """Edge ``(j, i)`` for ``j`` in ``cat_low`` and ``i`` in ``cat_high`` iff ``SNR_j <= INR_ji <= SNR_i``."""
    low = np.asarray(cat_low, dtype=int)
    high = np.asarray(cat_high, dtype=int)
    if np.intersect1d(low, high).size:
        raise ValueError("categories must be disjoint")
    snr = network.snr
    inr = network.gains[np.ix_(low, high)]
    mask = (snr[low][:, None] <= inr) & (inr <= snr[high][None, :])
    graph = BipartiteGraph.from_mask(mask)
    graph.left_ids = low.tolist()
    graph.right_ids = high.tolist()
    return graph


def pair_bound(network: NetworkInstance, j: int, i: int) -> float:
    """Bound on ``R_i + R_j`` for a matched pair: the two-user bound, capped by
    the sum of the single-user bounds (both hold, so the smaller one does)."""
    snr = network.snr
    two_user = two_user_bottleneck_bound(snr[i], snr[j], network.gains[j, i])
    return min(two_user, single_user_bound(snr[i]) + single_user_bound(snr[j]))


def assemble_bound(network: NetworkInstance, pairs: Iterable[tuple[int, int]]) -> tuple[float, list]:
    """Total bound and contributions for matched ``(j, i)`` pairs plus singles."""
    snr = network.snr
    contributions = []
    matched = set()
    for j, i in pairs:
        contributions.append(((int(j), int(i)), pair_bound(network, j, i)))
        matched.update((j, i))
    for i in range(network.k):
        if i not in matched:
            contributions.append(((i,), single_user_bound(snr[i])))
    return math.fsum(v for _, v in contributions), contributions


def upper_bound_for_m(network: NetworkInstance, m: int) -> BoundsReport:
    partition = partition_by_snr(network, m)
    pairs = []
    for low, high in partition.pairs():
        graph = build_bipartite(low, high, network)
        for u, v in max_matching(graph).pairs:
            pairs.append((graph.left_ids[u], graph.right_ids[v]))
    upper, contributions = assemble_bound(network, pairs)
    return BoundsReport(
        lower=lower_bound_ia(network).lower,
        upper=upper,
        method="snr_categories",
        parameters={"m": int(m)},
        contributions=contributions,
        certificate=pairs,
    )


def default_m_list(k: int) -> list[int]:
    """``1, 2, 4, ..., 2**floor(log2(K/2))``; empty when ``K < 2``."""
    if k < 2:
        return []
    return [2**p for p in range(int(math.floor(math.log2(k / 2))) + 1)]


def best_upper_bound(network: NetworkInstance, m_list: Sequence[int] | None = None) -> BoundsReport:
    """Tightest bound over ``m_list``, with the single-user bound as fallback.

    The returned report's ``sweep`` lists every candidate as
    ``{m, bound_bits, matched_pairs, unmatched_count}``; ``m = 0`` is the
    no-matching fallback.
    """
    if m_list is None:
        m_list = default_m_list(network.k)
    elif len(m_list) == 0:
        raise ValueError("m_list must be nonempty")
    candidates = [upper_bound_for_m(network, int(m)) for m in m_list]
    _, single = assemble_bound(network, [])
    fallback = BoundsReport(
        lower=lower_bound_ia(network).lower,
        upper=math.fsum(v for _, v in single),
        method="snr_categories",
        parameters={"m": 0},
        contributions=single,
    )
    candidates.append(fallback)
    sweep = [
        {
            "m": c.parameters["m"],
            "bound_bits": c.upper,
            "matched_pairs": len(c.certificate),
            "unmatched_count": network.k - 2 * len(c.certificate),
        }
        for c in candidates
    ]
    best = min(candidates, key=lambda c: c.upper)
    best.parameters = {"m": best.parameters["m"], "m_list": [int(m) for m in m_list]}
    best.sweep = sweep
    return best
