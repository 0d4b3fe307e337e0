"""Grid-box upper bound on sum capacity.

Each link ``i`` is a point ``(R_i, T_i)`` of the joint domain and falls in the
half-open box ``(u, v)`` with ``u = floor(M R_i)`` (receiver cube) and
``v = floor(M T_i)`` (transmitter cube).  With ``e = sign(v - u)`` a box is
paired with ``(u - e, v + e)``: links there have longer direct paths, so a
link ``i`` from the first box and ``j`` from the second satisfy
``d(T_j, R_j) >= d(T_j, R_i) >= d(T_i, R_i)`` and form a two-user channel in
which the two-user bound applies.  Boxes on the diagonal (spine) or without
an admissible partner (edge) are left unmatched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from icbounds.capacity_bounds import (
    BoundsReport,
    HypothesisError,
    lower_bound_ia,
    single_user_bound,
    two_user_bottleneck_bound,
)
from icbounds.net_model import AttenuationModel, Domain, NetworkInstance, UnsupportedDomainError
from icbounds.seeding import derive_rng
from icbounds.snr_matching import BipartiteGraph, max_matching

BoxKey = tuple[tuple[int, ...], tuple[int, ...]]

UNLABELLED, SPINE, EDGE, BODY_REP, BODY_PARTNER = 0, 1, 2, 3, 4
LABEL_NAMES = {SPINE: "Spine", EDGE: "Edge", BODY_REP: "BodyRepresentative", BODY_PARTNER: "BodyPartner"}


class InvariantViolation(AssertionError):
    """A matched box pair broke the distance ordering; this is a bug, not bad input."""


@dataclass
class BoxPartition:
    """Links bucketed into grid boxes, plus (after classification) box labels.

    Boxes are identified internally by a flat id over the full grid of
    ``cells_per_axis ** (2D)`` boxes; flat order equals lexicographic
    ``(u, v)`` order.
    """

    m: int
    dimension: int
    cells_per_axis: int
    k: int
    link_box_ids: np.ndarray
    label_codes: np.ndarray | None = None
    partner_ids: dict[int, int] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * (2 * self.dimension)

    @property
    def num_boxes(self) -> int:
        return self.cells_per_axis ** (2 * self.dimension)

    def box_id(self, u: Sequence[int], v: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(u) + tuple(v), self.shape))

    def box_key(self, box_id: int) -> BoxKey:
        coords = tuple(int(c) for c in np.unravel_index(int(box_id), self.shape))
        return coords[: self.dimension], coords[self.dimension :]

    @property
    def boxes(self) -> dict[BoxKey, list[int]]:
        """Occupied boxes mapped to the (ascending) link indices they hold."""
        out: dict[BoxKey, list[int]] = {}
        for link, bid in enumerate(self.link_box_ids.tolist()):
            out.setdefault(self.box_key(bid), []).append(link)
        return dict(sorted(out.items()))

    def links_by_id(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for link, bid in enumerate(self.link_box_ids.tolist()):
            out.setdefault(bid, []).append(link)
        return out

    def counts(self) -> np.ndarray:
        return np.bincount(self.link_box_ids, minlength=self.num_boxes)

    def label(self, u: Sequence[int], v: Sequence[int]) -> str | None:
        self._require_labels()
        return LABEL_NAMES.get(int(self.label_codes[self.box_id(u, v)]))

    @property
    def labels(self) -> dict[BoxKey, str]:
        self._require_labels()
        return {self.box_key(i): LABEL_NAMES[int(c)] for i, c in enumerate(self.label_codes) if c}

    @property
    def pairing(self) -> dict[BoxKey, BoxKey]:
        return {self.box_key(r): self.box_key(p) for r, p in sorted(self.partner_ids.items())}

    def _require_labels(self) -> None:
        if self.label_codes is None:
            raise ValueError("partition has not been classified yet")


def _cells_per_axis(domain: Domain | None, m: int) -> int:
    if domain is None or domain.kind == "product_quantile":
        return m
    return int(math.ceil(domain.bounding_side * m - 1e-9))


def _cell_indices(points: np.ndarray, m: int, n_cells: int, quantiles=None) -> np.ndarray:
    if quantiles is None:
        idx = np.floor(points * m).astype(np.int64)
    else:
        idx = np.empty(points.shape, dtype=np.int64)
        levels = np.arange(1, m) / m
        for axis, fn in enumerate(quantiles):
            edges = np.asarray(fn(levels), dtype=float)
            idx[:, axis] = np.searchsorted(edges, points[:, axis], side="right")
    return np.clip(idx, 0, n_cells - 1)


def assign_positions(
    tx: np.ndarray, rx: np.ndarray, m: int, domain: Domain | None = None
) -> BoxPartition:
    """Bucket links given by raw positions; see :func:`assign_boxes`."""
    if m < 1:
        raise ValueError(f"grid resolution must be >= 1, got {m}")
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    k = len(tx)
    dim = domain.dimension if domain is not None else (tx.shape[1] if k else 1)
    n_cells = _cells_per_axis(domain, m)
    if k == 0:
        return BoxPartition(m, dim, n_cells, 0, np.zeros(0, dtype=np.int64))
    quantile = domain is not None and domain.kind == "product_quantile"
    u = _cell_indices(rx, m, n_cells, domain.rx_quantiles if quantile else None)
    v = _cell_indices(tx, m, n_cells, domain.tx_quantiles if quantile else None)
    ids = np.ravel_multi_index(tuple(np.hstack([u, v]).T), (n_cells,) * (2 * dim))
    return BoxPartition(m, dim, n_cells, k, np.asarray(ids, dtype=np.int64))


def assign_boxes(network: NetworkInstance, m: int, domain: Domain | None = None) -> BoxPartition:
    """Place each link in box ``(u, v)``, ``u`` from the receiver and ``v`` from the transmitter.

    Without a domain (or for cube/ball domains) ``u = floor(R * m)``; for
    product-quantile domains the cell edges are the marginal quantiles at
    ``1/m, 2/m, ...``.
    """
    return assign_positions(network.tx_positions, network.rx_positions, m, domain)


def orthant_vector(u: Sequence[int], v: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(x) for x in np.sign(np.asarray(v) - np.asarray(u)))


def box_min_distance(u, v, m: int) -> float:
    """Smallest distance between a point of transmitter cube ``v`` and receiver cube ``u``."""
    gap = np.maximum(0, np.abs(np.atleast_1d(u) - np.atleast_1d(v)) - 1) / m
    return float(np.sqrt(np.sum(gap.astype(float) ** 2)))


def _grid_flags(domain: Domain, m: int, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cube (inside, intersects) flags over the D-dimensional cell grid, flat."""
    dim = domain.dimension
    lower = np.indices((n_cells,) * dim).reshape(dim, -1).T / m
    return domain.cube_inside(lower, 1.0 / m), domain.cube_intersects(lower, 1.0 / m)


def classify_grid(domain: Domain, m: int) -> tuple[np.ndarray, dict[int, int]]:
    """Labels for every box of the grid and the representative -> partner map.

    Spine boxes (some ``v_l == u_l``) come first, then boxes not entirely
    inside the joint domain are Edge.  The rest are visited in ascending
    ``(v - u) . e`` with lexicographic tie-break; a box still unlabelled whose
    partner ``(u - e, v + e)`` is also an unlabelled interior box becomes a
    representative, otherwise it is Edge.
    """
    dim = domain.dimension
    n_cells = _cells_per_axis(domain, m)
    shape = (n_cells,) * (2 * dim)
    cube_inside, cube_meets = _grid_flags(domain, m, n_cells)
    n_cubes = n_cells**dim

    # box id = u_flat * n_cubes + v_flat matches ravel order of (u, v)
    u_flat = np.repeat(np.arange(n_cubes), n_cubes)
    v_flat = np.tile(np.arange(n_cubes), n_cubes)
    in_s = cube_meets[u_flat] & cube_meets[v_flat]
    inside = cube_inside[u_flat] & cube_inside[v_flat]
    coords = np.stack(np.unravel_index(np.arange(n_cubes**2), shape))
    diff = coords[dim:] - coords[:dim]
    spine = np.any(diff == 0, axis=0)

    codes = np.zeros(n_cubes**2, dtype=np.int8)
    codes[in_s & spine] = SPINE
    codes[in_s & ~spine & ~inside] = EDGE
    candidate = in_s & ~spine & inside

    proj = np.abs(diff).sum(axis=0)
    ids = np.flatnonzero(candidate)
    ids = ids[np.argsort(proj[ids], kind="stable")]
    e = np.sign(diff)
    strides = np.array([int(np.prod(shape[i + 1 :])) for i in range(2 * dim)], dtype=np.int64)

    partners: dict[int, int] = {}
    for bid in ids.tolist():
        if codes[bid]:
            continue
        step = np.concatenate([-e[:, bid], e[:, bid]])
        target = coords[:, bid] + step
        if np.all((target >= 0) & (target < n_cells)):
            pid = int(target @ strides)
            if candidate[pid] and not codes[pid]:
                codes[bid] = BODY_REP
                codes[pid] = BODY_PARTNER
                partners[bid] = pid
                continue
        codes[bid] = EDGE
    return codes, partners


def classify_boxes(partition: BoxPartition, domain: Domain) -> BoxPartition:
    if domain.dimension != partition.dimension:
        raise ValueError("domain dimension does not match the partition")
    codes, partners = classify_grid(domain, partition.m)
    partition.label_codes = codes
    partition.partner_ids = partners
    return partition


@dataclass
class BoxBoundReport:
    """``i_m`` from matched pairs plus ``j_m`` from unmatched links bounds sum capacity.

    ``matched_pairs`` holds ``(i, j, bound)`` with ``i`` from the
    representative box and ``j`` from its partner.
    """

    i_m: float
    j_m: float
    matched_pairs: list[tuple[int, int, float]]
    unmatched_links: list[int]
    m: int

    @property
    def upper(self) -> float:
        return self.i_m + self.j_m

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "i_m": self.i_m,
            "j_m": self.j_m,
            "upper": self.upper,
            "matched_pairs": [list(p) for p in sorted(self.matched_pairs)],
            "unmatched_links": sorted(self.unmatched_links),
        }


def _pair_value(network: NetworkInstance, i: int, j: int, box_cap: float | None) -> float:
    snr = network.snr
    try:
        value = two_user_bottleneck_bound(snr[i], snr[j], network.gains[j, i])
    except HypothesisError as err:
        raise InvariantViolation(f"matched links ({i}, {j}) violate INR_ji >= SNR_j") from err
    return value if box_cap is None else min(box_cap, value)


def pair_and_bound(
    partition: BoxPartition,
    network: NetworkInstance,
    seed: int = 0,
    attenuation: AttenuationModel | None = None,
    domain: Domain | None = None,
) -> BoxBoundReport:
    """Match links across every representative/partner box pair and total the bounds.

    Deterministic fading on a cube or ball: ``min(N, N')`` links of each box
    are drawn at random and paired one-to-one; each pair contributes the
    smaller of the box-level bound ``log2(1 + 2 f(d_min))`` (when
    ``attenuation`` is given) and the two-user bound.  With random fading a
    pair is admissible only if ``M_jj <= M_ji <= M_ii`` and a maximum matching
    is taken.  On product-quantile domains the distance ordering is not
    guaranteed, so admissibility is the two-user hypothesis itself.
    """
    partition._require_labels()
    if partition.k != network.k:
        raise ValueError("partition and network disagree on K")
    rng = derive_rng(seed, "box_pairing")
    members = partition.links_by_id()
    fading = network.fading_multipliers
    snr = network.snr
    quantile = domain is not None and domain.kind == "product_quantile"
    geometric = fading is None and not quantile

    matched: list[tuple[int, int, float]] = []
    for rep_id, partner_id in sorted(partition.partner_ids.items()):
        reps = members.get(rep_id, [])
        partners = members.get(partner_id, [])
        if not reps or not partners:
            continue
        if geometric:
            u, v = partition.box_key(rep_id)
            cap = None
            if attenuation is not None:
                cap = math.log2(1.0 + 2.0 * float(attenuation(box_min_distance(u, v, partition.m))))
            count = min(len(reps), len(partners))
            chosen_i = rng.permutation(reps)[:count]
            chosen_j = rng.permutation(partners)[:count]
            for i, j in zip(chosen_i.tolist(), chosen_j.tolist()):
                matched.append((i, j, _pair_value(network, i, j, cap)))
            continue
        ri = np.asarray(reps)
        pj = np.asarray(partners)
        inr = network.gains[np.ix_(pj, ri)]
        if quantile:
            mask = snr[pj][:, None] <= inr
        else:
            m_ji = fading[np.ix_(pj, ri)]
            mask = (fading[pj, pj][:, None] <= m_ji) & (m_ji <= fading[ri, ri][None, :])
        for a, b in max_matching(BipartiteGraph.from_mask(mask)).pairs:
            i, j = int(ri[b]), int(pj[a])
            matched.append((i, j, _pair_value(network, i, j, None)))

    used = {x for i, j, _ in matched for x in (i, j)}
    unmatched = [i for i in range(network.k) if i not in used]
    return BoxBoundReport(
        i_m=math.fsum(v for _, _, v in matched),
        j_m=math.fsum(single_user_bound(snr[i]) for i in unmatched),
        matched_pairs=matched,
        unmatched_links=unmatched,
        m=partition.m,
    )


def box_upper_bound(
    network: NetworkInstance,
    m: int,
    domain: Domain,
    attenuation: AttenuationModel | None = None,
    seed: int | None = None,
) -> BoundsReport:
    """Assign, classify and pair in one call, reported as a :class:`BoundsReport`."""
    partition = classify_boxes(assign_boxes(network, m, domain), domain)
    report = pair_and_bound(partition, network, network.seed if seed is None else seed, attenuation, domain)
    snr = network.snr
    contributions = [((j, i), value) for i, j, value in report.matched_pairs]
    contributions += [((i,), single_user_bound(snr[i])) for i in report.unmatched_links]
    return BoundsReport(
        lower=lower_bound_ia(network).lower,
        upper=math.fsum(v for _, v in contributions),
        method="box",
        parameters={"m": int(m), "i_m": report.i_m, "j_m": report.j_m},
        contributions=contributions,
        certificate=[(j, i) for i, j, _ in report.matched_pairs],
    )


def box_probabilities(partition: BoxPartition, domain: Domain) -> np.ndarray:
    """Probability of every grid box under uniform placement on the unit cube (flat array)."""
    if domain.kind != "unit_cube":
        raise UnsupportedDomainError("closed-form box probabilities need a unit_cube domain")
    # each axis overlaps [0, 1] over exactly 1/m per cell
    return np.full(partition.num_boxes, (1.0 / partition.m) ** (2 * partition.dimension))


def occupancy_stats(
    partition: BoxPartition,
    network: NetworkInstance | None = None,
    eta: float = 2.0 / 3.0,
    domain: Domain | None = None,
) -> dict:
    """Largest deviation of box counts from their means, against the Chebyshev bound.

    The maximum runs over every box meeting the joint domain, empty ones
    included.
    """
    domain = domain if domain is not None else Domain.unit_cube(partition.dimension)
    k = partition.k if network is None else network.k
    probs = box_probabilities(partition, domain)
    deviation = np.abs(partition.counts() - k * probs)
    return {
        "max_abs_deviation": float(deviation.max()) if deviation.size else 0.0,
        "threshold": float(k**eta),
        "chebyshev_bound": float(k ** (1.0 - 2.0 * eta)),
        "box_probabilities": {partition.box_key(i): float(p) for i, p in enumerate(probs)},
    }


def analytic_matched_sum(domain: Domain, attenuation: AttenuationModel, m: int) -> float:
    """Per-link matched contribution ``sum_body p * log2(1 + 2 f(d_min))`` with ``p = 1/(V^2 M^{2D})``."""
    codes, partners = classify_grid(domain, m)
    n_cells = _cells_per_axis(domain, m)
    shape = (n_cells,) * (2 * domain.dimension)
    reps = np.fromiter(partners.keys(), dtype=np.int64)
    if reps.size == 0:
        return 0.0
    coords = np.stack(np.unravel_index(reps, shape))
    dim = domain.dimension
    gap = np.maximum(0, np.abs(coords[:dim] - coords[dim:]) - 1) / m
    dmin = np.sqrt(np.sum(gap**2, axis=0))
    values = np.log2(1.0 + 2.0 * attenuation(dmin))
    p = 1.0 / (domain.volume**2 * m ** (2 * dim))
    return float(math.fsum((p * values).tolist()))


def dump_boxes_csv(partition: BoxPartition) -> str:
    """CSV rows ``u,v,label,count`` in lexicographic box order (boxes of the joint domain only)."""
    partition._require_labels()
    counts = partition.counts()
    lines = ["u,v,label,count"]
    for bid in np.flatnonzero(partition.label_codes).tolist():
        u, v = partition.box_key(bid)
        lines.append(
            f'"{" ".join(map(str, u))}","{" ".join(map(str, v))}",'
            f"{LABEL_NAMES[int(partition.label_codes[bid])]},{int(counts[bid])}"
        )
    return "\n".join(lines) + "\n"
