"""Acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL`` line (shown in the pytest
terminal summary, or printed directly when run as a script) and then asserts.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import brute_max_matching_mask
from icbounds.box_matching import analytic_matched_sum, assign_positions, box_upper_bound, classify_boxes
from icbounds.capacity_bounds import lower_bound_ia
from icbounds.cli import main as cli_main
from icbounds.experiments import (
    ExperimentConfig,
    estimate_expected_rate,
    run_convergence,
    run_match_sim,
    run_occupancy_study,
    run_tail_study,
    run_walkup_table,
)
from icbounds.matching_theory import walkup_no_matching_bound, walkup_no_matching_bound_direct
from icbounds.net_model import AttenuationModel, Domain, FadingModel, NetworkConfig, NetworkInstance, sample_network
from icbounds.seeding import derive_rng, derive_seed
from icbounds.snr_matching import BipartiteGraph, best_upper_bound, max_matching

SQUARE = Domain.unit_cube(2)
ATT = AttenuationModel(4.0, 1.0, 1e6)


def verdict(number, ok, detail, elapsed, limit):
    timely = elapsed < limit
    status = "PASS" if ok and timely else "FAIL"
    line = f"criterion {number}: {status}  {detail}  [{elapsed:.2f}s / limit {limit:g}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert timely, line


def test_criterion_01_bottleneck_exactness():
    start = time.perf_counter()
    worst = 0.0
    for s in (0.5, 1.0, 10.0):
        gains = np.full((2, 2), s)
        net = NetworkInstance(2, np.zeros((2, 2)), np.zeros((2, 2)), gains)
        target = math.log2(1 + 2 * s)
        upper = best_upper_bound(net, [1]).upper
        lower = lower_bound_ia(net).lower
        worst = max(worst, abs(upper - target) / target, abs(lower - target) / target)
    verdict(1, worst <= 1e-9, f"max relative error {worst:.2e}", time.perf_counter() - start, 1)


def test_criterion_02_sandwich():
    start = time.perf_counter()
    rng = derive_rng(2, "instance_k")
    violations = checked = 0
    for fading in (FadingModel.deterministic(), FadingModel.uniform(0.0, 2.0)):
        for t in range(200):
            k = int(rng.integers(10, 201))
            m = int(rng.integers(2, 7))
            cfg = NetworkConfig(SQUARE, ATT, fading, k)
            net = sample_network(cfg, derive_seed(2, "trial", k, t))
            lower = lower_bound_ia(net).lower
            box = box_upper_bound(net, m, SQUARE, ATT).upper
            snr = best_upper_bound(net).upper
            violations += not (lower <= box and lower <= snr)
            checked += 1
    verdict(2, violations == 0, f"{checked} instances, {violations} violations", time.perf_counter() - start, 60)


def _mask_graph(rows, n_right):
    return BipartiteGraph(len(rows), n_right, [[b for b in range(n_right) if r >> b & 1] for r in rows])


def test_criterion_03_matching_oracle():
    start = time.perf_counter()
    mismatches = 0
    for bits in range(1 << 16):
        rows = tuple((bits >> (4 * i)) & 0xF for i in range(4))
        graph = _mask_graph(rows, 4)
        found = max_matching(graph)
        mismatches += (not found.is_valid(graph)) or found.size != brute_max_matching_mask(rows, 4)
    rng = derive_rng(3, "oracle")
    for _ in range(500):
        p = rng.uniform(0.05, 0.6)
        rows = tuple(int(sum(1 << b for b in range(8) if rng.random() < p)) for _ in range(8))
        graph = _mask_graph(rows, 8)
        found = max_matching(graph)
        mismatches += (not found.is_valid(graph)) or found.size != brute_max_matching_mask(rows, 8)
    verdict(3, mismatches == 0, f"65536 4x4 + 500 8x8 graphs, {mismatches} mismatches", time.perf_counter() - start, 120)


def _monotone(seq, strict=True):
    pairs = list(zip(seq, seq[1:]))
    return all(a > b for a, b in pairs) if strict else all(a >= b for a, b in pairs)


def test_criterion_04_convergence():
    start = time.perf_counter()
    cfg = ExperimentConfig(NetworkConfig(SQUARE, ATT), k_list=[100, 400, 1600], trials=50, oracle_samples=10**6)
    report = run_convergence(cfg)
    stds = [report.row(k)["lower_std"] for k in cfg.k_list]
    p_low = [report.row(k)["p_lower_deviation"] for k in cfg.k_list]
    gaps = [report.row(k)["snr_gap_mean"] for k in cfg.k_list]
    ok = _monotone(stds) and _monotone(p_low, strict=False) and _monotone(gaps)
    detail = (
        f"E={report.e_hat:.4f}+-{report.e_hat_std_err:.4f}; std(lower/K)={[round(x, 4) for x in stds]}; "
        f"P(|lower/K-E|>0.1E)={p_low}; mean snr gap={[round(x, 4) for x in gaps]}"
    )
    verdict(4, ok, detail, time.perf_counter() - start, 900)


def test_criterion_05_walkup():
    start = time.perf_counter()
    worst = 0.0
    for n in range(1, 31):
        for p in [round(0.1 * i, 1) for i in range(1, 10)]:
            fast, slow = walkup_no_matching_bound(n, p), walkup_no_matching_bound_direct(n, p)
            worst = max(worst, abs(fast - slow) / slow)
    rows = run_walkup_table([4], [0.3], samples=10_000, seed=5) + run_walkup_table([6], [0.5], samples=10_000, seed=5)
    empirical_ok = all(r["empirical"] <= r["walkup_bound"] + 3 * r["std_err"] for r in rows)
    detail = f"max rel diff {worst:.1e}; " + "; ".join(
        f"N={r['n']},p={r['p']}: freq {r['empirical']:.4f} vs bound {r['walkup_bound']:.4f}" for r in rows
    )
    verdict(5, worst <= 1e-10 and empirical_ok, detail, time.perf_counter() - start, 60)


def test_criterion_06_tail_bound():
    start = time.perf_counter()
    grid = list(range(1, 9))
    bad = []
    for fading in (FadingModel.deterministic(), FadingModel.uniform(0.0, 2.0)):
        cfg = ExperimentConfig(NetworkConfig(SQUARE, ATT, fading), master_seed=6)
        for row in run_tail_study(cfg, grid, sample_count=10**6):
            if row["empirical_tail"] > row["analytic_bound"] + 3 * row["std_err"]:
                bad.append((fading.kind, row["u"]))
    verdict(6, not bad, f"16 grid points (u in bits 1..8, two fading modes), violations {bad}", time.perf_counter() - start, 60)


def test_criterion_07_occupancy():
    start = time.perf_counter()
    net = NetworkConfig(Domain.unit_cube(1), AttenuationModel(2.0))
    cfg = ExperimentConfig(net, k_list=[10_000], trials=200, eta=0.75, m_policy=[2], master_seed=7)
    (row,) = run_occupancy_study(cfg)
    ok = row["exceed_frequency"] <= row["chebyshev_bound"] + 3 * row["std_err"]
    detail = f"exceed frequency {row['exceed_frequency']} vs bound {row['chebyshev_bound']:.3g}"
    verdict(7, ok, detail, time.perf_counter() - start, 60)


def test_criterion_08_trimmed_matching_trend():
    start = time.perf_counter()
    gamma, ns = 0.7, [200, 400, 800]
    ratios, within = [], 0
    for n in ns:
        rows = run_match_sim(n, gamma, 50, seed=8)
        ratios.append(float(np.mean([r["deficiency_after_trim"] for r in rows])) / n)
        within += sum(r["total_unmatched"] <= 8 * n**gamma for r in rows)
    share = within / (50 * len(ns))
    ok = _monotone(ratios) and share >= 0.95
    detail = f"mean deficiency/n {ratios} (needs strict decrease); total_unmatched <= 8 n^gamma in {share:.0%}"
    verdict(8, ok, detail, time.perf_counter() - start, 120)


def test_criterion_09_riemann_limit():
    start = time.perf_counter()
    e_hat = estimate_expected_rate(SQUARE, ATT, FadingModel(), 10**6, derive_seed(9, "oracle"))["e_hat"]
    sums = [analytic_matched_sum(SQUARE, ATT, m) for m in (2, 4, 8, 16)]
    gaps = [abs(e_hat - s) for s in sums]
    detail = f"E={e_hat:.4f}; matched sums {[round(s, 4) for s in sums]}; gaps {[round(g, 4) for g in gaps]}"
    verdict(9, _monotone(gaps), detail, time.perf_counter() - start, 60)


def test_criterion_10_grid_fixture():
    start = time.perf_counter()
    line = Domain.unit_cube(1)
    part = classify_boxes(assign_positions(np.zeros((0, 1)), np.zeros((0, 1)), 6, line), line)
    lower = {(u[0], v[0]): name for (u, v), name in part.labels.items() if v[0] < u[0]}
    expected = {b: "BodyRepresentative" for b in [(2, 1), (3, 2), (4, 3), (3, 1), (4, 2)]}
    expected |= {b: "BodyPartner" for b in [(3, 0), (4, 1), (5, 2), (4, 0), (5, 1)]}
    expected |= {b: "Edge" for b in [(1, 0), (2, 0), (5, 0), (5, 3), (5, 4)]}
    spine = all(part.label((i,), (i,)) == "Spine" for i in range(6))
    verdict(10, lower == expected and spine, "M=6 lower triangle and diagonal", time.perf_counter() - start, 1)


def test_criterion_11_determinism(tmp_path, capsys):
    start = time.perf_counter()
    config = tmp_path / "converge.json"
    config.write_text(json.dumps({"k_list": [50, 100], "trials": 10, "oracle_samples": 100_000, "master_seed": 11}))
    outputs = []
    for name in ("first", "second"):
        cli_main(["converge", "--config", str(config), "--out", str(tmp_path / name)])
        outputs.append(
            tuple((tmp_path / name / f).read_bytes() for f in ("converge.csv", "converge_trials.csv"))
        )
    capsys.readouterr()
    verdict(11, outputs[0] == outputs[1], "two converge runs, CSV bytes compared", time.perf_counter() - start, 600)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
