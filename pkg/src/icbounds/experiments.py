"""Monte Carlo studies: convergence of C/K, SNR tails, box occupancy, matching.

Every study is a pure function of its configuration and master seed; per-trial
seeds come from :func:`icbounds.seeding.derive_seed`, so any single trial can
be rerun from the seed printed in its record.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from icbounds.box_matching import assign_positions, box_upper_bound, occupancy_stats
from icbounds.capacity_bounds import lower_bound_ia, tail_bound, tail_bound_fading
from icbounds.matching_theory import (
    dkw_statistic,
    matching_deficiency,
    sample_threshold_bipartite,
    walkup_no_matching_bound,
    walkup_split_bound,
)
from icbounds.net_model import (
    AttenuationModel,
    ConfigurationError,
    Domain,
    FadingModel,
    NetworkConfig,
    NetworkInstance,
    derive_separation_params,
    sample_network,
    sample_positions,
)
from icbounds.seeding import derive_rng, derive_seed
from icbounds.snr_matching import BipartiteGraph, best_upper_bound, max_matching

ORACLE_CHUNK = 200_000


@dataclass
class ExperimentConfig:
    network: NetworkConfig
    k_list: list[int] = field(default_factory=lambda: [100, 400, 1600])
    trials: int = 50
    epsilon: float = 0.1
    epsilon_relative: bool = True
    eta: float = 2.0 / 3.0
    m_policy: str | list[int] = "k_power"
    snr_m_list: list[int] | None = None
    master_seed: int = 0
    oracle_samples: int = 1_000_000

    def __post_init__(self):
        if not self.k_list or any(k < 1 for k in self.k_list) or self.trials < 1:
            raise ConfigurationError("k_list entries and trials must be positive")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not 0.5 < self.eta < 1:
            raise ConfigurationError("eta must lie in (0.5, 1)")
        if self.m_policy != "k_power" and (
            isinstance(self.m_policy, str) or not self.m_policy or any(m < 1 for m in self.m_policy)
        ):
            raise ConfigurationError("m_policy must be 'k_power' or a nonempty list of positive ints")

    def box_resolutions(self, k: int) -> list[int]:
        """Grid resolutions to try for ``k`` links.

        ``k_power`` uses ``ceil(K^{3 beta (1 - eta)})`` with ``beta = 1/(3(2D+1))``.
        """
        if self.m_policy != "k_power":
            return [int(m) for m in self.m_policy]
        beta = 1.0 / (3.0 * (2 * self.network.domain.dimension + 1))
        return [max(1, int(math.ceil(k ** (3.0 * beta * (1.0 - self.eta)) - 1e-9)))]

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "k_list": list(self.k_list),
            "trials": self.trials,
            "epsilon": self.epsilon,
            "epsilon_relative": self.epsilon_relative,
            "eta": self.eta,
            "m_policy": self.m_policy,
            "snr_m_list": self.snr_m_list,
            "master_seed": self.master_seed,
            "oracle_samples": self.oracle_samples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f for f in cls.__dataclass_fields__ if f != "network"}
        unknown = set(data) - known - {"network"}
        if unknown:
            raise ConfigurationError(f"unknown experiment config keys: {sorted(unknown)}")
        kwargs = {key: data[key] for key in known if key in data}
        return cls(network=NetworkConfig.from_dict(data.get("network", {})), **kwargs)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path: str | Path) -> dict:
    """Read a JSON or TOML config file into a dict."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, math.nan
    return mean, float(values.std(ddof=1) / math.sqrt(n))


def sample_direct_rates(
    domain: Domain,
    attenuation: AttenuationModel,
    fading: FadingModel,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``0.5 log2(1 + 2 SNR)`` for ``count`` independent direct links."""
    tx = domain.sample(rng, count, "tx")
    rx = domain.sample(rng, count, "rx")
    snr = np.asarray(attenuation(np.linalg.norm(tx - rx, axis=1)), dtype=float)
    if fading.is_random:
        snr = snr * fading.sample(rng, count)
    return 0.5 * np.log2(1.0 + 2.0 * snr)


def _sample_in_chunks(domain, attenuation, fading, count, rng) -> np.ndarray:
    chunks = []
    remaining = count
    while remaining > 0:
        size = min(ORACLE_CHUNK, remaining)
        chunks.append(sample_direct_rates(domain, attenuation, fading, size, rng))
        remaining -= size
    return np.concatenate(chunks) if chunks else np.zeros(0)


def estimate_expected_rate(
    domain: Domain,
    attenuation: AttenuationModel,
    fading: FadingModel,
    sample_count: int,
    seed: int,
) -> dict:
    """Monte Carlo mean of the per-link rate, the limit of C/K.

    ``std_err`` is NaN (``null`` in JSON output) when ``sample_count == 1``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rates = _sample_in_chunks(domain, attenuation, fading, sample_count, derive_rng(seed, "oracle"))
    e_hat, std_err = _mean_and_se(rates)
    return {"e_hat": e_hat, "std_err": std_err, "samples": sample_count}


@dataclass
class TrialRecord:
    k: int
    trial_index: int
    seed: int
    lower_per_user: float
    box_upper_per_user: float
    snr_upper_per_user: float
    best_m: int
    box_m: int
    max_s_ii: float
    runtime_ms: float = 0.0

    CSV_FIELDS = (
        "k",
        "trial_index",
        "seed",
        "lower_per_user",
        "box_upper_per_user",
        "snr_upper_per_user",
        "best_m",
        "box_m",
        "max_s_ii",
    )

    @property
    def upper_per_user(self) -> float:
        return min(self.box_upper_per_user, self.snr_upper_per_user)


@dataclass
class ConvergenceReport:
    e_hat: float
    e_hat_std_err: float
    epsilon: float
    rows: list[dict]
    records: list[TrialRecord]

    SUMMARY_FIELDS = (
        "k",
        "trials",
        "lower_mean",
        "lower_std",
        "box_upper_mean",
        "box_upper_std",
        "snr_upper_mean",
        "snr_upper_std",
        "snr_gap_mean",
        "p_lower_deviation",
        "p_upper_deviation",
        "extreme_frequency",
        "e_hat",
        "e_hat_std_err",
        "epsilon",
    )

    def row(self, k: int) -> dict:
        return next(r for r in self.rows if r["k"] == k)

    def summary_csv(self) -> str:
        return to_csv(self.SUMMARY_FIELDS, self.rows)

    def records_csv(self) -> str:
        return to_csv(TrialRecord.CSV_FIELDS, [asdict(r) for r in self.records])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def to_csv(fields: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def _std(values: np.ndarray) -> float:
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def run_trial(
    config: ExperimentConfig,
    k: int,
    trial_index: int,
    network_factory: Callable[[int, int], NetworkInstance] | None = None,
) -> TrialRecord:
    seed = derive_seed(config.master_seed, "trial", k, trial_index)
    start = time.perf_counter()
    try:
        if network_factory is None:
            network = sample_network(config.network.with_k(k), seed)
        else:
            network = network_factory(k, seed)
        lower = lower_bound_ia(network).lower
        box_reports = [
            box_upper_bound(network, m, config.network.domain, config.network.attenuation, seed)
            for m in config.box_resolutions(k)
        ]
        box = min(box_reports, key=lambda r: r.upper)
        snr = best_upper_bound(network, config.snr_m_list)
        if not (lower <= box.upper and lower <= snr.upper):
            raise AssertionError(f"sandwich violated: lower={lower} box={box.upper} snr={snr.upper}")
        max_s = float(np.max(0.5 * np.log2(1.0 + 2.0 * network.snr))) if network.k else 0.0
    except Exception as err:
        raise RuntimeError(f"trial k={k} index={trial_index} seed={seed} failed: {err}") from err
    return TrialRecord(
        k=k,
        trial_index=trial_index,
        seed=seed,
        lower_per_user=lower / k,
        box_upper_per_user=box.upper / k,
        snr_upper_per_user=snr.upper / k,
        best_m=int(snr.parameters["m"]),
        box_m=int(box.parameters["m"]),
        max_s_ii=max_s,
        runtime_ms=1000.0 * (time.perf_counter() - start),
    )


def run_convergence(
    config: ExperimentConfig,
    network_factory: Callable[[int, int], NetworkInstance] | None = None,
    e_hat: float | None = None,
    progress: Callable[[TrialRecord], None] | None = None,
) -> ConvergenceReport:
    """Lower and upper bounds per user for every K in ``k_list``, ``trials`` times each.

    The deviation probabilities are measured separately for the lower bound
    (``|lower/K - E| > eps``) and for the best upper bound (``upper/K - E > eps``).
    ``network_factory(k, seed)`` replaces random sampling, and ``e_hat``
    replaces the Monte Carlo oracle, for fixtures.
    """
    net = config.network
    if e_hat is None:
        oracle = estimate_expected_rate(
            net.domain,
            net.attenuation,
            net.fading,
            config.oracle_samples,
            derive_seed(config.master_seed, "oracle"),
        )
        e_hat, e_se = oracle["e_hat"], oracle["std_err"]
    else:
        e_se = 0.0
    eps = config.epsilon * e_hat if config.epsilon_relative else config.epsilon
    d_sep = derive_separation_params(net.domain).d_sep if net.domain.kind != "product_quantile" else None

    records: list[TrialRecord] = []
    rows = []
    for k in config.k_list:
        batch = []
        for t in range(config.trials):
            record = run_trial(config, k, t, network_factory)
            batch.append(record)
            if progress is not None:
                progress(record)
        records.extend(batch)
        lower = np.array([r.lower_per_user for r in batch])
        box = np.array([r.box_upper_per_user for r in batch])
        snr = np.array([r.snr_upper_per_user for r in batch])
        upper = np.minimum(box, snr)
        max_s_nats = np.array([r.max_s_ii for r in batch]) * math.log(2.0)
        if d_sep is not None and k > 1:
            extreme = float(np.mean(max_s_nats >= net.attenuation.alpha / d_sep * math.log(k)))
        else:
            extreme = math.nan
        rows.append(
            {
                "k": k,
                "trials": config.trials,
                "lower_mean": float(lower.mean()),
                "lower_std": _std(lower),
                "box_upper_mean": float(box.mean()),
                "box_upper_std": _std(box),
                "snr_upper_mean": float(snr.mean()),
                "snr_upper_std": _std(snr),
                "snr_gap_mean": float(np.mean(snr - lower)),
                "p_lower_deviation": float(np.mean(np.abs(lower - e_hat) > eps)),
                "p_upper_deviation": float(np.mean(upper - e_hat > eps)),
                "extreme_frequency": extreme,
                "e_hat": e_hat,
                "e_hat_std_err": e_se,
                "epsilon": eps,
            }
        )
    return ConvergenceReport(e_hat, e_se, eps, rows, records)


def empirical_tail(rates: np.ndarray, u: float) -> tuple[float, float]:
    p = float(np.mean(rates >= u))
    return p, math.sqrt(p * (1.0 - p) / rates.size)


def run_tail_study(
    config: ExperimentConfig,
    u_grid: Sequence[float] = tuple(range(1, 9)),
    sample_count: int = 1_000_000,
) -> list[dict]:
    """Empirical ``P(S_ii >= u)`` (``u`` in bits) against the analytic tail bound."""
    net = config.network
    sep = derive_separation_params(net.domain)
    rng = derive_rng(config.master_seed, "tail")
    rates = _sample_in_chunks(net.domain, net.attenuation, net.fading, sample_count, rng)
    rows = []
    for u in u_grid:
        p, se = empirical_tail(rates, u)
        if net.fading.is_random:
            bound = tail_bound_fading(u, sep, net.attenuation, net.fading.mean, units="bits")
        else:
            bound = tail_bound(u, sep, net.attenuation, units="bits")
        rows.append({"u": float(u), "empirical_tail": p, "std_err": se, "analytic_bound": bound})
    return rows


def run_occupancy_study(config: ExperimentConfig) -> list[dict]:
    """Frequency of ``max |N_uv - K p_uv| >= K^eta`` against the Chebyshev bound ``K^{1-2 eta}``."""
    net = config.network
    if net.domain.kind != "unit_cube":
        raise ConfigurationError("occupancy study needs a unit_cube domain")
    rows = []
    for k in config.k_list:
        for m in config.box_resolutions(k):
            exceed = []
            for t in range(config.trials):
                seed = derive_seed(config.master_seed, "occupancy", k, m, t)
                tx, rx = sample_positions(net.with_k(k), seed)
                stats = occupancy_stats(assign_positions(tx, rx, m, net.domain), None, config.eta, net.domain)
                exceed.append(stats["max_abs_deviation"] >= stats["threshold"])
            freq = float(np.mean(exceed))
            rows.append(
                {
                    "k": k,
                    "m": m,
                    "eta": config.eta,
                    "exceed_frequency": freq,
                    "std_err": math.sqrt(freq * (1.0 - freq) / config.trials),
                    "chebyshev_bound": float(k ** (1.0 - 2.0 * config.eta)),
                }
            )
    return rows


def run_match_sim(n: int, gamma: float, trials: int, seed: int) -> list[dict]:
    """Deficiency of trimmed threshold graphs, plus DKW statistics of the labels."""
    rows = []
    for t in range(trials):
        sample = sample_threshold_bipartite(n, derive_seed(seed, "threshold_graph", n, t))
        result = matching_deficiency(sample, gamma)
        rows.append(
            {
                "trial": t,
                "n": n,
                "gamma": gamma,
                "deficiency_after_trim": result["deficiency_after_trim"],
                "total_unmatched": result["total_unmatched"],
                "dkw_left": dkw_statistic(sample.u_labels),
                "dkw_right": dkw_statistic(sample.v_labels),
            }
        )
    return rows


def no_complete_matching_frequency(n_side: int, p: float, samples: int, seed: int) -> tuple[float, float]:
    """Fraction of ``n_side x n_side`` Erdos-Renyi bipartite graphs without a perfect matching."""
    rng = derive_rng(seed, "walkup", n_side, int(round(p * 1e6)))
    failures = 0
    for _ in range(samples):
        graph = BipartiteGraph.from_mask(rng.random((n_side, n_side)) < p)
        failures += max_matching(graph).size < n_side
    freq = failures / samples
    return freq, math.sqrt(freq * (1.0 - freq) / samples)


def run_walkup_table(
    n_list: Sequence[int],
    p_list: Sequence[float],
    samples: int = 0,
    seed: int = 0,
) -> list[dict]:
    rows = []
    for n in n_list:
        for p in p_list:
            row = {
                "n": n,
                "p": p,
                "walkup_bound": walkup_no_matching_bound(n, p),
                "split_bound": walkup_split_bound(n, p),
                "empirical": math.nan,
                "std_err": math.nan,
            }
            if samples:
                row["empirical"], row["std_err"] = no_complete_matching_frequency(n, p, samples, seed)
            rows.append(row)
    return rows
