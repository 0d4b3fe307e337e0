"""Command-line front end: ``icbounds <subcommand> [--seed S] [--config FILE] [--out DIR]``.

Tables go to ``<out>/<subcommand>.csv`` with a ``.meta.json`` sidecar, or to
stdout when ``--out`` is omitted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from icbounds import __version__
from icbounds.box_matching import assign_boxes, box_upper_bound, classify_boxes, dump_boxes_csv
from icbounds.capacity_bounds import lower_bound_ia
from icbounds.experiments import (
    ExperimentConfig,
    load_config,
    run_convergence,
    run_match_sim,
    run_occupancy_study,
    run_tail_study,
    run_walkup_table,
    to_csv,
)
from icbounds.net_model import ConfigurationError, NetworkConfig, network_from_json, sample_network
from icbounds.snr_matching import best_upper_bound


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace NaN with None so the JSON stays standard."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


class Context:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.raw_config: dict = load_config(args.config) if args.config else {}
        if args.config:
            self.config_hash = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
        else:
            self.config_hash = hashlib.sha256(b"{}").hexdigest()
        self.out = Path(args.out) if args.out else None

    def section(self, name: str) -> dict:
        value = self.raw_config.get(name, {})
        if not isinstance(value, dict):
            raise ConfigurationError(f"config section {name!r} must be a table")
        return value

    def option(self, name: str, section: str, key: str, default):
        """Command-line value, else ``[section].key`` from the config, else ``default``."""
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        return self.section(section).get(key, default)

    @property
    def seed(self) -> int:
        if self.args.seed is not None:
            return self.args.seed
        return int(self.raw_config.get("master_seed", 0))

    def experiment(self) -> ExperimentConfig:
        data = {
            k: v
            for k, v in self.raw_config.items()
            if k in ExperimentConfig.__dataclass_fields__ or k == "network"
        }
        data["master_seed"] = self.seed
        return ExperimentConfig.from_dict(data)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig.from_dict(self.raw_config.get("network", {}))

    def network(self):
        """Instance from ``--network FILE`` or sampled from the config with ``--k``."""
        path = getattr(self.args, "network", None)
        if path:
            return network_from_json(Path(path).read_text())
        k = self.option("k", "network", "k", 0)
        if k < 1:
            raise ConfigurationError("pass --network FILE or a positive --k")
        return sample_network(self.network_config().with_k(k), self.seed)

    def emit(self, name: str, text: str, suffix: str = "csv", extra: dict | None = None) -> None:
        if self.out is None:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / f"{name}.{suffix}").write_text(text)
        meta = {
            "command": self.args.command,
            "config_sha256": self.config_hash,
            "seed": self.seed,
            "version": __version__,
        }
        if extra:
            meta.update(extra)
        (self.out / f"{name}.meta.json").write_text(
            json.dumps(_clean(meta), indent=2, sort_keys=True, default=_json_default) + "\n"
        )


def cmd_gen(ctx: Context) -> None:
    ctx.emit("network", ctx.network().to_json() + "\n", suffix="json")


def cmd_bounds(ctx: Context) -> None:
    network = ctx.network()
    cfg = ctx.network_config()
    m = ctx.option("m", "box", "m", 2)
    lower = lower_bound_ia(network)
    box = box_upper_bound(network, m, cfg.domain, cfg.attenuation, ctx.seed)
    snr = best_upper_bound(network, ctx.option("m_list", "snr", "m_list", None))
    rows = [
        {"method": r.method, "lower": lower.lower, "upper": r.upper, "parameter_m": r.parameters.get("m", "")}
        for r in (box, snr)
    ]
    rows.insert(0, {"method": "ia", "lower": lower.lower, "upper": "", "parameter_m": ""})
    ctx.emit("bounds", to_csv(("method", "lower", "upper", "parameter_m"), rows), extra={"k": network.k})


def cmd_box_bound(ctx: Context) -> None:
    network = ctx.network()
    cfg = ctx.network_config()
    m = ctx.option("m", "box", "m", 2)
    report = box_upper_bound(network, m, cfg.domain, cfg.attenuation, ctx.seed)
    report.check()
    row = {"m": m, "lower": report.lower, "upper": report.upper, **{k: report.parameters[k] for k in ("i_m", "j_m")}}
    row["matched_pairs"] = len(report.certificate)
    ctx.emit(
        "box_bound",
        to_csv(("m", "lower", "upper", "i_m", "j_m", "matched_pairs"), [row]),
        extra={"k": network.k},
    )
    if ctx.args.dump_boxes:
        partition = classify_boxes(assign_boxes(network, m, cfg.domain), cfg.domain)
        text = dump_boxes_csv(partition)
        if ctx.out is None:
            Path(ctx.args.dump_boxes).write_text(text)
        else:
            (ctx.out / ctx.args.dump_boxes).write_text(text)


def cmd_snr_bound(ctx: Context) -> None:
    network = ctx.network()
    report = best_upper_bound(network, ctx.option("m_list", "snr", "m_list", None))
    report.check()
    ctx.emit(
        "snr_bound",
        to_csv(("m", "bound_bits", "matched_pairs", "unmatched_count"), report.sweep),
        extra={"k": network.k, "best_m": report.parameters["m"], "best_bound_bits": report.upper},
    )


def cmd_converge(ctx: Context) -> None:
    config = ctx.experiment()
    report = run_convergence(config)
    ctx.emit(
        "converge",
        report.summary_csv(),
        extra={"e_hat": report.e_hat, "e_hat_std_err": report.e_hat_std_err, "config": config.to_dict()},
    )
    if ctx.out is not None:
        (ctx.out / "converge_trials.csv").write_text(report.records_csv())


def cmd_tail_sim(ctx: Context) -> None:
    config = ctx.experiment()
    grid = ctx.option("u_grid", "tail", "u_grid", list(range(1, 9)))
    samples = ctx.option("samples", "tail", "samples", 1_000_000)
    rows = run_tail_study(config, grid, samples)
    ctx.emit("tail_sim", to_csv(("u", "empirical_tail", "std_err", "analytic_bound"), rows), extra={"units": "bits"})


def cmd_occupancy_sim(ctx: Context) -> None:
    rows = run_occupancy_study(ctx.experiment())
    ctx.emit("occupancy_sim", to_csv(("k", "m", "eta", "exceed_frequency", "std_err", "chebyshev_bound"), rows))


def cmd_match_sim(ctx: Context) -> None:
    n = ctx.option("n", "match", "n", 200)
    gamma = ctx.option("gamma", "match", "gamma", 0.7)
    trials = ctx.option("trials", "match", "trials", 50)
    rows = run_match_sim(n, gamma, trials, ctx.seed)
    fields = ("trial", "n", "gamma", "deficiency_after_trim", "total_unmatched", "dkw_left", "dkw_right")
    ctx.emit("match_sim", to_csv(fields, rows))


def cmd_walkup(ctx: Context) -> None:
    n_list = ctx.option("n_list", "walkup", "n_list", [4, 6, 8, 10, 20, 30])
    p_list = ctx.option("p_list", "walkup", "p_list", [round(0.1 * i, 1) for i in range(1, 10)])
    samples = ctx.option("samples", "walkup", "samples", 0)
    rows = run_walkup_table(n_list, p_list, samples, ctx.seed)
    ctx.emit("walkup", to_csv(("n", "p", "walkup_bound", "split_bound", "empirical", "std_err"), rows))


COMMANDS = {
    "gen": cmd_gen,
    "bounds": cmd_bounds,
    "box-bound": cmd_box_bound,
    "snr-bound": cmd_snr_bound,
    "converge": cmd_converge,
    "tail-sim": cmd_tail_sim,
    "occupancy-sim": cmd_occupancy_sim,
    "match-sim": cmd_match_sim,
    "walkup": cmd_walkup,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config master_seed or 0)")
    common.add_argument("--config", help="JSON or TOML config file")
    common.add_argument("--out", help="output directory (default: print to stdout)")

    parser = argparse.ArgumentParser(prog="icbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def instance_args(p):
        p.add_argument("--network", help="network JSON written by `gen`")
        p.add_argument("--k", type=int, help="sample a network with this many links")

    p = sub.add_parser("gen", parents=[common], help="sample a network and write it as JSON")
    p.add_argument("--k", type=int)
    p = sub.add_parser("bounds", parents=[common], help="lower bound and both upper bounds for one instance")
    instance_args(p)
    p.add_argument("--m", type=int, help="box grid resolution")
    p.add_argument("--m-list", dest="m_list", type=_int_list, help="SNR category counts, e.g. 1,2,4")
    p = sub.add_parser("box-bound", parents=[common], help="box-partition upper bound")
    instance_args(p)
    p.add_argument("--m", type=int)
    p.add_argument("--dump-boxes", dest="dump_boxes", metavar="FILE", help="also write the box labelling CSV")
    p = sub.add_parser("snr-bound", parents=[common], help="SNR-category matching sweep")
    instance_args(p)
    p.add_argument("--m-list", dest="m_list", type=_int_list)
    sub.add_parser("converge", parents=[common], help="convergence study over k_list")
    p = sub.add_parser("tail-sim", parents=[common], help="empirical SNR tail vs analytic bound")
    p.add_argument("--u-grid", dest="u_grid", type=_float_list, help="thresholds in bits")
    p.add_argument("--samples", type=int)
    sub.add_parser("occupancy-sim", parents=[common], help="box occupancy deviations")
    p = sub.add_parser("match-sim", parents=[common], help="trimmed threshold-graph matching deficiency")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--trials", type=int)
    p = sub.add_parser("walkup", parents=[common], help="blocking-pair bound table")
    p.add_argument("--n-list", dest="n_list", type=_int_list)
    p.add_argument("--p-list", dest="p_list", type=_float_list)
    p.add_argument("--samples", type=int, help="also estimate the failure frequency from this many graphs")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](Context(args))
    except (ConfigurationError, ValueError, OSError) as err:
        parser.exit(2, f"icbounds {args.command}: error: {err}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
