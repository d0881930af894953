"""Command-line entry point: ``rrbeam {solve,mc-cdf,tradeoff,validate}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import experiments
from .errors import ConfigError
from .experiments import ExperimentConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_MODE = {"solve": "single_solve", "mc-cdf": "mc_cdf", "tradeoff": "tradeoff", "validate": "validate"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrbeam", description="Robust positioning-aided beamforming experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "run one trial and dump its beams"),
        ("mc-cdf", "Monte Carlo rate CDF, robust vs non-robust"),
        ("tradeoff", "CRB/rate trade-off over antenna counts and frame ratios"),
        ("validate", "numerical self-checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--seed", type=int, metavar="N", help="base seed (overrides the config)")
        p.add_argument("--trials", type=int, metavar="N", help="trials per point (overrides the config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--solver", choices=("embedded", "external"), help="conic solver backend")
        p.add_argument("--workers", type=int, metavar="N", help="worker processes")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if args.trials is not None and args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    rr_cfg = cfg.rr
    if args.solver:
        if args.solver == "external":
            from .conic.external import available

            if not available():
                raise ConfigError("--solver external needs cvxpy (pip install 'artifact[external]')")
        rr_cfg = dataclasses.replace(rr_cfg, solver=args.solver)
    return dataclasses.replace(
        cfg,
        base_seed=cfg.base_seed if args.seed is None else args.seed,
        trials=cfg.trials if args.trials is None else args.trials,
        output_dir=cfg.output_dir if args.out is None else args.out,
        workers=cfg.workers if args.workers is None else args.workers,
        mode=_MODE[args.command],
        rr=rr_cfg,
    )


def _dump(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False, default=str)
        fh.write("\n")


def _check_failures(rate: float) -> int:
    if rate > experiments.FAILURE_RATE_LIMIT:
        print(f"solver failure rate {rate:.1%} exceeds {experiments.FAILURE_RATE_LIMIT:.0%}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig) -> int:
    rec, rep = experiments.run_trial_detailed(cfg.scenario, 0, cfg.base_seed, cfg.rr)
    out = {"record": experiments.records_to_json([rec])[0]}
    if rep is not None and rep.beamformers is not None:
        out["objective_history_w"] = rep.objective_history
        out["beams"] = [[[float(z.real), float(z.imag)] for z in w] for w in rep.beamformers.vectors]
        out["rank_one_exact"] = rep.rank_one_exact
    _dump(os.path.join(cfg.output_dir, "solve.json"), out)
    print(
        f"trial 0: status {rec.status}, robust rate {rec.robust_rate:.4f} bps/Hz, "
        f"power {rec.robust_power:.4g} W, iterations {rec.rr_iterations}"
    )
    return _check_failures(0.0 if rec.ok else 1.0)


def cmd_mc_cdf(cfg: ExperimentConfig) -> int:
    records, summary = experiments.run_mc_cdf(cfg)
    experiments.write_cdf_csv(os.path.join(cfg.output_dir, "cdf.csv"), records)
    experiments.write_cdf_curves(os.path.join(cfg.output_dir, "cdf_curves.csv"), records)
    experiments.write_plot_script(cfg.output_dir, "cdf", cfg.frame_ratios, threshold=cfg.scenario.rate_threshold)
    _dump(os.path.join(cfg.output_dir, "summary.json"), summary)
    for ratio, entry in summary["outage"].items():
        parts = [f"{d} outage {e['probability']:.4f} [{e['low']:.4f}, {e['high']:.4f}]" for d, e in entry.items()]
        print(f"r={float(ratio):g}: " + "; ".join(parts))
    return _check_failures(summary["failure_rate"])


def cmd_tradeoff(cfg: ExperimentConfig) -> int:
    records, rows = experiments.run_tradeoff(cfg)
    experiments.write_tradeoff_csv(os.path.join(cfg.output_dir, "tradeoff.csv"), rows)
    experiments.write_plot_script(cfg.output_dir, "tradeoff", antenna_counts=cfg.antenna_counts)
    _dump(
        os.path.join(cfg.output_dir, "summary.json"),
        {"failure_rate": experiments.failure_rate(records), "rows": [dataclasses.asdict(r) for r in rows]},
    )
    for r in rows:
        print(f"N_B={r.n_antennas:3d} r={r.ratio:g}: CRB {r.mean_crb_m2:.4g} m^2, rate {r.mean_rate_bps_hz:.4f}, power {r.mean_power_w:.4g} W")
    return _check_failures(experiments.failure_rate(records))


def cmd_validate(cfg: ExperimentConfig) -> int:
    checks = experiments.run_validate(cfg.base_seed)
    _dump(os.path.join(cfg.output_dir, "validate.json"), {k: {"ok": bool(ok), "detail": d} for k, (ok, d) in checks.items()})
    for name, (ok, detail) in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for ok, _ in checks.values()) else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        os.makedirs(cfg.output_dir, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    np.seterr(all="ignore")
    handler = {"solve": cmd_solve, "mc-cdf": cmd_mc_cdf, "tradeoff": cmd_tradeoff, "validate": cmd_validate}
    return handler[args.command](cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
