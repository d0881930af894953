"""Monte Carlo experiments: rate CDF (robust vs non-robust) and the CRB/rate trade-off.

Every trial owns an RNG stream seeded by ``(base_seed, trial_id)``, so the
results do not depend on worker scheduling; records are always assembled in
trial-id order.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np

from . import rr
from .errors import ConfigError, DegenerateChannel, NotFeasibleAfterRescale, RrBeamError, SolverFailure
from .relaxation import build_affine_map
from .scenario import (
    Scenario,
    achievable_rate,
    channel_split,
    serving_index,
    snr_threshold,
)

MODES = ("mc_cdf", "tradeoff", "single_solve", "validate")
DEFAULT_RATIOS = (1 / 8, 2 / 8, 3 / 8)
DEFAULT_ANTENNAS = (8, 16, 32, 64)
FAILURE_RATE_LIMIT = 0.10

_SCENARIO_KEYS = {f.name for f in fields(Scenario)}
_RR_KEYS = {f.name for f in fields(rr.RrConfig)}


@dataclass
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    trials: int = 500
    base_seed: int = 0
    frame_ratios: tuple = DEFAULT_RATIOS
    antenna_counts: tuple = DEFAULT_ANTENNAS
    mode: str = "mc_cdf"
    output_dir: str = "out"
    rr: rr.RrConfig = field(default_factory=rr.RrConfig)
    workers: int = 1

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if not self.frame_ratios or any(not float(r) > 0.0 for r in self.frame_ratios):
            raise ConfigError("frame_ratios must be a non-empty list of positive numbers")
        if not self.antenna_counts or any(int(n) < 1 for n in self.antenna_counts):
            raise ConfigError("antenna_counts must be a non-empty list of positive integers")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        self.trials = int(self.trials)
        self.base_seed = int(self.base_seed)
        self.frame_ratios = tuple(float(r) for r in self.frame_ratios)
        self.antenna_counts = tuple(int(n) for n in self.antenna_counts)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {"scenario", "trials", "base_seed", "frame_ratios", "antenna_counts", "mode", "output_dir", "rr", "workers"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in doc.items() if k not in ("scenario", "rr")}
        mode = kwargs.get("mode")
        if isinstance(mode, str):
            kwargs["mode"] = mode.replace("-", "_")
        try:
            kwargs["scenario"] = scenario_from_dict(doc.get("scenario", {}))
            rr_doc = doc.get("rr", {})
            bad = set(rr_doc) - _RR_KEYS
            if bad:
                raise ConfigError(f"unknown rr keys: {sorted(bad)}")
            kwargs["rr"] = rr.RrConfig(**rr_doc)
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    """Scenario from JSON fields; complex gains may be given as ``[re, im]`` pairs."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    bad = set(doc) - _SCENARIO_KEYS
    if bad:
        raise ConfigError(f"unknown scenario keys: {sorted(bad)}")
    kw = dict(doc)
    if kw.get("channel_gains") is not None:
        kw["channel_gains"] = [complex(g[0], g[1]) if isinstance(g, (list, tuple)) else complex(g) for g in kw["channel_gains"]]
    try:
        return Scenario(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


@dataclass
class TrialRecord:
    trial_id: int
    ratio: float
    n_antennas: int
    u_hat: tuple
    serving_index: int
    robust_rate: float
    nonrobust_rate: float
    robust_power: float
    nonrobust_power: float
    robust_outage: bool
    nonrobust_outage: bool
    rr_iterations: int
    crb: float
    rescale_count: int = 0
    status: str = "ok"  # ok | solver_failure | infeasible

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def nonrobust_baseline(g_hat, scenario: Scenario) -> np.ndarray:
    """Matched-filter beam with just enough power for the rate threshold on ``g_hat``.

    Raises:
        DegenerateChannel: if ``g_hat`` is zero.
    """
    g = np.asarray(g_hat, dtype=np.complex128)
    norm2 = float(np.real(np.vdot(g, g)))
    if norm2 == 0.0:
        raise DegenerateChannel("estimated channel is zero")
    big_gamma = scenario.noise_power_comm * snr_threshold(scenario)
    power = big_gamma / norm2
    return math.sqrt(power) * g / math.sqrt(norm2)


def trial_rng(base_seed: int, trial_id: int) -> np.random.Generator:
    return np.random.default_rng([int(base_seed), int(trial_id)])


def run_trial(scenario: Scenario, trial_id: int, base_seed: int, config: rr.RrConfig | None = None) -> TrialRecord:
    """One Monte Carlo trial; solver trouble is recorded in ``status``."""
    return run_trial_detailed(scenario, trial_id, base_seed, config)[0]


def run_trial_detailed(scenario: Scenario, trial_id: int, base_seed: int, config: rr.RrConfig | None = None):
    """Like :func:`run_trial` but also returns the R&R report (``None`` on failure)."""
    config = config or rr.RrConfig()
    rng = trial_rng(base_seed, trial_id)
    u = scenario.user_position
    srv0 = serving_index(scenario, u)
    anchor0, p0 = rr.isotropic_anchor(scenario, u, srv0, build_affine_map(scenario, u))
    u_hat, thetas = rr.draw_estimate(scenario, anchor0.efim0, rng)
    srv = serving_index(scenario, u_hat)

    real = channel_split(u_hat, u - u_hat, srv, scenario)
    w_nr = nonrobust_baseline(real.g_hat, scenario)
    nr_rate = achievable_rate(real.g_true, w_nr, scenario)
    threshold = scenario.rate_threshold

    status = "ok"
    rep = None
    rob_rate = rob_power = crb = math.nan
    iterations = rescales = 0
    try:
        amap = build_affine_map(scenario, u_hat, thetas)
        anchor, _ = rr.isotropic_anchor(scenario, u_hat, srv, amap, start_power=p0, thetas0=anchor0.thetas0)
        rep = rr.run(scenario, config, anchor, u_hat, srv, amap)
        iterations, rescales = rep.iterations, rep.rescale_count
        if rep.feasible:
            beams = rep.beamformers
            rob_rate = achievable_rate(real.g_true, beams.serving_beam, scenario)
            rob_power = beams.total_power
            crb = rr.crb_at(scenario, beams, u)
        else:
            status = "infeasible"
    except SolverFailure as exc:
        status = "solver_failure"
        iterations = exc.iteration or 0
    except NotFeasibleAfterRescale:
        status = "infeasible"
    except RrBeamError:
        status = "solver_failure"
    record = TrialRecord(
        trial_id=int(trial_id),
        ratio=scenario.frame_ratio,
        n_antennas=scenario.n_antennas,
        u_hat=(float(u_hat[0]), float(u_hat[1])),
        serving_index=srv,
        robust_rate=rob_rate,
        nonrobust_rate=nr_rate,
        robust_power=rob_power,
        nonrobust_power=float(np.sum(np.abs(w_nr) ** 2)),
        robust_outage=bool(status == "ok" and rob_rate <= threshold),
        nonrobust_outage=bool(nr_rate <= threshold),
        rr_iterations=iterations,
        crb=crb,
        rescale_count=rescales,
        status=status,
    )
    return record, rep


def _trial_job(args):
    scenario, trial_id, base_seed, config = args
    return run_trial(scenario, trial_id, base_seed, config)


def run_trials(scenario: Scenario, n_trials: int, base_seed: int, config: rr.RrConfig, workers: int = 1) -> list:
    jobs = [(scenario, t, base_seed, config) for t in range(n_trials)]
    if workers <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs, chunksize=max(1, n_trials // (4 * workers))))


class OutageEstimate(NamedTuple):
    probability: float
    low: float
    high: float
    n: int


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def empirical_outage(rates, threshold: float) -> OutageEstimate:
    """Fraction of rates at or below ``threshold`` with a Wilson 95% interval.

    ``rates`` may be numbers or :class:`TrialRecord` (robust rates of successful trials).
    """
    vals = []
    for r in rates:
        if isinstance(r, TrialRecord):
            if r.ok:
                vals.append(r.robust_rate)
        else:
            vals.append(float(r))
    if not vals:
        raise ValueError("no records to estimate an outage probability from")
    k = int(np.sum(np.asarray(vals) <= threshold))
    lo, hi = wilson_interval(k, len(vals))
    return OutageEstimate(k / len(vals), lo, hi, len(vals))


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted samples and the CDF ``k/n`` at each of them."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    return x, np.arange(1, x.size + 1) / x.size


def failure_rate(records) -> float:
    return sum(not r.ok for r in records) / len(records) if records else 0.0


def _fmt(v) -> str:
    return repr(float(v))


def cdf_rows(records) -> list:
    """Rows of ``cdf.csv`` in (ratio, trial id, design) order; failed robust trials are skipped."""
    rows = []
    for rec in sorted(records, key=lambda r: (r.ratio, r.trial_id)):
        if rec.ok:
            rows.append((rec.trial_id, rec.ratio, "robust", rec.robust_rate, rec.robust_power, int(rec.robust_outage)))
        rows.append((rec.trial_id, rec.ratio, "nonrobust", rec.nonrobust_rate, rec.nonrobust_power, int(rec.nonrobust_outage)))
    return rows


def write_cdf_csv(path: str, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "ratio", "design", "rate_bps_hz", "power_w", "outage"])
        for tid, ratio, design, rate, power, out in cdf_rows(records):
            w.writerow([tid, _fmt(ratio), design, _fmt(rate), _fmt(power), out])


def write_cdf_curves(path: str, records) -> None:
    """Sorted-sample CDF per (ratio, design), for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ratio", "design", "rate_bps_hz", "cdf"])
        for ratio in sorted({r.ratio for r in records}):
            sub = [r for r in records if r.ratio == ratio]
            for design in ("robust", "nonrobust"):
                rates = [r.robust_rate for r in sub if r.ok] if design == "robust" else [r.nonrobust_rate for r in sub]
                if not rates:
                    continue
                xs, fs = empirical_cdf(rates)
                for xv, fv in zip(xs, fs):
                    w.writerow([_fmt(ratio), design, _fmt(xv), _fmt(fv)])


@dataclass
class TradeoffRow:
    n_antennas: int
    ratio: float
    mean_crb_m2: float
    mean_rate_bps_hz: float
    mean_power_w: float
    n_ok: int
    n_trials: int


def tradeoff_table(records) -> list:
    groups: dict = {}
    for r in records:
        groups.setdefault((r.n_antennas, r.ratio), []).append(r)
    rows = []
    for (n, ratio), recs in sorted(groups.items()):
        ok = [r for r in recs if r.ok]
        mean = (lambda vals: float(np.mean(vals)) if vals else math.nan)
        rows.append(
            TradeoffRow(
                n,
                ratio,
                mean([r.crb for r in ok]),
                mean([r.robust_rate for r in ok]),
                mean([r.robust_power for r in ok]),
                len(ok),
                len(recs),
            )
        )
    return rows


def write_tradeoff_csv(path: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_antennas", "ratio", "mean_crb_m2", "mean_rate_bps_hz", "mean_power_w"])
        for r in rows:
            w.writerow([r.n_antennas, _fmt(r.ratio), _fmt(r.mean_crb_m2), _fmt(r.mean_rate_bps_hz), _fmt(r.mean_power_w)])


CDF_PLOT = """# gnuplot script: empirical CDF of the realized rate
set datafile separator ","
set terminal pngcairo size 900,600
set output "cdf.png"
set xlabel "rate (bps/Hz)"
set ylabel "CDF"
set key bottom right
set grid
threshold = {threshold}
set arrow from threshold, graph 0 to threshold, graph 1 nohead dashtype 2
plot {plots}
"""

TRADEOFF_PLOT = """# gnuplot script: mean CRB versus mean rate per antenna count
set datafile separator ","
set terminal pngcairo size 900,600
set output "tradeoff.png"
set xlabel "mean rate (bps/Hz)"
set ylabel "mean CRB (m^2)"
set logscale y
set grid
plot {plots}
"""


def write_plot_script(out_dir: str, kind: str, ratios=(), antenna_counts=(), threshold: float = 0.3) -> str:
    """Write a gnuplot script next to the CSV files and return its path."""
    if kind == "cdf":
        parts = []
        for r in ratios:
            for design in ("robust", "nonrobust"):
                parts.append(
                    f"'cdf_curves.csv' every ::1 using ($1=={r!r} && strcol(2) eq \"{design}\" ? $3 : 1/0):4 "
                    f"with steps title \"{design}, r={r:g}\""
                )
        text = CDF_PLOT.format(threshold=threshold, plots=", \\\n     ".join(parts))
        path = os.path.join(out_dir, "plot_cdf.gp")
    elif kind == "tradeoff":
        parts = [
            f"'tradeoff.csv' every ::1 using ($1=={n} ? $4 : 1/0):3 with linespoints title \"N_B={n}\""
            for n in antenna_counts
        ]
        text = TRADEOFF_PLOT.format(plots=", \\\n     ".join(parts))
        path = os.path.join(out_dir, "plot_tradeoff.gp")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def run_mc_cdf(config: ExperimentConfig) -> tuple[list, dict]:
    """Rate CDF experiment at the scenario's antenna count for every frame ratio.

    Returns:
        Records (ratio-major, trial-id order) and a summary dict.
    """
    records = []
    for ratio in config.frame_ratios:
        sc = config.scenario.replace(frame_ratio=ratio)
        records.extend(run_trials(sc, config.trials, config.base_seed, config.rr, config.workers))
    summary = {"failure_rate": failure_rate(records), "outage": {}}
    for ratio in config.frame_ratios:
        sub = [r for r in records if r.ratio == ratio]
        entry = {}
        if any(r.ok for r in sub):
            entry["robust"] = empirical_outage(sub, config.scenario.rate_threshold)._asdict()
        entry["nonrobust"] = empirical_outage([r.nonrobust_rate for r in sub], config.scenario.rate_threshold)._asdict()
        summary["outage"][repr(ratio)] = entry
    return records, summary


def run_tradeoff(config: ExperimentConfig) -> tuple[list, list]:
    """Trade-off sweep over antenna counts and frame ratios."""
    records = []
    for n in config.antenna_counts:
        for ratio in config.frame_ratios:
            sc = config.scenario.replace(n_antennas=n, frame_ratio=ratio)
            records.extend(run_trials(sc, config.trials, config.base_seed, config.rr, config.workers))
    return records, tradeoff_table(records)


def run_validate(seed: int = 0) -> dict:
    """Quick self-checks of the numerical building blocks; returns name -> (ok, detail)."""
    from . import conic, fisher, restriction
    from .conic import ConicProblem, LinearConstraint, LinExpr, SymCoo

    rng = np.random.default_rng(seed)
    checks = {}

    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 9))
        inputs = fisher.FimInputs(
            rng.normal(size=m) + 1j * rng.normal(size=m),
            rng.normal(size=(m, 2)),
            float(rng.uniform(0.1, 2.0)),
            float(rng.uniform(0.01, 1.0)),
            rng.uniform(0.1, 1.0, size=m),
        )
        a = fisher.efim_position(inputs, via="closed_form").matrix
        b = fisher.efim_position(inputs, via="assembly").matrix
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(a)))
    checks["efim_routes_agree"] = (worst <= 1e-9, f"max relative difference {worst:.2e}")

    prob = ConicProblem(
        blocks=(("X", 2),),
        scalars=(),
        objective=LinExpr({"X": (1.0, SymCoo.from_dense(np.eye(2)))}),
        constraints=(LinearConstraint("ge", LinExpr({"X": (1.0, SymCoo.from_dense(np.diag([2.0, 1.0])))}, constant=-1.0)),),
    )
    sol = conic.solve(prob)
    checks["conic_analytic"] = (
        sol.status == "optimal" and abs(sol.objective - 0.5) <= 1e-6,
        f"status {sol.status}, objective {sol.objective:.9f}",
    )

    zeta = 3.0
    S = np.eye(2)
    bound = restriction.bernstein_bound(S, np.zeros(2), zeta)
    chi = restriction.quadratic_form_samples(S, np.zeros(2), 100_000, rng)
    p = float(np.mean(chi >= bound))
    lim = math.exp(-zeta) + 3.0 * math.sqrt(math.exp(-zeta) * (1 - math.exp(-zeta)) / chi.size)
    checks["bernstein_tail"] = (p <= lim, f"empirical {p:.4f} vs limit {lim:.4f}")
    return checks


def records_to_json(records) -> list:
    out = []
    for r in records:
        d = asdict(r)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        out.append(d)
    return out
