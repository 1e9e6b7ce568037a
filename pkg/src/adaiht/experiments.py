"""Seeded Monte Carlo harness.

A :class:`ScenarioConfig` fixes the problem size, noise, signal profile and
the estimators to compare.  Each replication derives its own seed from
``(master_seed, scenario name, replication index)``; the same replication
seed is reused across the ``a_over_astar`` grid so signal strengths are
compared on common draws.  Output rows are sorted before emission, so the
CSV is identical for any worker count.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .adaptive import DEFAULT_PENALTY, run_early_stopping, run_iteration_selection
from .baselines import default_lasso_penalty, iht_top_s, ista_lasso, oracle_ls
from .engine import DEFAULT_MAX_ITER, IterateRecord, IterateTrace, run_nonadaptive
from .exceptions import ConfigError
from .model import (DESIGN_KINDS, MAGNITUDE_KINDS, NOISE_KINDS, SparseVector, derive_seed, effective_noise,
                    event_O_holds, generate_design, sample_signal, synthesize_instance, universal_separation)
from .sharp import hamming_error, run_sharp, support_decoder

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ScenarioConfig",
    "ReplicationRecord",
    "SummaryRow",
    "SUMMARY_COLUMNS",
    "RESULT_COLUMNS",
    "ESTIMATORS",
    "load_scenarios",
    "parse_override",
    "run_replication",
    "run_scenario",
    "aggregate",
    "emit_csv",
    "read_records_csv",
    "emit_summary_csv",
    "emit_plot_data",
    "format_summary",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("nonadaptive", "early_stopping", "iteration_selection", "sharp_estimation",
              "sharp_recovery", "iht_top_s", "ista_lasso", "oracle_ls")

RESULT_COLUMNS = ("scenario", "replication", "estimator", "n", "p", "s", "sigma", "a_over_astar", "seed",
                  "l2_error_sq", "normalized_error", "hamming", "exact_recovery", "nnz", "iterations",
                  "event_O", "wall_time_ms")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    p: int
    s: int
    name: str = "scenario"
    sigma: float = 1.0
    a_over_astar: tuple = (2.0,)
    a_units: str = "astar"
    kappa: float = 0.25
    epsilon: float = 0.25
    recovery_epsilon: float | None = None
    design_kind: str = "gaussian"
    design_path: str | None = None
    perturbation: float = 0.01
    normalize: bool = True
    fixed_design: bool = False
    noise_kind: str = "gaussian"
    magnitude_kind: str = "uniform"
    replications: int = 10
    master_seed: int = 0
    estimators: tuple = ("iteration_selection", "sharp_estimation", "ista_lasso", "oracle_ls")
    penalty_const: float = DEFAULT_PENALTY
    max_iter: int = DEFAULT_MAX_ITER
    sharp_steps: int | None = None
    recovery_steps: int | None = None
    sharp_adaptive_sigma: bool = False
    top_s_iters: int = 100
    lasso_lambda: float | None = None
    lasso_iters: int = 2000
    lasso_tol: float = 1e-9
    lasso_step: str = "spectral"
    record_timing: bool = False

    def __post_init__(self):
        if isinstance(self.a_over_astar, (int, float)):
            object.__setattr__(self, "a_over_astar", (float(self.a_over_astar),))
        object.__setattr__(self, "a_over_astar", tuple(float(a) for a in self.a_over_astar))
        if isinstance(self.estimators, str):
            object.__setattr__(self, "estimators", (self.estimators,))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise ConfigError(f"scenario {self.name!r}: {msg}")

        for key in ("n", "p", "s", "replications", "max_iter", "top_s_iters", "lasso_iters"):
            if not isinstance(getattr(self, key), int) or isinstance(getattr(self, key), bool):
                bad(f"{key} must be an integer")
        if self.n < 1 or self.p < 1:
            bad("n and p must be positive")
        if not 1 <= self.s <= self.p / 3:
            bad(f"need 1 <= s <= p/3, got s={self.s}, p={self.p}")
        if self.replications < 1:
            bad("replications must be at least 1")
        if self.sigma < 0:
            bad("sigma must be nonnegative")
        if not self.a_over_astar or any(a < 0 for a in self.a_over_astar):
            bad("a_over_astar must be a nonempty grid of nonnegative values")
        if self.a_units not in ("astar", "absolute"):
            bad("a_units must be 'astar' or 'absolute'")
        if self.a_units == "astar" and self.sigma == 0:
            bad("a_units = 'astar' needs sigma > 0 (a* vanishes); use a_units = 'absolute'")
        if not 0 < self.kappa < 1:
            bad("kappa must lie in (0, 1)")
        if not 0 < self.epsilon < 1:
            bad("epsilon must lie in (0, 1)")
        if self.recovery_epsilon is not None and self.recovery_epsilon <= 0:
            bad("recovery_epsilon must be positive")
        if self.design_kind not in DESIGN_KINDS:
            bad(f"design_kind must be one of {DESIGN_KINDS}")
        if self.design_kind == "from_file" and not self.design_path:
            bad("from_file design needs design_path")
        if self.noise_kind not in NOISE_KINDS:
            bad(f"noise_kind must be one of {NOISE_KINDS}")
        if self.magnitude_kind not in MAGNITUDE_KINDS:
            bad(f"magnitude_kind must be one of {MAGNITUDE_KINDS}")
        if not self.estimators:
            bad("no estimators requested")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            bad(f"unknown estimators {sorted(unknown)}")
        if self.penalty_const <= 0:
            bad("penalty_const must be positive")
        if self.lasso_step not in ("spectral", "max_col_norm"):
            bad("lasso_step must be 'spectral' or 'max_col_norm'")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"n", "p", "s"} - set(mapping)
        if missing:
            raise ConfigError(f"missing required config keys: {sorted(missing)}")
        try:
            return cls(**mapping)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)


def parse_override(text: str) -> tuple[str, object]:
    """Parse ``key=value``; the value is read as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = (part.strip() for part in text.split("=", 1))
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_scenarios(path, overrides: list[str] = ()) -> list[ScenarioConfig]:
    """Read scenarios from a TOML file.

    Either flat top-level ``key = value`` pairs (one scenario) or one table
    per scenario, ``[scenario.NAME]``; top-level keys then act as shared
    defaults.  Overrides are applied to every scenario after parsing.
    """
    try:
        data = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    parsed = dict(parse_override(o) for o in overrides)
    tables = data.pop("scenario", None)
    if tables is None:
        return [ScenarioConfig.from_mapping({**data, **parsed})]
    if not isinstance(tables, dict) or not tables:
        raise ConfigError(f"{path}: [scenario.*] tables expected")
    out = []
    for name, table in tables.items():
        out.append(ScenarioConfig.from_mapping({**data, "name": name, **table, **parsed}))
    return out


@dataclass(frozen=True)
class ReplicationRecord:
    scenario: str
    replication: int
    estimator: str
    n: int
    p: int
    s: int
    sigma: float
    a_over_astar: float
    seed: int
    l2_error_sq: float
    normalized_error: float
    hamming: int
    exact_recovery: bool
    nnz: int
    iterations: int
    event_O: bool
    wall_time_ms: float = 0.0

    def as_row(self) -> dict:
        row = {}
        for key in RESULT_COLUMNS:
            v = getattr(self, key)
            if isinstance(v, bool):
                row[key] = int(v)
            elif isinstance(v, float):
                row[key] = repr(v)
            else:
                row[key] = v
        return row

    @classmethod
    def from_row(cls, row: dict) -> "ReplicationRecord":
        kw = {}
        for f in dataclasses.fields(cls):
            raw = row[f.name]
            if f.type in ("bool",):
                kw[f.name] = bool(int(raw))
            elif f.type in ("int",):
                kw[f.name] = int(raw)
            elif f.type in ("float",):
                kw[f.name] = float(raw)
            else:
                kw[f.name] = raw
        return cls(**kw)


def _normalized(l2: float, sq_norm: float, sigma: float) -> float:
    if sigma > 0:
        return l2 * sq_norm / sigma ** 2
    return 0.0 if l2 == 0 else math.inf


def _baseline_trace(beta_hat: np.ndarray, y: np.ndarray, X: np.ndarray, beta_true: np.ndarray,
                    iterations: int) -> IterateTrace:
    r = y - X @ beta_hat
    diff = beta_hat - beta_true
    rec = IterateRecord(m=iterations, lambda_m=0.0, beta_hat=SparseVector.from_dense(beta_hat),
                        residual_norm_sq=float(r @ r), sigma_hat=math.sqrt(float(r @ r) / len(y)),
                        l2_error_sq=float(diff @ diff),
                        off_support_count=int(np.count_nonzero(beta_hat[beta_true == 0])))
    return IterateTrace(iterates=[rec], stop_index=0, stop_reason="max_iter")


def _build_instance(config: ScenarioConfig, replication: int, a_ratio: float):
    seed = derive_seed(config.master_seed, config.name, replication)
    design_seed = (derive_seed(config.master_seed, config.name, "design") if config.fixed_design
                   else derive_seed(seed, "design"))
    design = generate_design(config.design_kind, config.n, config.p, config.normalize, design_seed,
                             path=config.design_path, perturbation=config.perturbation)
    if config.a_units == "astar":
        a = a_ratio * universal_separation(config.sigma, design.max_col_norm, config.p, config.s)
    else:
        a = a_ratio
    beta = sample_signal(config.p, config.s, a, config.magnitude_kind, derive_seed(seed, "signal"))
    inst = synthesize_instance(design, beta, config.sigma, config.noise_kind, derive_seed(seed, "noise"))
    return seed, inst


def run_replication(config: ScenarioConfig, replication: int, a_ratio: float,
                    keep_traces: bool = False):
    """All requested estimators on one instance.

    Returns the list of records, and with ``keep_traces`` also a dict
    ``estimator -> IterateTrace``.
    """
    seed, inst = _build_instance(config, replication, a_ratio)
    design, y = inst.design, inst.y
    beta_true = inst.beta_true.to_dense()
    eta = support_decoder(beta_true)
    holds, _ = event_O_holds(effective_noise(inst), config.s, config.sigma, design.max_col_norm)
    sigma_known = config.sigma
    records, traces = [], {}
    selection = None

    def selection_run():
        nonlocal selection
        if selection is None:
            selection = run_iteration_selection(design, y, config.kappa, config.penalty_const, config.max_iter,
                                                beta_true)
        return selection

    for name in ESTIMATORS:
        if name not in config.estimators:
            continue
        t0 = time.perf_counter()
        if name == "nonadaptive":
            trace = run_nonadaptive(design, y, config.s, sigma_known, config.kappa, config.max_iter, beta_true)
            iterations = trace.stop_index
        elif name == "early_stopping":
            trace = run_early_stopping(design, y, config.kappa, config.max_iter, beta_true)
            iterations = trace.stop_index
        elif name == "iteration_selection":
            trace, _, T_hat = selection_run()
            iterations = T_hat + trace.info["m_bar"]
        elif name in ("sharp_estimation", "sharp_recovery"):
            warm, _, T_hat = selection_run()
            mode = "estimation" if name == "sharp_estimation" else "recovery"
            eps = config.epsilon if mode == "estimation" or config.recovery_epsilon is None \
                else config.recovery_epsilon
            steps = config.sharp_steps if mode == "estimation" else config.recovery_steps
            sigma = None if config.sharp_adaptive_sigma else sigma_known
            trace, _ = run_sharp(design, y, eps, mode, config.s, sigma, steps, warm_start=warm.beta_hat,
                                 beta_true=beta_true)
            iterations = T_hat + warm.info["m_bar"] + trace.stop_index
        elif name == "iht_top_s":
            res = iht_top_s(design, y, config.s, config.top_s_iters)
            trace = _baseline_trace(res.beta_hat, y, design.values, beta_true, res.iterations_used)
            iterations = res.iterations_used
        elif name == "ista_lasso":
            lam = config.lasso_lambda
            if lam is None:
                lam = default_lasso_penalty(sigma_known, design.n, design.p)
            res = ista_lasso(design, y, lam, config.lasso_iters, config.lasso_tol, config.lasso_step)
            trace = _baseline_trace(res.beta_hat, y, design.values, beta_true, res.iterations_used)
            iterations = res.iterations_used
        else:
            res = oracle_ls(design, y, inst.beta_true.support)
            trace = _baseline_trace(res.beta_hat, y, design.values, beta_true, 0)
            iterations = 0
        elapsed = (time.perf_counter() - t0) * 1000 if config.record_timing else 0.0
        beta_hat = trace.beta_hat
        l2 = float(trace.final.l2_error_sq)
        ham = hamming_error(support_decoder(beta_hat), eta)
        records.append(ReplicationRecord(
            scenario=config.name, replication=replication, estimator=name, n=config.n, p=config.p, s=config.s,
            sigma=float(config.sigma), a_over_astar=float(a_ratio), seed=seed, l2_error_sq=l2,
            normalized_error=_normalized(l2, design.sq_max_col_norm, config.sigma), hamming=ham,
            exact_recovery=ham == 0, nnz=int(np.count_nonzero(beta_hat)), iterations=int(iterations),
            event_O=bool(holds), wall_time_ms=float(elapsed)))
        traces[name] = trace
    if keep_traces:
        return records, traces
    return records


def _task(args):
    config, replication, a_ratio = args
    with threadpool_limits(limits=1):
        return run_replication(config, replication, a_ratio)


def _sort_key(config: ScenarioConfig):
    order = {name: i for i, name in enumerate(ESTIMATORS)}
    return lambda r: (r.a_over_astar, r.replication, order[r.estimator])


def run_scenario(config: ScenarioConfig, threads: int = 1) -> list[ReplicationRecord]:
    """Every (grid value, replication) pair; output order is fixed."""
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    adaptive = {"early_stopping", "iteration_selection", "sharp_estimation", "sharp_recovery"}
    if adaptive & set(config.estimators) and config.n <= 14000 * config.s * math.log(math.e * config.p):
        log.info("scenario %s: n=%d is below 14000 s log(ep); adaptive guarantees are not in force",
                 config.name, config.n)
    tasks = [(config, r, a) for a in config.a_over_astar for r in range(config.replications)]
    if threads == 1 or len(tasks) == 1:
        chunks = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_task, tasks))
    records = [rec for chunk in chunks for rec in chunk]
    return sorted(records, key=_sort_key(config))


# --------------------------------------------------------------------------
# aggregation and output

@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    estimator: str
    a_over_astar: float
    s: int
    count: int
    q10: float
    median: float
    q90: float
    median_per_s: float
    mean_hamming_per_s: float
    exact_recovery_freq: float
    mean_iterations: float
    event_O_freq: float


SUMMARY_COLUMNS = tuple(f.name for f in dataclasses.fields(SummaryRow))


def aggregate(records) -> list[SummaryRow]:
    """Median and 10/90% quantiles of ``normalized_error`` per group."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.scenario, r.estimator, r.a_over_astar, r.s), []).append(r)
    order = {name: i for i, name in enumerate(ESTIMATORS)}
    out = []
    for (scenario, estimator, a, s), rows in sorted(groups.items(),
                                                    key=lambda kv: (kv[0][0], kv[0][2], order.get(kv[0][1], 99))):
        err = np.array([r.normalized_error for r in rows])
        q10, q50, q90 = (float(v) for v in np.quantile(err, [0.1, 0.5, 0.9]))
        out.append(SummaryRow(
            scenario=scenario, estimator=estimator, a_over_astar=a, s=s, count=len(rows),
            q10=q10, median=q50, q90=q90, median_per_s=q50 / s,
            mean_hamming_per_s=float(np.mean([r.hamming for r in rows])) / s,
            exact_recovery_freq=float(np.mean([r.exact_recovery for r in rows])),
            mean_iterations=float(np.mean([r.iterations for r in rows])),
            event_O_freq=float(np.mean([r.event_O for r in rows]))))
    return out


def emit_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow(r.as_row())


def read_records_csv(path) -> list[ReplicationRecord]:
    with Path(path).open(newline="") as fh:
        return [ReplicationRecord.from_row(row) for row in csv.DictReader(fh)]


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def emit_summary_csv(report, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in report:
            writer.writerow([_fmt(getattr(row, c)) for c in SUMMARY_COLUMNS])


def emit_plot_data(report, path) -> None:
    """One block per scenario: ``estimator, x, y, lo, hi`` in per-coordinate units."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "estimator", "x", "y", "lo", "hi"])
        for row in report:
            writer.writerow([row.scenario, row.estimator, repr(row.a_over_astar), repr(row.median_per_s),
                             repr(row.q10 / row.s), repr(row.q90 / row.s)])


def format_summary(report) -> str:
    lines = [f"{'scenario':<16} {'estimator':<20} {'a/a*':>6} {'n':>5} {'median/s':>10} {'q10/s':>9} "
             f"{'q90/s':>9} {'ham/s':>7} {'exact':>6} {'iters':>7} {'O':>5}"]
    for r in report:
        lines.append(f"{r.scenario:<16} {r.estimator:<20} {r.a_over_astar:>6.3g} {r.count:>5d} "
                     f"{r.median_per_s:>10.4g} {r.q10 / r.s:>9.4g} {r.q90 / r.s:>9.4g} "
                     f"{r.mean_hamming_per_s:>7.3f} {r.exact_recovery_freq:>6.2f} {r.mean_iterations:>7.1f} "
                     f"{r.event_O_freq:>5.2f}")
    return "\n".join(lines)
