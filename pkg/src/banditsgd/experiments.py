"""Experiment orchestration: configs, single runs, Monte Carlo suites, tuning.

A configuration is one flat record of plain values, loadable from a
``key = value`` text file, with every knob a command-line flag can override.
Replication ``i`` of a suite draws its randomness from the stream seeded with
``seed XOR splitmix64(i)``, so suites are reproducible, replications are
independent, and parallel and serial execution produce identical results.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .engine import Checkpoint, run_stream
from .environments import (ReplayCursor, ReplayEnvironment, SyntheticConfig,
                           SyntheticEnvironment, load_replay_log)
from .inference import (SingularHessianError, normal_quantile, sandwich_covariance,
                        value_report_row, wald_report)
from .models import make_model
from .policy import RngStream, derive_seed, exploration_rate
from .types import ExplorationSchedule, InferenceReport, LearningSchedule, ReportRow
from .value import (oracle_value, raw_value_variance, value_estimate,
                    value_standard_error)

DEFAULT_BETA0_P3 = (0.3, -0.1, 0.7, 0.8, 0.5, -0.4)
DEFAULT_CHECKPOINT_GRID = (1_000, 10_000, 100_000)
# Replication index space is far below this; keeps the oracle stream disjoint.
_ORACLE_STREAM_INDEX = 2 ** 48


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Every knob of an experiment, flat and serializable."""

    model: str = "linear"
    p: int = 3
    beta0: tuple[float, ...] | None = None
    sigma2: float = 0.01
    alpha: float = 0.5
    gamma: float = 0.501
    eps: str = "fixed:0.2"
    burn_in: int = 50
    horizon: int = 10_000
    reps: int = 1000
    seed: int = 20090501
    checkpoints: tuple[int, ...] | None = None
    hessian: str = "exact"
    aipw: bool = False
    ridge: bool = False
    level: float = 0.95
    workers: int = 1
    value_skip_burn_in: bool = False
    oracle_draws: int = 1_000_000
    replay_log: str | None = None
    trace: str | None = None
    out: str = "results"
    format: str = "csv"

    def validate(self) -> "ExperimentConfig":
        if self.model not in ("linear", "logistic"):
            raise ConfigError(f"model must be 'linear' or 'logistic', got {self.model!r}")
        if self.p < 1:
            raise ConfigError("p must be at least 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")
        if self.hessian not in ("exact", "outer"):
            raise ConfigError(f"hessian must be 'exact' or 'outer', got {self.hessian!r}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("confidence level must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        beta0 = self.beta0_array()
        if beta0.shape[0] != 2 * self.p:
            raise ConfigError(f"beta0 has length {beta0.shape[0]}, expected {2 * self.p}")
        for t in self.effective_checkpoints():
            if not 1 <= t <= self.horizon:
                raise ConfigError(f"checkpoint {t} outside [1, {self.horizon}]")
        self.exploration_schedule()
        self.learning_schedule()
        return self

    def beta0_array(self) -> np.ndarray:
        if self.beta0 is not None:
            return np.asarray(self.beta0, dtype=np.float64)
        if self.p == 3:
            return np.asarray(DEFAULT_BETA0_P3)
        raise ConfigError("beta0 is required when p != 3")

    def effective_checkpoints(self) -> tuple[int, ...]:
        if self.checkpoints is not None:
            return tuple(sorted(set(int(t) for t in self.checkpoints)))
        # Default reporting grid, always including the final step so that a
        # short run still produces a report.
        grid = set(t for t in DEFAULT_CHECKPOINT_GRID if 1 <= t <= self.horizon)
        grid.add(self.horizon)
        return tuple(sorted(grid))

    def learning_schedule(self) -> LearningSchedule:
        return LearningSchedule(alpha=self.alpha, gamma=self.gamma)

    def exploration_schedule(self) -> ExplorationSchedule:
        return parse_eps_spec(self.eps, self.burn_in)

    def model_family(self):
        return make_model(self.model, self.p, sigma2=self.sigma2)

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(self.model_family(), self.beta0_array(), sigma2=self.sigma2)


def parse_eps_spec(spec: str, burn_in: int) -> ExplorationSchedule:
    """Parse ``fixed:F`` or ``decay:EXPONENT,FLOOR``."""
    try:
        kind, _, rest = spec.partition(":")
        if kind == "fixed":
            return ExplorationSchedule.fixed(float(rest), burn_in=burn_in)
        if kind == "decay":
            exp_s, floor_s = rest.split(",")
            return ExplorationSchedule.decaying(float(exp_s), float(floor_s), burn_in=burn_in)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad exploration spec {spec!r}: {exc}") from None
    raise ConfigError(f"bad exploration spec {spec!r}; use fixed:F or decay:EXP,FLOOR")


# ---------------------------------------------------------------------------
# Config file handling.
# ---------------------------------------------------------------------------

_BOOL_FIELDS = {"aipw", "ridge", "value_skip_burn_in"}
_INT_FIELDS = {"p", "burn_in", "horizon", "reps", "seed", "workers", "oracle_draws"}
_FLOAT_FIELDS = {"sigma2", "alpha", "gamma", "level"}
_TUPLE_FLOAT_FIELDS = {"beta0"}
_TUPLE_INT_FIELDS = {"checkpoints"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _TUPLE_FLOAT_FIELDS:
            return tuple(float(v) for v in raw.split(","))
        if key in _TUPLE_INT_FIELDS:
            return tuple(int(v) for v in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return raw


def load_config_file(path) -> dict:
    """Read a flat ``key = value`` config file (# starts a comment)."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, raw)
    return out


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then config-file values, then explicit overrides."""
    cfg = ExperimentConfig()
    for source in (file_values or {}), (overrides or {}):
        clean = {k: v for k, v in source.items() if v is not None}
        if clean:
            cfg = replace(cfg, **clean)
    return cfg.validate()


# ---------------------------------------------------------------------------
# Single runs.
# ---------------------------------------------------------------------------

@dataclass
class SingleRunOutput:
    reports: dict[int, InferenceReport]
    paths: list[Path]
    steps: int
    total_reward: float
    replay_stats: dict | None = None


def _checkpoint_report(cp, config: ExperimentConfig) -> InferenceReport:
    """Wald report for one checkpoint; singular curvature flags rows instead of failing."""
    flag = ""
    try:
        cov = sandwich_covariance(cp.plugin)
    except SingularHessianError:
        if config.ridge:
            try:
                cov = sandwich_covariance(cp.plugin, ridge=True)
                flag = "ridge"
            except SingularHessianError:
                cov = None
                flag = "singular_hessian"
        else:
            cov = None
            flag = "singular_hessian"
    if cov is not None:
        report = wald_report(cp.bar_beta, cov, level=config.level)
        if flag:
            for row in report.rows:
                row.flag = flag
    else:
        report = InferenceReport(level=config.level)
        for j, name in enumerate([f"beta0_{i + 1}" for i in range(config.p)]
                                 + [f"beta1_{i + 1}" for i in range(config.p)]):
            report.rows.append(ReportRow(
                name=name, estimate=float(cp.bar_beta[j]), se=math.nan,
                ci_lo=math.nan, ci_hi=math.nan, t_value=math.nan,
                p_value=math.nan, flag=flag))
    v_est = value_estimate(cp.value)
    v_flag = "variance_clamped" if raw_value_variance(cp.value, cp.eps) < 0 else ""
    v_se = value_standard_error(cp.value, cp.eps)
    report.rows.append(value_report_row(v_est, v_se, config.level, flag=v_flag))
    if config.aipw:
        a_est = value_estimate(cp.value, aipw=True)
        a_var = raw_value_variance(cp.value, cp.eps, aipw=True)
        a_se = math.sqrt(max(a_var, 0.0) / cp.value.t)
        row = value_report_row(a_est, a_se, config.level, flag="experimental")
        row.name = "V_opt_aipw"
        report.rows.append(row)
    return report


def run_single(config: ExperimentConfig) -> SingleRunOutput:
    """One seeded stream; writes one report file per checkpoint."""
    config.validate()
    model = config.model_family()
    rng = RngStream(config.seed)
    cursor = None
    if config.replay_log is not None:
        cursor = ReplayCursor(load_replay_log(config.replay_log))
        env = ReplayEnvironment(cursor)
    else:
        env = SyntheticEnvironment(config.synthetic_config(), rng)
    checkpoints = config.effective_checkpoints()
    result = run_stream(
        env, model, config.learning_schedule(), config.exploration_schedule(),
        rng, config.horizon, hessian=config.hessian, aipw=config.aipw,
        checkpoints=checkpoints, trace_path=config.trace,
        skip_value_burn_in=config.value_skip_burn_in,
    )
    snapshots = {cp.t: cp for cp in result.summary.checkpoints}
    if result.summary.exhausted and result.summary.steps >= 1 \
            and result.summary.steps not in snapshots:
        # Replay ran out of entries early; report at the final matched step.
        snapshots[result.summary.steps] = Checkpoint(
            t=result.summary.steps, bar_beta=result.state.bar_beta,
            eps=exploration_rate(config.exploration_schedule(), result.summary.steps),
            plugin=result.plugin, value=result.value)
    reports: dict[int, InferenceReport] = {}
    paths: list[Path] = []
    out_dir = Path(config.out)
    for t in sorted(snapshots):
        report = _checkpoint_report(snapshots[t], config)
        reports[t] = report
        paths.append(emit_report(report, config.format, out_dir / f"report_t{t}.{config.format}"))
    replay_stats = None
    if cursor is not None:
        replay_stats = {
            "entries": len(cursor.entries), "consumed": cursor.consumed,
            "matched": cursor.matched, "skipped": cursor.skipped,
            "matched_fraction": cursor.matched / cursor.consumed if cursor.consumed else math.nan,
        }
        stats_path = out_dir / f"replay_stats.{config.format}"
        paths.append(emit_report(replay_stats, config.format, stats_path))
    return SingleRunOutput(reports=reports, paths=paths, steps=result.summary.steps,
                           total_reward=result.summary.total_reward,
                           replay_stats=replay_stats)


# ---------------------------------------------------------------------------
# Monte Carlo suites.
# ---------------------------------------------------------------------------

@dataclass
class RepCheckpoint:
    t: int
    eps: float
    bar_beta: np.ndarray
    se: np.ndarray | None
    beta_flag: str
    value_est: float
    value_se: float
    value_flag: str
    value_aipw_est: float | None = None
    value_aipw_se: float | None = None


@dataclass
class RepResult:
    rep: int
    seed: int
    checkpoints: list[RepCheckpoint] = field(default_factory=list)
    error: str | None = None


def run_replication(config: ExperimentConfig, rep: int, rep_seed: int | None = None,
                    collect_inference: bool = True) -> RepResult:
    """One Monte Carlo replication with its own derived random stream."""
    seed_r = derive_seed(config.seed, rep) if rep_seed is None else rep_seed
    out = RepResult(rep=rep, seed=seed_r)
    try:
        model = config.model_family()
        rng = RngStream(seed_r)
        env = SyntheticEnvironment(config.synthetic_config(), rng)
        result = run_stream(
            env, model, config.learning_schedule(), config.exploration_schedule(),
            rng, config.horizon, hessian=config.hessian, aipw=config.aipw,
            collect_inference=collect_inference,
            checkpoints=config.effective_checkpoints(),
            skip_value_burn_in=config.value_skip_burn_in,
        )
        for cp in result.summary.checkpoints:
            se = None
            flag = ""
            if collect_inference:
                try:
                    cov = sandwich_covariance(cp.plugin)
                except SingularHessianError:
                    cov = None
                    flag = "singular_hessian"
                    if config.ridge:
                        try:
                            cov = sandwich_covariance(cp.plugin, ridge=True)
                            flag = "ridge"
                        except SingularHessianError:
                            cov = None
                if cov is not None:
                    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
            v_est = value_estimate(cp.value)
            v_flag = "variance_clamped" if raw_value_variance(cp.value, cp.eps) < 0 else ""
            v_se = value_standard_error(cp.value, cp.eps)
            rc = RepCheckpoint(t=cp.t, eps=cp.eps, bar_beta=cp.bar_beta, se=se,
                               beta_flag=flag, value_est=v_est, value_se=v_se,
                               value_flag=v_flag)
            if config.aipw:
                rc.value_aipw_est = value_estimate(cp.value, aipw=True)
                a_var = max(raw_value_variance(cp.value, cp.eps, aipw=True), 0.0)
                rc.value_aipw_se = math.sqrt(a_var / cp.value.t)
            out.checkpoints.append(rc)
    except Exception as exc:  # noqa: BLE001 - failures are recorded, not fatal
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _mc_worker(args) -> RepResult:
    config, rep, rep_seed, collect_inference = args
    return run_replication(config, rep, rep_seed, collect_inference)


def _map_jobs(worker, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [worker(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(worker, jobs, chunksize=chunk))


@dataclass
class McRow:
    t: int
    name: str
    ratio: float
    coverage: float
    coverage_se: float
    ci_length: float
    n_used: int
    n_excluded: int


@dataclass
class MonteCarloSummary:
    level: float
    reps: int
    truth_value: float
    truth_value_se: float
    failures: int
    rows: list[McRow] = field(default_factory=list)

    def row(self, t: int, name: str) -> McRow:
        for r in self.rows:
            if r.t == t and r.name == name:
                return r
        raise KeyError((t, name))


def oracle_truth_value(config: ExperimentConfig) -> tuple[float, float]:
    """Monte Carlo value of the greedy rule under the configured truth."""
    rng = RngStream(derive_seed(config.seed, _ORACLE_STREAM_INDEX))
    return oracle_value(config.model_family(), config.beta0_array(),
                        config.oracle_draws, rng)


def run_monte_carlo(config: ExperimentConfig, rep_seeds=None,
                    collect_inference: bool = True,
                    write: bool = True) -> MonteCarloSummary:
    """R independent replications summarized as SE/SD ratio, coverage, CI length.

    ``rep_seeds`` overrides the derived per-replication seeds (testing hook).
    ``collect_inference=False`` skips the parameter accumulators, halving the
    per-step cost when only value statistics are needed.
    """
    config.validate()
    if config.reps < 2:
        raise ConfigError("Monte Carlo suites need at least 2 replications")
    if rep_seeds is not None and len(rep_seeds) != config.reps:
        raise ConfigError("rep_seeds must have one entry per replication")
    truth_beta = config.beta0_array()
    truth_value, truth_value_se = oracle_truth_value(config)
    jobs = [(config, i, None if rep_seeds is None else int(rep_seeds[i]), collect_inference)
            for i in range(config.reps)]
    results = _map_jobs(_mc_worker, jobs, config.workers)
    failures = sum(1 for r in results if r.error is not None)
    ok = [r for r in results if r.error is None]
    z = normal_quantile(0.5 * (1.0 + config.level))
    names = [f"beta0_{j + 1}" for j in range(config.p)] \
        + [f"beta1_{j + 1}" for j in range(config.p)]
    summary = MonteCarloSummary(level=config.level, reps=config.reps,
                                truth_value=truth_value, truth_value_se=truth_value_se,
                                failures=failures)
    for t in config.effective_checkpoints():
        per_rep = [next(c for c in r.checkpoints if c.t == t) for r in ok]
        if collect_inference:
            with_se = [c for c in per_rep if c.se is not None]
            n_excl = len(per_rep) - len(with_se) + failures
            for j, name in enumerate(names):
                if len(with_se) >= 2:
                    est = np.array([c.bar_beta[j] for c in with_se])
                    se = np.array([c.se[j] for c in with_se])
                    sd = float(est.std(ddof=1))
                    ratio = float(se.mean() / sd) if sd > 0 else math.nan
                    covered = np.abs(est - truth_beta[j]) <= z * se
                    cov = float(covered.mean())
                    cov_se = math.sqrt(cov * (1.0 - cov) / len(with_se))
                    length = float((2.0 * z * se).mean())
                else:
                    ratio = cov = cov_se = length = math.nan
                summary.rows.append(McRow(t, name, ratio, cov, cov_se, length,
                                          len(with_se), n_excl))
        v_rows = [("V_opt", [(c.value_est, c.value_se) for c in per_rep])]
        if config.aipw:
            v_rows.append(("V_opt_aipw",
                           [(c.value_aipw_est, c.value_aipw_se) for c in per_rep]))
        for name, pairs in v_rows:
            est = np.array([p[0] for p in pairs])
            se = np.array([p[1] for p in pairs])
            if len(est) >= 2:
                sd = float(est.std(ddof=1))
                ratio = float(se.mean() / sd) if sd > 0 else math.nan
                covered = np.abs(est - truth_value) <= z * se
                cov = float(covered.mean())
                cov_se = math.sqrt(cov * (1.0 - cov) / len(est))
                length = float((2.0 * z * se).mean())
            else:
                ratio = cov = cov_se = length = math.nan
            summary.rows.append(McRow(t, name, ratio, cov, cov_se, length,
                                      len(est), failures))
    if write:
        out_dir = Path(config.out)
        emit_report(summary, config.format, out_dir / f"mc_summary.{config.format}")
        meta = {"reps": config.reps, "failures": failures, "seed": config.seed,
                "truth_value": truth_value, "truth_value_se": truth_value_se,
                "level": config.level}
        emit_report(meta, "json", out_dir / "mc_meta.json")
    return summary


# ---------------------------------------------------------------------------
# Learning-rate tuning by streaming loss.
# ---------------------------------------------------------------------------

@dataclass
class TuneAlphaRow:
    alpha: float
    t: int
    loss_mean: float
    loss_p05: float
    loss_p95: float


@dataclass
class TuneAlphaResult:
    rows: list[TuneAlphaRow]
    final_loss: dict[float, float]
    best_alpha: float


def _tune_worker(args):
    config, alpha, rep, grid = args
    cfg = replace(config, alpha=alpha)
    rng = RngStream(derive_seed(cfg.seed, rep))
    model = cfg.model_family()
    env = SyntheticEnvironment(cfg.synthetic_config(), rng)
    result = run_stream(env, model, cfg.learning_schedule(), cfg.exploration_schedule(),
                        rng, cfg.horizon, collect_inference=False, collect_value=False,
                        record_losses=True)
    # Running average of the pre-update losses: smooth, and its final point is
    # the mean per-step loss of the whole run.
    cum = np.cumsum(result.summary.losses) / np.arange(1, cfg.horizon + 1)
    return alpha, rep, cum[grid - 1]


def loss_grid(horizon: int, points: int = 60) -> np.ndarray:
    """Log-spaced step indices at which tuning trajectories are reported."""
    return np.unique(np.geomspace(1, horizon, num=min(points, horizon)).astype(int))


def tune_alpha(config: ExperimentConfig, alpha_grid, write: bool = True) -> TuneAlphaResult:
    """Compare running mean loss across step-size constants; lowest final wins."""
    config.validate()
    alphas = [float(a) for a in alpha_grid]
    if not alphas:
        raise ConfigError("alpha grid must not be empty")
    if any(a <= 0 for a in alphas):
        raise ConfigError("alpha grid entries must be positive")
    grid = loss_grid(config.horizon)
    jobs = [(config, a, r, grid) for a in alphas for r in range(config.reps)]
    results = _map_jobs(_tune_worker, jobs, config.workers)
    rows: list[TuneAlphaRow] = []
    final_loss: dict[float, float] = {}
    for a in alphas:
        traj = np.vstack([c for (aa, _, c) in results if aa == a])
        mean = traj.mean(axis=0)
        p05 = np.percentile(traj, 5, axis=0)
        p95 = np.percentile(traj, 95, axis=0)
        for k, t in enumerate(grid):
            rows.append(TuneAlphaRow(a, int(t), float(mean[k]), float(p05[k]), float(p95[k])))
        final_loss[a] = float(mean[-1])
    best = min(final_loss, key=final_loss.get)
    result = TuneAlphaResult(rows=rows, final_loss=final_loss, best_alpha=best)
    if write:
        out_dir = Path(config.out)
        emit_report(result, config.format, out_dir / f"tune_alpha.{config.format}")
        flat = {"best_alpha": best}
        flat.update({f"final_loss_{a:g}": v for a, v in final_loss.items()})
        emit_report(flat, config.format, out_dir / f"tune_alpha_summary.{config.format}")
    return result


# ---------------------------------------------------------------------------
# Report emission.
# ---------------------------------------------------------------------------

def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _tabulate(obj) -> tuple[list[str], list[list]]:
    if isinstance(obj, InferenceReport):
        header = ["name", "estimate", "se", "ci_lo", "ci_hi", "t_value", "p_value", "flag"]
        rows = [[r.name, r.estimate, r.se, r.ci_lo, r.ci_hi, r.t_value, r.p_value, r.flag]
                for r in obj.rows]
        return header, rows
    if isinstance(obj, MonteCarloSummary):
        header = ["t", "name", "ratio", "coverage", "coverage_se", "ci_length",
                  "n_used", "n_excluded"]
        rows = [[r.t, r.name, r.ratio, r.coverage, r.coverage_se, r.ci_length,
                 r.n_used, r.n_excluded] for r in obj.rows]
        return header, rows
    if isinstance(obj, TuneAlphaResult):
        header = ["alpha", "t", "loss_mean", "loss_p05", "loss_p95"]
        rows = [[r.alpha, r.t, r.loss_mean, r.loss_p05, r.loss_p95] for r in obj.rows]
        return header, rows
    if isinstance(obj, dict):
        header = list(obj.keys())
        return header, [[obj[k] for k in header]]
    raise ConfigError(f"cannot serialize object of type {type(obj).__name__}")


def _jsonify(obj):
    if isinstance(obj, InferenceReport):
        return {"level": obj.level,
                "rows": [{"name": r.name, "estimate": r.estimate, "se": r.se,
                          "ci_lo": r.ci_lo, "ci_hi": r.ci_hi, "t_value": r.t_value,
                          "p_value": r.p_value, "flag": r.flag} for r in obj.rows]}
    if isinstance(obj, MonteCarloSummary):
        return {"level": obj.level, "reps": obj.reps, "failures": obj.failures,
                "truth_value": obj.truth_value, "truth_value_se": obj.truth_value_se,
                "rows": [{"t": r.t, "name": r.name, "ratio": r.ratio,
                          "coverage": r.coverage, "coverage_se": r.coverage_se,
                          "ci_length": r.ci_length, "n_used": r.n_used,
                          "n_excluded": r.n_excluded} for r in obj.rows]}
    if isinstance(obj, TuneAlphaResult):
        return {"best_alpha": obj.best_alpha,
                "final_loss": {str(k): v for k, v in obj.final_loss.items()},
                "rows": [{"alpha": r.alpha, "t": r.t, "loss_mean": r.loss_mean,
                          "loss_p05": r.loss_p05, "loss_p95": r.loss_p95}
                         for r in obj.rows]}
    if isinstance(obj, dict):
        return obj
    raise ConfigError(f"cannot serialize object of type {type(obj).__name__}")


def _sanitize(obj):
    """Replace NaN/inf with None so the JSON output is strictly valid."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.floating):
        return _sanitize(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def emit_report(obj, fmt: str, path) -> Path:
    """Write a report or summary; creates missing directories.

    CSV uses a fixed column order with six significant digits; JSON keeps full
    float precision with identical field names.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        header, rows = _tabulate(obj)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
    elif fmt == "json":
        payload = _sanitize(_jsonify(obj))
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}; use csv or json")
    return path
