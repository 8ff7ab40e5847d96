"""Monte Carlo experiments: learning-rate sweeps over N and bound-coverage runs."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from ._linalg import spectral_norm, spectral_radius
from .exceptions import ConfigError, RankDeficiencyError
from .finite_sample_bounds import concentration_diagnostics, estimation_error_bound, wishart_floor
from .linsys_core import (
    SystemModel,
    kalman_recursion,
    preset,
    steady_state_filter,
    transition_product,
    true_G,
    validate_model,
)
from .subspace_id import align, balanced_realization, realization_errors, regress_G
from .trajectory_sim import build_batch, open_text_out, simulate

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "GridPoint",
    "RateReport",
    "ERROR_METRICS",
    "derive_seed",
    "fit_rate",
    "run_sweep",
    "coverage_experiment",
    "wishart_coverage",
    "nonzero_mean_experiment",
    "report_csv",
    "report_json",
    "read_report_json",
]

ERROR_METRICS = ("G_error", "A_error", "C_error", "K_error")
# fraction of failed reps above which a grid point is flagged unreliable
MAX_FAIL_FRACTION = 0.10


def derive_seed(master: int, *key: int) -> int:
    """64-bit sub-seed as a pure function of the master seed and an integer key."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ExperimentConfig:
    """Monte Carlo experiment description.

    Exactly one of ``p`` (fixed past horizon) or ``c`` (schedule
    ``p(N) = max(n+1, ceil(c ln N))``) is used; with ``p=None`` and ``c=None``
    the schedule constant defaults to ``2 / ln(1 / rho(A - K C))``.
    """

    model: SystemModel
    grid: list = field(default_factory=lambda: [250 * 2**i for i in range(7)])
    reps: int = 100
    p: int | None = None
    c: float | None = None
    f: int = 2
    delta: float = 0.05
    seed: int = 0
    error_metric: str = "G_error"
    N: int | None = None
    model_name: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.error_metric not in ERROR_METRICS:
            raise ConfigError(f"error_metric must be one of {ERROR_METRICS}, got {self.error_metric!r}")
        if self.p is not None and self.c is not None:
            raise ConfigError("give either a fixed p or a schedule constant c, not both")
        if self.f < 1 or (self.p is not None and self.p < 1):
            raise ConfigError("horizons must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        self.grid = [int(v) for v in self.grid]

    def check_sweep(self):
        g = self.grid
        if len(g) < 4 or any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError("grid must be strictly increasing with at least 4 points")
        if self.reps < 20:
            raise ConfigError("reps must be >= 20")

    def schedule_constant(self) -> float:
        if self.c is not None:
            return float(self.c)
        rho = steady_state_filter(self.model).closed_loop_radius
        return 2.0 / math.log(1.0 / rho)

    def p_for(self, N: int) -> int:
        if self.p is not None:
            return self.p
        return max(self.model.n + 1, math.ceil(self.schedule_constant() * math.log(N)))

    def to_dict(self) -> dict:
        d = {
            "model": self.model_name if self.model_name else self.model.to_dict(),
            "grid": list(self.grid),
            "reps": self.reps,
            "f": self.f,
            "delta": self.delta,
            "seed": self.seed,
            "error_metric": self.error_metric,
        }
        if self.model_name:
            overrides = {k: getattr(self.model, k).tolist() for k in ("mu", "Sigma0")
                         if not np.array_equal(getattr(self.model, k), getattr(preset(self.model_name), k))}
            if overrides:
                d["model_overrides"] = overrides
        if self.p is not None:
            d["p"] = self.p
        if self.c is not None:
            d["c"] = self.c
        if self.N is not None:
            d["N"] = self.N
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            entry = d.pop("model")
        except KeyError:
            raise ConfigError("config needs a 'model' entry (preset name or matrices)") from None
        overrides = d.pop("model_overrides", {}) or {}
        try:
            if isinstance(entry, str):
                model = preset(entry, **overrides)
                name = entry
            else:
                model = SystemModel.from_dict({**entry, **overrides})
                name = None
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad model specification: {exc}") from exc
        sched = d.pop("p_schedule", None)
        if isinstance(sched, dict):
            d["c"] = sched.get("c")
        elif isinstance(sched, (int, float)) and not isinstance(sched, bool):
            d["p"] = int(sched)
        allowed = {"grid", "reps", "p", "c", "f", "delta", "seed", "error_metric", "N", "n_jobs"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(model=model, model_name=name, **d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


@dataclass
class GridPoint:
    N: int
    p: int
    median_error: float
    q25: float
    q75: float
    n_ok: int
    n_failed: int
    unreliable: bool
    transition_norm: float | None = None


@dataclass
class RateReport:
    per_N: list
    slope: float
    intercept: float
    r_squared: float
    error_metric: str = "G_error"
    config: dict = field(default_factory=dict)

    @property
    def N_values(self):
        return np.array([g.N for g in self.per_N])

    @property
    def medians(self):
        return np.array([g.median_error for g in self.per_N])

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "error_metric": self.error_metric,
            "config": self.config,
            "per_N": [asdict(g) for g in self.per_N],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        return cls(
            per_N=[GridPoint(**g) for g in d["per_N"]],
            slope=d["slope"],
            intercept=d["intercept"],
            r_squared=d["r_squared"],
            error_metric=d.get("error_metric", "G_error"),
            config=d.get("config", {}),
        )


def fit_rate(N_values, errors):
    """Least-squares line through ``(ln N, ln error)``: ``(slope, intercept, r_squared)``."""
    x = np.log(np.asarray(N_values, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    res = stats.linregress(x, y)
    # a flat series is fitted exactly; linregress reports r = 0 there
    r2 = res.rvalue**2 if np.ptp(y) > 0.0 else 1.0
    return float(res.slope), float(res.intercept), float(r2)


class _Reference:
    """True G, Kalman sequence and reference realization for one (p, f)."""

    def __init__(self, model, p, f, need_realization):
        self.p, self.f = p, f
        self.kalman = kalman_recursion(model, p + f)
        self.G, _ = true_G(model, self.kalman, p, f)
        self.realization = balanced_realization(self.G, model.n, model.m, f) if need_realization else None


def _one_rep(model, ref, N, seed, metric):
    data = simulate(model, N, ref.p + ref.f, seed)
    batch = build_batch(data, ref.p, ref.f)
    G_hat = regress_G(batch)
    if metric == "G_error":
        return spectral_norm(G_hat - ref.G)
    est = balanced_realization(G_hat, model.n, model.m, ref.f)
    errs = realization_errors(est, ref.realization, align(est.O_hat, ref.realization.O_hat))
    return {"A_error": errs.A_error, "C_error": errs.C_error, "K_error": errs.K_error}[metric]


def _safe_rep(model, ref, N, seed, metric):
    try:
        return _one_rep(model, ref, N, seed, metric)
    except RankDeficiencyError as exc:
        logger.info("rep with N=%d seed=%d excluded: %s", N, seed, exc)
        return None


def _map(func, tasks, n_jobs):
    if n_jobs == 1:
        return [func(*t) for t in tasks]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(func)(*t) for t in tasks)


def run_sweep(config: ExperimentConfig) -> RateReport:
    """Median estimation error at every grid point and a log-log rate fit.

    Rep ``r`` at grid index ``i`` is simulated with seed
    ``derive_seed(config.seed, i, r)``, so results do not depend on the
    execution schedule.
    """
    config.check_sweep()
    model = config.model
    report = validate_model(model)
    if not report.valid:
        raise ConfigError("model violates assumptions: " + "; ".join(report.violations))
    need_real = config.error_metric != "G_error"
    refs = {}
    points = []
    for i, N in enumerate(config.grid):
        p = config.p_for(N)
        if p not in refs:
            refs[p] = _Reference(model, p, config.f, need_real)
        ref = refs[p]
        tasks = [(model, ref, N, derive_seed(config.seed, i, r), config.error_metric)
                 for r in range(config.reps)]
        results = _map(_safe_rep, tasks, config.n_jobs)
        ok = np.array([v for v in results if v is not None], dtype=float)
        n_failed = len(results) - ok.size
        unreliable = n_failed > MAX_FAIL_FRACTION * config.reps
        if unreliable:
            logger.warning("grid point N=%d: %d of %d reps failed", N, n_failed, config.reps)
        if ok.size:
            q25, med, q75 = np.percentile(ok, [25, 50, 75])
        else:
            q25 = med = q75 = float("nan")
        points.append(GridPoint(N, p, float(med), float(q25), float(q75), int(ok.size),
                                int(n_failed), bool(unreliable)))
    good = [g for g in points if np.isfinite(g.median_error) and g.median_error > 0]
    if len(good) >= 2:
        slope, intercept, r2 = fit_rate([g.N for g in good], [g.median_error for g in good])
    else:
        slope = intercept = r2 = float("nan")
    return RateReport(points, slope, intercept, r2, config.error_metric, config.to_dict())


def nonzero_mean_experiment(config: ExperimentConfig) -> RateReport:
    """Rate sweep for a nonzero initial mean with ``p`` growing like ``c ln N``.

    Also records ``||(A - K_{p-1} C) ... (A - K_0 C)||`` at each grid point.
    Rejects models with ``rho(A) > 1``.
    """
    model = config.model
    if not np.any(model.mu):
        raise ConfigError("nonzero-mean experiment needs mu != 0")
    if config.p is not None:
        raise ConfigError("nonzero-mean experiment needs a growing p schedule, not a fixed p")
    rho = spectral_radius(model.A)
    if rho > 1.0 + 1e-12:
        raise ConfigError(f"rho(A)={rho:.4g} > 1 is not allowed with a nonzero initial mean")
    report = run_sweep(config)
    for g in report.per_N:
        kal = kalman_recursion(model, g.p)
        g.transition_norm = transition_product(model, kal, 0, g.p)[1]
    return report


def coverage_experiment(config: ExperimentConfig, trials: int, N: int | None = None) -> dict:
    """Fraction of independent trials in which each high-probability bound holds.

    Runs at a single ``N`` (argument, else ``config.N``, else the first grid
    point) with ``p = config.p_for(N)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = N if N is not None else (config.N if config.N is not None else config.grid[0])
    model = config.model
    p, f, delta = config.p_for(N), config.f, config.delta
    kal = kalman_recursion(model, p + f)
    G, _ = true_G(model, kal, p, f)
    bound = estimation_error_bound(model, kal, p, f, N, delta)
    if not np.any(model.mu) and N < max(bound.N0, bound.N2):
        raise ConfigError(f"N={N} below max(N0, N2)={max(bound.N0, bound.N2):.2f}")
    hits = 0
    failed = 0
    diag_hits = {}
    errors = []
    for t in range(trials):
        data = simulate(model, N, p + f, derive_seed(config.seed, 0, t))
        batch = build_batch(data, p, f)
        try:
            err = spectral_norm(regress_G(batch) - G)
        except RankDeficiencyError:
            failed += 1
            err = float("inf")
        errors.append(err)
        hits += err <= bound.bound
        for key, rec in concentration_diagnostics(batch, model, kal, delta).items():
            diag_hits[key] = diag_hits.get(key, 0) + rec["holds"]
    return {
        "N": N,
        "p": p,
        "f": f,
        "delta": delta,
        "trials": trials,
        "failed": failed,
        "bound": bound.bound,
        "applicable": bound.applicable,
        "bound_coverage": hits / trials,
        "target": 1.0 - 4.0 * delta,
        "median_error": float(np.median(errors)),
        "diagnostics_coverage": {k: v / trials for k, v in sorted(diag_hits.items())},
    }


def wishart_coverage(dim: int, delta: float, trials: int, seed: int = 0, N: int | None = None) -> dict:
    """Frequency with which the Gaussian Gram-matrix floor holds.

    ``N`` defaults to ``ceil(8 dim + 16 ln(1/delta))``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if N is None:
        N = math.ceil(8 * dim + 16 * math.log(1.0 / delta))
    hits = 0
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        hits += wishart_floor(N, dim, delta, rng)[2]
    return {"N": N, "dim": dim, "delta": delta, "trials": trials, "coverage": hits / trials}


def report_csv(report: RateReport, path) -> None:
    """Write ``N,p,median_error,q25,q75`` rows preceded by ``#`` comment lines."""
    with open_text_out(path) as fh:
        fh.write(f"# config: {json.dumps(report.config, sort_keys=True)}\n")
        fh.write(f"# error_metric: {report.error_metric}\n")
        fh.write(f"# slope: {report.slope!r}\n")
        fh.write(f"# intercept: {report.intercept!r}\n")
        fh.write(f"# r_squared: {report.r_squared!r}\n")
        fh.write("N,p,median_error,q25,q75\n")
        for g in report.per_N:
            fh.write(f"{g.N},{g.p},{g.median_error!r},{g.q25!r},{g.q75!r}\n")


def report_json(report: RateReport, path) -> None:
    with open_text_out(path) as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def read_report_json(path) -> RateReport:
    with open(path) as fh:
        return RateReport.from_dict(json.load(fh))


PRESET_HELP = (
    "presets: scalar-stable (A=0.9), scalar-unstable (A=1.2), "
    "jordan-marginal (A=[[1,1],[0,1]], C=[1,0]), two-state-stable "
    "(A=[[0.9,0.2],[0,0.7]], C=[1,0]); all Q=I, R=I; Sigma0=0 for the "
    "scalar presets and I for the two-state presets"
)
