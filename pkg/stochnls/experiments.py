"""
Experiments Module

Monte Carlo orchestration on coupled Brownian paths:

- strong convergence studies against a fine-step Split reference
  (end-time errors, optional sup-over-time errors)
- L^2 conservation drift comparison along one sample
- temporal regularity of the reference solution
- log-log slope fitting and the empirical convergence-in-probability table

Every sample is an independent work unit keyed on (seed, sample_index).
Results are merged in sample-index order, so reports do not depend on the
number of workers.
"""

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import ConfigurationError, ContractViolation, InstabilityError, StudyAborted
from .grid import SpectralGrid, as_sobolev_index, is_power_of_two, sobolev_norm
from .integrators import SchemeKind, Stepper, StepperConfig, evolve, make_stepper
from .model import Potential, initial_condition
from .noise import coarsen, coarse_increments, generate_path

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.05
EXACT_REGIME_TOLERANCE = 1e-12
SPLIT_DRIFT_TOLERANCE = 1e-10
MIN_SLOPE_POINTS = 3

_Task = TypeVar("_Task")
_Result = TypeVar("_Result")


def steps_for(T: float, tau: float, key: str = "tau_ladder") -> int:
    """Number of steps T/tau, which must be an integral power of two"""
    N = int(round(T / tau))
    if N < 1 or abs(N * tau - T) > 1e-12 * T:
        raise ConfigurationError(f"t_end={T!r} is not an integral multiple of tau={tau!r}",
                                 key=key)
    if not is_power_of_two(N):
        raise ConfigurationError(f"t_end/tau = {N} is not a power of two (tau={tau!r})",
                                 key=key)
    return N


@dataclass(frozen=True)
class ConvergenceConfig:
    """Parameters of a coupled-path strong convergence study"""
    schemes: Tuple[SchemeKind, ...]
    taus: Tuple[float, ...]
    tau_ref: float
    M: int
    T_end: float = 1.0
    samples: int = 100
    norm_index: int = 1
    moment: float = 2.0
    L: float = 2.0 * math.pi
    potential: str = "cosine"
    initial_condition: str = "gaussian"
    dealias: bool = False
    sup_error: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(SchemeKind.parse(s) for s in self.schemes))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        if not self.schemes:
            raise ConfigurationError("at least one scheme is required", key="schemes")
        if not self.taus:
            raise ConfigurationError("the step-size ladder is empty", key="tau_ladder")
        if len(set(self.taus)) != len(self.taus):
            raise ConfigurationError("step sizes must be distinct", key="tau_ladder")
        for tau in self.taus + (self.tau_ref,):
            if not 0.0 < tau < 1.0:
                raise ConfigurationError(f"step size {tau!r} outside (0, 1)", key="tau_ladder")

        N_fine = steps_for(self.T_end, self.tau_ref, key="tau_ref")
        for tau in self.taus:
            N = steps_for(self.T_end, tau)
            if N > N_fine or N_fine % N:
                raise ConfigurationError(
                    f"tau_ref={self.tau_ref!r} does not divide tau={tau!r} dyadically",
                    key="tau_ref",
                )
        if self.samples < 1:
            raise ConfigurationError("need at least one sample", key="samples")
        if not self.moment > 0:
            raise ConfigurationError(f"moment must be positive, got {self.moment}", key="moment")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}", key="workers")
        as_sobolev_index(self.norm_index)

    @property
    def N_fine(self) -> int:
        return steps_for(self.T_end, self.tau_ref, key="tau_ref")

    def steps(self, tau: float) -> int:
        return steps_for(self.T_end, tau)

    def build_grid(self) -> SpectralGrid:
        return SpectralGrid(self.M, self.L, self.dealias)


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through (log2 tau, log2 error)"""
    slope: float
    intercept: float
    max_residual: float
    points: int


@dataclass
class ConvergenceEntry:
    """Estimated error of one (scheme, tau) cell"""
    scheme: SchemeKind
    tau: float
    error: float
    stderr: float
    samples: int


@dataclass
class SampleOutcome:
    """Per-sample result of a coupled run"""
    sample_index: int
    errors: Optional[np.ndarray] = None
    sup_errors: Optional[np.ndarray] = None
    coupled: bool = True
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None


@dataclass
class ConvergenceReport:
    """
    Aggregated strong errors of a convergence study

    per_sample_errors has shape (samples, schemes, taus), rows in sample-index
    order, failed samples excluded.
    """
    config: ConvergenceConfig
    entries: List[ConvergenceEntry]
    slopes: Dict[SchemeKind, Optional[SlopeFit]]
    per_sample_errors: np.ndarray
    sample_indices: List[int]
    failed_samples: Dict[int, str] = field(default_factory=dict)
    exact_regime: Dict[SchemeKind, bool] = field(default_factory=dict)
    sup_entries: List[ConvergenceEntry] = field(default_factory=list)
    sup_slopes: Dict[SchemeKind, Optional[SlopeFit]] = field(default_factory=dict)
    per_sample_sup_errors: Optional[np.ndarray] = None
    coupling_ok: bool = True

    def errors_for(self, scheme: Union[str, SchemeKind]) -> np.ndarray:
        """Per-sample errors of one scheme, shape (samples, taus)"""
        index = self.config.schemes.index(SchemeKind.parse(scheme))
        return self.per_sample_errors[:, index, :]

    def estimate(self, scheme: Union[str, SchemeKind], tau: float) -> float:
        scheme = SchemeKind.parse(scheme)
        for entry in self.entries:
            if entry.scheme is scheme and entry.tau == tau:
                return entry.error
        raise KeyError((scheme, tau))

    def monotonicity_inversions(self, scheme: Union[str, SchemeKind]) -> int:
        """Adjacent ladder pairs where the error at tau is below the error at the next finer tau"""
        scheme = SchemeKind.parse(scheme)
        cells = sorted((e.tau, e.error) for e in self.entries if e.scheme is scheme)
        return sum(1 for (_, finer), (_, coarser) in zip(cells, cells[1:]) if coarser < finer)

    def convergence_frame(self) -> pd.DataFrame:
        return _entries_frame(self.entries)

    def sup_frame(self) -> pd.DataFrame:
        return _entries_frame(self.sup_entries)

    def slopes_frame(self) -> pd.DataFrame:
        return _slopes_frame(self.slopes)


@dataclass
class ConservationReport:
    """Relative L^2 drift series of each scheme along one sample"""
    tau: float
    series: Dict[SchemeKind, pd.DataFrame] = field(default_factory=dict)

    def max_drift(self, scheme: Union[str, SchemeKind]) -> float:
        return float(self.series[SchemeKind.parse(scheme)]["drift"].max())

    @property
    def split_conserved(self) -> Optional[bool]:
        """Split drift within tolerance (None when Split was not run)"""
        if SchemeKind.SPLIT not in self.series:
            return None
        return self.max_drift(SchemeKind.SPLIT) <= SPLIT_DRIFT_TOLERANCE

    def frame(self) -> pd.DataFrame:
        parts = []
        for scheme, series in self.series.items():
            part = series[["t", "drift"]].copy()
            part.insert(0, "scheme", scheme.value)
            parts.append(part)
        return pd.concat(parts, ignore_index=True)


@dataclass
class RegularityReport:
    """Moments of u(t1 + h) - u(t1) of the reference solution versus lag h"""
    t1: float
    lags: List[float]
    increments: List[float]
    stderrs: List[float]
    samples: int
    fit: Optional[SlopeFit] = None
    failed_samples: Dict[int, str] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "lag": self.lags,
            "increment": self.increments,
            "stderr": self.stderrs,
            "samples": [self.samples] * len(self.lags),
        })


def _entries_frame(entries: Sequence[ConvergenceEntry]) -> pd.DataFrame:
    return pd.DataFrame(
        [(e.scheme.value, e.tau, e.error, e.stderr, e.samples) for e in entries],
        columns=["scheme", "tau", "error", "stderr", "samples"],
    )


def _slopes_frame(slopes: Dict[SchemeKind, Optional[SlopeFit]]) -> pd.DataFrame:
    rows = []
    for scheme, fit in slopes.items():
        if fit is None:
            rows.append((scheme.value, math.nan, math.nan, math.nan))
        else:
            rows.append((scheme.value, fit.slope, fit.intercept, fit.max_residual))
    return pd.DataFrame(rows, columns=["scheme", "slope", "intercept", "max_residual"])


def fit_slope(points: Sequence[Tuple[float, float]]) -> SlopeFit:
    """
    Ordinary least squares of log2(error) against log2(step)

    Args:
        points: (step, error) pairs; non-positive errors are dropped with a warning

    Returns:
        SlopeFit with slope, intercept and the largest absolute residual

    Raises:
        ContractViolation: fewer than 3 usable points, or repeated steps
    """
    usable = []
    for step, error in points:
        if not (error > 0.0 and math.isfinite(error)):
            logger.warning(f"Dropping point (step={step!r}, error={error!r}) from slope fit")
            continue
        if not step > 0.0:
            raise ContractViolation(f"step sizes must be positive, got {step!r}")
        usable.append((step, error))

    if len(usable) < MIN_SLOPE_POINTS:
        raise ContractViolation(
            f"slope fit needs at least {MIN_SLOPE_POINTS} positive errors, got {len(usable)}"
        )
    x = np.log2([p[0] for p in usable])
    y = np.log2([p[1] for p in usable])
    if len(np.unique(x)) != len(x):
        raise ContractViolation("slope fit needs distinct step sizes")

    result = stats.linregress(x, y)
    residuals = y - (result.slope * x + result.intercept)
    return SlopeFit(float(result.slope), float(result.intercept),
                    float(np.max(np.abs(residuals))), len(usable))


def _try_fit(points: Sequence[Tuple[float, float]], label: str) -> Optional[SlopeFit]:
    try:
        return fit_slope(points)
    except ContractViolation as e:
        logger.warning(f"No slope for {label}: {e}")
        return None


def moment_estimate(errors: np.ndarray, p: float) -> Tuple[float, float]:
    """
    E[X^p]^(1/p) and its standard error from samples of X >= 0

    The standard error is propagated from the sample mean of X^p through
    x -> x^(1/p) (delta method); NaN with a single sample.
    """
    powered = np.asarray(errors, dtype=np.float64) ** p
    mean = float(np.mean(powered))
    estimate = mean ** (1.0 / p)
    if len(powered) < 2:
        return estimate, math.nan
    if mean == 0.0:
        return estimate, 0.0
    sem = float(np.std(powered, ddof=1)) / math.sqrt(len(powered))
    return estimate, (1.0 / p) * mean ** (1.0 / p - 1.0) * sem


def map_samples(worker: Callable[[_Task], _Result], tasks: List[_Task],
                workers: int = 1) -> List[_Result]:
    """Run worker over tasks, in-process or on a pool; output keeps task order"""
    if workers <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(worker, tasks, chunksize=1)


@dataclass(frozen=True)
class _SampleTask:
    config: ConvergenceConfig
    seed: int
    sample_index: int


@dataclass
class _Runner:
    scheme: SchemeKind
    tau: float
    ratio: int
    increments: np.ndarray
    stepper: Stepper
    u: np.ndarray
    sup: float = 0.0


def _coupled_sample(task: _SampleTask) -> SampleOutcome:
    """
    One sample of a convergence study

    The reference (Split at tau_ref) and every (scheme, tau) run advance in
    lockstep over the fine path; coarse runs step whenever their time grid is
    reached, so sup-over-time errors need no stored trajectories.
    """
    cfg = task.config
    g = cfg.build_grid()
    V = Potential.from_spec(cfg.potential, g)
    u0 = initial_condition(cfg.initial_condition, g)
    m = cfg.norm_index
    path = generate_path(task.seed, task.sample_index, cfg.T_end, cfg.N_fine)
    beta_T = path.terminal_value()

    reference = make_stepper(StepperConfig(SchemeKind.SPLIT, cfg.tau_ref), V, g)
    runners: List[_Runner] = []
    coupled = True
    for scheme in cfg.schemes:
        for tau in cfg.taus:
            N = cfg.steps(tau)
            increments = coarse_increments(path, N)
            runners.append(_Runner(scheme, tau, cfg.N_fine // N, increments,
                                   make_stepper(StepperConfig(scheme, tau), V, g), u0.copy()))

    u_ref = u0.copy()
    try:
        for j in range(cfg.N_fine):
            u_ref = reference.step(u_ref, path.dW[j])
            if not np.all(np.isfinite(u_ref)):
                raise InstabilityError(j + 1, "split reference")
            for runner in runners:
                if (j + 1) % runner.ratio:
                    continue
                n = (j + 1) // runner.ratio
                # the coarse increment must be the sum of what the reference just consumed
                window = path.dW[j + 1 - runner.ratio:j + 1]
                coupled &= float(coarsen(window, runner.ratio)[0]) == runner.increments[n - 1]
                runner.u = runner.stepper.step(runner.u, runner.increments[n - 1])
                if not np.all(np.isfinite(runner.u)):
                    raise InstabilityError(n, f"{runner.scheme.value}, tau={runner.tau:.6g}")
                if cfg.sup_error:
                    runner.sup = max(runner.sup, sobolev_norm(runner.u - u_ref, m, g))
    except InstabilityError as e:
        logger.warning(f"Sample {task.sample_index} failed: {e}")
        return SampleOutcome(task.sample_index, failure=str(e), coupled=coupled)

    shape = (len(cfg.schemes), len(cfg.taus))
    errors = np.array([sobolev_norm(r.u - u_ref, m, g) for r in runners]).reshape(shape)
    sup_errors = np.array([r.sup for r in runners]).reshape(shape) if cfg.sup_error else None
    logger.debug(f"Sample {task.sample_index} done, beta(T)={beta_T:.6g}")
    return SampleOutcome(task.sample_index, errors, sup_errors, coupled)


def _collect(outcomes: List[SampleOutcome], what: str) -> Tuple[List[SampleOutcome], Dict[int, str]]:
    outcomes = sorted(outcomes, key=lambda o: o.sample_index)
    failed = {o.sample_index: o.failure for o in outcomes if o.failed}
    valid = [o for o in outcomes if not o.failed]
    if failed:
        logger.warning(f"{len(failed)} of {len(outcomes)} samples of the {what} failed")
    if not valid or len(failed) > MAX_FAILURE_FRACTION * len(outcomes):
        raise StudyAborted(
            f"{len(failed)} of {len(outcomes)} samples of the {what} failed "
            f"(limit {MAX_FAILURE_FRACTION:.0%})"
        )
    return valid, failed


def _aggregate(errors: np.ndarray, cfg: ConvergenceConfig) -> List[ConvergenceEntry]:
    entries = []
    for i, scheme in enumerate(cfg.schemes):
        for j, tau in enumerate(cfg.taus):
            error, stderr = moment_estimate(errors[:, i, j], cfg.moment)
            entries.append(ConvergenceEntry(scheme, tau, error, stderr, errors.shape[0]))
    return entries


def _fit_all(entries: List[ConvergenceEntry], cfg: ConvergenceConfig,
             exact: Dict[SchemeKind, bool], label: str) -> Dict[SchemeKind, Optional[SlopeFit]]:
    slopes: Dict[SchemeKind, Optional[SlopeFit]] = {}
    for scheme in cfg.schemes:
        if exact.get(scheme, False):
            logger.info(f"{scheme.value}: errors at roundoff (exact regime), no slope fitted")
            slopes[scheme] = None
            continue
        points = [(e.tau, e.error) for e in entries if e.scheme is scheme]
        slopes[scheme] = _try_fit(points, f"{scheme.value} {label}")
    return slopes


def run_convergence(cfg: ConvergenceConfig, seed: int) -> ConvergenceReport:
    """
    Strong convergence study on coupled paths

    For every sample: one fine path, a Split reference at tau_ref, and a run of
    every (scheme, tau) on coarse-grainings of the same path; the H^m error at
    T_end is aggregated as E[err^p]^(1/p) and a slope is fitted per scheme.

    Raises:
        StudyAborted: more than 5% of the samples produced non-finite fields
    """
    logger.info(
        f"Convergence study: schemes={[s.value for s in cfg.schemes]}, "
        f"taus={list(cfg.taus)}, tau_ref={cfg.tau_ref}, M={cfg.M}, "
        f"samples={cfg.samples}, workers={cfg.workers}"
    )
    tasks = [_SampleTask(cfg, seed, s) for s in range(cfg.samples)]
    valid, failed = _collect(map_samples(_coupled_sample, tasks, cfg.workers),
                             "convergence study")

    errors = np.stack([o.errors for o in valid])
    entries = _aggregate(errors, cfg)

    g = cfg.build_grid()
    scale = max(sobolev_norm(initial_condition(cfg.initial_condition, g), cfg.norm_index, g), 1.0)
    exact = {
        scheme: bool(np.max(errors[:, i, :]) <= EXACT_REGIME_TOLERANCE * scale)
        for i, scheme in enumerate(cfg.schemes)
    }
    report = ConvergenceReport(
        config=cfg,
        entries=entries,
        slopes=_fit_all(entries, cfg, exact, "end-time errors"),
        per_sample_errors=errors,
        sample_indices=[o.sample_index for o in valid],
        failed_samples=failed,
        exact_regime=exact,
        coupling_ok=all(o.coupled for o in valid),
    )

    if cfg.sup_error:
        sup_errors = np.stack([o.sup_errors for o in valid])
        report.per_sample_sup_errors = sup_errors
        report.sup_entries = _aggregate(sup_errors, cfg)
        report.sup_slopes = _fit_all(report.sup_entries, cfg, exact, "sup errors")

    for scheme, fit in report.slopes.items():
        if fit is not None:
            logger.info(f"{scheme.value}: fitted slope {fit.slope:.3f}")
    return report


def probability_convergence_check(report: ConvergenceReport,
                                  C_grid: Sequence[float]) -> pd.DataFrame:
    """
    Empirical P(‖u_N - u_ref‖ >= C tau) for every scheme, tau and C

    Returns:
        DataFrame with columns scheme, tau, C, fraction
    """
    rows = []
    for i, scheme in enumerate(report.config.schemes):
        for j, tau in enumerate(report.config.taus):
            errors = report.per_sample_errors[:, i, j]
            for C in C_grid:
                rows.append((scheme.value, tau, float(C), float(np.mean(errors >= C * tau))))
    return pd.DataFrame(rows, columns=["scheme", "tau", "C", "fraction"])


def moment_table(report: ConvergenceReport, ps: Sequence[float] = (1.0, 2.0, 4.0)) -> pd.DataFrame:
    """E[err^p]^(1/p) for several p from the retained per-sample errors"""
    rows = []
    for i, scheme in enumerate(report.config.schemes):
        for j, tau in enumerate(report.config.taus):
            for p in ps:
                estimate, _ = moment_estimate(report.per_sample_errors[:, i, j], p)
                rows.append((scheme.value, tau, float(p), estimate))
    return pd.DataFrame(rows, columns=["scheme", "tau", "p", "estimate"])


def run_conservation(schemes: Sequence[Union[str, SchemeKind]], tau: float, M: int, T: float,
                     seed: int, potential: str = "cosine", initial: str = "gaussian",
                     L: float = 2.0 * math.pi, dealias: bool = False) -> ConservationReport:
    """
    L^2 drift of each scheme along one shared sample path

    Raises:
        InstabilityError: as in evolve
    """
    N = steps_for(T, tau, key="tau")
    g = SpectralGrid(M, L, dealias)
    V = Potential.from_spec(potential, g)
    u0 = initial_condition(initial, g)
    path = generate_path(seed, 0, T, N)

    report = ConservationReport(tau=tau)
    for scheme in schemes:
        scheme = SchemeKind.parse(scheme)
        result = evolve(scheme, u0, path, N, V, g)
        report.series[scheme] = pd.DataFrame({
            "t": result.diagnostics["t"].to_numpy(),
            "drift": result.l2_drift(),
        })
        logger.info(f"{scheme.value}: max L2 drift {report.max_drift(scheme):.3e}")
    return report


@dataclass(frozen=True)
class _RegularityTask:
    config: ConvergenceConfig
    seed: int
    sample_index: int
    start: int
    offsets: Tuple[int, ...]


def _regularity_sample(task: _RegularityTask) -> SampleOutcome:
    cfg = task.config
    g = cfg.build_grid()
    V = Potential.from_spec(cfg.potential, g)
    u = initial_condition(cfg.initial_condition, g)
    path = generate_path(task.seed, task.sample_index, cfg.T_end, cfg.N_fine)
    reference = make_stepper(StepperConfig(SchemeKind.SPLIT, cfg.tau_ref), V, g)

    wanted = {task.start + offset for offset in task.offsets}
    recorded = {}
    try:
        for j in range(max(wanted)):
            u = reference.step(u, path.dW[j])
            if not np.all(np.isfinite(u)):
                raise InstabilityError(j + 1, "split reference")
            if j + 1 == task.start or j + 1 in wanted:
                recorded[j + 1] = u
    except InstabilityError as e:
        return SampleOutcome(task.sample_index, failure=str(e))

    base = recorded[task.start]
    increments = np.array([
        sobolev_norm(recorded[task.start + offset] - base, cfg.norm_index, g)
        for offset in task.offsets
    ])
    return SampleOutcome(task.sample_index, increments)


def run_regularity(cfg: ConvergenceConfig, seed: int) -> RegularityReport:
    """
    Temporal regularity of the Split reference solution

    Measures E[‖u(t1 + h) - u(t1)‖_{H^m}^p]^(1/p) at t1 = T_end/2 for every lag h
    in cfg.taus (each h <= T_end/2) and fits the log-log slope, expected near 1/2.
    """
    start = cfg.N_fine // 2
    offsets = []
    for lag in cfg.taus:
        if lag > cfg.T_end / 2:
            raise ConfigurationError(f"lag {lag!r} exceeds t_end/2", key="tau_ladder")
        offsets.append(cfg.N_fine // cfg.steps(lag))

    logger.info(f"Regularity study: lags={list(cfg.taus)}, samples={cfg.samples}")
    tasks = [_RegularityTask(cfg, seed, s, start, tuple(offsets)) for s in range(cfg.samples)]
    valid, failed = _collect(map_samples(_regularity_sample, tasks, cfg.workers),
                             "regularity study")
    increments = np.stack([o.errors for o in valid])

    estimates, stderrs = [], []
    for j in range(len(offsets)):
        estimate, stderr = moment_estimate(increments[:, j], cfg.moment)
        estimates.append(estimate)
        stderrs.append(stderr)

    fit = _try_fit(list(zip(cfg.taus, estimates)), "regularity increments")
    return RegularityReport(start * cfg.tau_ref, list(cfg.taus), estimates, stderrs,
                            len(valid), fit, failed)
