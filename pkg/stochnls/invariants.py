"""
Invariant Checker Module

This module runs the structural checks behind the `selftest` command:
- transform round-trip and Parseval identity
- isometry, group law and increment bound of the random propagator
- FFT convolution against the direct periodic sum
- order of the consistency defect Psi_tau - Psi_0
- L^2 conservation and symplecticity of the splitting scheme
- the linear (V = 0) regime of all three schemes
- Brownian path coupling and Gaussianity
- determinism of convergence studies across worker counts

HARD checks decide the exit status; SOFT checks are reported only.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import stats

from .experiments import ConvergenceConfig, fit_slope, run_conservation, run_convergence
from .grid import (
    SpectralGrid, forward_transform, inverse_transform, l2_norm, random_field, sobolev_norm,
)
from .integrators import SchemeKind, evolve, symplectic_defect
from .model import (
    Potential, convolve_potential, flow_growth_ratio, initial_condition,
    nonlinearity_bound_ratio, propagate_linear, psi0, psi_tau,
)
from .noise import coarse_increments, coarsen, generate_path, sample_stream

DEFAULT_SELFTEST_GRID = 2 ** 6
SELFTEST_SEED = 20210101


class Severity(Enum):
    """Whether a failed check fails the run"""
    HARD = "hard"
    SOFT = "soft"


@dataclass
class InvariantCheck:
    """Outcome of one named check"""
    name: str
    severity: Severity
    passed: bool
    measured: float
    threshold: float
    description: str = ""
    seconds: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "severity": self.severity.value,
            "passed": bool(self.passed),
            "measured": _json_float(self.measured),
            "threshold": _json_float(self.threshold),
            "description": self.description,
            "seconds": round(self.seconds, 3),
        }


@dataclass
class SelftestResult:
    """All checks of one suite run"""
    checks: List[InvariantCheck] = field(default_factory=list)
    grid_points: int = DEFAULT_SELFTEST_GRID

    def add_check(self, check: InvariantCheck):
        self.checks.append(check)

    @property
    def hard_failures(self) -> List[InvariantCheck]:
        return [c for c in self.checks if c.severity is Severity.HARD and not c.passed]

    @property
    def soft_failures(self) -> List[InvariantCheck]:
        return [c for c in self.checks if c.severity is Severity.SOFT and not c.passed]

    @property
    def passed(self) -> bool:
        return bool(self.checks) and not self.hard_failures

    def get_check(self, name: str) -> InvariantCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(c.name, c.severity.value, c.passed, c.measured, c.threshold) for c in self.checks],
            columns=["name", "severity", "passed", "measured", "threshold"],
        )

    def to_dict(self) -> Dict:
        return {
            "grid_points": self.grid_points,
            "passed": self.passed,
            "hard_failures": [c.name for c in self.hard_failures],
            "soft_failures": [c.name for c in self.soft_failures],
            "checks": [c.to_dict() for c in self.checks],
        }


def _json_float(value: float) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


class InvariantChecker:
    """
    Runs the invariant battery on a small grid

    Every check draws from its own seeded stream, so the suite is reproducible
    and checks can be run individually.
    """

    def __init__(self, grid_points: int = DEFAULT_SELFTEST_GRID, seed: int = SELFTEST_SEED,
                 draws: int = 1000, workers: int = 2):
        self.logger = logging.getLogger(__name__)
        self.grid = SpectralGrid(grid_points)
        self.seed = seed
        self.draws = draws
        self.workers = workers
        self.cosine = Potential.cosine(self.grid)
        self.zero = Potential.zero(self.grid)
        self.u0 = initial_condition("gaussian", self.grid)

    def checks(self) -> Dict[str, Callable[[], InvariantCheck]]:
        """Named checks in suite order"""
        return {
            "transform_roundtrip": self.check_transform_roundtrip,
            "parseval": self.check_parseval,
            "propagator_isometry": self.check_propagator_isometry,
            "propagator_group": self.check_propagator_group,
            "propagator_increment_bound": self.check_increment_bound,
            "convolution_direct_sum": self.check_convolution_oracle,
            "nonlinearity_bound": self.check_nonlinearity_bound,
            "phase_flow_growth": self.check_flow_growth,
            "consistency_defect_order": self.check_defect_order,
            "split_l2_conservation": self.check_split_conservation,
            "drift_ordering": self.check_drift_ordering,
            "mid_linear_l2_conservation": self.check_mid_linear_conservation,
            "split_symplecticity": self.check_symplecticity,
            "linear_regime_exact": self.check_linear_regime,
            "mid_linear_order": self.check_mid_linear_order,
            "path_coupling": self.check_path_coupling,
            "increment_gaussianity": self.check_gaussianity,
            "convergence_exact_regime": self.check_convergence_exact_regime,
            "worker_determinism": self.check_determinism,
        }

    def run_suite(self, only: Optional[List[str]] = None) -> SelftestResult:
        """
        Run every check (or the named subset)

        Args:
            only: Names of the checks to run; all when None

        Returns:
            SelftestResult; a check that raises is recorded as a failed HARD check
        """
        result = SelftestResult(grid_points=self.grid.M)
        available = self.checks()
        names = list(available) if only is None else only
        for name in names:
            if name not in available:
                raise KeyError(f"unknown invariant check '{name}'")
            started = time.perf_counter()
            try:
                check = available[name]()
            except Exception as e:
                self.logger.exception(f"Check {name} raised")
                check = InvariantCheck(name, Severity.HARD, False, math.nan, math.nan,
                                       f"raised {type(e).__name__}: {e}")
            check.seconds = time.perf_counter() - started
            status = "passed" if check.passed else "FAILED"
            self.logger.info(f"{name}: {status} (measured {check.measured:.3e}, "
                             f"threshold {check.threshold:.3e})")
            result.add_check(check)
        return result

    def _rng(self, stream: int) -> np.random.Generator:
        return sample_stream(self.seed, stream)

    def _fields(self, rng: np.random.Generator, count: int, grid: Optional[SpectralGrid] = None):
        grid = grid or self.grid
        return [random_field(grid, rng) for _ in range(count)]

    def check_transform_roundtrip(self) -> InvariantCheck:
        rng = self._rng(1)
        worst = 0.0
        for u in self._fields(rng, 100):
            back = inverse_transform(forward_transform(u, self.grid), self.grid)
            worst = max(worst, float(np.max(np.abs(back - u))) / float(np.max(np.abs(u))))
        return InvariantCheck("transform_roundtrip", Severity.HARD, worst <= 1e-13, worst, 1e-13,
                              "inverse(forward(u)) reproduces u")

    def check_parseval(self) -> InvariantCheck:
        rng = self._rng(2)
        worst = 0.0
        for u in self._fields(rng, 100):
            u_hat = forward_transform(u, self.grid)
            spectral = math.sqrt(self.grid.L * float(np.sum(np.abs(u_hat) ** 2)))
            worst = max(worst, abs(spectral - l2_norm(u, self.grid)) / l2_norm(u, self.grid))
        return InvariantCheck("parseval", Severity.HARD, worst <= 1e-12, worst, 1e-12,
                              "||u||^2 = L sum |u_hat|^2")

    def check_propagator_isometry(self) -> InvariantCheck:
        rng = self._rng(3)
        worst = 0.0
        for u in self._fields(rng, self.draws):
            dbeta = float(rng.standard_normal())
            v = propagate_linear(u, dbeta, self.grid)
            for m in range(4):
                before = sobolev_norm(u, m, self.grid)
                worst = max(worst, abs(sobolev_norm(v, m, self.grid) - before) / before)
        return InvariantCheck("propagator_isometry", Severity.HARD, worst <= 1e-12, worst, 1e-12,
                              "S(dbeta) preserves H^m norms, m = 0..3")

    def check_propagator_group(self) -> InvariantCheck:
        rng = self._rng(4)
        worst = 0.0
        for u in self._fields(rng, 100):
            a, b = rng.standard_normal(2)
            composed = propagate_linear(propagate_linear(u, a, self.grid), b, self.grid)
            direct = propagate_linear(u, a + b, self.grid)
            worst = max(worst, l2_norm(composed - direct, self.grid) / l2_norm(u, self.grid))
        return InvariantCheck("propagator_group", Severity.HARD, worst <= 1e-11, worst, 1e-11,
                              "S(b) S(a) = S(a + b)")

    def check_increment_bound(self) -> InvariantCheck:
        rng = self._rng(5)
        worst = 0.0
        for u in self._fields(rng, self.draws):
            dbeta = 0.1 * float(rng.standard_normal())
            moved = propagate_linear(u, dbeta, self.grid) - u
            for m in (0, 1):
                bound = abs(dbeta) * sobolev_norm(u, m + 2, self.grid)
                if bound > 0.0:
                    worst = max(worst, sobolev_norm(moved, m, self.grid) / bound)
        limit = 1.0 + 1e-12
        return InvariantCheck("propagator_increment_bound", Severity.HARD, worst <= limit,
                              worst, limit, "||S u - u||_{H^m} <= |dbeta| ||u||_{H^{m+2}}")

    def check_convolution_oracle(self) -> InvariantCheck:
        rng = self._rng(6)
        g = self.grid
        kernel = np.cos(g.x[:, None] - g.x[None, :])
        worst = 0.0
        for u in self._fields(rng, 100):
            direct = g.weight * kernel @ np.abs(u) ** 2
            fast = convolve_potential(self.cosine, u, g)
            worst = max(worst, float(np.max(np.abs(fast - direct))) / float(np.max(np.abs(direct))))
        return InvariantCheck("convolution_direct_sum", Severity.HARD, worst <= 1e-12, worst, 1e-12,
                              "FFT convolution equals the direct periodic sum")

    def check_nonlinearity_bound(self) -> InvariantCheck:
        rng = self._rng(7)
        ratios = [nonlinearity_bound_ratio(self.cosine, u, 1, self.grid)
                  for u in self._fields(rng, 100)]
        # order one for V = cos
        worst = float(max(ratios))
        return InvariantCheck("nonlinearity_bound", Severity.SOFT, worst <= 10.0, worst, 10.0,
                              "||Psi_0(u)||_{H^1} <= C ||u||^2 ||u||_{H^1}")

    def check_flow_growth(self) -> InvariantCheck:
        tau = 2.0 ** -8
        growth = flow_growth_ratio(self.cosine, tau, self.u0, 1, self.grid) - 1.0
        limit = 10.0 * tau
        return InvariantCheck("phase_flow_growth", Severity.SOFT, growth <= limit, growth, limit,
                              "||Phi_tau(u)||_{H^1} <= (1 + C tau) ||u||_{H^1}")

    def check_defect_order(self) -> InvariantCheck:
        base = psi0(self.cosine, self.u0, self.grid)
        points = []
        for k in range(6, 17):
            tau = 2.0 ** -k
            defect = sobolev_norm(psi_tau(self.cosine, tau, self.u0, self.grid) - base, 1, self.grid)
            points.append((tau, defect))
        slope = fit_slope(points).slope
        return InvariantCheck("consistency_defect_order", Severity.HARD, 0.9 <= slope <= 1.1,
                              slope, 1.0, "slope of ||Psi_tau - Psi_0||_{H^1} in [0.9, 1.1]")

    def check_split_conservation(self) -> InvariantCheck:
        report = run_conservation([SchemeKind.SPLIT], 2.0 ** -8, self.grid.M, 1.0, self.seed)
        drift = report.max_drift(SchemeKind.SPLIT)
        return InvariantCheck("split_l2_conservation", Severity.HARD, drift <= 1e-10, drift, 1e-10,
                              "Split keeps ||u_n|| = ||u_0||")

    def check_drift_ordering(self) -> InvariantCheck:
        report = run_conservation(list(SchemeKind), 2.0 ** -8, self.grid.M, 1.0, self.seed)
        split = report.max_drift(SchemeKind.SPLIT)
        others = min(report.max_drift(SchemeKind.EXP), report.max_drift(SchemeKind.MID))
        return InvariantCheck("drift_ordering", Severity.SOFT, others > split, others, split,
                              "Exp and Mid drift more than Split")

    def check_mid_linear_conservation(self) -> InvariantCheck:
        path = generate_path(self.seed, 0, 1.0, 2 ** 8)
        result = evolve(SchemeKind.MID, self.u0, path, 2 ** 8, self.zero, self.grid)
        drift = float(np.max(result.l2_drift()))
        return InvariantCheck("mid_linear_l2_conservation", Severity.HARD, drift <= 1e-12, drift,
                              1e-12, "Mid with V = 0 is a unitary Cayley step")

    def check_symplecticity(self) -> InvariantCheck:
        rng = self._rng(8)
        small = SpectralGrid(8)
        V = Potential.cosine(small)
        worst = 0.0
        for u in self._fields(rng, 20, small):
            tau = float(rng.uniform(0.01, 0.5))
            dbeta = math.sqrt(tau) * float(rng.standard_normal())
            worst = max(worst, symplectic_defect(SchemeKind.SPLIT, u, dbeta, tau, V, small))
        return InvariantCheck("split_symplecticity", Severity.HARD, worst <= 1e-5, worst, 1e-5,
                              "J^T Omega J = Omega for the Split step at M = 8")

    def check_linear_regime(self) -> InvariantCheck:
        N = 2 ** 6
        path = generate_path(self.seed, 1, 1.0, N)
        exact = propagate_linear(self.u0, path.terminal_value(), self.grid)
        scale = l2_norm(self.u0, self.grid)
        worst = 0.0
        for scheme in (SchemeKind.SPLIT, SchemeKind.EXP):
            u = evolve(scheme, self.u0, path, N, self.zero, self.grid).state.u
            worst = max(worst, l2_norm(u - exact, self.grid) / scale)
        return InvariantCheck("linear_regime_exact", Severity.HARD, worst <= 1e-12, worst, 1e-12,
                              "Split and Exp reduce to S(beta(T)) u_0 when V = 0")

    def check_mid_linear_order(self) -> InvariantCheck:
        # modes |n| <= 2 keep dbeta k^2 well below 1 on every level
        levels = range(7, 12)
        samples = 16
        u0 = random_field(self.grid, self._rng(9), bandwidth=2)
        errors = np.zeros((samples, len(levels)))
        for s in range(samples):
            path = generate_path(self.seed, 100 + s, 1.0, 2 ** max(levels))
            exact = propagate_linear(u0, path.terminal_value(), self.grid)
            for j, level in enumerate(levels):
                u = evolve(SchemeKind.MID, u0, path, 2 ** level, self.zero, self.grid).state.u
                errors[s, j] = sobolev_norm(u - exact, 1, self.grid)
        rms = np.sqrt(np.mean(errors ** 2, axis=0))
        slope = fit_slope([(2.0 ** -level, e) for level, e in zip(levels, rms)]).slope
        return InvariantCheck("mid_linear_order", Severity.SOFT, slope >= 0.8, slope, 0.8,
                              "Mid approaches S(beta(T)) u_0 with order about 1 when V = 0 "
                              "on a band-limited field")

    def check_path_coupling(self) -> InvariantCheck:
        path = generate_path(self.seed, 2, 1.0, 2 ** 12)
        beta_T = path.terminal_value()
        mismatches = 0
        for level in range(13):
            coarse = coarse_increments(path, 2 ** level)
            mismatches += int(float(coarsen(coarse, len(coarse))[0]) != beta_T)
        return InvariantCheck("path_coupling", Severity.HARD, mismatches == 0, float(mismatches), 0.0,
                              "every coarse-graining sums to the same beta(T)")

    def check_gaussianity(self) -> InvariantCheck:
        N = 2 ** 12
        path = generate_path(self.seed, 3, 1.0, N)
        p_value = float(stats.kstest(path.dW / math.sqrt(path.tau_fine), "norm").pvalue)
        return InvariantCheck("increment_gaussianity", Severity.SOFT, p_value > 1e-3, p_value, 1e-3,
                              "normalized increments pass a KS test against N(0, 1)")

    def _small_study(self, potential: str, workers: int) -> ConvergenceConfig:
        return ConvergenceConfig(
            schemes=tuple(SchemeKind), taus=(2.0 ** -3, 2.0 ** -4, 2.0 ** -5), tau_ref=2.0 ** -7,
            M=16, samples=4, potential=potential, workers=workers,
        )

    def check_convergence_exact_regime(self) -> InvariantCheck:
        report = run_convergence(self._small_study("zero", 1), self.seed)
        flagged = [report.exact_regime[s] for s in (SchemeKind.SPLIT, SchemeKind.EXP)]
        worst = float(np.max(report.per_sample_errors[:, :2, :]))
        return InvariantCheck("convergence_exact_regime", Severity.HARD, all(flagged), worst, 1e-12,
                              "V = 0 studies sit at roundoff and are flagged exact")

    def check_determinism(self) -> InvariantCheck:
        serial = run_convergence(self._small_study("cosine", 1), self.seed)
        pooled = run_convergence(self._small_study("cosine", max(2, self.workers)), self.seed)
        same = serial.convergence_frame().to_csv(float_format="%.17g") \
            == pooled.convergence_frame().to_csv(float_format="%.17g")
        return InvariantCheck("worker_determinism", Severity.HARD, same, 0.0 if same else 1.0, 0.0,
                              "convergence tables are identical for 1 and several workers")
