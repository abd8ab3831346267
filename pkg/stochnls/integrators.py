"""
Time Integrators Module

One-step maps of the three schemes behind a common stepper interface, full
trajectory evolution with diagnostics, and structure-preservation measurements.

Schemes (dbeta = beta(t_{n+1}) - beta(t_n)):
    SPLIT  u_{n+1} = S(dbeta) Phi_tau(u_n)                     (Lie-Trotter)
    EXP    u_{n+1} = S(dbeta) (u_n + i tau V[u_n] u_n)           (exponential)
    MID    i (u_{n+1} - u_n)/tau + chi_n/sqrt(tau) Lap u_{n+1/2} + V[u_n] u_n = 0
           solved mode by mode in Fourier space
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .exceptions import ConfigurationError, InstabilityError
from .grid import (
    ComplexField, SpectralGrid, as_sobolev_index,
    forward_transform, inverse_transform, l2_norm, sobolev_norm, write_snapshot,
)
from .model import FlowTime, Potential, as_flow_time, phi_flow, propagate_linear, psi0
from .noise import BrownianPath, NormalizedIncrement, coarse_increments

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ["n", "t", "l2", "h1", "h2"]
MAX_SYMPLECTIC_GRID = 16


class SchemeKind(Enum):
    """Available time integrators"""
    SPLIT = "split"
    EXP = "exp"
    MID = "mid"

    @classmethod
    def parse(cls, value: Union[str, "SchemeKind"]) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ConfigurationError(f"unknown scheme '{value}' (expected one of {choices})",
                                     key="schemes")


def step_split(u_n: ComplexField, dbeta: float, tau: Union[float, FlowTime],
               V: Potential, g: SpectralGrid) -> ComplexField:
    """Lie-Trotter step: nonlinear phase flow first, then the random propagator"""
    return propagate_linear(phi_flow(V, tau, u_n, g), dbeta, g)


def step_exp(u_n: ComplexField, dbeta: float, tau: Union[float, FlowTime],
             V: Potential, g: SpectralGrid) -> ComplexField:
    """Stochastic exponential integrator step"""
    tau = as_flow_time(tau)
    u_n = g.validate(u_n)
    return propagate_linear(u_n + 1j * tau * psi0(V, u_n, g), dbeta, g)


def step_mid(u_n: ComplexField, chi_n: float, tau: Union[float, FlowTime],
             V: Potential, g: SpectralGrid) -> ComplexField:
    """
    Semi-implicit midpoint step, solved exactly per Fourier mode

    With a_k = sqrt(tau) chi_n k^2 / 2 and N_hat the coefficients of Psi_0(u_n):
        u_hat_{n+1,k} = ((i + a_k) u_hat_{n,k} - tau N_hat_k) / (i - a_k)
    The denominator never vanishes for real a_k.
    """
    tau = as_flow_time(tau)
    u_hat = forward_transform(u_n, g)
    n_hat = forward_transform(psi0(V, u_n, g), g)
    a = (math.sqrt(tau) * chi_n / 2.0) * g.k2
    return inverse_transform(((1j + a) * u_hat - tau * n_hat) / (1j - a), g)


def mid_residual(u_n: ComplexField, u_next: ComplexField, chi_n: float, tau: float,
                 V: Potential, g: SpectralGrid) -> float:
    """Largest per-mode residual of the midpoint relation, in coefficient units"""
    u_hat = forward_transform(u_n, g)
    v_hat = forward_transform(u_next, g)
    n_hat = forward_transform(psi0(V, u_n, g), g)
    residual = 1j * (v_hat - u_hat) / tau \
        + (chi_n / math.sqrt(tau)) * (-g.k2) * 0.5 * (u_hat + v_hat) + n_hat
    return float(np.max(np.abs(residual))) * tau


@dataclass(frozen=True)
class StepperConfig:
    """Scheme, step size and Sobolev index of the diagnostics"""
    scheme: SchemeKind
    tau: float
    m_diag: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme))
        object.__setattr__(self, "tau", as_flow_time(self.tau))
        object.__setattr__(self, "m_diag", as_sobolev_index(self.m_diag))

    @classmethod
    def for_run(cls, scheme: Union[str, SchemeKind], T: float, N: int,
                m_diag: int = 1) -> "StepperConfig":
        """tau = T/N for a run of N steps over [0, T]"""
        return cls(SchemeKind.parse(scheme), T / N, m_diag)


class Stepper:
    """
    One-step map of a scheme consuming raw Brownian increments

    The midpoint scheme works with normalized increments chi_n; the conversion
    happens here so every caller feeds dbeta.
    """

    def __init__(self, config: StepperConfig, potential: Potential, grid: SpectralGrid):
        self.config = config
        self.potential = potential
        self.grid = grid

    @property
    def scheme(self) -> SchemeKind:
        return self.config.scheme

    @property
    def tau(self) -> float:
        return self.config.tau

    def step(self, u: ComplexField, dbeta: float) -> ComplexField:
        if self.config.scheme is SchemeKind.SPLIT:
            return step_split(u, dbeta, self.tau, self.potential, self.grid)
        if self.config.scheme is SchemeKind.EXP:
            return step_exp(u, dbeta, self.tau, self.potential, self.grid)
        chi = NormalizedIncrement.from_increment(dbeta, self.tau).chi
        return step_mid(u, chi, self.tau, self.potential, self.grid)

    __call__ = step


def make_stepper(config: StepperConfig, potential: Potential, grid: SpectralGrid) -> Stepper:
    """Build the one-step map described by config"""
    return Stepper(config, potential, grid)


@dataclass
class EvolutionState:
    """Step index, time, current field and its running norms"""
    n: int
    t: float
    u: ComplexField
    l2: float
    hm: Dict[int, float] = field(default_factory=dict)


@dataclass
class Snapshot:
    """Field recorded at step n"""
    n: int
    t: float
    u: ComplexField


@dataclass
class EvolutionResult:
    """Final state, snapshots and per-step diagnostics of one trajectory"""
    scheme: SchemeKind
    tau: float
    state: EvolutionState
    snapshots: List[Snapshot] = field(default_factory=list)
    diagnostics: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=DIAGNOSTIC_COLUMNS))

    def l2_drift(self) -> np.ndarray:
        """|‖u_n‖ - ‖u_0‖| / ‖u_0‖ for every recorded step"""
        l2 = self.diagnostics["l2"].to_numpy()
        if len(l2) == 0 or l2[0] == 0.0:
            return np.zeros(len(l2))
        return np.abs(l2 - l2[0]) / l2[0]

    def write(self, directory: Union[str, Path], g: SpectralGrid) -> Dict[str, Path]:
        """Write diagnostics.csv and snapshots/snapshot_<n>.csv"""
        directory = Path(directory)
        snapshot_dir = directory / "snapshots"
        snapshot_dir.mkdir(parents=True, exist_ok=True)

        files = {"diagnostics": directory / "diagnostics.csv"}
        self.diagnostics.to_csv(files["diagnostics"], index=False, float_format="%.17g")
        for snap in self.snapshots:
            files[f"snapshot_{snap.n}"] = write_snapshot(
                snapshot_dir / f"snapshot_{snap.n:08d}.csv", snap.u, g
            )
        return files


def _diagnostic_row(n: int, t: float, u: ComplexField, g: SpectralGrid,
                    extra_m: Optional[int]) -> Dict[str, float]:
    row = {"n": n, "t": t, "l2": l2_norm(u, g),
           "h1": sobolev_norm(u, 1, g), "h2": sobolev_norm(u, 2, g)}
    if extra_m is not None:
        row[f"h{extra_m}"] = sobolev_norm(u, extra_m, g)
    return row


def evolve(scheme: Union[str, SchemeKind], u0: ComplexField, path: BrownianPath, N: int,
           V: Potential, g: SpectralGrid, snapshot_every: int = 0,
           m_diag: int = 1) -> EvolutionResult:
    """
    Iterate a scheme over the N-step coarse-graining of path

    Args:
        scheme: Integrator to use
        u0: Initial field
        path: Brownian path; N must divide path.N_fine dyadically
        N: Number of steps (0 returns u0 unchanged)
        V: Interaction potential
        g: Spatial grid
        snapshot_every: Record the field every this many steps (0 disables);
            the initial and final fields are always recorded when enabled
        m_diag: Sobolev index tracked in the running state

    Returns:
        EvolutionResult with final state, snapshots and diagnostics

    Raises:
        InstabilityError: a step produced a non-finite value
    """
    scheme = SchemeKind.parse(scheme)
    m_diag = as_sobolev_index(m_diag)
    u = g.validate(u0).copy()
    extra_m = m_diag if m_diag not in (0, 1, 2) else None
    rows = [_diagnostic_row(0, 0.0, u, g, extra_m)]
    snapshots = [Snapshot(0, 0.0, u.copy())] if snapshot_every > 0 else []

    if N == 0:
        state = EvolutionState(0, 0.0, u, rows[0]["l2"], {m_diag: sobolev_norm(u, m_diag, g)})
        return EvolutionResult(scheme, 0.0, state, snapshots, pd.DataFrame(rows))

    increments = coarse_increments(path, N)
    stepper = make_stepper(StepperConfig.for_run(scheme, path.T, N, m_diag), V, g)
    tau = stepper.tau
    logger.info(f"Evolving {scheme.value} over {N} steps (tau={tau:.6g}, M={g.M})")

    for n in range(N):
        u = stepper.step(u, increments[n])
        if not np.all(np.isfinite(u)):
            raise InstabilityError(n + 1, scheme.value)
        t = (n + 1) * tau
        rows.append(_diagnostic_row(n + 1, t, u, g, extra_m))
        if snapshot_every > 0 and ((n + 1) % snapshot_every == 0 or n + 1 == N):
            snapshots.append(Snapshot(n + 1, t, u.copy()))

    last = rows[-1]
    state = EvolutionState(N, N * tau, u, last["l2"], {m_diag: sobolev_norm(u, m_diag, g)})
    return EvolutionResult(scheme, tau, state, snapshots, pd.DataFrame(rows))


def hm_growth_rate(diagnostics: pd.DataFrame, column: str = "h1") -> float:
    """
    Measured C in ‖u_n‖_{H^m} <= exp(C t_n) ‖u_0‖_{H^m}

    Returns the largest log(h_n / h_0) / t_n over the run (0 for empty runs).
    """
    t = diagnostics["t"].to_numpy()
    h = diagnostics[column].to_numpy()
    if len(t) < 2 or h[0] == 0.0:
        return 0.0
    rates = np.log(h[1:] / h[0]) / t[1:]
    return float(np.max(rates))


def symplectic_defect(scheme: Union[str, SchemeKind], u: ComplexField, dbeta: float,
                      tau: float, V: Potential, g_small: SpectralGrid) -> float:
    """
    ‖J^T Omega J - Omega‖_max for the one-step map on (p, q) = (Re u, Im u)

    J is built by central differences with step h = 1e-6 (1 + ‖u‖_inf); Omega is
    the canonical matrix of the two-form (L/M) sum_j dp_j ^ dq_j.
    """
    M = g_small.M
    if M > MAX_SYMPLECTIC_GRID:
        raise ConfigurationError(
            f"symplectic defect needs M <= {MAX_SYMPLECTIC_GRID}, got {M}", key="grid_points"
        )
    stepper = make_stepper(StepperConfig(SchemeKind.parse(scheme), tau), V, g_small)
    u = g_small.validate(u)

    def one_step(z: np.ndarray) -> np.ndarray:
        w = stepper.step(z[:M] + 1j * z[M:], dbeta)
        return np.concatenate((w.real, w.imag))

    z0 = np.concatenate((u.real, u.imag))
    h = 1e-6 * (1.0 + float(np.max(np.abs(u))))
    J = np.empty((2 * M, 2 * M))
    for j in range(2 * M):
        e = np.zeros(2 * M)
        e[j] = h
        J[:, j] = (one_step(z0 + e) - one_step(z0 - e)) / (2.0 * h)

    identity = np.eye(M)
    zero = np.zeros((M, M))
    omega = g_small.weight * np.block([[zero, identity], [-identity, zero]])
    return float(np.max(np.abs(J.T @ omega @ J - omega)))


