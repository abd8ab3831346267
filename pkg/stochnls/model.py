"""
Model Module

The nonlocal interaction cubic nonlinearity and the two exact sub-flows the
schemes are built from:

    V[u]      = V * |u|^2                    (periodic convolution)
    Psi_0(u)  = V[u] u
    Phi_tau(u)= exp(i tau V[u]) u            (exact nonlinear flow)
    Psi_tau(u)= (Phi_tau(u) - u) / (i tau)
    S(dbeta)  : u_hat_k -> exp(-i dbeta k^2) u_hat_k   (random linear propagator)

Convolution constant: with the (1/M)-normalized forward transform, the
quadrature sum (L/M) sum_j V(x_i - x_j) |u(x_j)|^2 equals
L * inverse(V_hat * rho_hat), rho = |u|^2. The direct-sum tests lock this in.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from .exceptions import ConfigurationError, ContractViolation
from .grid import (
    ComplexField, FourierCoefficients, RealField, SobolevIndex, SpectralGrid,
    forward_transform, inverse_transform, l2_norm, sobolev_norm,
)

logger = logging.getLogger(__name__)

BUILTIN_INITIAL_CONDITIONS = ("gaussian",)


class PotentialKind(Enum):
    """Supported interaction kernels"""
    COSINE = "cosine"
    ZERO = "zero"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class Potential:
    """
    Real interaction kernel V sampled on a grid

    The Fourier coefficients of the samples are computed once; the kernel is
    bound to the grid it was sampled on.
    """
    kind: PotentialKind
    samples: RealField
    grid: SpectralGrid
    coefficients: FourierCoefficients = field(init=False, repr=False, compare=False)
    half_coefficients: FourierCoefficients = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if np.iscomplexobj(samples):
            if np.any(samples.imag != 0.0):
                raise ContractViolation("potential samples must be real-valued")
            samples = samples.real
        samples = np.array(samples, dtype=np.float64)
        if samples.shape != (self.grid.M,):
            raise ContractViolation(
                f"potential has {samples.shape} samples, grid has {self.grid.M} nodes"
            )
        if not np.all(np.isfinite(samples)):
            raise ContractViolation("potential samples must be finite")
        samples.setflags(write=False)

        coefficients = np.fft.fft(samples, norm="forward")
        coefficients.setflags(write=False)
        half = np.fft.rfft(samples, norm="forward")
        half.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "half_coefficients", half)

    @property
    def is_zero(self) -> bool:
        return self.kind is PotentialKind.ZERO

    @classmethod
    def cosine(cls, g: SpectralGrid) -> "Potential":
        """V(x) = cos(x)"""
        if abs(math.remainder(g.L, 2.0 * math.pi)) > 1e-12 * g.L:
            logger.warning(f"cos(x) is not periodic on a domain of length {g.L}")
        return cls(PotentialKind.COSINE, np.cos(g.x), g)

    @classmethod
    def zero(cls, g: SpectralGrid) -> "Potential":
        """V = 0: the equation becomes linear"""
        return cls(PotentialKind.ZERO, np.zeros(g.M), g)

    @classmethod
    def from_csv(cls, path: Union[str, Path], g: SpectralGrid) -> "Potential":
        """
        Load a tabulated periodic potential

        Args:
            path: CSV file with columns x,V and exactly M rows
            g: Grid the samples must match

        Returns:
            TABULATED Potential
        """
        frame = pd.read_csv(path, float_precision="round_trip")
        if list(frame.columns) != ["x", "V"]:
            raise ConfigurationError(f"potential file {path} must have columns x,V",
                                     key="potential")
        if len(frame) != g.M:
            raise ConfigurationError(
                f"potential file {path} has {len(frame)} rows, grid has {g.M} nodes",
                key="potential",
            )
        if np.max(np.abs(frame["x"].to_numpy() - g.x)) > 1e-9 * g.L:
            raise ConfigurationError(f"potential file {path} nodes do not match the grid",
                                     key="potential")
        return cls(PotentialKind.TABULATED, frame["V"].to_numpy(), g)

    @classmethod
    def from_spec(cls, spec: str, g: SpectralGrid) -> "Potential":
        """Builtin name ('cosine', 'zero') or path of a CSV table"""
        if spec == PotentialKind.COSINE.value:
            return cls.cosine(g)
        if spec == PotentialKind.ZERO.value:
            return cls.zero(g)
        if Path(spec).is_file():
            return cls.from_csv(spec, g)
        raise ConfigurationError(f"unknown potential '{spec}' (not a builtin, not a file)",
                                 key="potential")


@dataclass(frozen=True)
class FlowTime:
    """Step size tau of a flow, restricted to (0, 1)"""
    tau: float

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ContractViolation(f"flow time must lie in (0, 1), got {self.tau}")

    def __float__(self) -> float:
        return float(self.tau)


def as_flow_time(tau: Union[float, FlowTime]) -> float:
    """Validate and unwrap a flow time"""
    if isinstance(tau, FlowTime):
        return float(tau)
    return float(FlowTime(float(tau)))


def _check_grid(V: Potential, g: SpectralGrid):
    if V.grid.M != g.M or V.grid.L != g.L:
        raise ContractViolation(
            f"potential sampled on M={V.grid.M}, L={V.grid.L} used on M={g.M}, L={g.L}"
        )


def convolve_potential(V: Potential, u: ComplexField, g: SpectralGrid) -> RealField:
    """
    V[u] = V * |u|^2 as a real field

    Both factors are real, so the product is formed on the non-negative modes
    of the real transform and the result is real by construction.
    """
    _check_grid(V, g)
    u = g.validate(u)
    density = u.real * u.real + u.imag * u.imag
    rho_hat = np.fft.rfft(density, norm="forward")
    if g.dealias:
        rho_hat = np.where(g.dealias_mask[:len(rho_hat)], rho_hat, 0.0)
    return g.L * np.fft.irfft(V.half_coefficients * rho_hat, n=g.M, norm="forward")


def psi0(V: Potential, u: ComplexField, g: SpectralGrid) -> ComplexField:
    """Psi_0(u) = V[u] u"""
    return convolve_potential(V, u, g) * g.validate(u)


def phi_flow(V: Potential, tau: Union[float, FlowTime], u: ComplexField,
             g: SpectralGrid) -> ComplexField:
    """Exact nonlinear flow exp(i tau V[u]) u; |u| is unchanged at every node"""
    tau = as_flow_time(tau)
    return np.exp(1j * tau * convolve_potential(V, u, g)) * g.validate(u)


def psi_tau(V: Potential, tau: Union[float, FlowTime], u: ComplexField,
            g: SpectralGrid) -> ComplexField:
    """Difference quotient (Phi_tau(u) - u) / (i tau)"""
    tau = float(tau)
    if not tau > 0.0:
        raise ContractViolation(f"tau must be positive, got {tau}")
    u = g.validate(u)
    phase = np.exp(1j * tau * convolve_potential(V, u, g))
    return (phase * u - u) / (1j * tau)


def propagate_linear(u: ComplexField, dbeta: float, g: SpectralGrid) -> ComplexField:
    """S(t, s) u with dbeta = beta(t) - beta(s): u_hat_k -> exp(-i dbeta k^2) u_hat_k"""
    if not math.isfinite(dbeta):
        raise ContractViolation(f"Brownian increment must be finite, got {dbeta}")
    u_hat = forward_transform(u, g)
    return inverse_transform(np.exp(-1j * dbeta * g.k2) * u_hat, g)


def initial_condition(spec: str, g: SpectralGrid) -> ComplexField:
    """
    Initial value u_0

    Args:
        spec: 'gaussian' for exp(-0.5 (x - L/2)^2), or a CSV path with x,re,im
        g: Grid to sample on

    Returns:
        Complex field on g
    """
    if spec in BUILTIN_INITIAL_CONDITIONS:
        return np.exp(-0.5 * (g.x - 0.5 * g.L) ** 2).astype(np.complex128)

    if Path(spec).is_file():
        frame = pd.read_csv(spec, float_precision="round_trip")
        missing = {"x", "re", "im"} - set(frame.columns)
        if missing:
            raise ConfigurationError(f"initial condition file {spec} lacks {sorted(missing)}",
                                     key="initial_condition")
        if len(frame) != g.M:
            raise ConfigurationError(
                f"initial condition file {spec} has {len(frame)} rows, grid has {g.M}",
                key="initial_condition",
            )
        if np.max(np.abs(frame["x"].to_numpy() - g.x)) > 1e-9 * g.L:
            raise ConfigurationError(f"initial condition file {spec} nodes do not match the grid",
                                     key="initial_condition")
        u0 = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        if not np.all(np.isfinite(u0)):
            raise ConfigurationError(f"initial condition file {spec} holds non-finite values",
                                     key="initial_condition")
        return u0.astype(np.complex128)

    raise ConfigurationError(f"unknown initial condition '{spec}'", key="initial_condition")


def nonlinearity_bound_ratio(V: Potential, u: ComplexField, m: Union[int, SobolevIndex],
                             g: SpectralGrid) -> float:
    """Measured constant ||Psi_0(u)||_{H^m} / (||u||_{L^2}^2 ||u||_{H^m})"""
    denominator = l2_norm(u, g) ** 2 * sobolev_norm(u, m, g)
    if denominator == 0.0:
        return 0.0
    return sobolev_norm(psi0(V, u, g), m, g) / denominator


def lipschitz_ratio(V: Potential, u1: ComplexField, u2: ComplexField,
                    m: Union[int, SobolevIndex], g: SpectralGrid) -> float:
    """
    Measured constant of the local Lipschitz bound

    ||Psi_0(u2) - Psi_0(u1)||_{H^m} / ((||u1||^2 + ||u2||^2) ||u2 - u1||), H^m norms
    """
    diff = sobolev_norm(g.validate(u2) - g.validate(u1), m, g)
    scale = sobolev_norm(u1, m, g) ** 2 + sobolev_norm(u2, m, g) ** 2
    if diff == 0.0 or scale == 0.0:
        return 0.0
    return sobolev_norm(psi0(V, u2, g) - psi0(V, u1, g), m, g) / (scale * diff)


def flow_growth_ratio(V: Potential, tau: Union[float, FlowTime], u: ComplexField,
                      m: Union[int, SobolevIndex], g: SpectralGrid) -> float:
    """One-step H^m growth ||Phi_tau(u)||_{H^m} / ||u||_{H^m} of the phase flow"""
    norm = sobolev_norm(u, m, g)
    if norm == 0.0:
        return 1.0
    return sobolev_norm(phi_flow(V, tau, u, g), m, g) / norm
