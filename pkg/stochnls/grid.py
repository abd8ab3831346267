"""
Spectral Grid Module

This module owns the periodic spatial discretization used by every scheme:
grid nodes, wavenumbers, the forward/inverse Fourier transforms, Laplacian
multipliers and the discrete L^2 / H^m norms.

Conventions:
    - nodes x_j = j*L/M, j = 0..M-1, with M a power of two
    - forward transform u_hat_k = (1/M) * sum_j u(x_j) exp(-i k x_j), so a pure
      mode exp(i k x) has a unit coefficient and Parseval reads
      ||u||_{L^2}^2 = L * sum_k |u_hat_k|^2
    - wavenumbers follow numpy's native FFT ordering, logical values
      {-M/2, ..., M/2-1} scaled by 2*pi/L; the Nyquist mode is kept
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .exceptions import ContractViolation, ConfigurationError

ComplexField = npt.NDArray[np.complex128]
FourierCoefficients = npt.NDArray[np.complex128]
RealField = npt.NDArray[np.float64]

MAX_SOBOLEV_INDEX = 8
SNAPSHOT_COLUMNS = ["x", "re", "im", "abs2"]

logger = logging.getLogger(__name__)


def is_power_of_two(n: int) -> bool:
    """True for positive integral powers of two (1, 2, 4, ...)"""
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SobolevIndex:
    """Order m of an H^m norm, capped at MAX_SOBOLEV_INDEX"""
    m: int

    def __post_init__(self):
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)):
            raise ContractViolation(f"Sobolev index must be an integer, got {self.m!r}")
        if not 0 <= self.m <= MAX_SOBOLEV_INDEX:
            raise ContractViolation(
                f"Sobolev index {self.m} outside [0, {MAX_SOBOLEV_INDEX}]"
            )

    def __int__(self) -> int:
        return int(self.m)


def as_sobolev_index(m: Union[int, SobolevIndex]) -> int:
    """Validate and unwrap a Sobolev index"""
    if isinstance(m, SobolevIndex):
        return int(m)
    return int(SobolevIndex(m))


@dataclass(frozen=True)
class SpectralGrid:
    """
    Immutable periodic grid on [0, L) with M nodes.

    The node and wavenumber arrays are built once and marked read-only, so a
    grid can be shared between concurrent samples.
    """
    M: int
    L: float = 2.0 * math.pi
    dealias: bool = False
    x: RealField = field(init=False, repr=False, compare=False)
    k: RealField = field(init=False, repr=False, compare=False)
    k2: RealField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not is_power_of_two(self.M) or self.M < 4:
            raise ConfigurationError(f"grid size must be a power of two >= 4, got {self.M}",
                                     key="grid_points")
        if not (math.isfinite(self.L) and self.L > 0):
            raise ConfigurationError(f"domain length must be positive, got {self.L}",
                                     key="domain_length")

        x = np.arange(self.M) * (self.L / self.M)
        k = np.fft.fftfreq(self.M, d=1.0 / self.M) * (2.0 * math.pi / self.L)
        k2 = k * k
        for arr in (x, k, k2):
            arr.setflags(write=False)

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "k2", k2)

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def weight(self) -> float:
        """Quadrature weight L/M of the trapezoid rule"""
        return self.L / self.M

    @property
    def mode_index(self) -> npt.NDArray[np.int64]:
        """Integer mode numbers in FFT order"""
        return np.rint(self.k * self.L / (2.0 * math.pi)).astype(np.int64)

    @property
    def dealias_mask(self) -> npt.NDArray[np.bool_]:
        """2/3-rule mask: keep |n| < M/3 (symmetric, Nyquist dropped)"""
        return np.abs(self.mode_index) < self.M / 3.0

    def validate(self, u: np.ndarray) -> ComplexField:
        """Check a field belongs to this grid and return it as complex128"""
        arr = np.asarray(u)
        if arr.ndim != 1 or arr.shape[0] != self.M:
            raise ContractViolation(
                f"field of shape {arr.shape} does not match grid size {self.M}"
            )
        return arr.astype(np.complex128, copy=False)


def forward_transform(u: ComplexField, g: SpectralGrid) -> FourierCoefficients:
    """
    Fourier coefficients u_hat_k = (1/M) sum_j u(x_j) exp(-i k x_j)

    Args:
        u: Field sampled on the grid nodes
        g: Grid the field lives on

    Returns:
        Coefficients in numpy FFT order
    """
    return np.fft.fft(g.validate(u), norm="forward")


def inverse_transform(coeffs: FourierCoefficients, g: SpectralGrid) -> ComplexField:
    """Inverse of forward_transform: u(x_j) = sum_k u_hat_k exp(i k x_j)"""
    return np.fft.ifft(g.validate(coeffs), norm="forward")


def l2_norm(u: ComplexField, g: SpectralGrid) -> float:
    """Discrete L^2 norm sqrt((L/M) sum_j |u(x_j)|^2)"""
    u = g.validate(u)
    return math.sqrt(g.weight * float(np.sum(u.real * u.real + u.imag * u.imag)))


def sobolev_weights(m: Union[int, SobolevIndex], g: SpectralGrid) -> RealField:
    """Fourier weights w_m(k) = sum_{j=0}^{m} k^{2j}"""
    m = as_sobolev_index(m)
    weights = np.ones(g.M)
    power = np.ones(g.M)
    for _ in range(m):
        power = power * g.k2
        weights = weights + power
    return weights


def sobolev_norm(u: ComplexField, m: Union[int, SobolevIndex], g: SpectralGrid) -> float:
    """
    Discrete H^m norm sqrt(L * sum_k w_m(k) |u_hat_k|^2)

    m = 0 goes through l2_norm so the two agree exactly.
    """
    m = as_sobolev_index(m)
    if m == 0:
        return l2_norm(u, g)
    u_hat = forward_transform(u, g)
    power = u_hat.real ** 2 + u_hat.imag ** 2
    return math.sqrt(g.L * float(np.sum(sobolev_weights(m, g) * power)))


def apply_laplacian_multiplier(u: ComplexField, factor: complex, g: SpectralGrid) -> ComplexField:
    """Apply factor * Laplacian in Fourier space: u_hat_k -> factor * (-k^2) * u_hat_k"""
    u_hat = forward_transform(u, g)
    return inverse_transform(factor * (-g.k2) * u_hat, g)


def random_field(g: SpectralGrid, rng: np.random.Generator,
                 bandwidth: Optional[int] = None, amplitude: float = 1.0) -> ComplexField:
    """
    Random band-limited field with modes |n| <= bandwidth

    Coefficients are independent complex normals scaled so the expected L^2
    norm is about amplitude * sqrt(L).
    """
    if bandwidth is None:
        bandwidth = g.M // 4
    band = np.abs(g.mode_index) <= bandwidth
    count = int(np.count_nonzero(band))
    coeffs = np.zeros(g.M, dtype=np.complex128)
    coeffs[band] = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) \
        * (amplitude / math.sqrt(2.0 * count))
    return inverse_transform(coeffs, g)


def write_snapshot(path: Union[str, Path], u: ComplexField, g: SpectralGrid) -> Path:
    """Write a field snapshot as CSV x,re,im,abs2 in full double precision"""
    u = g.validate(u)
    frame = pd.DataFrame({
        "x": g.x,
        "re": u.real,
        "im": u.imag,
        "abs2": u.real * u.real + u.imag * u.imag,
    }, columns=SNAPSHOT_COLUMNS)
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def read_snapshot(path: Union[str, Path], g: SpectralGrid) -> ComplexField:
    """Read a snapshot written by write_snapshot back onto grid g"""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = {"x", "re", "im"} - set(frame.columns)
    if missing:
        raise ContractViolation(f"snapshot {path} lacks columns {sorted(missing)}")
    return g.validate(frame["re"].to_numpy() + 1j * frame["im"].to_numpy())
