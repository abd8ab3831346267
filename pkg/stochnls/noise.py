"""
Brownian Noise Module

Generates reproducible Brownian paths at the finest dyadic resolution of a
study and serves coarse-grained increments to every scheme and step size, so
all resolutions of one sample are driven by the same path.

Sampling method: each (seed, sample_index) pair is mixed by numpy's
SeedSequence into an independent PCG64 stream; increments are drawn with
Generator.standard_normal (ziggurat) and scaled by sqrt(T/N_fine).

Coarsening: increments are summed pairwise, dW[0::2] + dW[1::2], one dyadic
level at a time. Coarsening by 2^r is always r pairwise passes, so any chain of
coarsenings produces the same bits.
"""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .exceptions import ConfigurationError, ContractViolation
from .grid import is_power_of_two

logger = logging.getLogger(__name__)

Increments = npt.NDArray[np.float64]

_HEADER_PATTERN = re.compile(r"^#\s*(\w+)\s*=\s*(\S+)\s*$")


@dataclass(frozen=True)
class BrownianPath:
    """Fine Brownian increments of one Monte Carlo sample"""
    T: float
    N_fine: int
    dW: Increments
    seed: int
    sample_index: int

    @property
    def tau_fine(self) -> float:
        return self.T / self.N_fine

    def terminal_value(self) -> float:
        """beta(T), reduced with the same pairwise tree as every coarsening"""
        return float(coarse_increments(self, 1)[0])

    def values(self) -> Increments:
        """beta(t_n) at the fine times t_0 = 0 .. t_N = T"""
        return np.concatenate(([0.0], np.cumsum(self.dW)))


@dataclass(frozen=True)
class NormalizedIncrement:
    """chi_n = (beta(t_{n+1}) - beta(t_n)) / sqrt(tau)"""
    chi: float
    tau: float

    @classmethod
    def from_increment(cls, dbeta: float, tau: float) -> "NormalizedIncrement":
        return cls(chi=dbeta / math.sqrt(tau), tau=tau)

    @property
    def raw(self) -> float:
        return self.chi * math.sqrt(self.tau)


def sample_stream(seed: int, sample_index: int) -> np.random.Generator:
    """Independent generator for one sample, keyed on (seed, sample_index)"""
    if seed < 0 or sample_index < 0:
        raise ConfigurationError(
            f"seed and sample index must be non-negative, got ({seed}, {sample_index})",
            key="seed",
        )
    sequence = np.random.SeedSequence([int(seed), int(sample_index)])
    return np.random.Generator(np.random.PCG64(sequence))


def generate_path(seed: int, sample_index: int, T: float, N_fine: int) -> BrownianPath:
    """
    Draw the fine increments of one sample

    Args:
        seed: Master seed of the study
        sample_index: Index of the Monte Carlo sample
        T: Time horizon
        N_fine: Number of finest steps (power of two)

    Returns:
        BrownianPath whose increments are i.i.d. Normal(0, T/N_fine)
    """
    if not is_power_of_two(N_fine):
        raise ConfigurationError(f"number of fine steps must be a power of two, got {N_fine}",
                                 key="tau_ref")
    if not (math.isfinite(T) and T > 0):
        raise ConfigurationError(f"time horizon must be positive, got {T}", key="t_end")

    rng = sample_stream(seed, sample_index)
    dW = rng.standard_normal(N_fine) * math.sqrt(T / N_fine)
    dW.setflags(write=False)
    return BrownianPath(T=float(T), N_fine=int(N_fine), dW=dW,
                        seed=int(seed), sample_index=int(sample_index))


def coarsen(increments: Increments, factor: int) -> Increments:
    """Sum groups of `factor` consecutive increments by repeated pairwise passes"""
    if not is_power_of_two(factor) or len(increments) % factor:
        raise ConfigurationError(
            f"coarsening factor {factor} must be a power of two dividing {len(increments)}"
        )
    out = np.array(increments, dtype=np.float64)
    while factor > 1:
        out = out[0::2] + out[1::2]
        factor //= 2
    return out


def coarse_increments(path: BrownianPath, N_coarse: int) -> Increments:
    """
    Increments of path over N_coarse equal steps

    Entry n is the sum of the fine increments covering [t_n, t_{n+1}].
    N_coarse = N_fine returns a copy.
    """
    if not is_power_of_two(N_coarse) or path.N_fine % N_coarse:
        raise ConfigurationError(
            f"{N_coarse} coarse steps do not divide {path.N_fine} fine steps dyadically",
            key="tau_ladder",
        )
    return coarsen(path.dW, path.N_fine // N_coarse)


def normalized_increments(path: BrownianPath, N: int) -> Increments:
    """chi_n for the N-step discretization of path"""
    tau = path.T / N
    return coarse_increments(path, N) / math.sqrt(tau)


def dump_path(path: BrownianPath, target: Union[str, Path]) -> Path:
    """Write the fine increments as CSV with a # header for external replay"""
    target = Path(target)
    with open(target, "w") as f:
        f.write(f"# seed={path.seed}\n")
        f.write(f"# sample_index={path.sample_index}\n")
        f.write(f"# T={path.T!r}\n")
        f.write(f"# N_fine={path.N_fine}\n")
        pd.DataFrame({"dW": path.dW}).to_csv(f, index=False, float_format="%.17g")
    logger.debug(f"Path dump written to {target}")
    return target


def load_path(source: Union[str, Path]) -> BrownianPath:
    """Read a path written by dump_path"""
    header: Dict[str, str] = {}
    with open(source, "r") as f:
        for line in f:
            if not line.startswith("#"):
                break
            match = _HEADER_PATTERN.match(line.strip())
            if match:
                header[match.group(1)] = match.group(2)

    for key in ("seed", "sample_index", "T", "N_fine"):
        if key not in header:
            raise ContractViolation(f"path file {source} lacks header field '{key}'")

    dW = pd.read_csv(source, comment="#", float_precision="round_trip")["dW"].to_numpy(dtype=np.float64)
    if len(dW) != int(header["N_fine"]):
        raise ContractViolation(
            f"path file {source} holds {len(dW)} increments, header says {header['N_fine']}"
        )
    dW.setflags(write=False)
    return BrownianPath(T=float(header["T"]), N_fine=int(header["N_fine"]), dW=dW,
                        seed=int(header["seed"]), sample_index=int(header["sample_index"]))
