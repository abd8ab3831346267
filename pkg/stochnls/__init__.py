"""
Stochastic Nonlinear Schrodinger Solver with White Noise Dispersion

This package simulates the periodic 1-d equation

    i du + Lap u o dbeta + V[u] u dt = 0,    V[u] = V * |u|^2

on a pseudospectral grid and studies its time discretizations:

- Lie-Trotter splitting (exactly L^2-conserving and symplectic)
- stochastic exponential integrator
- semi-implicit midpoint scheme

Main Components:
- grid: spectral grid, Fourier transforms, L^2 / H^m norms
- noise: reproducible Brownian paths with dyadic coarse-graining
- model: interaction potential, nonlinear flows, random propagator
- integrators: one-step maps, trajectory evolution, symplectic defect
- experiments: coupled-path convergence, conservation and regularity studies
- invariants: the structural check battery behind `selftest`
- utils: run configuration, logging setup, summary writer

Example Usage:
    from stochnls import ConvergenceConfig, run_convergence

    cfg = ConvergenceConfig(schemes=("split",), taus=(2**-6, 2**-7, 2**-8),
                            tau_ref=2**-10, M=64, samples=20)
    report = run_convergence(cfg, seed=20210101)
    print(report.slopes_frame())
"""

__version__ = "1.0.0"
__author__ = "Stochastic NLS Team"

from .exceptions import (
    StochNLSError,
    ContractViolation,
    ConfigurationError,
    InstabilityError,
    StudyAborted
)

from .grid import (
    SpectralGrid,
    SobolevIndex,
    forward_transform,
    inverse_transform,
    l2_norm,
    sobolev_norm,
    apply_laplacian_multiplier,
    random_field,
    write_snapshot,
    read_snapshot
)

from .noise import (
    BrownianPath,
    NormalizedIncrement,
    generate_path,
    coarse_increments,
    normalized_increments,
    dump_path,
    load_path
)

from .model import (
    Potential,
    PotentialKind,
    FlowTime,
    convolve_potential,
    psi0,
    phi_flow,
    psi_tau,
    propagate_linear,
    initial_condition
)

from .integrators import (
    SchemeKind,
    StepperConfig,
    Stepper,
    EvolutionState,
    EvolutionResult,
    step_split,
    step_exp,
    step_mid,
    make_stepper,
    evolve,
    symplectic_defect,
    hm_growth_rate
)

from .experiments import (
    ConvergenceConfig,
    ConvergenceReport,
    ConservationReport,
    RegularityReport,
    SlopeFit,
    run_convergence,
    run_conservation,
    run_regularity,
    fit_slope,
    probability_convergence_check,
    moment_table
)

from .invariants import (
    InvariantChecker,
    InvariantCheck,
    SelftestResult,
    Severity
)

from .utils import (
    RunConfig,
    ConfigManager,
    parse_config,
    setup_logging,
    write_summary
)

from .cli_graphics import (
    CLIGraphics
)

__all__ = [
    # Errors
    'StochNLSError',
    'ContractViolation',
    'ConfigurationError',
    'InstabilityError',
    'StudyAborted',

    # Grid
    'SpectralGrid',
    'SobolevIndex',
    'forward_transform',
    'inverse_transform',
    'l2_norm',
    'sobolev_norm',
    'apply_laplacian_multiplier',
    'random_field',
    'write_snapshot',
    'read_snapshot',

    # Noise
    'BrownianPath',
    'NormalizedIncrement',
    'generate_path',
    'coarse_increments',
    'normalized_increments',
    'dump_path',
    'load_path',

    # Model
    'Potential',
    'PotentialKind',
    'FlowTime',
    'convolve_potential',
    'psi0',
    'phi_flow',
    'psi_tau',
    'propagate_linear',
    'initial_condition',

    # Integrators
    'SchemeKind',
    'StepperConfig',
    'Stepper',
    'EvolutionState',
    'EvolutionResult',
    'step_split',
    'step_exp',
    'step_mid',
    'make_stepper',
    'evolve',
    'symplectic_defect',
    'hm_growth_rate',

    # Experiments
    'ConvergenceConfig',
    'ConvergenceReport',
    'ConservationReport',
    'RegularityReport',
    'SlopeFit',
    'run_convergence',
    'run_conservation',
    'run_regularity',
    'fit_slope',
    'probability_convergence_check',
    'moment_table',

    # Invariants
    'InvariantChecker',
    'InvariantCheck',
    'SelftestResult',
    'Severity',

    # Utilities
    'RunConfig',
    'ConfigManager',
    'parse_config',
    'setup_logging',
    'write_summary',
    'CLIGraphics'
]

PACKAGE_INFO = {
    'name': 'stochnls',
    'version': __version__,
    'description': 'Time integrators for the stochastic NLS equation with white noise dispersion',
    'author': __author__,
    'license': 'MIT',
    'python_requires': '>=3.8',
    'keywords': ['stochastic pde', 'schrodinger', 'splitting', 'pseudospectral', 'monte carlo'],
    'classifiers': [
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Physics'
    ]
}
