#!/usr/bin/env python3
"""
Stochastic NLS Solver
Main Command Line Interface

Runs trajectory evolutions, L^2 conservation comparisons, strong convergence
and temporal regularity studies, and the invariant self-test. Every run
writes CSV artifacts, effective_config.yaml and summary.json to the output
directory.

Usage:
    python main.py --config data/fig1_evolution.yaml
    python main.py --config data/fig3_convergence.yaml --workers 8 --out results/fig3
    python main.py --command selftest
    python main.py --command conservation --set tau=2^-8 --set grid_points=1024

Exit status: 0 when every hard invariant held, 1 on runtime failure or a
violated invariant, 2 on invalid configuration.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from stochnls import (
    __version__, CLIGraphics, ConfigManager, ConfigurationError, InvariantChecker,
    Potential, RunConfig, SchemeKind, SpectralGrid, StochNLSError, dump_path, evolve,
    generate_path, hm_growth_rate, initial_condition, moment_table, parse_config,
    probability_convergence_check, run_conservation, run_convergence, run_regularity,
    setup_logging, write_summary,
)
from stochnls.colors import Colors, print_banner, print_separator
from stochnls.experiments import SPLIT_DRIFT_TOLERANCE, steps_for
from stochnls.invariants import DEFAULT_SELFTEST_GRID
from stochnls.utils import COMMANDS

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

CSV_FLOAT_FORMAT = "%.17g"


class StochNLSCLI:
    """Command Line Interface for the stochastic NLS solver"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.cli_graphics = CLIGraphics()
        self.config: Optional[RunConfig] = None
        self.output_dir: Optional[Path] = None
        self.artifacts: List[str] = []
        self.invariants: List[Dict[str, Any]] = []

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Main entry point for CLI

        Returns:
            Process exit status
        """
        args = self.parse_arguments(argv)
        logging.basicConfig(level=logging.INFO,
                            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        try:
            self.config = parse_config(
                args.config,
                overrides={"command": args.command, "seed": args.seed,
                           "workers": args.workers, "output_dir": args.out},
                assignments=args.set,
            )
        except ConfigurationError as e:
            self.logger.error(f"Invalid configuration: {e}")
            print(Colors.error(f"Configuration error: {e}"))
            return EXIT_CONFIG

        self.output_dir = Path(self.config.output_dir)
        setup_logging(self.config, self.output_dir, verbose=args.verbose)
        effective = ConfigManager.save_effective_config(self.config, self.output_dir)
        self.artifacts.append(effective.name)

        if not args.quiet:
            print_banner()

        handlers = {
            'evolve': self.cmd_evolve,
            'conservation': self.cmd_conservation,
            'convergence': self.cmd_convergence,
            'regularity': self.cmd_regularity,
            'selftest': self.cmd_selftest,
        }

        try:
            summary = handlers[self.config.command]()
        except KeyboardInterrupt:
            print(Colors.warning("\n\nOperation cancelled by user."))
            return EXIT_FAILURE
        except ConfigurationError as e:
            self.logger.error(f"Invalid configuration: {e}")
            print(Colors.error(f"Configuration error: {e}"))
            return EXIT_CONFIG
        except StochNLSError as e:
            self.logger.error(f"Command failed: {e}")
            print(Colors.error(f"Error: {e}"))
            self._write_summary({"error": str(e), "error_type": type(e).__name__})
            return EXIT_FAILURE

        self._write_summary(summary)
        failed = [check["name"] for check in self.invariants if check["hard"] and not check["passed"]]
        if failed:
            print(Colors.error(f"Hard invariants violated: {', '.join(failed)}"))
            return EXIT_FAILURE
        print(Colors.success(f"Done. Artifacts in {self.output_dir}"))
        return EXIT_OK

    def parse_arguments(self, argv: Optional[List[str]] = None):
        """Parse command line arguments"""
        parser = argparse.ArgumentParser(
            description="Time integrators for the stochastic NLS equation with white noise dispersion",
            epilog="Examples:\n"
                   "  %(prog)s --config data/fig1_evolution.yaml\n"
                   "  %(prog)s --config data/fig3_convergence.yaml --workers 8\n"
                   "  %(prog)s --command selftest\n"
                   "  %(prog)s --command conservation --set tau=2^-8",
            formatter_class=argparse.RawDescriptionHelpFormatter
        )

        parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        parser.add_argument('--verbose', '-v', action='store_true',
                            help='Enable debug logging')
        parser.add_argument('--quiet', '-q', action='store_true',
                            help='Do not print the banner')
        parser.add_argument('--config', '-c', type=str,
                            help='YAML configuration file')
        parser.add_argument('--command', choices=COMMANDS,
                            help='Run mode (overrides the config file)')
        parser.add_argument('--seed', type=int,
                            help='Master seed of the Brownian paths')
        parser.add_argument('--workers', '-j', type=int,
                            help='Number of concurrent samples')
        parser.add_argument('--out', '-o', type=str,
                            help='Output directory')
        parser.add_argument('--set', action='append', metavar='KEY=VALUE',
                            help='Override a configuration key (repeatable)')

        return parser.parse_args(argv)

    def _write_csv(self, frame, name: str) -> Path:
        target = self.output_dir / name
        frame.to_csv(target, index=False, float_format=CSV_FLOAT_FORMAT)
        self.artifacts.append(name)
        return target

    def _record(self, name: str, passed: bool, hard: bool = True, **details):
        self.invariants.append({"name": name, "passed": bool(passed), "hard": hard, **details})

    def _write_summary(self, summary: Dict[str, Any]):
        payload = {
            "version": __version__,
            "command": self.config.command,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "passed": all(c["passed"] for c in self.invariants if c["hard"]) and "error" not in summary,
            "invariants": self.invariants,
            "artifacts": self.artifacts + ["summary.json"],
            **summary,
        }
        write_summary(self.output_dir, payload)

    def cmd_evolve(self) -> Dict[str, Any]:
        """Execute evolve command"""
        cfg = self.config
        g = SpectralGrid(cfg.grid_points, cfg.domain_length, cfg.dealias)
        V = Potential.from_spec(cfg.potential, g)
        u0 = initial_condition(cfg.initial_condition, g)
        N = steps_for(cfg.t_end, cfg.tau, key="tau")
        path = generate_path(cfg.seed, 0, cfg.t_end, N)
        dump_path(path, self.output_dir / "path.csv")
        self.artifacts.append("path.csv")

        print_separator("Evolution")
        schemes = {}
        for name in cfg.schemes:
            scheme = SchemeKind.parse(name)
            result = evolve(scheme, u0, path, N, V, g, snapshot_every=cfg.snapshot_every,
                            m_diag=cfg.norm_index)
            files = result.write(self.output_dir / scheme.value, g)
            self.artifacts += [str(p.relative_to(self.output_dir)) for p in files.values()]

            drift = float(np.max(result.l2_drift()))
            schemes[scheme.value] = {
                "steps": N,
                "tau": result.tau,
                "final_l2": result.state.l2,
                "max_l2_drift": drift,
                "h1_growth_rate": hm_growth_rate(result.diagnostics, "h1"),
                "snapshots": len(result.snapshots),
            }
            if scheme is SchemeKind.SPLIT:
                self._record("split_l2_conservation", drift <= SPLIT_DRIFT_TOLERANCE,
                             measured=drift, threshold=SPLIT_DRIFT_TOLERANCE)
            print(f"  {scheme.value:<6} final L2 {result.state.l2:.15f}   "
                  f"max drift {drift:.3e}")
        return {"schemes": schemes}

    def cmd_conservation(self) -> Dict[str, Any]:
        """Execute conservation command"""
        cfg = self.config
        report = run_conservation(cfg.schemes, cfg.tau, cfg.grid_points, cfg.t_end, cfg.seed,
                                  cfg.potential, cfg.initial_condition, cfg.domain_length,
                                  cfg.dealias)
        self._write_csv(report.frame(), "conservation.csv")

        conserved = report.split_conserved
        if conserved is not None:
            self._record("split_l2_conservation", conserved,
                         measured=report.max_drift(SchemeKind.SPLIT),
                         threshold=SPLIT_DRIFT_TOLERANCE)

        print_separator("Conservation")
        self.cli_graphics.print_lines(self.cli_graphics.conservation_lines(report))
        return {"max_drift": {s.value: report.max_drift(s) for s in report.series}}

    def cmd_convergence(self) -> Dict[str, Any]:
        """Execute convergence command"""
        cfg = self.config
        study = cfg.convergence_config()
        report = run_convergence(study, cfg.seed)

        self._write_csv(report.convergence_frame(), "convergence.csv")
        self._write_csv(report.slopes_frame(), "slopes.csv")
        self._write_csv(moment_table(report), "moments.csv")
        if cfg.probability_constants:
            self._write_csv(probability_convergence_check(report, cfg.probability_constants),
                            "probability.csv")
        if cfg.sup_error:
            self._write_csv(report.sup_frame(), "sup_convergence.csv")

        self._record("path_coupling", report.coupling_ok)
        if SchemeKind.SPLIT in study.schemes and not report.exact_regime.get(SchemeKind.SPLIT):
            inversions = report.monotonicity_inversions(SchemeKind.SPLIT)
            self._record("split_error_monotonicity", inversions <= 1, hard=False,
                         measured=inversions, threshold=1)

        print_separator("Convergence")
        self.cli_graphics.print_lines(self.cli_graphics.convergence_lines(report))
        if report.failed_samples:
            print(Colors.warning(f"{len(report.failed_samples)} samples failed and were excluded"))

        return {
            "slopes": {s.value: (None if fit is None else fit.slope) for s, fit in report.slopes.items()},
            "sup_slopes": {s.value: (None if fit is None else fit.slope)
                           for s, fit in report.sup_slopes.items()},
            "exact_regime": {s.value: flag for s, flag in report.exact_regime.items()},
            "samples_used": len(report.sample_indices),
            "failed_samples": {str(k): v for k, v in report.failed_samples.items()},
        }

    def cmd_regularity(self) -> Dict[str, Any]:
        """Execute regularity command"""
        report = run_regularity(self.config.convergence_config(), self.config.seed)
        self._write_csv(report.frame(), "regularity.csv")

        print_separator("Regularity")
        self.cli_graphics.print_lines(self.cli_graphics.regularity_lines(report))
        return {
            "t1": report.t1,
            "slope": None if report.fit is None else report.fit.slope,
            "samples_used": report.samples,
            "failed_samples": {str(k): v for k, v in report.failed_samples.items()},
        }

    def cmd_selftest(self) -> Dict[str, Any]:
        """Execute selftest command"""
        checker = InvariantChecker(grid_points=DEFAULT_SELFTEST_GRID, seed=self.config.seed,
                                   workers=max(2, self.config.workers))
        result = checker.run_suite()
        self._write_csv(result.frame(), "invariants.csv")
        for check in result.checks:
            self._record(check.name, check.passed, hard=check.severity.value == "hard",
                         measured=check.measured, threshold=check.threshold)

        print_separator("Self-test")
        self.cli_graphics.print_lines(self.cli_graphics.selftest_lines(result))
        print(f"  hard checks: {Colors.status(result.passed)}  "
              f"soft checks: {Colors.status(not result.soft_failures, hard=False)}")
        return {"selftest": result.to_dict()}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    try:
        cli = StochNLSCLI()
        return cli.run(argv)
    except Exception as e:
        logging.getLogger(__name__).exception("Fatal error")
        print(f"Fatal error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
