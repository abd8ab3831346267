"""
CLI Graphics utilities for terminal summaries.
Renders convergence, conservation and selftest tables with rich, or as plain
ASCII when rich is missing.
"""

import math
from typing import List, Optional, Sequence

try:
    from rich.console import Console
    from rich.table import Table
    from rich import box
    RICH_AVAILABLE = True
except ImportError:
    RICH_AVAILABLE = False

from .colors import Colors


def _fmt(value, spec: str = ".3e") -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and not math.isfinite(value):
        return "nan"
    if isinstance(value, float):
        return format(value, spec)
    return str(value)


class CLIGraphics:
    """Terminal tables for run summaries"""

    def __init__(self, use_rich: bool = True):
        self.console = Console() if (RICH_AVAILABLE and use_rich) else None

    def create_simple_table(self, headers: List[str], rows: List[List[str]],
                            title: Optional[str] = None) -> List[str]:
        """
        Create a table

        Args:
            headers: Table headers
            rows: Table rows (already formatted cells)
            title: Optional table title

        Returns:
            List of formatted table lines
        """
        if self.console is not None:
            table = Table(title=title, box=box.ROUNDED)
            for header in headers:
                table.add_column(header, style="bold")
            for row in rows:
                table.add_row(*row)

            with self.console.capture() as capture:
                self.console.print(table)
            return capture.get().rstrip("\n").split('\n')

        table_lines = []
        if title:
            table_lines.append(f"  {Colors.header(title)}")
            table_lines.append("")

        col_widths = [len(header) for header in headers]
        for row in rows:
            for i, cell in enumerate(row):
                if i < len(col_widths):
                    col_widths[i] = max(col_widths[i], len(str(cell)))

        header_line = "  " + " | ".join(f"{header:<{col_widths[i]}}" for i, header in enumerate(headers))
        table_lines.append(Colors.header(header_line))
        table_lines.append(Colors.muted("  " + "-" * (len(header_line) - 2)))
        for row in rows:
            table_lines.append("  " + " | ".join(f"{str(cell):<{col_widths[i]}}" for i, cell in enumerate(row)))
        return table_lines

    def convergence_lines(self, report) -> List[str]:
        """Error table and fitted slopes of a ConvergenceReport"""
        rows = [[e.scheme.value, _fmt(e.tau, ".6g"), _fmt(e.error), _fmt(e.stderr), str(e.samples)]
                for e in report.entries]
        lines = self.create_simple_table(["scheme", "tau", "error", "stderr", "samples"], rows,
                                         title="Strong errors")
        slope_rows = []
        for scheme, fit in report.slopes.items():
            if report.exact_regime.get(scheme):
                slope_rows.append([scheme.value, "exact regime", "", ""])
            elif fit is None:
                slope_rows.append([scheme.value, "n/a", "", ""])
            else:
                slope_rows.append([scheme.value, _fmt(fit.slope, ".3f"), _fmt(fit.intercept, ".3f"),
                                   _fmt(fit.max_residual)])
        lines += self.create_simple_table(["scheme", "slope", "intercept", "max_residual"],
                                          slope_rows, title="Fitted orders")
        return lines

    def conservation_lines(self, report) -> List[str]:
        rows = [[scheme.value, _fmt(report.max_drift(scheme))] for scheme in report.series]
        return self.create_simple_table(["scheme", "max L2 drift"], rows,
                                        title=f"L2 conservation, tau = {report.tau:.6g}")

    def regularity_lines(self, report) -> List[str]:
        rows = [[_fmt(lag, ".6g"), _fmt(inc), _fmt(err)]
                for lag, inc, err in zip(report.lags, report.increments, report.stderrs)]
        lines = self.create_simple_table(["lag", "increment", "stderr"], rows,
                                         title=f"Temporal increments at t = {report.t1:.6g}")
        slope = report.fit.slope if report.fit is not None else None
        lines.append(f"  fitted exponent: {Colors.slope(slope, target=0.5, tolerance=0.15)}")
        return lines

    def selftest_lines(self, result) -> List[str]:
        rows = [[c.name, c.severity.value, _fmt(c.measured), _fmt(c.threshold),
                 "PASS" if c.passed else ("FAIL" if c.severity.value == "hard" else "WARN")]
                for c in result.checks]
        return self.create_simple_table(["check", "severity", "measured", "threshold", "status"],
                                        rows, title=f"Invariant suite, M = {result.grid_points}")

    @staticmethod
    def print_lines(lines: Sequence[str]):
        for line in lines:
            print(line)
