"""
Terminal output for the lab CLI: coloured status lines, result tables and
logging through rich.
"""

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.style import Style
from rich.table import Table
from rich.text import Text

from harness.metrics import MetricsReport


# RGB Color Theme
COLORS = {
    "primary": "#FF3366",      # Hot pink-red
    "secondary": "#FF6B6B",    # Coral red
    "accent": "#FF1744",       # Bright red
    "dim": "#8B3A3A",          # Dark red
    "success": "#00FF88",      # Neon green
    "warning": "#FFD700",      # Gold
    "info": "#00D4FF",         # Cyan
    "text": "#FFFFFF",         # White
    "muted": "#666666",        # Gray
}

THIN_DIVIDER = "-" * 56


def setup_logging(verbose: bool = False, console: Optional[Console] = None) -> None:
    """Route every logger through one RichHandler on the root logger."""
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        markup=False,
        rich_tracebacks=verbose,
    )
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


class Reporter:
    """User-facing status lines and tables."""

    def __init__(self, console: Optional[Console] = None, err_console: Optional[Console] = None):
        self.console = console or Console()
        self.err_console = err_console or Console(stderr=True)

    def banner(self, command: str, detail: str = "") -> None:
        body = f"[{COLORS['secondary']}]{command.upper()}[/]"
        if detail:
            body += f"  [{COLORS['muted']}]->[/] [{COLORS['info']}]{detail}[/]"
        self.console.print(
            Panel(
                body,
                title=f"[bold {COLORS['primary']}]:: SWARM ALLOC ::[/]",
                border_style=COLORS["dim"],
                padding=(0, 2),
            )
        )

    def status(self, label: str, message: str) -> None:
        status = Text()
        status.append("  ", style="")
        status.append("[", style=Style(color=COLORS["dim"]))
        status.append(label, style=Style(color=COLORS["primary"], bold=True))
        status.append("]", style=Style(color=COLORS["dim"]))
        status.append(f" {message}", style=Style(color=COLORS["muted"]))
        self.console.print(status)

    def error(self, message: str) -> None:
        error = Text()
        error.append("[X] ERROR: ", style=Style(color=COLORS["accent"], bold=True))
        error.append(message, style=Style(color=COLORS["text"]))
        self.err_console.print(error)

    def warning(self, message: str) -> None:
        warning = Text()
        warning.append("  ", style="")
        warning.append("[!] WARNING: ", style=Style(color=COLORS["warning"], bold=True))
        warning.append(message, style=Style(color=COLORS["text"]))
        self.console.print(warning)

    def success(self, message: str) -> None:
        success = Text()
        success.append("  ", style="")
        success.append("[+] ", style=Style(color=COLORS["success"], bold=True))
        success.append(message, style=Style(color=COLORS["success"]))
        self.console.print(success)

    def metrics_table(self, report: MetricsReport) -> None:
        table = Table(title="Evaluation summary", border_style=COLORS["dim"], header_style=COLORS["primary"])
        for column in ("policy", "NATU", "NATC", "DR"):
            table.add_column(column, justify="left" if column == "policy" else "right")
        for s in report.summaries.values():
            table.add_row(
                s.policy,
                f"{s.natu_mean:.3f} ± {s.natu_std:.3f}",
                f"{s.natc_mean:.3f} ± {s.natc_std:.3f}",
                f"{s.dr:.2f}",
            )
        self.console.print(table)

    def divider(self) -> None:
        self.console.print(f"[{COLORS['dim']}]{THIN_DIVIDER}[/]")
