"""
Command line, run directories, reports and built-in verification.
"""

from .main import build_parser, main
from .report import generate_report
from .rundir import RunDirectory
from .verify import run_suites

__all__ = ["RunDirectory", "build_parser", "generate_report", "main", "run_suites"]
