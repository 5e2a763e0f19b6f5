"""Sparse bundle adjustment with co-observation-indexed Schur elimination,
plus a timing model of a Schur-elimination accelerator."""

__version__ = "0.1.0"

from .bal_io import BalParseError, BalProblem, load_bal, parse_bal, summarize, write_bal
from .coobs import BlockJacobian, CoObservationIndex, build_index, build_jacobian, co_histogram
from .lm import LmConfig, solve
from .schur import SchurSystem, back_substitute, dense_oracle, schur_eliminate

__all__ = [
    "BalParseError", "BalProblem", "BlockJacobian", "CoObservationIndex", "LmConfig", "SchurSystem",
    "back_substitute", "build_index", "build_jacobian", "co_histogram", "dense_oracle", "load_bal",
    "parse_bal", "schur_eliminate", "solve", "summarize", "write_bal",
]
