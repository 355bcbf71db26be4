"""State-based refinement checking for threads under SC-for-DRF."""
from .errors import (
    BudgetExceeded,
    InitMismatch,
    NotApplicable,
    NotWellFormed,
    ParseError,
    PreconditionViolated,
    RefineError,
)
from .lang import ThreadProgram, check_well_formed, parse_file, parse_thread, pretty
from .matcher import MatchReport, check, check_exhaustive, check_n, check_trace_pair
from .oracle import oracle_match
from .semantics import Program, State, coarsen, race, semantics
from .trace import Event, EventTrace, emit_trace, parse_trace

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded", "InitMismatch", "NotApplicable", "NotWellFormed", "ParseError",
    "PreconditionViolated", "RefineError", "ThreadProgram", "check_well_formed", "parse_file",
    "parse_thread", "pretty", "MatchReport", "check", "check_exhaustive", "check_n",
    "check_trace_pair", "oracle_match", "Program", "State", "coarsen", "race", "semantics",
    "Event", "EventTrace", "emit_trace", "parse_trace",
]
