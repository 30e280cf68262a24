"""Steiner triple systems of order 21 containing a transversal subdesign TD(3,6)."""

from .core import (
    AG23,
    FANO,
    AlmostSts9,
    LatinSquare,
    TransversalDesign,
    Triple,
    TripleSystem,
    format_design,
    parse_design,
    parse_designs,
    validate_sts,
    validate_td,
)

__version__ = "0.1.0"
