"""Numerical laboratory for control-ball geometry, functional inequalities and
DeGiorgi oscillation decay of infinitely degenerate elliptic equations."""

from .geometry import (DomainError, Geometry, audit_structure_conditions, constant,
                       finite_type, inverse_power, iterated_log, parse_geometry,
                       power_log)

__version__ = "0.1.0"
