"""Orbital levitation of a spinning magnetic dipole: fields, relative equilibria,
energy-momentum stability and direct simulation."""

from .equilibrium import BodyParams, EquilibriumProblem, RelativeEquilibrium, solve_equilibrium
from .fields import FieldModel, LinearFieldParams, OrbitronParams, eval_field, eval_total
from .stability import assess, reduced_form, sylvester

__all__ = [
    "BodyParams",
    "EquilibriumProblem",
    "FieldModel",
    "LinearFieldParams",
    "OrbitronParams",
    "RelativeEquilibrium",
    "assess",
    "eval_field",
    "eval_total",
    "reduced_form",
    "solve_equilibrium",
    "sylvester",
]

__version__ = "0.1.0"
