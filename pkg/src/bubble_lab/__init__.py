"""Numerical laboratory for boundary-concentrating solutions of the
singularly perturbed curvature problem on the unit disc."""

__version__ = "0.1.0"
