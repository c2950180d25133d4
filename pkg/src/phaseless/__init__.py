"""Phaseless inverse scattering toolkit.

Forward solvers for the Schrödinger-type wave equation with point and
distributed sources, modulus-only phase retrieval, Volterra uniqueness
mechanics and Radon-transform recovery of the potential.
"""

__version__ = "0.1.0"
