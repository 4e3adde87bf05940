"""Numerical laboratory for cusped hyperbolic surfaces.

Subpackages cover the upper half-plane isometry algebra, the model cusp
flow, symmetric tensor calculus, closed geodesics of perturbed metrics,
tensor X-ray transforms, the indicial quadratic forms of the averaged
pullback operator, and a constructive approximate-coboundary engine.
"""

__version__ = "0.1.0"
