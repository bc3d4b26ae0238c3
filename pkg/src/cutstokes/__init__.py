"""Unfitted, pointwise divergence-free finite elements for the Stokes equations.

Submodules
----------
mesh, geometry, clipping
    Background mesh, level-set classification and cut-cell quadrature.
spaces, interpolation
    Macro element with face bubbles, degree-of-freedom map and interpolants.
assembly, solve
    Lagrange multiplier and Nitsche systems, direct solver, post-processing.
experiments, cli, vtk
    Configured studies, command line and field output.
"""

__version__ = "0.1.0"
