"""Scattering resonances of penetrable obstacles in 2D.

P1 finite elements on a disk truncated by an exact boundary operator,
and a contour-integral eigensolver for the resulting nonlinear problem.
"""
__version__ = "0.1.0"
