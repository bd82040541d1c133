"""wzlab: a numerical laboratory for Wong-Zakai approximations of SPDEs.

Builds finite-variation approximations of Wiener paths together with their
area-type functionals, solves the approximating random PDE and the limiting
Stratonovich SPDE on a periodic 1-D domain, and estimates almost-sure
convergence rates in Sobolev norms.
"""

__version__ = "0.1.0"
