import numpy as np
import pytest

from wzlab.grid import SpatialGrid, gaussian_bump
from wzlab.problem import CoefficientField, ProblemSpec


@pytest.fixture
def sgrid():
    return SpatialGrid(64, 2.0 * np.pi)


def const(v):
    return CoefficientField.constant(v)


def make_spec(grid, a=0.5, a1=0.0, a0=0.0, b=(0.5,), b0=(0.3,), sigma=None,
              u0=None, f=None, g=None):
    """Small helper: constant-coefficient problem with a centered bump default."""
    d1 = len(b)
    if u0 is None:
        u0 = gaussian_bump(grid, center=grid.domain_length / 2, width=0.35, amplitude=1.0)
    return ProblemSpec(
        grid=grid, d1=d1,
        a=const(a), a1=const(a1), a0=const(a0),
        b=[const(v) for v in b], b0=[const(v) for v in b0],
        u0=u0, f=f, g=g,
        sigma=[const(v) for v in sigma] if sigma is not None else None,
    )
