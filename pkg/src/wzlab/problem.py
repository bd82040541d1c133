"""One SPDE instance: coefficients, free terms, initial datum and structure checks.

The spatial dimension is 1 on a periodic interval, so the second-order drift
operator and the first-order noise operators reduce to scalar coefficient
fields:

    L u = a(x) u'' + a1(x) u' + a0(x) u
    M_k u = b_k(x) u' + b0_k(x) u          for each driver k < d1.

Coefficients, free terms and the initial value are time-independent by
construction; derivatives are spectral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (GridFunction, SpatialGrid, derivative, gaussian_bump,
                   trig_function, zero_function)


@dataclass(frozen=True)
class CoefficientField:
    """Spatial coefficient: constant, tabulated on the grid, or a trig polynomial."""

    kind: str
    value: float | None = None
    table: tuple | None = None
    modes: tuple | None = None

    @classmethod
    def constant(cls, value: float) -> "CoefficientField":
        return cls(kind="constant", value=float(value))

    @classmethod
    def tabulated(cls, values) -> "CoefficientField":
        return cls(kind="tabulated", table=tuple(float(v) for v in values))

    @classmethod
    def analytic(cls, modes) -> "CoefficientField":
        """Trig polynomial from (mode, cos_amp, sin_amp) triples; modes are integers."""
        clean = []
        for mode, cos_amp, sin_amp in modes:
            if int(mode) != mode:
                raise ValueError("trig modes must be integers for periodicity")
            clean.append((int(mode), float(cos_amp), float(sin_amp)))
        return cls(kind="analytic", modes=tuple(clean))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def values(self, grid: SpatialGrid) -> np.ndarray:
        if self.kind == "constant":
            return np.full(grid.n_x, self.value)
        if self.kind == "tabulated":
            if len(self.table) != grid.n_x:
                raise ValueError(f"tabulated coefficient has {len(self.table)} values, grid has {grid.n_x}")
            return np.asarray(self.table)
        if self.kind == "analytic":
            return trig_function(grid, list(self.modes)).values
        raise ValueError(f"unknown coefficient kind {self.kind!r}")


ZERO = CoefficientField.constant(0.0)


class ProblemSpec:
    """Coefficient fields, free terms and initial datum for one SPDE instance.

    Immutable and shareable across threads; operator applications are pure
    functions of the stored data.
    """

    __slots__ = ("grid", "d1", "a", "a1", "a0", "b", "b0", "sigma",
                 "f", "g", "u0", "_fields")

    def __init__(self, grid: SpatialGrid, d1: int,
                 a: CoefficientField, a1: CoefficientField, a0: CoefficientField,
                 b: list[CoefficientField], b0: list[CoefficientField],
                 u0: GridFunction,
                 f: GridFunction | None = None,
                 g: list[GridFunction] | None = None,
                 sigma: list[CoefficientField] | None = None):
        if d1 < 1:
            raise ValueError("d1 must be >= 1")
        if len(b) != d1 or len(b0) != d1:
            raise ValueError("b and b0 must have one coefficient per driver")
        if f is None:
            f = zero_function(grid)
        if g is None:
            g = [zero_function(grid) for _ in range(d1)]
        if len(g) != d1:
            raise ValueError("g must have one field per driver")
        for gf in [u0, f, *g]:
            if gf.grid != grid:
                raise ValueError("all fields must live on the problem grid")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "b", tuple(b))
        object.__setattr__(self, "b0", tuple(b0))
        object.__setattr__(self, "sigma", tuple(sigma) if sigma is not None else None)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", tuple(g))
        object.__setattr__(self, "u0", u0)
        fields = {
            "a": a.values(grid), "a1": a1.values(grid), "a0": a0.values(grid),
            "b": np.stack([c.values(grid) for c in b]),
            "b0": np.stack([c.values(grid) for c in b0]),
        }
        if sigma is not None:
            fields["sigma"] = np.stack([c.values(grid) for c in sigma])
            recon = np.sum(fields["sigma"] ** 2, axis=0)
            if not np.allclose(recon, fields["a"], rtol=1e-12, atol=1e-12):
                raise ValueError("sigma factorization does not reproduce a: need a = sum_r sigma_r^2")
        for arr in fields.values():
            arr.setflags(write=False)
        object.__setattr__(self, "_fields", fields)

    def __setattr__(self, name, value):
        raise AttributeError("ProblemSpec is immutable")

    @property
    def domain_length(self) -> float:
        return self.grid.domain_length

    def field(self, name: str) -> np.ndarray:
        return self._fields[name]

    @property
    def is_degenerate(self) -> bool:
        """Zero-ellipticity instances, flagged by a supplied factorization."""
        return self.sigma is not None and float(np.min(self.field("a"))) <= 0.0


def apply_L(spec: ProblemSpec, u: GridFunction) -> GridFunction:
    """Second-order drift operator: a*u'' + a1*u' + a0*u, derivatives spectral."""
    if u.grid != spec.grid:
        raise ValueError("grid mismatch")
    d2 = derivative(u, 2).values
    d1v = derivative(u, 1).values
    vals = spec.field("a") * d2 + spec.field("a1") * d1v + spec.field("a0") * u.values
    return GridFunction(spec.grid, vals)


def apply_M(spec: ProblemSpec, k: int, u: GridFunction) -> GridFunction:
    """First-order noise operator for driver k: b_k*u' + b0_k*u."""
    if not 0 <= k < spec.d1:
        raise ValueError(f"driver index k={k} out of range for d1={spec.d1}")
    if u.grid != spec.grid:
        raise ValueError("grid mismatch")
    vals = spec.field("b")[k] * derivative(u, 1).values + spec.field("b0")[k] * u.values
    return GridFunction(spec.grid, vals)


def stratonovich_drift(spec: ProblemSpec, u: GridFunction) -> GridFunction:
    """Ito-form drift of the limit equation: L u + f + (1/2) sum_k (M_k M_k u + M_k g_k)."""
    total = apply_L(spec, u).values + spec.f.values
    for k in range(spec.d1):
        mku = apply_M(spec, k, u)
        total = total + 0.5 * apply_M(spec, k, mku).values
        total = total + 0.5 * apply_M(spec, k, spec.g[k]).values
    return GridFunction(spec.grid, total)


@dataclass(frozen=True)
class EllipticityResult:
    lam: float
    passed: bool


def check_ellipticity(spec: ProblemSpec) -> EllipticityResult:
    """Pointwise minimum of a over the grid; degenerate (zero) minima pass only
    when a factorization a = sum_r sigma_r^2 is supplied."""
    lam = float(np.min(spec.field("a")))
    if lam > 0:
        passed = True
    elif lam == 0.0:
        passed = spec.sigma is not None
    else:
        passed = False
    return EllipticityResult(lam=lam, passed=passed)


@dataclass(frozen=True)
class ParabolicityResult:
    margin: float
    passed: bool


def check_parabolicity(spec: ProblemSpec, stratonovich: bool = True) -> ParabolicityResult:
    """Margin of the stochastic parabolicity condition for the limit equation.

    The Ito-form diffusion of the Stratonovich limit is a + (1/2) sum_k b_k^2,
    so the margin (diffusion minus half the squared noise gradient) collapses
    to min a; zero margins pass as degenerate.  With ``stratonovich=False``
    the stored a is taken directly as the Ito diffusion, so the margin is
    min(a - (1/2) sum_k b_k^2).
    """
    half_bb = 0.5 * np.sum(spec.field("b") ** 2, axis=0)
    if stratonovich:
        margin = float(np.min(spec.field("a")))
    else:
        margin = float(np.min(spec.field("a") - half_bb))
    return ParabolicityResult(margin=margin, passed=margin >= 0.0)


def ibp_density(spec: ProblemSpec, k: int) -> GridFunction:
    """Field 2*b0_k - (b_k)' mediating the integration-by-parts identity

        (M_k u, v) + (u, M_k v) = ((2*b0_k - b_k') u, v)

    for periodic u, v, used as a numerical self-test of the operators.
    """
    b = GridFunction(spec.grid, spec.field("b")[k])
    vals = 2.0 * spec.field("b0")[k] - derivative(b, 1).values
    return GridFunction(spec.grid, vals)


def default_bump(grid: SpatialGrid, amplitude: float = 1.0) -> GridFunction:
    """Centered Gaussian profile whose mass near the boundary is negligible."""
    return gaussian_bump(grid, center=grid.domain_length / 2.0,
                         width=grid.domain_length / 18.0, amplitude=amplitude)
