"""Named invariant suite: fast numerical self-tests runnable from the CLI.

Each check returns (passed, detail).  The suite covers the driver-path
identities, the spectral-grid identities, the operator algebra and the
solver/oracle agreements at small sizes, so a full run stays within seconds.
"""

from __future__ import annotations

import numpy as np

from . import noise as nz
from .grid import GridFunction, SpatialGrid, derivative, gaussian_bump, inner, sobolev_norm, trig_function
from .problem import (CoefficientField, ProblemSpec, apply_L, apply_M, check_ellipticity,
                      ibp_density, default_bump)
from .solver import SolveRequest, coupled_error, oracle_constant, solve_approximating
from .rates import fit_rate

CHECK_SEED = 20240817


def _bundle(d1=2, n_fine=2 ** 12, n=16, seed=CHECK_SEED, scheme=nz.POLYGONAL):
    grid = nz.TimeGrid(1.0, n_fine)
    W = nz.sample_wiener(seed, d1, grid)
    return nz.make_bundle(W, scheme, n)


def check_antisymmetry(corrupt: bool = False):
    b = _bundle(d1=3)
    A, An = b.A, b.An
    if corrupt:
        A = A.copy()
        A[0, 1, -1] += 1e-9
    worst = 0.0
    for M in (A, An):
        worst = max(worst, float(np.max(np.abs(M + np.swapaxes(M, 0, 1)))))
        worst = max(worst, float(np.max(np.abs(M[np.arange(3), np.arange(3)]))))
    return worst == 0.0, f"max |A + A^T| and |diag| = {worst:.3e} (exact zero required)"


def check_knot_property():
    grid = nz.TimeGrid(1.0, 2 ** 10)
    W = nz.sample_wiener(CHECK_SEED, 2, grid)
    n = 16
    Wn = nz.polygonal_approx(W, n)
    r = grid.n_fine // n
    worst = 0.0
    for k in range(n):
        worst = max(worst, float(np.max(np.abs(Wn.samples[:, (k + 1) * r] - W.samples[:, k * r]))))
    return worst == 0.0, f"max |Wn(t_k+1) - W(t_k)| = {worst:.3e} (exact zero required)"


def check_adaptedness():
    grid = nz.TimeGrid(1.0, 2 ** 10)
    W = nz.sample_wiener(CHECK_SEED, 1, grid)
    n = 8
    r = grid.n_fine // n
    k = 4
    perturbed = W.samples.copy()
    perturbed[:, k * r + 1:] += 7.5
    Wp = nz.MultiPath(grid, perturbed, nz.DETERMINISTIC)
    a = nz.polygonal_approx(W, n).samples[:, :(k + 1) * r + 1]
    bserved = nz.polygonal_approx(Wp, n).samples[:, :(k + 1) * r + 1]
    worst = float(np.max(np.abs(a - bserved)))
    return worst == 0.0, f"perturbing past t_k moved Wn on [0, t_k+1] by {worst:.3e}"


def check_d1_collapse():
    b = _bundle(d1=1)
    worst = float(np.max(np.abs(b.A))) + float(np.max(np.abs(b.An)))
    return worst == 0.0, f"single-driver area paths max |A| = {worst:.3e}"


def check_scaling():
    grid = nz.TimeGrid(1.0, 2 ** 11)
    W = nz.sample_wiener(CHECK_SEED + 1, 2, grid)
    c = -2.5
    Wc = nz.MultiPath(grid, c * W.samples, nz.DETERMINISTIC)
    b1 = nz.NoiseBundle(W, nz.polygonal_approx(W, 16))
    b2 = nz.NoiseBundle(Wc, nz.polygonal_approx(Wc, 16))
    rel = max(
        float(np.max(np.abs(b2.A - c * c * b1.A))),
        float(np.max(np.abs(b2.Bn - c * c * b1.Bn))),
        abs(b2.sup_w_err - abs(c) * b1.sup_w_err),
    ) / max(1.0, c * c * float(np.max(np.abs(b1.A))))
    ok = rel < 1e-13
    return ok, f"relative defect of c-scaling covariance {rel:.3e} (tol 1e-13)"


def check_seed_determinism():
    grid = nz.TimeGrid(1.0, 2 ** 10)
    W1 = nz.sample_wiener(1234, 3, grid)
    W2 = nz.sample_wiener(1234, 3, grid)
    same = np.array_equal(W1.samples, W2.samples)
    return same, "two samples from one seed are bitwise equal" if same else "seeded resample differed"


def check_product_identity():
    # quadrature defect of the symmetrized cross-path identity shrinks ~ sqrt(dt)
    res_coarse = float(np.max(nz.product_identity_residual(_bundle(n_fine=2 ** 12))))
    res_fine = float(np.max(nz.product_identity_residual(_bundle(n_fine=2 ** 14))))
    ok = res_fine < res_coarse and res_coarse < 0.1
    return ok, f"residual {res_coarse:.3e} at 2^12 steps -> {res_fine:.3e} at 2^14"


def _test_grid(n_x=64):
    return SpatialGrid(n_x, 2.0 * np.pi)


def _random_field(grid, seed=CHECK_SEED):
    rng = np.random.default_rng(seed)
    u = gaussian_bump(grid, center=2.0, width=0.5, amplitude=1.0).values
    u = u + trig_function(grid, [(1, 0.3, -0.2), (3, 0.0, 0.4)]).values * rng.uniform(0.5, 1.5)
    return GridFunction(grid, u)


def check_parseval():
    grid = _test_grid()
    u = _random_field(grid)
    m = 2
    spectral = sobolev_norm(u, m) ** 2
    quad = 0.0
    for k in range(m + 1):
        dk = derivative(u, k).values
        quad += grid.dx * float(np.sum(dk ** 2))
    rel = abs(spectral - quad) / max(spectral, 1e-300)
    return rel < 1e-12, f"grid-sum vs spectral-sum H^{m} norm relative gap {rel:.3e}"


def check_norm_monotonicity():
    grid = _test_grid()
    u = _random_field(grid)
    norms = [sobolev_norm(u, m) for m in range(4)]
    ok = all(norms[i] <= norms[i + 1] * (1 + 1e-14) for i in range(3))
    return ok, f"|u|_m for m=0..3: {['%.6g' % v for v in norms]}"


def check_derivative_norm_identity():
    grid = _test_grid()
    u = _random_field(grid)
    worst = 0.0
    for m in range(3):
        lhs = sobolev_norm(u, m + 1) ** 2
        rhs = sobolev_norm(u, m) ** 2 + sobolev_norm(derivative(u, m + 1), 0) ** 2
        worst = max(worst, abs(lhs - rhs) / max(lhs, 1e-300))
    return worst < 1e-12, f"max relative defect of the norm recursion {worst:.3e}"


def check_fft_roundtrip():
    grid = _test_grid()
    u = _random_field(grid)
    back = np.fft.ifft(u.spectrum).real
    rel = float(np.max(np.abs(back - u.values))) / max(float(np.max(np.abs(u.values))), 1e-300)
    return rel < 1e-12, f"transform round trip relative error {rel:.3e}"


def check_sobolev_examples():
    grid = _test_grid(128)
    L = grid.domain_length
    c = 1.7
    const = GridFunction(grid, np.full(grid.n_x, c))
    e1 = abs(sobolev_norm(const, 3) ** 2 - c * c * L) / (c * c * L)
    s = trig_function(grid, [(1, 0.0, 1.0)])
    e2 = abs(sobolev_norm(s, 1) ** 2 - 2.0 * np.pi) / (2.0 * np.pi)
    bump = gaussian_bump(grid, center=L / 2, width=0.25, amplitude=0.8)
    expect = 0.8 ** 2 * 0.25 * np.sqrt(np.pi)
    e3 = abs(sobolev_norm(bump, 0) ** 2 - expect) / expect
    ok = e1 < 1e-12 and e2 < 1e-12 and e3 < 1e-6
    return ok, f"|const|: {e1:.2e}, |sin|_1: {e2:.2e}, bump mass: {e3:.2e}"


def _operator_spec(grid, b_modes=None, b0_modes=None):
    b = CoefficientField.analytic(b_modes) if b_modes else CoefficientField.constant(0.7)
    b0 = CoefficientField.analytic(b0_modes) if b0_modes else CoefficientField.constant(0.2)
    return ProblemSpec(grid=grid, d1=1,
                       a=CoefficientField.constant(1.0), a1=CoefficientField.constant(0.0),
                       a0=CoefficientField.constant(0.0), b=[b], b0=[b0],
                       u0=default_bump(grid))


def check_operator_linearity():
    grid = _test_grid()
    spec = _operator_spec(grid, b_modes=[(0, 0.5, 0.0), (1, 0.2, 0.1)])
    u = _random_field(grid, CHECK_SEED)
    v = _random_field(grid, CHECK_SEED + 3)
    al, be = 1.3, -0.7
    comb = GridFunction(grid, al * u.values + be * v.values)
    worst = 0.0
    for op in (lambda w: apply_L(spec, w), lambda w: apply_M(spec, 0, w)):
        lhs = op(comb).values
        rhs = al * op(u).values + be * op(v).values
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / max(float(np.max(np.abs(lhs))), 1e-300))
    return worst < 1e-12, f"linearity defect {worst:.3e}"


def check_commutator_constant():
    grid = _test_grid()
    spec = ProblemSpec(grid=grid, d1=2,
                       a=CoefficientField.constant(0.0), a1=CoefficientField.constant(0.0),
                       a0=CoefficientField.constant(0.0),
                       b=[CoefficientField.constant(0.8), CoefficientField.constant(-0.4)],
                       b0=[CoefficientField.constant(0.0), CoefficientField.constant(0.0)],
                       u0=default_bump(grid))
    u = _random_field(grid)
    m12 = apply_M(spec, 0, apply_M(spec, 1, u)).values
    m21 = apply_M(spec, 1, apply_M(spec, 0, u)).values
    gap = float(np.max(np.abs(m12 - m21))) / max(float(np.max(np.abs(m12))), 1e-300)
    return gap < 1e-11, f"constant-field commutator relative size {gap:.3e}"


def check_integration_by_parts():
    grid = _test_grid(128)
    spec = _operator_spec(grid,
                          b_modes=[(0, 0.6, 0.0), (1, 0.25, -0.1), (2, 0.0, 0.15)],
                          b0_modes=[(0, 0.3, 0.0), (1, -0.2, 0.05)])
    u = _random_field(grid, CHECK_SEED + 5)
    v = _random_field(grid, CHECK_SEED + 6)
    lhs = inner(apply_M(spec, 0, u), v, 0) + inner(u, apply_M(spec, 0, v), 0)
    mbar = ibp_density(spec, 0)
    rhs = inner(GridFunction(grid, mbar.values * u.values), v, 0)
    gap = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return gap < 1e-10, f"(Mu,v)+(u,Mv) vs ((2b0-b')u,v) relative gap {gap:.3e}"


def check_degenerate_factorization():
    grid = _test_grid()
    sigma = CoefficientField.analytic([(0, 0.5, 0.0), (1, 0.2, 0.0)])
    vals = sigma.values(grid)
    spec = ProblemSpec(grid=grid, d1=1,
                       a=CoefficientField.tabulated(vals ** 2),
                       a1=CoefficientField.constant(0.0), a0=CoefficientField.constant(0.0),
                       b=[CoefficientField.constant(1.0)], b0=[CoefficientField.constant(0.0)],
                       u0=default_bump(grid), sigma=[sigma])
    recon = np.sum(np.stack([c.values(grid) for c in spec.sigma]) ** 2, axis=0)
    gap = float(np.max(np.abs(recon - spec.field("a"))))
    lam = check_ellipticity(spec)
    return gap < 1e-12 and lam.passed, f"factorization defect {gap:.3e}, ellipticity min {lam.lam:.3g}"


def check_transport_isometry():
    grid = _test_grid()
    spec = ProblemSpec(grid=grid, d1=1,
                       a=CoefficientField.constant(0.0), a1=CoefficientField.constant(0.0),
                       a0=CoefficientField.constant(0.0),
                       b=[CoefficientField.constant(0.6)], b0=[CoefficientField.constant(0.0)],
                       u0=default_bump(grid), sigma=[CoefficientField.constant(0.0)])
    tgrid = nz.TimeGrid(0.5, 2 ** 10)
    W = nz.sample_wiener(CHECK_SEED + 7, 1, tgrid)
    bundle = nz.make_bundle(W, nz.POLYGONAL, 16)
    req = SolveRequest(spec=spec, noise=bundle, target="approximating",
                       n_substeps_per_fine=1, sobolev_m=1)
    traj = solve_approximating(req)
    ref = sobolev_norm(spec.u0, 1)
    worst = float(np.max(np.abs(traj.norms["norm_m"] - ref))) / ref
    return worst < 1e-9, f"|u_n(t)|_1 drift under pure transport {worst:.3e} (tol 1e-9)"


def check_oracle_agreement():
    grid = SpatialGrid(64, 2.0 * np.pi)
    spec = ProblemSpec(grid=grid, d1=1,
                       a=CoefficientField.constant(0.5), a1=CoefficientField.constant(0.0),
                       a0=CoefficientField.constant(0.0),
                       b=[CoefficientField.constant(0.5)], b0=[CoefficientField.constant(0.3)],
                       u0=default_bump(grid))
    tgrid = nz.TimeGrid(1.0, 2 ** 10)
    W = nz.sample_wiener(CHECK_SEED + 8, 1, tgrid)
    bundle = nz.make_bundle(W, nz.POLYGONAL, 16)
    req = SolveRequest(spec=spec, noise=bundle, target="approximating", n_substeps_per_fine=2)
    traj = solve_approximating(req)
    ora = oracle_constant(spec, bundle.Wn, list(traj.times))
    worst = max(sobolev_norm(GridFunction(grid, a.values - b.values), 0)
                for a, b in zip(traj.states, ora.states))
    return worst < 1e-6, f"solver vs closed form H^0 gap {worst:.3e} (tol 1e-6)"


def check_coupling_nullity():
    # additive noise: both equations share the same dynamics for any common path
    grid = SpatialGrid(64, 2.0 * np.pi)
    spec = ProblemSpec(grid=grid, d1=1,
                       a=CoefficientField.constant(0.4), a1=CoefficientField.constant(0.0),
                       a0=CoefficientField.constant(0.0),
                       b=[CoefficientField.constant(0.0)], b0=[CoefficientField.constant(0.0)],
                       u0=default_bump(grid),
                       g=[gaussian_bump(grid, center=2.0, width=0.6, amplitude=0.1)])
    tgrid = nz.TimeGrid(0.5, 2 ** 13)
    t = tgrid.times
    samples = (0.4 * np.sin(2.0 * np.pi * t) + 0.3 * t)[None, :]
    P = nz.MultiPath(tgrid, samples, nz.DETERMINISTIC)
    Pn = nz.MultiPath(tgrid, samples.copy(), nz.DETERMINISTIC, n=tgrid.n_fine)
    bundle = nz.NoiseBundle(P, Pn)
    err = coupled_error(spec, bundle, m=0, n_substeps=1)
    return err.sup_err < 1e-6, f"identical-path coupled sup error {err.sup_err:.3e} (tol 1e-6)"


def check_rate_fit_scale_invariance():
    ns = [8, 16, 32, 64]
    errs = [3.0 * n ** -0.5 for n in ns]
    k1 = fit_rate(ns, errs).kappa
    k2 = fit_rate(ns, [17.0 * e for e in errs]).kappa
    ok = abs(k1 - 0.5) < 1e-12 and k1 == k2
    return ok, f"kappa {k1:.12f}, scaled kappa {k2:.12f}"


CHECKS = {
    "antisymmetry": check_antisymmetry,
    "knot_property": check_knot_property,
    "adaptedness": check_adaptedness,
    "d1_collapse": check_d1_collapse,
    "scaling": check_scaling,
    "seed_determinism": check_seed_determinism,
    "product_identity": check_product_identity,
    "parseval": check_parseval,
    "norm_monotonicity": check_norm_monotonicity,
    "derivative_norm_identity": check_derivative_norm_identity,
    "fft_roundtrip": check_fft_roundtrip,
    "sobolev_examples": check_sobolev_examples,
    "operator_linearity": check_operator_linearity,
    "commutator_constant": check_commutator_constant,
    "integration_by_parts": check_integration_by_parts,
    "degenerate_factorization": check_degenerate_factorization,
    "transport_isometry": check_transport_isometry,
    "oracle_agreement": check_oracle_agreement,
    "coupling_nullity": check_coupling_nullity,
    "rate_fit_scale_invariance": check_rate_fit_scale_invariance,
}


def run_checks(names=None, corrupt: str | None = None):
    """Execute the selected checks; returns a list of (name, passed, detail)."""
    if names is None:
        names = list(CHECKS)
    if not names:
        raise ValueError("no checks selected")
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    results = []
    for name in names:
        fn = CHECKS[name]
        if corrupt == name:
            if name != "antisymmetry":
                raise ValueError(f"no fault-injection hook for check {name!r}")
            passed, detail = fn(corrupt=True)
        else:
            passed, detail = fn()
        results.append((name, bool(passed), detail))
    return results
