"""Time integration of the approximating random PDE and the limiting SPDE.

Three routes produce trajectories on the periodic spatial grid:

* ``solve_approximating``: method of lines for the classical random PDE

      du/dt = L u + f + sum_k (M_k u + g_k) * dWn_k/dt,

  driven by a finite-variation path.  Space is spectral; time stepping is a
  4-stage explicit scheme with an integrating-factor exponential on the
  a*u'' part when a is constant (Lawson form), classical otherwise with a
  parabolic step-size guard.

* ``solve_limit``: exponential Euler-Maruyama for the Ito-form limit SPDE

      du = (L u + f + (1/2) sum_k (M_k M_k u + M_k g_k)) dt
           + sum_k (M_k u + g_k) dW_k:

  the drift advances with the same 4-stage scheme inside each fine step, the
  stochastic increment uses the state at the left endpoint.

* ``oracle_constant``: closed-form solution by characteristics for constant
  coefficients and a single driver, used as the independent reference in the
  convergence studies.

Both equation solvers consume the same stored path realization, so their
difference isolates the driver-approximation error pathwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import noise as noise_mod
from .grid import GridFunction, SpatialGrid, prolong_modes, restrict_modes, sobolev_norm
from .noise import MultiPath, NoiseBundle, TimeGrid
from .problem import CoefficientField, ProblemSpec, apply_M

BLOWUP_FACTOR = 1.0e6
RK4_REAL_LIMIT = 2.5
RK4_IMAG_LIMIT = 2.5


class SolverError(Exception):
    pass


class StabilityError(SolverError):
    """Explicit step exceeds the stability bound; carries a usable step hint."""

    def __init__(self, message: str, required_substeps: int):
        super().__init__(message)
        self.required_substeps = required_substeps


class UnstableSolve(SolverError):
    """Raised by coupled_error when a trajectory tripped the blowup sentinel."""


@dataclass
class SolveRequest:
    spec: ProblemSpec
    noise: NoiseBundle | MultiPath
    target: str                       # "approximating" | "limit" | "oracle"
    n_substeps_per_fine: int = 1
    record_times: list[float] | None = None
    sobolev_m: int = 0


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[GridFunction]
    norms: dict
    diagnostics: dict = field(default_factory=dict)
    aborted: bool = False
    abort_time: float | None = None


def default_record_times(grid: TimeGrid, count: int = 33) -> list[float]:
    """Evenly spaced fine-grid times including 0 and T (all points on short grids)."""
    if count < 2:
        raise ValueError("need at least two record times")
    segments = count - 1
    while grid.n_fine % segments != 0:
        segments -= 1
    stride = grid.n_fine // segments
    return [j * grid.dt for j in range(0, grid.n_fine + 1, stride)]


def _record_indices(grid: TimeGrid, record_times: list[float]) -> list[int]:
    idx = []
    for t in record_times:
        j = int(round(t / grid.dt))
        if not (0 <= j <= grid.n_fine) or abs(j * grid.dt - t) > 1e-9 * max(grid.T, 1.0):
            raise ValueError(f"record time {t} does not lie on the fine grid")
        idx.append(j)
    if idx != sorted(idx) or len(set(idx)) != len(idx):
        raise ValueError("record times must be strictly increasing")
    return idx


class _Driver:
    """Piecewise model of the approximant's time derivative on the fine grid."""

    def __init__(self, left: np.ndarray, right: np.ndarray | None = None):
        self.left = left      # (d1, n_fine)
        self.right = right    # None: constant within each fine step

    def at(self, j: int, theta: float) -> np.ndarray:
        if self.right is None or theta == 0.0:
            return self.left[:, j]
        return (1.0 - theta) * self.left[:, j] + theta * self.right[:, j]

    def max_abs(self) -> np.ndarray:
        m = np.max(np.abs(self.left), axis=1)
        if self.right is not None:
            m = np.maximum(m, np.max(np.abs(self.right), axis=1))
        return m


def driver_derivative(noise_input: NoiseBundle | MultiPath) -> _Driver:
    """Exact derivative model for the finite-variation driver.

    Polygonal and generic finite-variation paths are piecewise linear on the
    fine grid, so per-step difference quotients are exact.  The moving-average
    approximant has derivative n*(W(t) - W(t - 1/n)), evaluated from the
    stored Wiener path on the fine grid and interpolated within steps; this
    route therefore requires the bundle.
    """
    if isinstance(noise_input, NoiseBundle):
        Wn = noise_input.Wn
        if Wn.kind == noise_mod.SMOOTHED:
            grid = Wn.grid
            w = noise_mod.smoothed_window_steps(Wn.n, grid)
            W = noise_input.W.samples
            shifted = np.concatenate([np.zeros((W.shape[0], w)), W[:, :-w]], axis=1) if w <= grid.n_fine \
                else np.zeros_like(W)
            v = Wn.n * (W - shifted)
            return _Driver(left=v[:, :-1], right=v[:, 1:])
        path = Wn
    else:
        path = noise_input
        if path.kind == noise_mod.WIENER:
            raise ValueError("approximating solve needs a finite-variation driver")
        if path.kind == noise_mod.SMOOTHED:
            raise ValueError("smoothed drivers need the full bundle (underlying Wiener path)")
    dt = path.grid.dt
    return _Driver(left=np.diff(path.samples, axis=1) / dt)


class _Workspace:
    """Precomputed spectral data shared by the stepping loops."""

    def __init__(self, spec: ProblemSpec):
        grid = spec.grid
        self.grid = grid
        self.xi = grid.wavenumbers
        d1m = 1j * self.xi
        d1m[grid.n_x // 2] = 0.0
        self.d1m = d1m
        self.d2m = -(self.xi ** 2)
        self.a_vals = spec.field("a")
        self.a_const = spec.a.is_constant
        self.a1 = spec.field("a1")
        self.a0 = spec.field("a0")
        self.b = spec.field("b")
        self.b0 = spec.field("b0")
        self.f = spec.f.values
        self.g = np.stack([gk.values for gk in spec.g])
        self.xi_max = float(np.max(np.abs(self.xi)))
        self.b_nonzero = [bool(np.any(self.b[k])) for k in range(self.b.shape[0])]
        # first spatial derivatives are only transformed when something uses them
        self.need_du = bool(np.any(self.a1)) or any(self.b_nonzero)

    def lawson_factor(self) -> np.ndarray | None:
        """Spectral multiplier of the stiff constant-diffusion part, or None."""
        if self.a_const:
            return self.a_vals[0] * self.d2m
        return None


def _exponentials(A: np.ndarray | None, h: float, n_x: int):
    if A is None:
        ones = np.ones(n_x)
        return ones, ones
    return np.exp(A * 0.5 * h), np.exp(A * h)


def _advective_bound(ws: _Workspace, driver_max: np.ndarray | None) -> float:
    speed = float(np.max(np.abs(ws.a1)))
    if driver_max is not None:
        speed += float(np.sum(np.max(np.abs(ws.b), axis=1) * driver_max))
    return speed * ws.xi_max


def _check_step(h: float, rho: float, limit: float, dt: float, what: str):
    if rho > 0 and h * rho > limit:
        required = int(np.ceil(dt * rho / limit))
        raise StabilityError(
            f"{what} stability bound violated: step {h:.3e} exceeds {limit / rho:.3e}; "
            f"use n_substeps_per_fine >= {required}", required)


def _lawson_rk4_stepper(ws: _Workspace, extra_drift):
    """Build the one-substep advance u_hat -> u_hat for the drift dynamics.

    ``extra_drift(u, du, j, theta)`` returns additional real-space drift terms
    (driver forcing or the Ito correction); the common part a1*u' + a0*u + f
    and, for non-constant a, a*u'' is handled here.
    """
    fft, ifft = np.fft.fft, np.fft.ifft
    d1m, d2m = ws.d1m, ws.d2m
    a_var = None if ws.a_const else ws.a_vals
    a1, a0, f = ws.a1, ws.a0, ws.f
    need_du = ws.need_du

    def rhs(u_hat, j, theta):
        u = ifft(u_hat).real
        du = ifft(d1m * u_hat).real if need_du else None
        r = a0 * u + f + extra_drift(u, du, j, theta)
        if need_du:
            r = r + a1 * du
        if a_var is not None:
            r = r + a_var * ifft(d2m * u_hat).real
        return fft(r)

    return rhs


def _advance_substeps(u_hat, rhs, e_half, e_full, h, n_sub, j):
    for s in range(n_sub):
        t0 = s / n_sub
        th = (s + 0.5) / n_sub
        t1 = (s + 1.0) / n_sub
        k1 = rhs(u_hat, j, t0)
        k2 = rhs(e_half * (u_hat + (0.5 * h) * k1), j, th)
        k3 = rhs(e_half * u_hat + (0.5 * h) * k2, j, th)
        k4 = rhs(e_full * u_hat + h * (e_half * k3), j, t1)
        u_hat = e_full * u_hat + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    return u_hat


def _run_loop(req: SolveRequest, tgrid: TimeGrid, rhs, ws: _Workspace,
              noise_step=None) -> Trajectory:
    """Shared fine-grid stepping loop with recording and the blowup sentinel."""
    n_sub = req.n_substeps_per_fine
    if n_sub < 1:
        raise ValueError("n_substeps_per_fine must be >= 1")
    record_times = req.record_times or default_record_times(tgrid)
    rec_idx = _record_indices(tgrid, record_times)
    rec_set = {j: i for i, j in enumerate(rec_idx)}
    m = req.sobolev_m
    if m < 0:
        raise ValueError("sobolev_m must be >= 0")

    h = tgrid.dt / n_sub
    A = ws.lawson_factor()
    e_half, e_full = _exponentials(A, h, ws.grid.n_x)
    ifft = np.fft.ifft

    u_hat = np.asarray(req.spec.u0.spectrum, dtype=complex).copy()
    sentinel = BLOWUP_FACTOR * (float(np.max(np.abs(req.spec.u0.values))) + 1e-300)

    last_step = max(rec_idx)
    states: list[GridFunction] = [None] * len(rec_idx)
    norm_m = np.full(len(rec_idx), np.nan)
    norm_mp1 = np.full(len(rec_idx), np.nan)
    max_abs = np.zeros(last_step + 1)

    def record(j, u_hat):
        i = rec_set.get(j)
        if i is None:
            return
        gf = GridFunction.from_spectrum(ws.grid, u_hat)
        states[i] = gf
        norm_m[i] = sobolev_norm(gf, m)
        norm_mp1[i] = sobolev_norm(gf, m + 1)

    max_abs[0] = float(np.max(np.abs(req.spec.u0.values)))
    record(0, u_hat)
    times = np.array([j * tgrid.dt for j in rec_idx])
    for j in range(last_step):
        u_hat = _advance_substeps(u_hat, rhs, e_half, e_full, h, n_sub, j)
        if noise_step is not None:
            u_hat = noise_step(u_hat, j)
        amp = float(np.max(np.abs(ifft(u_hat).real)))
        max_abs[j + 1] = amp
        if not np.isfinite(amp) or amp > sentinel:
            done = [i for i, s in enumerate(states) if s is not None]
            return Trajectory(times=times[done], states=[states[i] for i in done],
                              norms={"m": m, "norm_m": norm_m[done], "norm_mp1": norm_mp1[done]},
                              diagnostics={"max_abs_per_step": max_abs[:j + 2]},
                              aborted=True, abort_time=(j + 1) * tgrid.dt)
        record(j + 1, u_hat)
    return Trajectory(times=times, states=states,
                      norms={"m": m, "norm_m": norm_m, "norm_mp1": norm_mp1},
                      diagnostics={"max_abs_per_step": max_abs})


def solve_approximating(req: SolveRequest) -> Trajectory:
    """Integrate the random PDE driven by the finite-variation approximant."""
    ws = _Workspace(req.spec)
    driver = driver_derivative(req.noise)
    if driver.left.shape[0] != req.spec.d1:
        raise ValueError("driver count mismatch between problem and noise")
    tgrid = req.noise.Wn.grid if isinstance(req.noise, NoiseBundle) else req.noise.grid

    h = tgrid.dt / req.n_substeps_per_fine
    if not ws.a_const:
        rho_p = float(np.max(ws.a_vals)) * ws.xi_max ** 2
        _check_step(h, rho_p, RK4_REAL_LIMIT, tgrid.dt, "parabolic")
    _check_step(h, _advective_bound(ws, driver.max_abs()), RK4_IMAG_LIMIT, tgrid.dt, "advective")

    b, b0, g = ws.b, ws.b0, ws.g
    any_b = any(ws.b_nonzero)

    def extra(u, du, j, theta):
        v = driver.at(j, theta)
        r = (v @ b0) * u + v @ g
        if any_b:
            r = r + (v @ b) * du
        return r

    rhs = _lawson_rk4_stepper(ws, extra)
    return _run_loop(req, tgrid, rhs, ws)


def solve_limit(req: SolveRequest) -> Trajectory:
    """Integrate the Ito-form limit SPDE by exponential Euler-Maruyama.

    Deterministic drift (including the Stratonovich-to-Ito correction)
    advances with the 4-stage scheme inside each fine step; the stochastic
    increment (M_k u + g_k) dW_k is added per fine step at the left-endpoint
    state.
    """
    spec = req.spec
    ws = _Workspace(spec)
    W = req.noise.W if isinstance(req.noise, NoiseBundle) else req.noise
    if W.kind in (noise_mod.POLYGONAL, noise_mod.SMOOTHED):
        raise ValueError("limit solve must be driven by the Wiener path, not an approximant")
    if W.d1 != spec.d1:
        raise ValueError("driver count mismatch between problem and noise")
    tgrid = W.grid
    dW = np.diff(W.samples, axis=1)

    h = tgrid.dt / req.n_substeps_per_fine
    # explicit diffusion in the correction term (1/2) sum_k b_k^2 u'' is
    # always advanced explicitly; guard it together with a when a is not
    # handled by the integrating factor
    rho_p = 0.5 * float(np.max(np.sum(ws.b ** 2, axis=0))) * ws.xi_max ** 2
    if not ws.a_const:
        rho_p += float(np.max(ws.a_vals)) * ws.xi_max ** 2
    _check_step(h, rho_p, RK4_REAL_LIMIT, tgrid.dt, "parabolic")
    _check_step(h, _advective_bound(ws, None), RK4_IMAG_LIMIT, tgrid.dt, "advective")

    fft, ifft = np.fft.fft, np.fft.ifft
    b, b0, g = ws.b, ws.b0, ws.g
    d1m = ws.d1m
    mg = np.stack([apply_M(spec, k, spec.g[k]).values for k in range(spec.d1)])
    half_mg = 0.5 * np.sum(mg, axis=0)
    b_nonzero = ws.b_nonzero
    any_b = any(b_nonzero)

    def extra(u, du, j, theta):
        r = half_mg + 0.0
        for k in range(spec.d1):
            if b_nonzero[k]:
                mk = b[k] * du + b0[k] * u
                dmk = ifft(d1m * fft(mk)).real
                r = r + 0.5 * (b[k] * dmk + b0[k] * mk)
            else:
                r = r + 0.5 * (b0[k] * b0[k]) * u
        return r

    rhs = _lawson_rk4_stepper(ws, extra)

    def noise_step(u_hat, j):
        u = ifft(u_hat).real
        incr_fields = b0 * u[None, :] + g
        if any_b:
            du = ifft(d1m * u_hat).real
            incr_fields = incr_fields + b * du[None, :]
        return u_hat + fft(dW[:, j] @ incr_fields)

    return _run_loop(req, tgrid, rhs, ws, noise_step=noise_step)


def _oracle_admissible(spec: ProblemSpec) -> bool:
    if spec.d1 != 1:
        return False
    for c in (spec.a, spec.a1, spec.a0, spec.b[0], spec.b0[0]):
        if not c.is_constant:
            return False
    if np.max(np.abs(spec.f.values)) != 0.0:
        return False
    if any(np.max(np.abs(gk.values)) != 0.0 for gk in spec.g):
        return False
    return True


def oracle_constant(spec: ProblemSpec, driver_path: MultiPath, times: list[float],
                    sobolev_m: int = 0) -> Trajectory:
    """Closed-form constant-coefficient solution along the supplied path.

    u(t, x) = exp(a0*t + b0*P(t)) * (H_a(t) u0)(x + a1*t + b*P(t)), where H_a
    is the exact spectral heat semigroup with diffusivity a.  With P the
    Wiener path this is the Stratonovich solution of the limit equation; with
    P a finite-variation approximant it is the classical solution of the
    approximating equation.
    """
    if not _oracle_admissible(spec):
        raise ValueError("oracle requires constant a, a1, a0, b, b0, d1 = 1 and zero f, g")
    if driver_path.d1 != 1:
        raise ValueError("oracle requires a single-driver path")
    a = spec.a.value
    a1 = spec.a1.value
    a0 = spec.a0.value
    b = spec.b[0].value
    b0 = spec.b0[0].value
    tgrid = driver_path.grid
    rec_idx = _record_indices(tgrid, list(times))
    xi = spec.grid.wavenumbers
    d2m = -(xi ** 2)
    u0_hat = spec.u0.spectrum
    states = []
    norm_m = np.zeros(len(rec_idx))
    norm_mp1 = np.zeros(len(rec_idx))
    for i, j in enumerate(rec_idx):
        t = j * tgrid.dt
        p = driver_path.samples[0, j]
        shift = a1 * t + b * p
        amp = np.exp(a0 * t + b0 * p)
        u_hat = u0_hat * np.exp(a * d2m * t) * np.exp(1j * xi * shift) * amp
        gf = GridFunction.from_spectrum(spec.grid, u_hat)
        states.append(gf)
        norm_m[i] = sobolev_norm(gf, sobolev_m)
        norm_mp1[i] = sobolev_norm(gf, sobolev_m + 1)
    return Trajectory(times=np.array([j * tgrid.dt for j in rec_idx]), states=states,
                      norms={"m": sobolev_m, "norm_m": norm_m, "norm_mp1": norm_mp1},
                      diagnostics={"oracle": True})


REFERENCE_SUBSTEP_FACTOR = 8
REFERENCE_MODE_FACTOR = 2


def _refined_spec(spec: ProblemSpec, factor: int) -> ProblemSpec:
    fine_grid = SpatialGrid(spec.grid.n_x * factor, spec.grid.domain_length)

    def lift(c: CoefficientField) -> CoefficientField:
        if c.kind == "tabulated":
            return CoefficientField.tabulated(prolong_modes(
                GridFunction(spec.grid, np.asarray(c.table)), fine_grid).values)
        return c

    return ProblemSpec(
        grid=fine_grid, d1=spec.d1,
        a=lift(spec.a), a1=lift(spec.a1), a0=lift(spec.a0),
        b=[lift(c) for c in spec.b], b0=[lift(c) for c in spec.b0],
        u0=prolong_modes(spec.u0, fine_grid),
        f=prolong_modes(spec.f, fine_grid),
        g=[prolong_modes(gk, fine_grid) for gk in spec.g],
        sigma=[lift(c) for c in spec.sigma] if spec.sigma is not None else None,
    )


def reference_limit_solution(spec: ProblemSpec, W: MultiPath, n_substeps: int,
                             record_times: list[float], sobolev_m: int) -> Trajectory:
    """Limit solve at 8x substeps and 2x modes, restricted back to spec's grid.

    Serves as the reference solution when no closed-form oracle exists
    (variable coefficients or several drivers).
    """
    fine_spec = _refined_spec(spec, REFERENCE_MODE_FACTOR)
    req = SolveRequest(spec=fine_spec, noise=W, target="limit",
                       n_substeps_per_fine=n_substeps * REFERENCE_SUBSTEP_FACTOR,
                       record_times=record_times, sobolev_m=sobolev_m)
    traj = solve_limit(req)
    if traj.aborted:
        return traj
    states = [restrict_modes(s, spec.grid) for s in traj.states]
    norm_m = np.array([sobolev_norm(s, sobolev_m) for s in states])
    norm_mp1 = np.array([sobolev_norm(s, sobolev_m + 1) for s in states])
    return Trajectory(times=traj.times, states=states,
                      norms={"m": sobolev_m, "norm_m": norm_m, "norm_mp1": norm_mp1},
                      diagnostics=dict(traj.diagnostics, reference=True))


@dataclass(frozen=True)
class CoupledError:
    sup_err: float
    integral_err: float
    z_n_sup: float


def coupling_defect_sup(spec: ProblemSpec, traj_n: Trajectory, bundle: NoiseBundle,
                        m: int) -> float:
    """Sup over record times of |sum_k (M_k u_n + g_k)(W_k - Wn_k)|_m."""
    err_paths = bundle.W.samples - bundle.Wn.samples
    dt = bundle.W.grid.dt
    sup = 0.0
    for t, state in zip(traj_n.times, traj_n.states):
        j = int(round(t / dt))
        z = np.zeros(spec.grid.n_x)
        for k in range(spec.d1):
            z = z + (apply_M(spec, k, state).values + spec.g[k].values) * err_paths[k, j]
        sup = max(sup, sobolev_norm(GridFunction(spec.grid, z), m))
    return sup


def errors_from_trajectories(spec: ProblemSpec, traj_n: Trajectory, traj: Trajectory,
                             bundle: NoiseBundle, m: int) -> CoupledError:
    """Error functionals of a solved (approximating, limit) trajectory pair."""
    times = traj.times
    err_m = np.zeros(len(times))
    err_mp1 = np.zeros(len(times))
    for i, (un, u) in enumerate(zip(traj_n.states, traj.states)):
        diff = GridFunction(spec.grid, un.values - u.values)
        err_m[i] = sobolev_norm(diff, m)
        err_mp1[i] = sobolev_norm(diff, m + 1)
    sup_err = float(np.max(err_m))
    integral_err = float(np.trapezoid(err_mp1 ** 2, times))
    z_sup = coupling_defect_sup(spec, traj_n, bundle, m)
    return CoupledError(sup_err=sup_err, integral_err=integral_err, z_n_sup=z_sup)


def coupled_error(spec: ProblemSpec, bundle: NoiseBundle, m: int = 0,
                  n_substeps: int = 1, record_times: list[float] | None = None,
                  reference: Trajectory | None = None,
                  return_trajectories: bool = False):
    """Pathwise error between the approximating and limit solutions.

    Solves both equations on the bundle's realization (or evaluates the
    closed-form oracle on both sides when admissible) and returns the sup over
    record times of |u_n - u|_m, the trapezoidal time integral of
    |u_n - u|_{m+1}^2, and the sup of the first-order coupling defect norm.
    A precomputed reference trajectory (which depends on the realization but
    not on n) can be passed to amortize sweeps.
    """
    tgrid = bundle.W.grid
    record_times = record_times or default_record_times(tgrid)
    if _oracle_admissible(spec):
        traj_n = oracle_constant(spec, bundle.Wn, record_times, sobolev_m=m)
        traj = reference or oracle_constant(spec, bundle.W, record_times, sobolev_m=m)
    else:
        req_n = SolveRequest(spec=spec, noise=bundle, target="approximating",
                             n_substeps_per_fine=n_substeps, record_times=record_times,
                             sobolev_m=m)
        traj_n = solve_approximating(req_n)
        if traj_n.aborted:
            raise UnstableSolve(f"approximating solve aborted at t={traj_n.abort_time:.4g}")
        traj = reference or reference_limit_solution(spec, bundle.W, n_substeps, record_times, m)
        if traj.aborted:
            raise UnstableSolve(f"limit solve aborted at t={traj.abort_time:.4g}")
    result = errors_from_trajectories(spec, traj_n, traj, bundle, m)
    if return_trajectories:
        return result, traj_n, traj
    return result


def limit_trajectory(spec: ProblemSpec, bundle: NoiseBundle, m: int, n_substeps: int,
                     record_times: list[float]) -> Trajectory:
    """The limit-side trajectory coupled_error would use for this problem."""
    if _oracle_admissible(spec):
        return oracle_constant(spec, bundle.W, record_times, sobolev_m=m)
    traj = reference_limit_solution(spec, bundle.W, n_substeps, record_times, m)
    if traj.aborted:
        raise UnstableSolve(f"limit solve aborted at t={traj.abort_time:.4g}")
    return traj
