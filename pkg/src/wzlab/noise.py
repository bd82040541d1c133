"""Driver paths: Wiener sampling, finite-variation approximants and their functionals.

A d1-component Wiener path W is sampled on a uniform fine grid and replaced by
a finite-variation approximant Wn (polygonal delay-interpolation or trailing
moving average).  The module computes every functional the convergence study
quantifies:

* the antisymmetric area path  A^{ij}(t) = (1/2) int_0^t W^i dW^j - W^j dW^i
  (left-point sums on the fine grid: the Ito value for Wiener inputs, the
  Riemann-Stieltjes value for finite-variation inputs),
* the cross integral           Bn^{ij}(t) = int_0^t (W^i - Wn^i) dWn^j
  together with its first-variation total over [0, T],
* the compensated cross path   Sn^{ij}(t) = Bn^{ij}(t) - (1/2) delta_ij t,
* sup-distances of W vs Wn and of the two area paths.

All stochastic integrals are left-point sums on the fine grid; the bias is
controlled by keeping the fine grid much finer than the coarsest approximant.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WIENER = "wiener"
POLYGONAL = "polygonal"
SMOOTHED = "smoothed"
DETERMINISTIC = "deterministic"

SCHEMES = (POLYGONAL, SMOOTHED)

PATH_MAGIC = b"WZNB"
PATH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform temporal grid t_j = j*dt, j = 0..n_fine, with dt = T/n_fine."""

    T: float
    n_fine: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.n_fine < 2:
            raise ValueError("n_fine must be >= 2")

    @property
    def dt(self) -> float:
        return self.T / self.n_fine

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_fine + 1) * self.dt


class MultiPath:
    """d1-component sampled path on a fine time grid, immutable after construction."""

    __slots__ = ("grid", "samples", "kind", "n")

    def __init__(self, grid: TimeGrid, samples: np.ndarray, kind: str, n: int | None = None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != grid.n_fine + 1:
            raise ValueError(f"samples must have shape (d1, {grid.n_fine + 1})")
        if samples.shape[0] < 1:
            raise ValueError("d1 must be >= 1")
        if not np.all(np.isfinite(samples)):
            raise ValueError("path samples must be finite")
        if kind == WIENER and np.any(samples[:, 0] != 0.0):
            raise ValueError("Wiener paths must start at 0")
        if kind in (POLYGONAL, SMOOTHED) and n is None:
            raise ValueError(f"kind {kind!r} requires the approximation index n")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "n", n)

    def __setattr__(self, name, value):
        raise AttributeError("MultiPath is immutable")

    @property
    def d1(self) -> int:
        return self.samples.shape[0]

    def __repr__(self):
        tag = self.kind if self.n is None else f"{self.kind}({self.n})"
        return f"MultiPath(d1={self.d1}, n_fine={self.grid.n_fine}, kind={tag})"


def sample_wiener(seed: int, d1: int, grid: TimeGrid) -> MultiPath:
    """Sample a d1-dimensional Wiener path on the fine grid.

    Increments over consecutive grid intervals are independent N(0, dt) draws
    from ``numpy.random.default_rng(seed)``, so the path is bitwise
    reproducible from the seed.
    """
    if d1 < 1:
        raise ValueError("d1 must be >= 1")
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, np.sqrt(grid.dt), size=(d1, grid.n_fine))
    samples = np.zeros((d1, grid.n_fine + 1))
    np.cumsum(increments, axis=1, out=samples[:, 1:])
    return MultiPath(grid, samples, WIENER)


def linear_path(d1: int, grid: TimeGrid) -> MultiPath:
    """Deterministic test path W^k(t) = t for every component."""
    samples = np.tile(grid.times, (d1, 1))
    return MultiPath(grid, samples, DETERMINISTIC)


def _require_divides(n: int, grid: TimeGrid):
    if n < 1 or n > grid.n_fine:
        raise ValueError(f"approximation index n={n} must be in [1, n_fine]")
    if grid.n_fine % n != 0:
        raise ValueError(f"n={n} must divide n_fine={grid.n_fine} so knots lie on the fine grid")


def polygonal_approx(W: MultiPath, n: int) -> MultiPath:
    """Adapted polygonal approximant with knots t_k = k*T/n.

    Zero on [0, T/n); on [t_k, t_{k+1}) it interpolates linearly from
    W(t_{k-1}) to W(t_k), so it only looks one knot interval back and
    satisfies Wn(t_{k+1}) = W(t_k) exactly.
    """
    grid = W.grid
    _require_divides(n, grid)
    r = grid.n_fine // n
    knots = W.samples[:, ::r]                      # (d1, n+1)
    out = np.zeros_like(W.samples)
    frac = np.arange(r) / r
    left = knots[:, 0:n - 1] if n > 1 else knots[:, :0]
    # segment k >= 1: left knot value W(t_{k-1}) plus frac * increment
    if n > 1:
        incr = knots[:, 1:n] - left
        out[:, r:n * r] = (left[:, :, None] + incr[:, :, None] * frac[None, None, :]).reshape(W.d1, -1)
    out[:, -1] = knots[:, n - 1]
    return MultiPath(grid, out, POLYGONAL, n)


def smoothed_window_steps(n: int, grid: TimeGrid) -> int:
    """Number of fine steps in the trailing window of length 1/n."""
    w = 1.0 / (n * grid.dt)
    steps = int(round(w))
    if steps < 1:
        raise ValueError(f"averaging window 1/{n} is smaller than the fine step dt={grid.dt:g}")
    if abs(w - steps) > 1e-9 * max(w, 1.0):
        raise ValueError(f"averaging window 1/{n} must be a whole number of fine steps")
    return steps


def smoothed_approx(W: MultiPath, n: int) -> MultiPath:
    """Trailing moving average Wn(t) = n * int_{t-1/n}^{t} W(s) ds.

    Trapezoidal quadrature on the fine grid, with W extended by zero below
    t = 0.
    """
    grid = W.grid
    w = smoothed_window_steps(n, grid)
    d1 = W.d1
    nf = grid.n_fine
    padded = np.concatenate([np.zeros((d1, w)), W.samples], axis=1)
    csum = np.cumsum(padded, axis=1)
    # interior sum over padded indices [j+1, j+w-1] for output j, plus half end points
    upper = csum[:, w - 1:w + nf]                       # sum over [0..j+w-1]
    lower = np.concatenate([np.zeros((d1, 1)), csum[:, :nf]], axis=1)  # sum over [0..j-1]
    inner_sum = upper - lower - padded[:, :nf + 1]      # sum over [j+1 .. j+w-1]
    trap = inner_sum + 0.5 * (padded[:, :nf + 1] + padded[:, w:])
    out = trap * grid.dt * n
    return MultiPath(grid, out, SMOOTHED, n)


def build_approx(W: MultiPath, scheme: str, n: int) -> MultiPath:
    if scheme == POLYGONAL:
        return polygonal_approx(W, n)
    if scheme == SMOOTHED:
        return smoothed_approx(W, n)
    raise ValueError(f"unknown scheme {scheme!r}")


def area_process(P: MultiPath) -> np.ndarray:
    """Antisymmetric area path, shape (d1, d1, n_fine+1).

    A^{ij}(t_m) = (1/2) sum_{l<m} [P^i(t_l) dP^j_l - P^j(t_l) dP^i_l], stored
    for i < j and reflected, so A^{ij} + A^{ji} = 0 holds exactly and the
    diagonal vanishes.
    """
    d1 = P.d1
    nf = P.grid.n_fine
    A = np.zeros((d1, d1, nf + 1))
    if d1 == 1:
        return A
    dP = np.diff(P.samples, axis=1)
    for i in range(d1):
        for j in range(i + 1, d1):
            integ = 0.5 * np.cumsum(P.samples[i, :-1] * dP[j] - P.samples[j, :-1] * dP[i])
            A[i, j, 1:] = integ
            A[j, i, 1:] = -integ
    return A


def _check_pair(W: MultiPath, Wn: MultiPath):
    if W.grid != Wn.grid:
        raise ValueError("grid mismatch between W and Wn")
    if W.d1 != Wn.d1:
        raise ValueError("driver count mismatch between W and Wn")
    if Wn.kind == WIENER:
        raise ValueError("Wn must be a finite-variation path, not a Wiener path")


def bn_process(W: MultiPath, Wn: MultiPath) -> tuple[np.ndarray, np.ndarray]:
    """Cross integral of the approximation error against the approximant.

    Returns the running path Bn^{ij}(t_m) = sum_{l<m} (W^i - Wn^i)(t_l) dWn^j_l
    with shape (d1, d1, n_fine+1), and the matrix of first-variation totals
    ||Bn^{ij}||(T) = sum_l |(W^i - Wn^i)(t_l)| |dWn^j_l|.
    """
    _check_pair(W, Wn)
    d1 = W.d1
    nf = W.grid.n_fine
    err = W.samples - Wn.samples
    dWn = np.diff(Wn.samples, axis=1)
    B = np.zeros((d1, d1, nf + 1))
    variation = np.zeros((d1, d1))
    abs_err = np.abs(err[:, :-1])
    abs_dWn = np.abs(dWn)
    for i in range(d1):
        for j in range(d1):
            B[i, j, 1:] = np.cumsum(err[i, :-1] * dWn[j])
            variation[i, j] = np.dot(abs_err[i], abs_dWn[j])
    return B, variation


def sn_process(W: MultiPath, Wn: MultiPath) -> np.ndarray:
    """Compensated cross path Sn^{ij}(t) = Bn^{ij}(t) - (1/2) delta_ij t."""
    B, _ = bn_process(W, Wn)
    return _compensate(B, W.grid)


def _compensate(B: np.ndarray, grid: TimeGrid) -> np.ndarray:
    S = B.copy()
    half_t = 0.5 * grid.times
    for i in range(B.shape[0]):
        S[i, i, :] -= half_t
    return S


class NoiseBundle:
    """One realization's W, Wn and every derived driver functional."""

    __slots__ = ("W", "Wn", "n", "A", "An", "Sn", "Bn", "bn_variation",
                 "sup_w_err", "sup_a_err", "sup_s_err")

    def __init__(self, W: MultiPath, Wn: MultiPath, A: np.ndarray | None = None):
        _check_pair(W, Wn)
        if Wn.n is None:
            raise ValueError("Wn must carry its approximation index")
        if A is None:
            A = area_process(W)
        An = area_process(Wn)
        Bn, variation = bn_process(W, Wn)
        Sn = _compensate(Bn, W.grid)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Wn", Wn)
        object.__setattr__(self, "n", Wn.n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "An", An)
        object.__setattr__(self, "Bn", Bn)
        object.__setattr__(self, "Sn", Sn)
        object.__setattr__(self, "bn_variation", variation)
        object.__setattr__(self, "sup_w_err", float(np.max(np.abs(W.samples - Wn.samples))))
        d1 = W.d1
        if d1 > 1:
            off = ~np.eye(d1, dtype=bool)
            object.__setattr__(self, "sup_a_err", float(np.max(np.abs(A - An)[off])))
        else:
            object.__setattr__(self, "sup_a_err", 0.0)
        object.__setattr__(self, "sup_s_err", float(np.max(np.abs(Sn))))

    def __setattr__(self, name, value):
        raise AttributeError("NoiseBundle is immutable")

    @property
    def d1(self) -> int:
        return self.W.d1


def make_bundle(W: MultiPath, scheme: str, n: int, A: np.ndarray | None = None) -> NoiseBundle:
    """Build the approximant for one n and assemble the full bundle.

    Pass a precomputed area path of W to avoid recomputing it across a sweep.
    """
    return NoiseBundle(W, build_approx(W, scheme, n), A=A)


def product_identity_residual(bundle: NoiseBundle) -> np.ndarray:
    """Sup defect of the discrete product-rule identity for the error product.

    With q^{ij} = (W^i - Wn^i)(W^j - Wn^j) pointwise and R^{ij} the left-point
    sum of (W^i - Wn^i) against dW^j, the symmetrized compensated cross path
    satisfies

        Sn^{ij}(t) + Sn^{ji}(t) = q^{ij}(0) - q^{ij}(t) + R^{ij}(t) + R^{ji}(t)

    in the continuum; on the fine grid the defect is pure quadrature error,
    shrinking like sqrt(dt) at fixed n.  Returns the (d1, d1) matrix of sup
    absolute defects over the grid.
    """
    W, Wn = bundle.W, bundle.Wn
    d1 = W.d1
    nf = W.grid.n_fine
    err = W.samples - Wn.samples
    dW = np.diff(W.samples, axis=1)
    R = np.zeros((d1, d1, nf + 1))
    for i in range(d1):
        for j in range(d1):
            R[i, j, 1:] = np.cumsum(err[i, :-1] * dW[j])
    out = np.zeros((d1, d1))
    for i in range(d1):
        for j in range(d1):
            q = err[i] * err[j]
            lhs = bundle.Sn[i, j] + bundle.Sn[j, i]
            rhs = q[0] - q + R[i, j] + R[j, i]
            out[i, j] = np.max(np.abs(lhs - rhs))
    return out


@dataclass(frozen=True)
class NoiseReportRow:
    """One sweep entry of driver-approximation quality metrics."""

    n: int
    sup_w_err: float
    sup_area_err: float
    bn_variation_max: float
    bn_over_log_n: float
    eta_n: float


def noise_report(seed: int, d1: int, grid: TimeGrid, scheme: str,
                 n_list: list[int], W: MultiPath | None = None) -> list[NoiseReportRow]:
    """Sweep the approximation index over one stored path and tabulate metrics.

    eta_n is the sup over swept m >= n of sup|W - W_m|; only swept
    approximants exist numerically, so this is a lower bound for the
    all-m supremum.  Rate fits over the rows are delegated to the rates
    module by callers.
    """
    if not n_list:
        raise ValueError("n_list must be non-empty")
    if sorted(n_list) != list(n_list) or len(set(n_list)) != len(n_list):
        raise ValueError("n_list must be strictly increasing")
    if W is None:
        W = sample_wiener(seed, d1, grid)
    A = area_process(W)
    metrics = {}
    for n in n_list:
        b = make_bundle(W, scheme, n, A=A)
        metrics[n] = (b.sup_w_err, b.sup_a_err, float(np.max(b.bn_variation)))
    rows = []
    for n in n_list:
        sup_w, sup_a, bn_max = metrics[n]
        eta = max(metrics[m][0] for m in n_list if m >= n)
        rows.append(NoiseReportRow(
            n=n,
            sup_w_err=sup_w,
            sup_area_err=sup_a,
            bn_variation_max=bn_max,
            bn_over_log_n=bn_max / np.log(n) if n > 1 else float("nan"),
            eta_n=eta,
        ))
    return rows


def subsample_path(W: MultiPath, factor: int) -> MultiPath:
    """Restrict a path to a coarser fine grid (same realization, every factor-th sample)."""
    if factor < 1 or W.grid.n_fine % factor != 0:
        raise ValueError(f"factor {factor} must divide n_fine={W.grid.n_fine}")
    coarse = TimeGrid(W.grid.T, W.grid.n_fine // factor)
    return MultiPath(coarse, W.samples[:, ::factor], W.kind, W.n)


# ---------------------------------------------------------------------------
# Path cache file format: magic "WZNB", version u16, d1 u16, n_fine u64,
# T float64, then row-major float64 little-endian samples.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sHHQd")


def save_path(path: MultiPath, file: str | Path):
    """Persist a path in the binary cache format (always stores float64 LE)."""
    file = Path(file)
    header = _HEADER.pack(PATH_MAGIC, PATH_FORMAT_VERSION, path.d1, path.grid.n_fine, path.grid.T)
    body = np.ascontiguousarray(path.samples, dtype="<f8").tobytes()
    file.write_bytes(header + body)


def load_path(file: str | Path, kind: str = WIENER) -> MultiPath:
    """Load a path from the binary cache format, validating header and size."""
    raw = Path(file).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{file}: truncated path file")
    magic, version, d1, n_fine, T = _HEADER.unpack_from(raw)
    if magic != PATH_MAGIC:
        raise ValueError(f"{file}: bad magic {magic!r}")
    if version != PATH_FORMAT_VERSION:
        raise ValueError(f"{file}: unsupported format version {version}")
    expected = _HEADER.size + 8 * d1 * (n_fine + 1)
    if len(raw) != expected:
        raise ValueError(f"{file}: truncated path file ({len(raw)} bytes, expected {expected})")
    samples = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(d1, n_fine + 1)
    return MultiPath(TimeGrid(T, n_fine), samples, kind)
