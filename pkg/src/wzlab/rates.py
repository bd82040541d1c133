"""Log-log rate fitting and cross-replica aggregation of convergence exponents.

Errors along a sweep of approximation indices n are fitted per replica by
least squares in log-log coordinates.  Quantities that are squared norms
(the time integral of |u_n - u|_{m+1}^2) have their fitted slope halved so
every report is expressed in the same exponent units.  Almost-sure rate
statements are pathwise, so exponents are fitted per replica and summarised
across replicas by the median and interquartile range, never by averaging
errors across paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GAMMA_DEFAULT = 0.5
THRESHOLD_SLACK = 0.1

# exponent of the underlying error norm carried by each reported quantity
QUANTITY_POWER = {
    "sup_err": 1,
    "integral_err": 2,
    "sup_err_sq": 2,
    "sup_w_err": 1,
    "sup_area_err": 1,
    "sup_a_err": 1,
    "bn_var": 1,
    "z_n_sup": 1,
}


class DegenerateFitError(ValueError):
    """Too few usable points to fit a rate (exact matches excluded)."""


@dataclass(frozen=True)
class ErrorRecord:
    """Per-(replica, n) measurements feeding the rate fits."""

    n: int
    replica: int
    sup_err: float
    integral_err: float
    sup_w_err: float = 0.0
    sup_a_err: float = 0.0
    bn_var: float = 0.0
    z_n_sup: float = 0.0

    def __post_init__(self):
        for name in ("sup_err", "integral_err", "sup_w_err", "sup_a_err", "bn_var", "z_n_sup"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class RateFit:
    """One replica's fitted exponent, in kappa units (positive = decay)."""

    kappa: float
    used_n: tuple
    excluded_n: tuple
    power: int


def fit_rate(n_values, errors, power: int = 1) -> RateFit:
    """Least-squares slope of log(error) against log(n), reported as kappa.

    kappa = -slope / power, so quantities measured as squared norms
    (power = 2) land in the same units as plain norms.  Entries with
    non-positive error (degenerate exact matches) are excluded with a note;
    fewer than three usable points is a refusal.
    """
    n_values = [int(n) for n in n_values]
    errors = [float(e) for e in errors]
    if len(n_values) != len(errors):
        raise ValueError("n_values and errors must align")
    if len(set(n_values)) != len(n_values):
        raise ValueError("n values must be distinct")
    used, excluded = [], []
    for n, e in zip(n_values, errors):
        (used if e > 0 else excluded).append((n, e))
    if len(used) < 3:
        raise DegenerateFitError(
            f"need >= 3 positive-error points to fit a rate, have {len(used)} "
            f"(excluded n = {[n for n, _ in excluded]})")
    ns = np.array([n for n, _ in used], dtype=float)
    es = np.array([e for _, e in used])
    slope = np.polyfit(np.log(ns), np.log(es), 1)[0]
    return RateFit(kappa=float(-slope / power),
                   used_n=tuple(int(n) for n in ns),
                   excluded_n=tuple(n for n, _ in excluded),
                   power=power)


def fit_records(records: list[ErrorRecord], quantity: str) -> RateFit:
    """Fit one replica's records for a named quantity (see QUANTITY_POWER)."""
    if quantity not in QUANTITY_POWER:
        raise ValueError(f"unknown quantity {quantity!r}")
    ordered = sorted(records, key=lambda r: r.n)
    return fit_rate([r.n for r in ordered],
                    [getattr(r, quantity) for r in ordered],
                    power=QUANTITY_POWER[quantity])


@dataclass(frozen=True)
class RateReport:
    """Cross-replica summary of fitted exponents for one quantity."""

    quantity: str
    gamma_target: float
    median_kappa: float
    iqr: float
    per_replica: tuple
    threshold: float
    passed: bool
    notes: tuple = field(default=())

    def to_json(self) -> str:
        return json.dumps({
            "quantity": self.quantity,
            "gamma_target": self.gamma_target,
            "median_kappa": self.median_kappa,
            "iqr": self.iqr,
            "per_replica": list(self.per_replica),
            "threshold": self.threshold,
            "pass": self.passed,
            "notes": list(self.notes),
        }, indent=2, sort_keys=True)


def aggregate(fits: list[RateFit], quantity: str,
              gamma_target: float = GAMMA_DEFAULT,
              threshold: float | None = None,
              notes: tuple = ()) -> RateReport:
    """Median and interquartile range of per-replica exponents with a verdict.

    The default pass threshold is gamma_target - 0.1: finite sweeps and
    logarithmic factors shave the observable exponent below the ideal rate.
    """
    if not fits:
        raise ValueError("need at least one replica fit")
    kappas = np.array([f.kappa for f in fits])
    if threshold is None:
        threshold = gamma_target - THRESHOLD_SLACK
    median = float(np.median(kappas))
    q25, q75 = np.percentile(kappas, [25, 75])
    return RateReport(
        quantity=quantity,
        gamma_target=gamma_target,
        median_kappa=median,
        iqr=float(q75 - q25),
        per_replica=tuple(float(k) for k in kappas),
        threshold=float(threshold),
        passed=bool(median >= threshold),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class BnTrend:
    """Growth diagnostic for the cross-integral variation totals.

    The study requires the variation totals to grow slower than log n; a
    finite sweep can only witness the trend, so the ratios and their
    monotone decrease are reported as evidence, never proof.
    """

    n_values: tuple
    ratios: tuple
    strictly_decreasing: bool
    first_to_last_decreasing: bool


def bn_trend(records: list[ErrorRecord]) -> BnTrend:
    """Per-n ratios bn_var / ln(n) for one replica, with decrease flags."""
    ordered = sorted(records, key=lambda r: r.n)
    if len(ordered) < 3:
        raise ValueError("need >= 3 n values for a trend")
    ns = [r.n for r in ordered]
    if any(n <= 1 for n in ns):
        raise ValueError("trend ratios need n > 1")
    ratios = [r.bn_var / np.log(r.n) for r in ordered]
    # exactly-zero neighbours (coupled deterministic tests) count as decreasing
    strict = all(b < a or a == b == 0.0 for a, b in zip(ratios, ratios[1:]))
    return BnTrend(
        n_values=tuple(ns),
        ratios=tuple(float(r) for r in ratios),
        strictly_decreasing=bool(strict),
        first_to_last_decreasing=bool(ratios[-1] < ratios[0] or (ratios[0] == ratios[-1] == 0.0)),
    )
