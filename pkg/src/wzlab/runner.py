"""Experiment orchestration: parallel sweeps, persistence and reporting.

A run executes one mode (noise | solve | rates | check) from a validated
config.  Replicas are independent: each derives its own seed by xor-splitting
the base seed with the replica index, so results do not depend on thread
count or scheduling.  Workers only compute; all files are written by the
collector after every cell resolves, in sorted order, which makes outputs
byte-identical across parallelism levels.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import noise as nz
from .checks import run_checks
from .config import ConfigError, ExperimentConfig
from .grid import GridFunction
from .problem import check_ellipticity, check_parabolicity
from .rates import ErrorRecord, RateReport, aggregate, bn_trend, fit_records
from .solver import (SolveRequest, UnstableSolve, coupled_error, default_record_times,
                     limit_trajectory, solve_approximating)


@dataclass
class RunResult:
    out_dir: Path | None
    reports: list = field(default_factory=list)
    unstable_cells: list = field(default_factory=list)
    check_results: list = field(default_factory=list)

    @property
    def all_reports_pass(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def all_checks_pass(self) -> bool:
        return all(ok for _, ok, _ in self.check_results)


def replica_seed(seed: int, replica: int) -> int:
    """Per-replica seed: xor with the replica index, hashed by the generator's
    seed-splitting machinery downstream."""
    return seed ^ replica


def _path_file(paths_dir: str | Path, replica: int) -> Path:
    return Path(paths_dir) / f"replica_{replica:04d}.wznb"


def replica_path(cfg: ExperimentConfig, replica: int) -> nz.MultiPath:
    """The replica's driver path: deterministic test ramp, cached, or sampled."""
    if cfg.path_kind == "linear":
        return nz.linear_path(cfg.d1, cfg.time_grid)
    if cfg.paths_dir is not None:
        f = _path_file(cfg.paths_dir, replica)
        if f.is_file():
            W = nz.load_path(f)
            if W.grid != cfg.time_grid or W.d1 != cfg.d1:
                raise ConfigError(f"paths_dir: cached path {f} does not match grid/d1 of this config")
            return W
        W = nz.sample_wiener(replica_seed(cfg.seed, replica), cfg.d1, cfg.time_grid)
        f.parent.mkdir(parents=True, exist_ok=True)
        nz.save_path(W, f)
        return W
    return nz.sample_wiener(replica_seed(cfg.seed, replica), cfg.d1, cfg.time_grid)


def cache_paths(cfg: ExperimentConfig, paths_dir: str | Path | None = None) -> list[Path]:
    """Persist every replica's Wiener path so sweeps reuse identical samples."""
    target = Path(paths_dir) if paths_dir is not None else (
        Path(cfg.paths_dir) if cfg.paths_dir else None)
    if target is None:
        raise ConfigError("paths_dir: required to cache paths")
    target.mkdir(parents=True, exist_ok=True)
    files = []
    for r in range(cfg.replicas):
        f = _path_file(target, r)
        if not f.is_file():
            nz.save_path(nz.sample_wiener(replica_seed(cfg.seed, r), cfg.d1, cfg.time_grid), f)
        files.append(f)
    return files


def load_paths(paths_dir: str | Path) -> list[nz.MultiPath]:
    """Load all cached paths from a directory, sorted by replica index."""
    files = sorted(Path(paths_dir).glob("replica_*.wznb"))
    if not files:
        raise FileNotFoundError(f"no cached paths in {paths_dir}")
    return [nz.load_path(f) for f in files]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def dump_field(gf: GridFunction, path: Path):
    _write_csv(path, ["x", "value"], [[x, v] for x, v in zip(gf.grid.points, gf.values)])


def dump_spectrum(gf: GridFunction, path: Path):
    modes = np.fft.fftfreq(gf.grid.n_x, d=1.0 / gf.grid.n_x).astype(int)
    _write_csv(path, ["mode", "re", "im"],
               [[int(m), s.real, s.imag] for m, s in zip(modes, gf.spectrum)])


def _config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest()


def _write_manifest(out: Path, cfg: ExperimentConfig, mode: str, cells: list, outputs: list):
    manifest = {
        "config_hash": _config_hash(cfg),
        "code_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "mode": mode,
        "cells": cells,
        "outputs": sorted(str(p.relative_to(out)) for p in outputs),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# noise mode
# ---------------------------------------------------------------------------

def run_noise(cfg: ExperimentConfig, out_dir: str | Path, threads: int = 1) -> RunResult:
    """Sweep driver-approximation metrics across replicas and fit their rates."""
    scheme = cfg.require_scheme()
    if not cfg.n_list:
        raise ConfigError("n_list: required for noise mode")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def worker(replica: int):
        W = replica_path(cfg, replica)
        rows = nz.noise_report(replica_seed(cfg.seed, replica), cfg.d1, cfg.time_grid,
                               scheme, list(cfg.n_list), W=W)
        return replica, rows

    results = dict(_pool_map(worker, range(cfg.replicas), threads))

    outputs = []
    header = ["n", "sup_w_err", "sup_area_err", "bn_variation_max", "bn_over_log_n", "eta_n"]
    for replica in range(cfg.replicas):
        rows = results[replica]
        path = out / f"noise_report_r{replica:03d}.csv"
        _write_csv(path, header, [[r.n, r.sup_w_err, r.sup_area_err, r.bn_variation_max,
                                   r.bn_over_log_n, r.eta_n] for r in rows])
        outputs.append(path)

    records = {
        replica: [ErrorRecord(n=r.n, replica=replica, sup_err=0.0, integral_err=0.0,
                              sup_w_err=r.sup_w_err, sup_a_err=r.sup_area_err,
                              bn_var=r.bn_variation_max)
                  for r in rows]
        for replica, rows in results.items()
    }
    reports = []
    for quantity in ("sup_w_err", "sup_a_err"):
        if quantity == "sup_a_err" and cfg.d1 == 1:
            continue
        fits = [fit_records(records[r], quantity) for r in range(cfg.replicas)]
        name = "sup_area_err" if quantity == "sup_a_err" else quantity
        rep = aggregate(fits, name, cfg.gamma_target, cfg.threshold)
        path = out / f"rate_{name}.json"
        path.write_text(rep.to_json())
        outputs.append(path)
        reports.append(rep)

    trends = [bn_trend(records[r]) for r in range(cfg.replicas)]
    trend_doc = {
        "n_values": list(trends[0].n_values),
        "replicas": cfg.replicas,
        "count_strictly_decreasing": sum(t.strictly_decreasing for t in trends),
        "count_first_to_last_decreasing": sum(t.first_to_last_decreasing for t in trends),
        "per_replica": [
            {"replica": r, "ratios": list(t.ratios),
             "strictly_decreasing": t.strictly_decreasing,
             "first_to_last_decreasing": t.first_to_last_decreasing}
            for r, t in enumerate(trends)
        ],
    }
    trend_path = out / "bn_trend.json"
    trend_path.write_text(json.dumps(trend_doc, indent=2, sort_keys=True))
    outputs.append(trend_path)

    cells = [{"replica": r, "status": "ok"} for r in range(cfg.replicas)]
    outputs.append(_write_manifest(out, cfg, "noise", cells, outputs + [out / "manifest.json"]))
    return RunResult(out_dir=out, reports=reports)


# ---------------------------------------------------------------------------
# rates mode
# ---------------------------------------------------------------------------

def _validate_problem(cfg: ExperimentConfig):
    spec = cfg.require_problem()
    ell = check_ellipticity(spec)
    if not ell.passed:
        raise ConfigError(f"problem: ellipticity check failed (min a = {ell.lam:.6g})")
    par = check_parabolicity(spec)
    if not par.passed:
        raise ConfigError(f"problem: stochastic parabolicity check failed (margin {par.margin:.6g})")
    return spec


def _rates_worker(cfg: ExperimentConfig, spec, record_times, replica: int):
    W = replica_path(cfg, replica)
    A = nz.area_process(W)
    records, statuses = [], []
    reference = None
    try:
        first = nz.make_bundle(W, cfg.require_scheme(), cfg.n_list[0], A=A)
        reference = limit_trajectory(spec, first, cfg.sobolev_m, cfg.n_substeps, record_times)
    except UnstableSolve as exc:
        for n in cfg.n_list:
            statuses.append({"replica": replica, "n": n, "status": f"unstable: {exc}"})
        return records, statuses
    for n in cfg.n_list:
        bundle = nz.make_bundle(W, cfg.require_scheme(), n, A=A)
        try:
            ce = coupled_error(spec, bundle, m=cfg.sobolev_m, n_substeps=cfg.n_substeps,
                               record_times=record_times, reference=reference)
        except UnstableSolve as exc:
            statuses.append({"replica": replica, "n": n, "status": f"unstable: {exc}"})
            continue
        records.append(ErrorRecord(
            n=n, replica=replica, sup_err=ce.sup_err, integral_err=ce.integral_err,
            sup_w_err=bundle.sup_w_err, sup_a_err=bundle.sup_a_err,
            bn_var=float(np.max(bundle.bn_variation)), z_n_sup=ce.z_n_sup))
        statuses.append({"replica": replica, "n": n, "status": "ok"})
    return records, statuses


def run_rates(cfg: ExperimentConfig, out_dir: str | Path, threads: int = 1) -> RunResult:
    """Coupled-error sweep: solve both equations per (replica, n) and fit rates."""
    spec = _validate_problem(cfg)
    if not cfg.n_list:
        raise ConfigError("n_list: required for rates mode")
    cfg.require_scheme()
    record_times = default_record_times(cfg.time_grid, cfg.record_count)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results = _pool_map(lambda r: _rates_worker(cfg, spec, record_times, r),
                        range(cfg.replicas), threads)

    all_records, cells = [], []
    by_replica = {}
    for replica, (records, statuses) in enumerate(results):
        cells.extend(statuses)
        all_records.extend(records)
        if records:
            by_replica[replica] = records

    outputs = []
    rec_path = out / "error_records.csv"
    _write_csv(rec_path,
               ["replica", "n", "sup_err", "integral_err", "z_n_sup",
                "sup_w_err", "sup_a_err", "bn_var"],
               [[r.replica, r.n, r.sup_err, r.integral_err, r.z_n_sup,
                 r.sup_w_err, r.sup_a_err, r.bn_var]
                for r in sorted(all_records, key=lambda r: (r.replica, r.n))])
    outputs.append(rec_path)

    reports = []
    quantities = ["sup_err"] if spec.is_degenerate else ["sup_err", "integral_err"]
    for quantity in quantities:
        fits, notes = [], []
        for replica, records in sorted(by_replica.items()):
            try:
                fits.append(fit_records(records, quantity))
            except ValueError as exc:
                notes.append(f"replica {replica}: {exc}")
        path = out / f"rate_{quantity}.json"
        if fits:
            rep = aggregate(fits, quantity, cfg.gamma_target, cfg.threshold, notes=tuple(notes))
            path.write_text(rep.to_json())
            reports.append(rep)
        else:
            # every replica refused the fit (errors at the exact-match floor)
            path.write_text(json.dumps({"quantity": quantity, "degenerate": True,
                                        "notes": notes}, indent=2, sort_keys=True))
        outputs.append(path)

    unstable = [c for c in cells if c["status"] != "ok"]
    outputs.append(_write_manifest(out, cfg, "rates", cells, outputs + [out / "manifest.json"]))
    return RunResult(out_dir=out, reports=reports, unstable_cells=unstable)


# ---------------------------------------------------------------------------
# solve mode
# ---------------------------------------------------------------------------

def run_solve(cfg: ExperimentConfig, out_dir: str | Path, threads: int = 1) -> RunResult:
    """Solve the coupled pair for replica 0 at each n and dump trajectories."""
    spec = _validate_problem(cfg)
    if not cfg.n_list:
        raise ConfigError("n_list: required for solve mode")
    scheme = cfg.require_scheme()
    record_times = default_record_times(cfg.time_grid, cfg.record_count)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    W = replica_path(cfg, 0)
    A = nz.area_process(W)
    outputs, cells, summary = [], [], []
    unstable = []
    for n in cfg.n_list:
        bundle = nz.make_bundle(W, scheme, n, A=A)
        try:
            ce, traj_n, traj = coupled_error(spec, bundle, m=cfg.sobolev_m,
                                             n_substeps=cfg.n_substeps,
                                             record_times=record_times,
                                             return_trajectories=True)
        except UnstableSolve as exc:
            cells.append({"replica": 0, "n": n, "status": f"unstable: {exc}"})
            unstable.append({"replica": 0, "n": n, "status": str(exc)})
            continue
        cells.append({"replica": 0, "n": n, "status": "ok"})
        summary.append([n, ce.sup_err, ce.integral_err, ce.z_n_sup])
        for tag, tr in (("approx", traj_n), ("limit", traj)):
            path = out / f"traj_{tag}_n{n}.csv"
            _write_csv(path, ["t", "norm_m", "norm_mp1", "max_abs"],
                       [[t, nm, nm1, float(np.max(np.abs(s.values)))]
                        for t, nm, nm1, s in zip(tr.times, tr.norms["norm_m"],
                                                 tr.norms["norm_mp1"], tr.states)])
            outputs.append(path)
            final = out / f"state_{tag}_n{n}.csv"
            dump_field(tr.states[-1], final)
            outputs.append(final)

    sum_path = out / "solve_summary.csv"
    _write_csv(sum_path, ["n", "sup_err", "integral_err", "z_n_sup"], summary)
    outputs.append(sum_path)
    outputs.append(_write_manifest(out, cfg, "solve", cells, outputs + [out / "manifest.json"]))
    return RunResult(out_dir=out, unstable_cells=unstable)


# ---------------------------------------------------------------------------
# check mode
# ---------------------------------------------------------------------------

def run_check(cfg: ExperimentConfig | None = None, corrupt: str | None = None,
              emit=print) -> RunResult:
    """Execute the invariant suite and emit one verdict line per invariant."""
    names = None
    if cfg is not None and cfg.checks is not None:
        if not cfg.checks:
            raise ConfigError("checks: no checks selected")
        names = list(cfg.checks)
    try:
        results = run_checks(names, corrupt=corrupt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for name, ok, detail in results:
        emit(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")
    return RunResult(out_dir=None, check_results=results)
