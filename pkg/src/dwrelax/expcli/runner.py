"""Experiment pipeline: build generator, evolve, analyze, persist."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis import (
    PowerLawFit,
    Trajectory,
    collapse_metric,
    exponent_table,
    fit_power_law,
    fluctuation,
    fluctuation_observable,
    rescale_meta,
    rescale_time,
)
from ..fock import build_basis, build_hamiltonian, diagonalize, ground_state, number_operator
from ..liouville import (
    KernelError,
    build_redfield,
    evolve,
    evolve_time_dependent,
    geometric_grid,
    lindblad_liouvillian,
    steady_state,
)
from ..propcache import PropagatorCache, cache_key, default_cache_dir
from ..states import fock_mixture
from .config import ExperimentConfig, SweepSpec, parse_config

__all__ = [
    "ResultRecord",
    "SweepResult",
    "CSV_COLUMNS",
    "run",
    "steady",
    "validate",
    "sweep",
    "write_record",
    "load_record",
    "record_curve",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "t_over_tau", "t_over_tau_tilde", "kappa", "kappa_over_N2", "trace_dev", "eps")
RECORD_VERSION = 1


@dataclass
class ResultRecord:
    config: dict
    config_hash: str
    code_version: str
    trajectory: Trajectory | None
    fit: PowerLawFit | None
    steady_kappa_over_N2: float | None
    diagnostics: dict
    meta: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.config.get("name", "run")


def _generator(cfg: ExperimentConfig):
    spectrum = diagonalize(build_hamiltonian(cfg.system))
    if cfg.solver == "redfield":
        L = build_redfield(cfg.system, cfg.bath, spectrum=spectrum)
    else:
        L = lindblad_liouvillian(cfg.system, cfg.Gamma, spectrum=spectrum)
    return L, spectrum


def _initial_state(cfg: ExperimentConfig, spectrum):
    if cfg.initial_state == "ground":
        return ground_state(cfg.system, spectrum)
    return fock_mixture(cfg.system.N, cfg.initial_state)


def _n1(cfg, spectrum):
    return spectrum.to_eigenbasis(number_operator(1, build_basis(cfg.system.N)))


def _open_cache(cache_dir):
    cache_dir = cache_dir if cache_dir is not None else default_cache_dir()
    return None if cache_dir is None else PropagatorCache(cache_dir)


def _key(cfg: ExperimentConfig):
    phys = cfg.physics_dict()
    return cache_key(kind=cfg.solver, system=phys["system"], bath=phys.get("bath"),
                     lindblad=phys.get("lindblad"), code=__version__)


def _meta(cfg, spectrum):
    if cfg.solver == "redfield":
        return rescale_meta(cfg.system, spectrum, bath=cfg.bath)
    return rescale_meta(cfg.system, spectrum, Gamma=cfg.Gamma) if cfg.Gamma > 0 else None


def _provenance(cfg):
    d = cfg.physics_dict()
    return {"system": d["system"], "bath": d.get("bath"), "lindblad": d.get("lindblad"), "solver": cfg.solver}


def run(cfg: ExperimentConfig, cache_dir=None, output_dir=None, write=True, with_steady=True) -> ResultRecord:
    """Build, evolve and analyze one experiment; optionally write CSV and JSON."""
    t0 = time.perf_counter()
    L, spectrum = _generator(cfg)
    rho0 = _initial_state(cfg, spectrum)
    n1 = _n1(cfg, spectrum)
    grid = geometric_grid(cfg.t_min, cfg.t_max, cfg.ratio)
    cache = _open_cache(cache_dir)
    raw = evolve(rho0, L, grid, observables={"kappa": fluctuation_observable(n1)},
                 cache=cache, cache_key=_key(cfg) if cache is not None else None)
    meta = _meta(cfg, spectrum)
    traj = Trajectory(raw.times, np.clip(raw.observables["kappa"], 0.0, None), cfg.system.N,
                      raw.trace_dev, raw.eps, meta, _provenance(cfg), raw.dt)
    try:
        fit = fit_power_law(traj.times, traj.kappa, cfg.policy, t_guard=5 * raw.dt)
    except ValueError as exc:
        fit = PowerLawFit(0.0, None, float("nan"), 0, cfg.policy.method_tag, False, f"not fitted: {exc}")
    steady_k = None
    steady_note = None
    if with_steady:
        try:
            rho_ss = steady_state(L)
            steady_k = fluctuation(rho_ss, n1) / cfg.system.N ** 2
        except KernelError as exc:
            # a slow physical mode can fail the uniqueness test; keep the trajectory
            log.warning("%s: steady state skipped: %s", cfg.name, exc)
            steady_note = str(exc)
    diagnostics = {
        "max_trace_dev": float(raw.trace_dev.max()),
        "max_hermiticity_dev": float(raw.hermiticity_dev.max()),
        "max_eps": float(raw.eps.max()),
        "eps_budget": raw.eps_budget,
        "eps_flagged_points": len(raw.eps_flagged),
        "dt_base": raw.dt,
        "max_time_rounding": float(np.abs(raw.times / raw.requested_times - 1).max()),
        "tau": meta.tau if meta else None,
        "W01": meta.W01 if meta else None,
        "W01_branch": "absorption",
        "tau_tilde": meta.tau_tilde if meta else None,
        "kappa_t_min": float(traj.kappa[0]),
        "kappa0_exact": fluctuation(rho0, number_operator(1, build_basis(cfg.system.N))),
        "fit_method": cfg.policy.method_tag,
    }
    if steady_note is not None:
        diagnostics["steady_state_error"] = steady_note
    if cache is not None:
        diagnostics["cache_hits"] = cache.hits
    rec = ResultRecord(cfg.to_dict(), cfg.config_hash, __version__, traj, fit, steady_k, diagnostics,
                       {"runtime_s": time.perf_counter() - t0,
                        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")})
    if write:
        write_record(rec, output_dir if output_dir is not None else cfg.output_dir, cfg.formats)
    return rec


def steady(cfg: ExperimentConfig) -> ResultRecord:
    """Steady state only."""
    t0 = time.perf_counter()
    L, spectrum = _generator(cfg)
    rho_ss = steady_state(L)
    k = fluctuation(rho_ss, _n1(cfg, spectrum)) / cfg.system.N ** 2
    meta = _meta(cfg, spectrum)
    diagnostics = {"tau": meta.tau if meta else None, "W01": meta.W01 if meta else None,
                   "W01_branch": "absorption", "tau_tilde": meta.tau_tilde if meta else None,
                   "uniform_kappa_over_N2": 1 / 12 + 1 / (6 * cfg.system.N)}
    return ResultRecord(cfg.to_dict(), cfg.config_hash, __version__, None, None, k, diagnostics,
                        {"runtime_s": time.perf_counter() - t0})


def validate(cfg: ExperimentConfig, substeps=1, tolerance=0.02) -> dict:
    """Compare the default ``S(inf)`` run against the finite-time ``S(t)`` mode.

    The comparison is the maximum relative ``kappa`` deviation inside the
    fitted algebraic window of the default run (the whole grid if none was
    found). Limited to ``N <= 8``.
    """
    if cfg.solver != "redfield":
        raise ValueError("validation mode applies to the redfield solver only")
    if cfg.system.N > 8:
        raise ValueError(f"validation mode is limited to N <= 8, got N = {cfg.system.N}")
    rec = run(cfg, write=False, with_steady=False)
    L, spectrum = _generator(cfg)
    n1 = _n1(cfg, spectrum)
    raw = evolve_time_dependent(_initial_state(cfg, spectrum), cfg.system, cfg.bath, rec.trajectory.times,
                                observables={"kappa": fluctuation_observable(n1)}, spectrum=spectrum,
                                substeps=substeps)
    k_inf = rec.trajectory.kappa
    k_t = raw.observables["kappa"]
    if rec.fit.accepted:
        lo, hi = rec.fit.window
        m = (rec.trajectory.times >= lo) & (rec.trajectory.times <= hi)
    else:
        m = np.ones_like(k_inf, dtype=bool)
    dev = np.abs(k_t[m] - k_inf[m]) / np.abs(k_inf[m])
    worst = float(dev.max())
    return {"config_hash": rec.config_hash, "window": rec.fit.window, "max_rel_deviation": worst,
            "tolerance": tolerance, "passed": worst <= tolerance, "points": int(m.sum()),
            "max_eps_finite_time": float(raw.eps.max())}


# --- persistence -----------------------------------------------------------------


def _f17(x):
    return "nan" if x is None else "%.17g" % x


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _stem(rec: ResultRecord) -> str:
    safe = "".join(c if c.isalnum() or c in "-_.=," else "_" for c in rec.name)
    return f"{safe}-{rec.config_hash[:10]}"


def write_record(rec: ResultRecord, directory, formats=("csv", "json")) -> dict:
    """Write ``<stem>.csv`` (trajectory) and ``<stem>.json`` (everything else)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = _stem(rec)
    paths = {}
    traj = rec.trajectory
    if traj is not None and "csv" in formats:
        p = directory / f"{stem}.csv"
        meta = traj.meta
        tau = meta.tau if meta else None
        tt = meta.tau_tilde if meta else None
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for i, t in enumerate(traj.times):
                w.writerow([_f17(t), _f17(t / tau if tau else None), _f17(t / tt if tt else None),
                            _f17(traj.kappa[i]), _f17(traj.kappa_rescaled[i]),
                            _f17(traj.trace_dev[i]), _f17(traj.eps[i])])
        paths["csv"] = p.name
    if "json" in formats:
        p = directory / f"{stem}.json"
        body = {
            "record_version": RECORD_VERSION,
            "config": rec.config,
            "config_hash": rec.config_hash,
            "code_version": rec.code_version,
            "csv": paths.get("csv"),
            "results": {
                "fit": dataclasses.asdict(rec.fit) if rec.fit is not None else None,
                "steady_kappa_over_N2": rec.steady_kappa_over_N2,
                "diagnostics": rec.diagnostics,
            },
            "meta": rec.meta,
        }
        p.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        paths["json"] = p.name
    rec.paths = {k: str(directory / v) for k, v in paths.items()}
    return rec.paths


def load_record(path) -> dict:
    """Read a JSON record and, if present, its trajectory CSV into arrays."""
    path = Path(path)
    body = json.loads(path.read_text())
    if body.get("record_version") != RECORD_VERSION:
        raise ValueError(f"{path}: unsupported record version {body.get('record_version')!r}")
    if body.get("csv"):
        data = np.genfromtxt(path.parent / body["csv"], delimiter=",", names=True)
        body["trajectory"] = {c: np.atleast_1d(data[c]) for c in CSV_COLUMNS}
    return body


def record_curve(body: dict, mode="tau"):
    """``(x, kappa/N^2)`` of a loaded record for ``mode`` in raw | tau | tau_tilde."""
    tr = body["trajectory"]
    col = {"raw": "t", "tau": "t_over_tau", "tau_tilde": "t_over_tau_tilde"}[mode]
    return tr[col], tr["kappa_over_N2"]


# --- sweeps ----------------------------------------------------------------------


@dataclass
class SweepResult:
    cells: list
    records: list
    failures: list
    table: object
    collapse: dict
    summary_path: str | None = None

    @property
    def any_failed(self) -> bool:
        return bool(self.failures)


def _run_cell(args):
    raw_cfg, cache_dir, output_dir = args
    cfg = parse_config(raw_cfg)
    try:
        return run(cfg, cache_dir=cache_dir, output_dir=output_dir), None
    except Exception as exc:  # recorded per cell; the sweep keeps going
        return None, f"{type(exc).__name__}: {exc}"


def _collapse(records, mode):
    curves = []
    for r in records:
        if r.fit is None or not r.fit.accepted:
            continue
        try:
            curves.append(rescale_time(r.trajectory, mode, window=r.fit.window))
        except ValueError:
            return None, f"{mode} undefined for {r.name}"
    if len(curves) < 2:
        return None, "fewer than two accepted fits"
    try:
        return collapse_metric(curves), ""
    except ValueError as exc:
        return None, str(exc)


def sweep(spec: SweepSpec, jobs=None, cache_dir=None, output_dir=None, override_cap=False) -> SweepResult:
    """Run every cell (in a process pool when ``jobs > 1``) and summarize."""
    cells = spec.cells(override_cap=override_cap)
    jobs = jobs or os.cpu_count() or 1
    out_dir = Path(output_dir if output_dir is not None else cells[0].output_dir)
    args = [(c.to_dict(), cache_dir, str(out_dir)) for c in cells]
    if jobs == 1 or len(cells) == 1:
        results = [_run_cell(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, args))
    records = []
    failures = []
    rows = []
    for cfg, (rec, err) in zip(cells, results):
        row = {"name": cfg.name, "config_hash": cfg.config_hash, "status": "ok" if err is None else "failed"}
        if err is not None:
            failures.append((cfg.name, err))
            row["error"] = err
            log.error("sweep cell %s failed: %s", cfg.name, err)
        else:
            records.append(rec)
            row.update(alpha=rec.fit.alpha, accepted=rec.fit.accepted, window=rec.fit.window,
                       steady_kappa_over_N2=rec.steady_kappa_over_N2, json=rec.paths.get("json"))
        rows.append(row)
    redfield = [r.trajectory for r in records if r.config["solver"] == "redfield"]
    table = exponent_table(redfield) if redfield else None
    collapse = {}
    for mode in ("tau", "tau_tilde"):
        val, why = _collapse(records, mode)
        collapse[mode] = {"metric": val, "note": why}
    out_dir.mkdir(parents=True, exist_ok=True)
    if table is not None:
        with open(out_dir / "alpha_table.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "omega_c", "alpha", "t_lo", "t_hi", "r2", "W01", "W01_branch", "accepted", "flag"])
            for r in table.rows:
                lo, hi = r.window if r.window else (None, None)
                w.writerow([_f17(r.T), _f17(r.omega_c), _f17(r.alpha), _f17(lo), _f17(hi), _f17(r.r2),
                            _f17(r.W01), r.W01_branch, int(r.accepted), r.flag])
    summary = {"cells": rows, "mode": spec.mode, "axes": spec.axes, "collapse": collapse,
               "alpha_monotone_in_T": None if table is None else {str(k): v for k, v in table.monotone.items()},
               "failed": len(failures)}
    sp = out_dir / "sweep_summary.json"
    sp.write_text(json.dumps(_clean(summary), indent=2) + "\n")
    return SweepResult(cells, records, failures, table, collapse, str(sp))
