"""Particle-fluctuation observables and the power-law analysis pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bath import BathSpec, rate_W
from .fock import HermitianOperator, Spectrum, SystemSpec
from .states import DensityMatrix

__all__ = [
    "fluctuation",
    "fluctuation_observable",
    "RescaleMeta",
    "rescale_meta",
    "Trajectory",
    "Curve",
    "rescale_time",
    "WindowPolicy",
    "PowerLawFit",
    "fit_power_law",
    "collapse_metric",
    "ExponentRow",
    "ExponentTable",
    "exponent_table",
    "uniform_kappa_over_N2",
]


def fluctuation(rho, n1) -> float:
    """``kappa = tr(rho n1^2) - tr(rho n1)^2``; both arguments share a basis."""
    if isinstance(rho, DensityMatrix) and isinstance(n1, HermitianOperator) and rho.basis != n1.basis:
        raise ValueError(f"state basis {rho.basis!r} != operator basis {n1.basis!r}")
    r = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    n = n1.entries if isinstance(n1, HermitianOperator) else np.asarray(n1)
    m1 = np.vdot(n.conj().T, r)
    m2 = np.vdot((n @ n).conj().T, r)
    return float(np.real(m2) - np.real(m1) ** 2)


def fluctuation_observable(n1: HermitianOperator):
    """Callback for :func:`dwrelax.liouville.evolve` returning ``kappa``."""
    n = np.asarray(n1.entries)
    n2t = (n @ n).T.copy()
    nt = n.T.copy()

    def kappa(rho):
        m1 = np.real(np.sum(nt * rho))
        return float(np.real(np.sum(n2t * rho)) - m1 * m1)

    return kappa


def uniform_kappa_over_N2(N) -> float:
    """``kappa / N^2`` of the uniform mixture over ``n1 = 0..N``."""
    return 1.0 / 12.0 + 1.0 / (6.0 * N)


@dataclass(frozen=True)
class RescaleMeta:
    """Time scales ``tau = U^2 N^2 / (rate J^2)`` and ``tau_tilde = tau / W01``.

    ``W01`` is the absorption-branch rate ``rate_W(E1 - E0)``; ``None`` when
    there is no bath (Lindblad runs).
    """

    tau: float
    W01: float | None
    tau_tilde: float | None
    W01_branch: str = "absorption"


def rescale_meta(spec: SystemSpec, spectrum: Spectrum, bath: BathSpec | None = None, Gamma=None) -> RescaleMeta:
    rate = bath.gamma if bath is not None else Gamma
    if rate is None or not rate > 0:
        raise ValueError("need a positive coupling (gamma or Gamma) to define tau")
    tau = spec.U ** 2 * spec.N ** 2 / (rate * spec.J ** 2)
    if bath is None:
        return RescaleMeta(tau, None, None)
    e = spectrum.energies
    w01 = float(rate_W(e[1] - e[0], bath))
    return RescaleMeta(tau, w01, tau / w01 if w01 > 0 else None)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """``kappa(t)`` with per-point diagnostics and provenance."""

    times: np.ndarray
    kappa: np.ndarray
    N: int
    trace_dev: np.ndarray | None = None
    eps: np.ndarray | None = None
    meta: RescaleMeta | None = None
    provenance: dict = field(default_factory=dict)
    dt_base: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        k = np.asarray(self.kappa, dtype=float)
        if t.shape != k.shape or t.ndim != 1:
            raise ValueError("times and kappa must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        tol = 1e-9 * self.N ** 2
        if np.any(k < -tol):
            raise ValueError(f"negative fluctuation {k.min():.3g}")
        if np.any(k > 0.25 * self.N ** 2 + tol):
            raise ValueError(f"kappa/N^2 = {k.max() / self.N ** 2:.6g} exceeds 1/4")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "kappa", k)

    @property
    def kappa_rescaled(self) -> np.ndarray:
        return self.kappa / self.N ** 2


@dataclass(frozen=True, eq=False)
class Curve:
    """A (rescaled) curve with an optional algebraic window on its abscissa."""

    x: np.ndarray
    y: np.ndarray
    window: tuple | None = None
    mode: str = "raw"
    scale: float = 1.0


def rescale_time(traj: Trajectory, mode: str, window=None) -> Curve:
    """Divide times by ``tau`` or ``tau_tilde``; ordinate is ``kappa / N^2``.

    ``window`` (raw times) is rescaled along with the abscissa.
    """
    if traj.meta is None:
        raise ValueError("trajectory carries no rescaling metadata")
    if mode == "tau":
        s = traj.meta.tau
    elif mode == "tau_tilde":
        if traj.meta.W01 is None:
            raise ValueError("tau_tilde needs a bath rate W01")
        if traj.meta.W01 == 0 or traj.meta.tau_tilde is None:
            raise ValueError("W01 = 0 (cold bath): tau_tilde is undefined")
        s = traj.meta.tau_tilde
    else:
        raise ValueError(f"unknown rescaling mode {mode!r}")
    win = None if window is None else (window[0] / s, window[1] / s)
    return Curve(traj.times / s, traj.kappa_rescaled, win, mode, s)


# --- power-law fitting -----------------------------------------------------------


@dataclass(frozen=True)
class WindowPolicy:
    """Sliding log-log window policy.

    Windows of ``span`` decades start every ``step`` decades. A candidate
    regime is a contiguous run of windows whose slopes stay within
    ``slope_variation`` of each other (peak to peak) and inside
    ``alpha_bounds``; the regime is the union of the run, fitted once and
    required to reach ``r2_min``. The widest regime wins, later start breaking
    ties. Regimes over which ``kappa`` changes by less than ``min_rise``
    decades are rejected as plateaus.
    """

    span: float = 1.5
    step: float = 0.1
    slope_variation: float = 0.05
    r2_min: float = 0.995
    growth_guard: float = 1.1
    min_rise: float = 0.1
    alpha_bounds: tuple = (0.0, 1.0)

    @property
    def method_tag(self) -> str:
        return (f"sliding(span={self.span:g},step={self.step:g},dvar={self.slope_variation:g},"
                f"r2={self.r2_min:g},guard={self.growth_guard:g},rise={self.min_rise:g})")


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    window: tuple | None
    r2: float
    n_points: int
    method_tag: str
    accepted: bool
    reason: str = ""
    intercept: float = float("nan")


def _lsq(x, y):
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    slope = float(dx @ (y - ym)) / sxx
    resid = y - ym - slope * dx
    sst = float((y - ym) @ (y - ym))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 0.0
    return slope, ym - slope * xm, r2


def fit_power_law(t, kappa, policy: WindowPolicy | None = None, t_guard=0.0) -> PowerLawFit:
    """Fit ``kappa ~ t^alpha`` on the window selected by ``policy``.

    Points before ``t_guard`` or before ``kappa`` first exceeds
    ``growth_guard * kappa[0]`` cannot open a window. A curve without an
    acceptable regime returns ``alpha = 0`` with ``accepted = False``.
    """
    policy = policy or WindowPolicy()
    t = np.asarray(t, dtype=float)
    k = np.asarray(kappa, dtype=float)
    if t.size < 20:
        raise ValueError(f"need at least 20 points, got {t.size}")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be positive and ascending")
    lt = np.log10(t)
    if lt[-1] - lt[0] < policy.span - 1e-12:
        raise ValueError(f"curve spans {lt[-1] - lt[0]:.3g} decades, need {policy.span}")
    tag = policy.method_tag

    def none(reason):
        return PowerLawFit(0.0, None, float("nan"), 0, tag, False, reason)

    if np.any(k <= 0):
        pos = k > 0
        if pos.sum() < 20:
            return none("fewer than 20 positive kappa values")
        t, k, lt = t[pos], k[pos], lt[pos]
    lk = np.log10(k)
    grown = k >= policy.growth_guard * k[0]
    if not grown.any():
        return none("kappa never rises above the growth guard")
    start = max(lt[np.argmax(grown)], math.log10(t_guard) if t_guard > 0 else -math.inf, lt[0])
    slack = 1e-9
    starts = start + policy.step * np.arange(int(math.floor((lt[-1] - policy.span - start) / policy.step + slack)) + 1)
    if starts.size == 0 or lt[-1] - start < policy.span - slack:
        return none("less than one window after the early-transient guard")
    masks = [(lt >= a - slack) & (lt <= a + policy.span + slack) for a in starts]
    slopes = np.array([_lsq(lt[m], lk[m])[0] if m.sum() >= 3 else np.nan for m in masks])
    lo_b, hi_b = policy.alpha_bounds
    best = None
    reason = "no run of windows with consistent slope"
    for i in range(starts.size):
        for j in range(i, starts.size):
            run = slopes[i:j + 1]
            if np.any(np.isnan(run)) or np.ptp(run) >= policy.slope_variation:
                break
            if run.min() < lo_b or run.max() > hi_b:
                reason = "local slopes outside exponent bounds"
                break
            m = (lt >= starts[i] - slack) & (lt <= starts[j] + policy.span + slack)
            alpha, icpt, r2 = _lsq(lt[m], lk[m])
            if r2 < policy.r2_min:
                reason = "no window reaches r2_min"
                continue
            if alpha * (lt[m][-1] - lt[m][0]) < policy.min_rise:
                reason = "plateau: kappa rises less than the minimum over the window"
                continue
            key = (j - i, starts[i])
            if best is None or key > best[0]:
                best = (key, alpha, icpt, r2, (float(t[m][0]), float(t[m][-1])), int(m.sum()))
    if best is None:
        return none(reason)
    _, alpha, icpt, r2, win, npts = best
    return PowerLawFit(float(alpha), win, float(r2), npts, tag, True, "", float(icpt))


def collapse_metric(curves, n_grid=200) -> float:
    """RMS of pairwise natural-log ordinate differences on the common window.

    Each curve is interpolated linearly in ``(log x, log y)`` onto
    ``n_grid`` log-uniform abscissae spanning the intersection of the curves'
    windows (their full ranges when no window is attached).
    """
    curves = list(curves)
    if len(curves) < 2:
        raise ValueError("need at least two curves")
    lo = -math.inf
    hi = math.inf
    for c in curves:
        w = c.window if c.window is not None else (c.x[0], c.x[-1])
        lo = max(lo, w[0], c.x[0])
        hi = min(hi, w[1], c.x[-1])
    if not lo < hi:
        raise ValueError("curves have no overlapping window")
    g = np.linspace(math.log(lo), math.log(hi), n_grid)
    ys = [np.interp(g, np.log(c.x), np.log(c.y)) for c in curves]
    mse = [np.mean((ys[i] - ys[j]) ** 2) for i in range(len(ys)) for j in range(i + 1, len(ys))]
    return float(math.sqrt(np.mean(mse)))


@dataclass(frozen=True)
class ExponentRow:
    T: float
    omega_c: float
    alpha: float
    window: tuple | None
    r2: float
    W01: float | None
    accepted: bool
    flag: str = ""
    W01_branch: str = "absorption"


@dataclass(frozen=True)
class ExponentTable:
    rows: tuple
    monotone: dict

    def as_dicts(self):
        return [r.__dict__.copy() for r in self.rows]


def exponent_table(trajectories, policy: WindowPolicy | None = None) -> ExponentTable:
    """``alpha(T)`` rows grouped by cutoff, with per-cutoff monotonicity checks.

    Failed fits become ``alpha = 0`` rows carrying the failure reason.
    """
    rows = []
    for tr in trajectories:
        bath = tr.provenance.get("bath") or {}
        T = float(bath.get("T", math.nan))
        wc = float(bath.get("omega_c", math.nan))
        w01 = tr.meta.W01 if tr.meta is not None else None
        try:
            f = fit_power_law(tr.times, tr.kappa, policy, t_guard=5 * tr.dt_base)
        except ValueError as exc:
            rows.append(ExponentRow(T, wc, 0.0, None, float("nan"), w01, False, f"fit error: {exc}"))
            continue
        rows.append(ExponentRow(T, wc, f.alpha, f.window, f.r2, w01, f.accepted, f.reason))
    rows.sort(key=lambda r: (r.omega_c, r.T))
    mono = {}
    for wc in sorted({r.omega_c for r in rows}):
        a = [r.alpha for r in rows if r.omega_c == wc]
        mono[wc] = bool(np.all(np.diff(a) > 0))
    return ExponentTable(tuple(rows), mono)
