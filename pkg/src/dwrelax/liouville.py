"""Master-equation generators and long-horizon propagation.

Vectorization is column stacking throughout, ``vec(A rho B) = (B^T kron A)
vec(rho)``. Generators are assembled in the energy eigenbasis of the system
Hamiltonian; observables are rotated into that basis rather than the states
back out of it.

Long times are reached with a squaring ladder: one base propagator
``P = exp(L dt)`` and its powers ``P^(2^k)``, composed per output point
according to the binary digits of the step count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .bath import (
    BathSpec,
    TransitionOperator,
    transition_operator_asymptotic,
    transition_operator_finite_time,
)
from .expm import ExpmBudgetError, expm_pade13
from .fock import (
    Spectrum,
    SystemSpec,
    build_basis,
    build_hamiltonian,
    diagonalize,
    number_operator,
)
from .states import DensityMatrix

__all__ = [
    "Liouvillian",
    "Propagator",
    "PropagatorLadder",
    "RawTrajectory",
    "NumericalError",
    "TraceDeviationError",
    "PropagatorBudgetError",
    "KernelError",
    "redfield_liouvillian",
    "build_redfield",
    "lindblad_liouvillian",
    "build_propagator",
    "default_step",
    "geometric_grid",
    "evolve",
    "evolve_time_dependent",
    "steady_state",
    "negativity",
    "apply",
    "restore_trace",
    "EPS_BUDGET",
]

log = logging.getLogger(__name__)

EPS_BUDGET = 1e-6
TRACE_ABORT = 1e-6
BACKWARD_ERROR_MAX = 1e-12


class NumericalError(RuntimeError):
    """Numerical abort with a diagnostic payload."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class TraceDeviationError(NumericalError):
    pass


class PropagatorBudgetError(NumericalError):
    pass


class KernelError(NumericalError):
    """The generator has no zero mode or a degenerate one."""


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Dense ``d^2 x d^2`` generator of ``d rho / dt = L rho``."""

    matrix: np.ndarray
    kind: str
    spec: SystemSpec
    spectrum: Spectrum
    bath: BathSpec | None = None
    Gamma: float | None = None
    time_tag: float = math.inf

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def dim_sq(self) -> int:
        return self.matrix.shape[0]

    @property
    def basis(self) -> str:
        return self.spectrum.tag

    @property
    def dephasing_rate(self) -> float:
        """Largest single-site dephasing rate: ``gamma T`` or ``Gamma``."""
        if self.kind == "lindblad":
            return float(self.Gamma)
        if self.bath is None:
            return 0.0
        return self.bath.gamma * self.bath.T

    def __call__(self, rho):
        """Apply the generator to a matrix, returning a matrix."""
        a = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return (self.matrix @ a.reshape(-1, order="F")).reshape(a.shape, order="F")


def _unitary_part(h):
    d = h.shape[0]
    eye = np.eye(d)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def _site_couplings(spec: SystemSpec, spectrum: Spectrum):
    basis = build_basis(spec.N)
    return [spectrum.to_eigenbasis(number_operator(i, basis)) for i in (1, 2)]


def redfield_liouvillian(spec: SystemSpec, spectrum: Spectrum, transition_ops, S_ops, bath=None) -> Liouvillian:
    """Redfield generator ``-i[H, .] + sum_i [S_i . , s_i] + [s_i, . S_i^dagger]``.

    ``transition_ops`` are the per-site transition operators ``S_i`` and
    ``S_ops`` the coupling operators ``s_i``, all in the energy eigenbasis of
    ``spectrum``.
    """
    d = spectrum.dim
    if d != spec.dim:
        raise ValueError(f"spectrum dimension {d} != system dimension {spec.dim}")
    if len(transition_ops) != len(S_ops):
        raise ValueError("need one transition operator per coupling operator")
    eye = np.eye(d)
    L = _unitary_part(np.diag(spectrum.energies).astype(complex))
    time_tag = math.inf
    for top, s in zip(transition_ops, S_ops):
        if top.basis_tag != spectrum.tag:
            raise ValueError(f"transition operator basis {top.basis_tag!r} != spectrum {spectrum.tag!r}")
        if s.basis != spectrum.tag:
            raise ValueError(f"coupling operator basis {s.basis!r} != spectrum {spectrum.tag!r}")
        sm = s.entries
        st = top.matrix
        if sm.shape != (d, d) or st.shape != (d, d):
            raise ValueError("operator dimension mismatch")
        L = L + np.kron(sm.T, st) - np.kron(eye, sm @ st)
        L = L + np.kron(st.conj(), sm) - np.kron((st.conj().T @ sm).T, eye)
        time_tag = top.time_tag
    return Liouvillian(L, "redfield", spec, spectrum, bath=bath, time_tag=time_tag)


def build_redfield(spec: SystemSpec, bath: BathSpec, spectrum: Spectrum | None = None, t=math.inf) -> Liouvillian:
    """Assemble the Redfield generator with ``S(inf)`` (default) or ``S(t)``."""
    if spectrum is None:
        spectrum = diagonalize(build_hamiltonian(spec))
    couplings = _site_couplings(spec, spectrum)
    if math.isinf(t):
        tops = [transition_operator_asymptotic(spectrum, s, bath) for s in couplings]
    else:
        tops = [transition_operator_finite_time(t, spectrum, s, bath) for s in couplings]
    return redfield_liouvillian(spec, spectrum, tops, couplings, bath=bath)


def lindblad_liouvillian(spec: SystemSpec, Gamma, spectrum: Spectrum | None = None) -> Liouvillian:
    """Local dephasing generator ``-i[H, .] + Gamma sum_i [n_i, [., n_i]]``."""
    if not Gamma >= 0:
        raise ValueError(f"Gamma must be >= 0, got {Gamma}")
    if spectrum is None:
        spectrum = diagonalize(build_hamiltonian(spec))
    d = spectrum.dim
    eye = np.eye(d)
    L = _unitary_part(np.diag(spectrum.energies).astype(complex))
    for s in _site_couplings(spec, spectrum):
        n = s.entries
        n2 = n @ n
        L = L + Gamma * (2.0 * np.kron(n.T, n) - np.kron(eye, n2) - np.kron(n2.T, eye))
    return Liouvillian(L, "lindblad", spec, spectrum, Gamma=float(Gamma))


# --- propagators -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Propagator:
    """``exp(L * step * 2^squaring_level)``."""

    step: float
    matrix: np.ndarray
    squaring_level: int = 0
    backward_error: float = 0.0

    @property
    def duration(self) -> float:
        return self.step * 2.0 ** self.squaring_level

    def __matmul__(self, v):
        return self.matrix @ v


def default_step(L: Liouvillian) -> float:
    """``0.05 / max(H row-sum norm, rate * N^2)``."""
    h = build_hamiltonian(L.spec).entries
    hnorm = float(np.abs(h).sum(axis=1).max())
    scale = max(hnorm, L.dephasing_rate * L.spec.N ** 2, 1e-300)
    return 0.05 / scale


def restore_trace(P, d):
    """Rank-one update making ``vec(I)^T P = vec(I)^T`` exact.

    Repeated squaring amplifies the roundoff in the trace row by about a
    factor two per level; without this the trace drifts past ``1e-6`` around
    ``2^26`` base steps.
    """
    idx = np.arange(d) * (d + 1)
    defect = -P[idx, :].sum(axis=0)
    defect[idx] += 1.0
    P[idx, :] += defect / d
    return P


def build_propagator(L: Liouvillian, dt, max_squarings=40, max_halvings=8) -> Propagator:
    """Base propagator ``exp(L dt)``; halves ``dt`` while the backward error is too large."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    for _ in range(max_halvings + 1):
        try:
            mat, _, berr = expm_pade13(L.matrix * dt, max_squarings=max_squarings)
        except ExpmBudgetError as exc:
            raise PropagatorBudgetError(f"{exc}; suggested dt <= {dt / 2 ** (max_squarings // 2):.3g}",
                                        {"dt": dt}) from exc
        if berr <= BACKWARD_ERROR_MAX:
            # one memory layout for every ladder level keeps cached and fresh runs bit-identical
            mat = np.ascontiguousarray(mat)
            return Propagator(float(dt), restore_trace(mat, L.dim), 0, float(berr))
        dt = dt / 2.0
    raise PropagatorBudgetError(f"backward error {berr:.3g} above {BACKWARD_ERROR_MAX}", {"dt": dt})


class PropagatorLadder:
    """Lazily squared powers ``P^(2^k)`` of a base propagator.

    An optional cache (see :mod:`dwrelax.propcache`) stores each level on
    disk; loaded levels are bit-identical to recomputed ones.
    """

    def __init__(self, L: Liouvillian, dt=None, cache=None, cache_key=None):
        self.L = L
        self.cache = cache
        self.cache_key = cache_key
        dt = default_step(L) if dt is None else float(dt)
        base = self._load(0, dt)
        if base is None:
            base = build_propagator(L, dt)
            self._store(base)
        self.dt = base.step
        self.levels = {0: base}
        self.top = 0
        self.squarings = 0

    def _load(self, level, dt):
        if self.cache is None or self.cache_key is None:
            return None
        m = self.cache.load(self.cache_key, dt, level)
        return None if m is None else Propagator(dt, m, level)

    def _store(self, prop):
        if self.cache is not None and self.cache_key is not None:
            self.cache.store(self.cache_key, prop.step, prop.squaring_level, prop.matrix)

    def get(self, level) -> Propagator:
        while self.top < level:
            nxt = self.top + 1
            prop = self._load(nxt, self.dt)
            if prop is None:
                m = self.levels[self.top].matrix
                prop = Propagator(self.dt, restore_trace(m @ m, self.L.dim), nxt)
                self._store(prop)
                self.squarings += 1
            self.levels[nxt] = prop
            self.top = nxt
        return self.levels[level]

    def release_below(self, level):
        for k in [k for k in self.levels if k < level and k != self.top]:
            del self.levels[k]


def apply(prop: Propagator, rho):
    a = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return (prop.matrix @ a.reshape(-1, order="F")).reshape(a.shape, order="F")


def geometric_grid(t_min, t_max, ratio) -> np.ndarray:
    """``t_min * ratio^k`` up to and including ``t_max`` (within rounding)."""
    if not (0 < t_min < t_max):
        raise ValueError("need 0 < t_min < t_max")
    if not (1 < ratio <= 2):
        raise ValueError(f"ratio must lie in (1, 2], got {ratio}")
    n = int(math.floor(math.log(t_max / t_min) / math.log(ratio) + 1e-9))
    return t_min * ratio ** np.arange(n + 1)


def _choose_steps(times, dt, rel_tol=0.01):
    steps = []
    prev = 0
    for t in times:
        target = t / dt
        k = max(0, int(math.floor(math.log2(0.005 * target)))) if target > 200 else 0
        while True:
            q = 2 ** k
            m = int(round(target / q)) * q
            if m > prev and abs(m - target) <= rel_tol * target:
                break
            if k == 0:
                raise ValueError(f"cannot place grid time {t} strictly after previous point with step {dt}")
            k -= 1
        steps.append(m)
        prev = m
    return steps


@dataclass
class RawTrajectory:
    """Per-point records produced by :func:`evolve`."""

    requested_times: np.ndarray
    times: np.ndarray
    steps: list
    dt: float
    trace_dev: np.ndarray
    hermiticity_dev: np.ndarray
    eps: np.ndarray
    applications: np.ndarray
    observables: dict = field(default_factory=dict)
    states: list | None = None
    eps_flagged: list = field(default_factory=list)
    eps_budget: float = EPS_BUDGET
    basis: str = ""
    squarings: int = 0


def negativity(rho) -> float:
    """Summed magnitude of the negative eigenvalues of (the Hermitian part of) ``rho``."""
    a = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    return float(max(0.0, -w[w < 0].sum()))


def _record(rho, observables, out):
    tr = np.trace(rho)
    out["trace_dev"].append(float(abs(tr - 1.0)))
    out["herm"].append(float(np.abs(rho - rho.conj().T).max()))
    out["eps"].append(negativity(rho))
    for name, fn in observables.items():
        out["obs"][name].append(fn(rho))


def evolve(rho0, L: Liouvillian, grid, dt=None, observables=None, store_states=False,
           eps_budget=EPS_BUDGET, trace_abort=TRACE_ABORT, cache=None, cache_key=None) -> RawTrajectory:
    """Propagate ``rho0`` to every grid time with the squaring ladder.

    ``observables`` maps names to callables receiving the density matrix (in
    the generator's basis) and returning a float. Grid points are hit to
    within 1% (step counts are rounded to a few significant bits so only a
    handful of ladder levels are alive at once); the actual times are
    recorded.
    """
    times_req = np.asarray(grid, dtype=float)
    if times_req.ndim != 1 or times_req.size == 0 or np.any(times_req <= 0) or np.any(np.diff(times_req) <= 0):
        raise ValueError("grid times must be positive and strictly ascending")
    if times_req.size > 1:
        r = times_req[1:] / times_req[:-1]
        if np.any(r > 2.0 * (1 + 1e-12)):
            raise ValueError("grid ratio must lie in (1, 2]")
    if isinstance(rho0, DensityMatrix):
        if rho0.basis != L.basis:
            rho0 = rho0.in_eigenbasis(L.spectrum)
        rho = rho0.entries
    else:
        rho = np.asarray(rho0, dtype=complex)
    d = rho.shape[0]
    if dt is None:
        dt = default_step(L)
    # at least 100 base steps to the first point keeps step rounding below 1%
    dt = times_req[0] / max(100, math.ceil(times_req[0] / float(dt) - 1e-9))
    ladder = PropagatorLadder(L, dt, cache=cache, cache_key=cache_key)
    dt = ladder.dt
    steps = _choose_steps(times_req, dt)
    incs = np.diff([0] + steps)
    last_use = {}
    for j, inc in enumerate(incs):
        for k in range(int(inc).bit_length()):
            if (int(inc) >> k) & 1:
                last_use[k] = j

    observables = observables or {}
    rec = {"trace_dev": [], "herm": [], "eps": [], "obs": {k: [] for k in observables}}
    states = [] if store_states else None
    v = rho.reshape(-1, order="F").astype(complex)
    napps = 0
    apps = []
    for j, inc in enumerate(incs):
        inc = int(inc)
        for k in range(inc.bit_length()):
            if (inc >> k) & 1:
                v = ladder.get(k).matrix @ v
                napps += 1
        ladder.release_below(min([k for k, last in last_use.items() if last > j], default=ladder.top))
        cur = v.reshape(d, d, order="F")
        _record(cur, observables, rec)
        apps.append(napps)
        if store_states:
            states.append(cur.copy())
        if rec["trace_dev"][-1] > trace_abort:
            raise TraceDeviationError(
                f"trace deviation {rec['trace_dev'][-1]:.3g} at t={steps[j] * dt:.6g} exceeds {trace_abort}",
                {"t": steps[j] * dt, "index": j, "trace_dev": rec["trace_dev"][-1], "dt": dt,
                 "applications": napps},
            )
    eps = np.array(rec["eps"])
    flagged = [int(i) for i in np.nonzero(eps > eps_budget)[0]]
    if flagged:
        log.warning("negativity above budget %.1e at %d grid points (max %.3g)", eps_budget, len(flagged), eps.max())
    return RawTrajectory(
        requested_times=times_req,
        times=np.array(steps, dtype=float) * dt,
        steps=steps,
        dt=dt,
        trace_dev=np.array(rec["trace_dev"]),
        hermiticity_dev=np.array(rec["herm"]),
        eps=eps,
        applications=np.array(apps),
        observables={k: np.array(vals) for k, vals in rec["obs"].items()},
        states=states,
        eps_flagged=flagged,
        eps_budget=eps_budget,
        basis=L.basis,
        squarings=ladder.squarings,
    )


def evolve_time_dependent(rho0, spec: SystemSpec, bath: BathSpec, times, observables=None,
                          spectrum: Spectrum | None = None, substeps=1) -> RawTrajectory:
    """Validation mode: propagate with the finite-time transition operator.

    Between consecutive output times the generator is frozen at ``S(t)``
    evaluated at the geometric midpoint of each of ``substeps`` sub-intervals.
    Only meant for small ``N``; every sub-interval costs one quadrature of
    ``S(t)`` and one dense exponential.
    """
    if spectrum is None:
        spectrum = diagonalize(build_hamiltonian(spec))
    times = np.asarray(times, dtype=float)
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.in_eigenbasis(spectrum).entries
    d = spectrum.dim
    v = np.asarray(rho0, dtype=complex).reshape(-1, order="F")
    observables = observables or {}
    rec = {"trace_dev": [], "herm": [], "eps": [], "obs": {k: [] for k in observables}}
    t_prev = 0.0
    for t in times:
        edges = np.geomspace(max(t_prev, t * 1e-6), t, substeps + 1) if t_prev > 0 else np.linspace(0, t, substeps + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            mid = math.sqrt(a * b) if a > 0 else 0.5 * b
            L = build_redfield(spec, bath, spectrum=spectrum, t=mid)
            v = expm_pade13(L.matrix * (b - a))[0] @ v
        t_prev = t
        _record(v.reshape(d, d, order="F"), observables, rec)
    return RawTrajectory(
        requested_times=times, times=times.copy(), steps=[], dt=float("nan"),
        trace_dev=np.array(rec["trace_dev"]), hermiticity_dev=np.array(rec["herm"]),
        eps=np.array(rec["eps"]), applications=np.arange(1, times.size + 1),
        observables={k: np.array(x) for k, x in rec["obs"].items()}, basis=spectrum.tag,
    )


# --- steady state ----------------------------------------------------------------


def steady_state(L: Liouvillian, check_unique=None, tol=1e-10, max_iter=60) -> DensityMatrix:
    """Zero mode of ``L`` by shifted inverse iteration.

    Uniqueness is verified from the full spectrum of ``L`` when
    ``check_unique`` is true (default for ``d^2 <= 2500``): the
    second-smallest ``|lambda|`` must exceed ``1e-8 ||L||``.
    """
    A = L.matrix
    n = A.shape[0]
    d = L.dim
    norm = float(np.abs(A).sum(axis=0).max())
    if check_unique is None:
        check_unique = n <= 2500
    if check_unique:
        mags = np.sort(np.abs(np.linalg.eigvals(A)))
        if mags[0] > 1e-8 * norm:
            raise KernelError(f"generator has no zero mode (smallest |lambda| = {mags[0]:.3g})",
                              {"smallest": float(mags[0])})
        if mags[1] <= 1e-8 * norm:
            raise KernelError(f"zero mode is degenerate (second |lambda| = {mags[1]:.3g})",
                              {"second": float(mags[1])})
    # a tiny shift keeps the factorization regular while the contraction
    # factor |sigma| / |lambda_1| stays far below one for slow modes
    sigma = -1e-12 * norm
    lu = sla.lu_factor(A - sigma * np.eye(n))
    x = (np.eye(d) / d).reshape(-1, order="F").astype(complex)
    trace_idx = np.arange(d) * (d + 1)
    resid = math.inf
    for _ in range(max_iter):
        y = sla.lu_solve(lu, x)
        tr = y[trace_idx].sum()
        if tr == 0:
            raise KernelError("inverse iteration produced a traceless vector")
        rho = (y / tr).reshape(d, d, order="F")
        rho = 0.5 * (rho + rho.conj().T)
        y = rho.reshape(-1, order="F")
        change = float(np.abs(y - x).max())
        x = y
        resid = float(np.abs(A @ x).max())
        if resid <= tol and change <= 1e-13:
            break
    else:
        if resid > tol:
            raise KernelError(f"inverse iteration stalled at residual {resid:.3g}", {"residual": resid})
    return DensityMatrix(rho, basis=L.basis)
