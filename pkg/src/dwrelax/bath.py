"""Ohmic dephasing baths and Redfield transition operators.

Every site couples through its density to an identical bath with spectral
density ``J(w) = gamma * w * exp(-w / omega_c)``. The bath enters the master
equation only through the transition operator

    S(t) = int_0^t  S_tilde(-tau) C(tau) dtau,

which in the energy eigenbasis reads ``<n|S(t)|m> = S_nm G_t(-Delta_nm)``
with ``G_t(w) = int_0^t exp(i w tau) C(tau) dtau``. For ``t -> inf`` the real
part of ``G`` is the transition rate; the imaginary part is the Lamb shift.

Conventions: ``Delta_nm = E_n - E_m``; :func:`rate_W` takes the gap of the
matrix element so that ``Delta > 0`` is absorption from the bath and
``Delta < 0`` is emission into it.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .fock import HermitianOperator, Spectrum

__all__ = [
    "BathSpec",
    "TransitionOperator",
    "QuadratureError",
    "spectral_density",
    "bose_occupation",
    "rate_W",
    "lamb_shift",
    "correlation_function",
    "transition_operator_asymptotic",
    "transition_operator_finite_time",
    "trigamma",
]

SERIES_SWITCH = 1e-6
QUAD_REL_TOL = 1e-8


class QuadratureError(RuntimeError):
    """A quadrature's error estimate exceeded the requested tolerance."""


@dataclass(frozen=True)
class BathSpec:
    """Parameters shared by the two identical site baths.

    ``T = math.inf`` is accepted as the symbolic infinite-temperature limit;
    rates diverge there and the Lindblad generator must be used instead.
    """

    gamma: float
    T: float
    omega_c: float
    include_lamb_shift: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.omega_c > 0 or math.isinf(self.omega_c):
            raise ValueError(f"omega_c must be finite and > 0, got {self.omega_c}")
        if not self.T > 0:
            raise ValueError(f"T must be > 0 (or inf), got {self.T}")
        for name in ("gamma", "T", "omega_c"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "include_lamb_shift", bool(self.include_lamb_shift))

    @property
    def infinite_temperature(self) -> bool:
        return math.isinf(self.T)

    @property
    def omega_max(self) -> float:
        """Upper frequency limit; the integrand tail beyond it is below 1e-15."""
        T = self.T if not self.infinite_temperature else 1e300
        return self.omega_c * (35.0 + math.log1p(2.0 * T / self.omega_c))

    def _require_finite_T(self):
        if self.infinite_temperature:
            raise ValueError("infinite temperature: use the Lindblad generator (lindblad_liouvillian)")


@dataclass(frozen=True, eq=False)
class TransitionOperator:
    """``<n|S|m>`` in the energy eigenbasis together with the rate matrix."""

    matrix: np.ndarray
    rates: np.ndarray
    basis_tag: str
    time_tag: float = math.inf


def spectral_density(omega, bath: BathSpec):
    """``gamma * w * exp(-w / omega_c)`` for ``w >= 0``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    out = bath.gamma * w * np.exp(-w / bath.omega_c)
    return out if out.ndim else float(out)


def bose_occupation(omega, T):
    """Bose-Einstein occupation ``1 / (exp(w/T) - 1)``.

    Returns ``inf`` for ``T = inf``, which callers treat as the signal to
    switch to the infinite-temperature Lindblad limit.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("bose_occupation requires omega > 0")
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if math.isinf(T):
        return math.inf
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(w / T)
    return out if out.ndim else float(out)


def _bernoulli_factor(y):
    """``y / (exp(y) - 1)``, continuous through ``y = 0``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < SERIES_SWITCH
    ys = y[small]
    out[small] = 1.0 - 0.5 * ys + ys * ys / 12.0
    yl = y[~small]
    with np.errstate(over="ignore"):
        out[~small] = yl / np.expm1(yl)
    return out


def rate_W(delta, bath: BathSpec):
    """Transition rate for a level spacing ``delta`` (vectorized).

    ``delta > 0``: ``J(delta) n_B(delta)``; ``delta < 0``:
    ``J(|delta|) (1 + n_B(|delta|))``; ``delta = 0``: ``gamma T``. All three
    are one formula, ``gamma T exp(-|delta|/omega_c) * y/(e^y - 1)`` with
    ``y = delta / T``, which is what is evaluated.
    """
    bath._require_finite_T()
    d = np.asarray(delta, dtype=float)
    out = bath.gamma * bath.T * np.exp(-np.abs(d) / bath.omega_c) * _bernoulli_factor(d / bath.T)
    return out if out.ndim else float(out)


# --- frequency-domain integrands -------------------------------------------------


def _j_coth(w, bath):
    """``J(w) coth(w / 2T)``, finite at ``w = 0``."""
    w = np.asarray(w, dtype=float)
    x = w / (2.0 * bath.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(x < 1e-8, 2.0 * bath.T * (1.0 + x * x / 3.0), w / np.tanh(x))
    return bath.gamma * r * np.exp(-w / bath.omega_c)


def _j_nb(w, bath):
    """``J(w) n_B(w)``, finite at ``w = 0``."""
    return bath.gamma * bath.T * np.exp(-w / bath.omega_c) * _bernoulli_factor(np.asarray(w, float) / bath.T)


def _quad(f, a, b, **kw):
    val, err = integrate.quad(f, a, b, epsabs=kw.pop("epsabs", 1e-13), epsrel=kw.pop("epsrel", 1e-11),
                              limit=kw.pop("limit", 400), **kw)
    return val, err


def _check(val, err, what, tol=QUAD_REL_TOL, abs_floor=1e-11):
    if err > max(tol * abs(val), abs_floor):
        raise QuadratureError(f"{what}: estimated error {err:.3g} exceeds tolerance (value {val:.6g})")


def lamb_shift(omega, bath: BathSpec) -> float:
    """Imaginary part of ``G_inf(omega)`` by principal-value quadrature.

    ``(1/pi) PV int J(w') [(n'+1)/(omega - w') + n'/(omega + w')] dw'``,
    regrouped as ``J n' 2 omega / (omega^2 - w'^2) + J / (omega - w')``. In
    the first term the pole at ``w' = |omega|`` is removed by subtracting the
    integrand's value there and adding the analytic principal value of the
    subtracted part; the second term is elementary in exponential integrals.
    The regrouping keeps the result accurate for
    ``|omega| -> 0``, where the two original terms diverge logarithmically
    and cancel.
    """
    bath._require_finite_T()
    wmax = bath.omega_max
    omega = float(omega)
    if omega == 0.0:
        return -bath.gamma * bath.omega_c * (-math.expm1(-wmax / bath.omega_c)) / math.pi
    a = abs(omega)
    sgn = 1.0 if omega > 0 else -1.0
    jn = lambda w: float(_j_nb(w, bath))
    jw = lambda w: bath.gamma * w * math.exp(-w / bath.omega_c)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if a >= wmax:
            # pole beyond the cutoff range: both terms are regular
            va, ea = _quad(lambda w: jn(w) * 2.0 * omega / (omega * omega - w * w), 0.0, wmax)
            vb, eb = _quad(lambda w: jw(w) / (omega - w), 0.0, wmax)
        else:
            jna = jn(a)
            log_pv = math.log((wmax + a) / (wmax - a))
            ia, ea = _quad(lambda w: (jn(w) - jna) / (a - w) * 2.0 * a / (a + w), 0.0, wmax, points=[a])
            va = sgn * (jna * log_pv + ia)
            # J(w)/(omega - w) in closed form through exponential integrals:
            # w / (omega - w) = -1 + omega / (omega - w)
            c = bath.omega_c
            base = -bath.gamma * c * (-math.expm1(-wmax / c))
            if omega > 0:
                pv = math.exp(-a / c) * (special.expi(a / c) + special.exp1((wmax - a) / c))
            else:
                pv = math.exp(a / c) * (special.exp1(a / c) - special.exp1((wmax + a) / c))
            vb = base + bath.gamma * a * pv
            eb = 0.0
    total = va + vb
    _check(total, ea + eb, f"Lamb shift at omega={omega}")
    return total / math.pi


def trigamma(z):
    """Trigamma function for complex ``z`` with ``Re z > 0`` (scalar)."""
    z = complex(z)
    acc = 0j
    while abs(z) < 12.0:
        acc += 1.0 / (z * z)
        z += 1.0
    iz = 1.0 / z
    iz2 = iz * iz
    # asymptotic series with Bernoulli numbers B2..B14
    series = iz * (1.0 + iz * (0.5 + iz * (1.0 / 6.0 + iz2 * (-1.0 / 30.0 + iz2 * (
        1.0 / 42.0 + iz2 * (-1.0 / 30.0 + iz2 * (5.0 / 66.0 + iz2 * (-691.0 / 2730.0 + iz2 * 7.0 / 6.0))))))))
    return acc + series


def _correlation_series(tau, bath):
    # sum over exp(-k w / T) expansion of coth, resummed into trigamma functions
    T = bath.T
    a = T / bath.omega_c
    return bath.gamma * T * T / math.pi * (trigamma(complex(a, T * tau)) + trigamma(complex(1.0 + a, -T * tau)))


def correlation_function(tau, bath: BathSpec, method="quadrature") -> complex:
    """Bath correlation function ``C(tau)``.

    ``method="quadrature"`` integrates
    ``(1/pi) int J(w) [coth(w/2T) cos(w tau) - i sin(w tau)] dw`` with
    QUADPACK (Fourier-weighted Clenshaw-Curtis for oscillatory ``tau``).
    ``method="series"`` evaluates the same integral in closed form as
    ``(gamma T^2/pi) [psi1(T/w_c + i T tau) + psi1(1 + T/w_c - i T tau)]``;
    it is fast and is used inside time-domain quadratures.
    Negative ``tau`` follow from ``C(-tau) = conj(C(tau))``.
    """
    bath._require_finite_T()
    tau = float(tau)
    if tau < 0:
        return correlation_function(-tau, bath, method).conjugate()
    if method == "series":
        return _correlation_series(tau, bath)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    wmax = bath.omega_max
    fr = lambda w: float(_j_coth(w, bath))
    fi = lambda w: float(bath.gamma * w * math.exp(-w / bath.omega_c))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if tau == 0.0:
            re, er = _quad(fr, 0.0, wmax)
            im, ei = 0.0, 0.0
        elif tau * wmax <= 10.0:
            re, er = _quad(lambda w: fr(w) * math.cos(w * tau), 0.0, wmax)
            im, ei = _quad(lambda w: fi(w) * math.sin(w * tau), 0.0, wmax)
        else:
            re, er = _quad(fr, 0.0, wmax, weight="cos", wvar=tau)
            im, ei = _quad(fi, 0.0, wmax, weight="sin", wvar=tau)
    _check(re, er, f"Re C({tau})")
    _check(im, ei, f"Im C({tau})")
    return complex(re, -im) / math.pi


# --- transition operators ------------------------------------------------------


def _coupling_in_eigenbasis(spectrum: Spectrum, S) -> np.ndarray:
    if isinstance(S, HermitianOperator):
        if S.dim != spectrum.dim:
            raise ValueError(f"coupling operator dimension {S.dim} != spectrum dimension {spectrum.dim}")
        if S.basis == spectrum.tag:
            return S.entries
        if S.basis == spectrum.source_basis:
            return spectrum.to_eigenbasis(S).entries
        raise ValueError(f"coupling operator basis {S.basis!r} matches neither {spectrum.tag!r} nor {spectrum.source_basis!r}")
    raise TypeError("S must be a HermitianOperator")


def _unique_frequencies(freqs, mask):
    """Distinct values of ``freqs[mask]`` and the inverse index map."""
    vals = freqs[mask]
    uniq, inv = np.unique(vals, return_inverse=True)
    return uniq, inv


def transition_operator_asymptotic(spectrum: Spectrum, S, bath: BathSpec) -> TransitionOperator:
    """``S(inf)`` in the energy eigenbasis.

    Real part ``S_nm W(Delta_nm)``; the Lamb-shift imaginary part is added
    only when ``bath.include_lamb_shift``.
    """
    bath._require_finite_T()
    s = _coupling_in_eigenbasis(spectrum, S)
    gaps = spectrum.gaps
    rates = rate_W(gaps, bath)
    mat = (s * rates).astype(complex)
    if bath.include_lamb_shift:
        mask = s != 0
        uniq, inv = _unique_frequencies(-gaps, mask)
        shifts = np.array([lamb_shift(w, bath) for w in uniq])
        im = np.zeros(gaps.shape)
        im[mask] = shifts[inv]
        mat = mat + 1j * s * im
    return TransitionOperator(mat, rates, spectrum.tag, math.inf)


def _split_point(bath):
    # C(tau) has structure on scales 1/omega_c and 1/(2 pi T); beyond this it is smooth
    return 40.0 * max(1.0 / bath.omega_c, 1.0 / (2.0 * math.pi * bath.T))


def _time_integral(omega, a, b, bath):
    """``int_a^b exp(i omega tau) C(tau) dtau`` with ``b`` possibly ``inf``."""
    if math.isinf(b) and omega != 0.0:
        # QAWF works period by period; for tiny omega the first period is huge and
        # its estimate is unreliable, so the first 20 radians are integrated directly
        m = a + 20.0 / abs(omega)
        v0, e0 = _time_integral(omega, a, m, bath)
        v1, e1 = _time_integral_tail(omega, m, bath)
        return v0 + v1, e0 + e1
    cr = lambda t: _correlation_series(t, bath).real
    ci = lambda t: _correlation_series(t, bath).imag
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if omega == 0.0:
            re, e1 = _quad(cr, a, b, epsrel=1e-12, epsabs=1e-14)
            im, e2 = _quad(ci, a, b, epsrel=1e-12, epsabs=1e-14)
            err = e1 + e2
        else:
            kw = dict(wvar=abs(omega))
            sgn = 1.0 if omega > 0 else -1.0
            if abs(omega) * (b - a) <= 20.0:
                # a few oscillations at most: the weighted rule gains nothing and
                # its error estimate degrades for tiny omega
                w = abs(omega)
                pts = a * np.logspace(0.5, math.log10(b / a), 12, endpoint=False) if a > 0 and b > 30 * a else None
                parts = [_quad(lambda x, f=f, g=g: f(x) * g(w * x), a, b, epsabs=1e-13, epsrel=1e-12, limit=2000,
                               points=pts)
                         for f, g in ((cr, math.cos), (ci, math.sin), (cr, math.sin), (ci, math.cos))]
            else:
                parts = [_quad(f, a, b, weight=wt, epsabs=1e-13, epsrel=1e-12, limit=2000, **kw)
                         for f, wt in ((cr, "cos"), (ci, "sin"), (cr, "sin"), (ci, "cos"))]
            (rc, e1), (is_, e2), (rs, e3), (ic, e4) = parts[0][:2], parts[1][:2], parts[2][:2], parts[3][:2]
            # exp(i w t) C = (Cr + i Ci)(cos + i sgn sin)
            re = rc - sgn * is_
            im = sgn * rs + ic
            err = e1 + e2 + e3 + e4
    return complex(re, im), err


def _time_integral_tail(omega, a, bath):
    cr = lambda t: _correlation_series(t, bath).real
    ci = lambda t: _correlation_series(t, bath).imag
    sgn = 1.0 if omega > 0 else -1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        # QAWF ignores epsrel
        parts = [integrate.quad(f, a, math.inf, weight=wt, wvar=abs(omega), epsabs=1e-13, limlst=200)
                 for f, wt in ((cr, "cos"), (ci, "sin"), (cr, "sin"), (ci, "cos"))]
    (rc, e1), (is_, e2), (rs, e3), (ic, e4) = (p[:2] for p in parts)
    return complex(rc - sgn * is_, sgn * rs + ic), e1 + e2 + e3 + e4


def time_domain_gain(omega, t, bath: BathSpec) -> complex:
    """``G_t(omega) = int_0^t exp(i omega tau) C(tau) dtau`` by quadrature.

    ``t = inf`` gives the asymptotic value through an infinite-range Fourier
    quadrature; it is the independent check of :func:`rate_W` and
    :func:`lamb_shift`.
    """
    bath._require_finite_T()
    if t == 0:
        return 0j
    t1 = min(t, _split_point(bath))
    v0, e0 = _time_integral(omega, 0.0, t1, bath)
    total, err = v0, e0
    if t > t1:
        v1, e1 = _time_integral(omega, t1, t, bath)
        total += v1
        err += e1
    if err > max(1e-8 * abs(total), 1e-10):
        raise QuadratureError(f"time-domain quadrature at omega={omega}, t={t}: error {err:.3g}")
    return total


def transition_operator_finite_time(t, spectrum: Spectrum, S, bath: BathSpec) -> TransitionOperator:
    """``S(t)`` by direct quadrature of the time integral.

    The interaction-picture coupling is rotated in the eigenbasis,
    ``<n|S_tilde(-tau)|m> = exp(-i Delta_nm tau) S_nm``, so each matrix element
    needs one scalar time integral per distinct gap. As for the asymptotic
    operator, the imaginary part of each time integral is kept only when the
    bath enables the Lamb shift.
    """
    bath._require_finite_T()
    if t < 0:
        raise ValueError("t must be >= 0")
    s = _coupling_in_eigenbasis(spectrum, S)
    gaps = spectrum.gaps
    mat = np.zeros(gaps.shape, dtype=complex)
    if t > 0:
        mask = s != 0
        uniq, inv = _unique_frequencies(-gaps, mask)
        g = np.array([time_domain_gain(w, t, bath) for w in uniq])
        if not bath.include_lamb_shift:
            # same convention as the asymptotic operator: dissipative part only
            g = g.real.astype(complex)
        vals = np.zeros(gaps.shape, dtype=complex)
        vals[mask] = g[inv]
        mat = s * vals
    return TransitionOperator(mat, rate_W(gaps, bath), spectrum.tag, float(t))
