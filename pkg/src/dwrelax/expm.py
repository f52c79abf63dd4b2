"""Scaling-and-squaring matrix exponential with a [13/13] Pade core.

The backward-error estimate returned with every exponential is the leading
term of the Pade truncation series, ``c_13 * ||A / 2^s||_1^26`` with
``c_m = (m!)^2 / ((2m)! (2m+1)!)``; for the default scaling threshold it is
at the level of the unit roundoff.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

THETA_13 = 5.371920351148152
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_C13 = math.factorial(13) ** 2 / (math.factorial(26) * math.factorial(27))


class ExpmBudgetError(ValueError):
    """The argument norm needs more squarings than allowed."""


def expm_pade13(a, max_squarings=60):
    """Return ``(exp(a), s, backward_error)``.

    ``s`` is the number of squarings applied after evaluating the Pade
    approximant of ``a / 2^s``.
    """
    a = np.asarray(a)
    n = a.shape[0]
    norm = float(np.abs(a).sum(axis=0).max()) if n else 0.0
    if norm == 0.0:
        return np.eye(n, dtype=np.result_type(a.dtype, float)), 0, 0.0
    s = 0
    if norm > THETA_13:
        s = int(math.ceil(math.log2(norm / THETA_13)))
    if s > max_squarings:
        raise ExpmBudgetError(
            f"||A||_1 = {norm:.3g} needs {s} squarings (> {max_squarings}); use a smaller step"
        )
    b = a / (2.0 ** s)
    bnorm = norm / (2.0 ** s)
    ident = np.eye(n, dtype=b.dtype)
    c = _PADE13
    b2 = b @ b
    b4 = b2 @ b2
    b6 = b2 @ b4
    u = b @ (b6 @ (c[13] * b6 + c[11] * b4 + c[9] * b2) + c[7] * b6 + c[5] * b4 + c[3] * b2 + c[1] * ident)
    v = b6 @ (c[12] * b6 + c[10] * b4 + c[8] * b2) + c[6] * b6 + c[4] * b4 + c[2] * b2 + c[0] * ident
    r = sla.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    backward = _C13 * bnorm ** 26
    return r, s, backward
