"""Dense Hermitian eigensolvers.

Two routes are provided:

* :func:`tridiagonal_ql` -- implicit-shift QL iteration for real symmetric
  tridiagonal matrices (the Fock-basis double-well Hamiltonian).
* :func:`jacobi_hermitian` -- cyclic Jacobi rotations for arbitrary dense
  Hermitian matrices.

Both return unsorted eigenpairs; canonical ordering, degenerate-block
orthonormalization and the sign convention are applied by
:func:`canonicalize`.
"""

from __future__ import annotations

import math

import numpy as np


class EigensolverError(RuntimeError):
    """Raised when an eigensolver fails to converge within its iteration cap."""

    def __init__(self, message, matrix=None, iterations=None):
        super().__init__(message)
        self.matrix = matrix
        self.iterations = iterations


def tridiagonal_ql(diag, offdiag, max_iter=60):
    """Eigen-decomposition of a real symmetric tridiagonal matrix.

    Parameters
    ----------
    diag : array_like, shape (n,)
        Main diagonal.
    offdiag : array_like, shape (n-1,)
        Sub-/super-diagonal, ``offdiag[i] = H[i, i+1]``.
    max_iter : int
        Iteration cap per eigenvalue.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues (unsorted).
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns.
    """
    d = np.array(diag, dtype=float)
    n = d.size
    e = np.zeros(n)
    if n > 1:
        e[: n - 1] = np.asarray(offdiag, dtype=float)
    # rows of z are the eigenvectors while iterating (contiguous updates)
    z = np.eye(n)
    eps = np.finfo(float).eps

    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                t = np.diag(np.asarray(diag, float)) + np.diag(e[: n - 1], 1) + np.diag(e[: n - 1], -1)
                raise EigensolverError(
                    f"implicit QL did not converge for eigenvalue {l} after {max_iter} iterations",
                    matrix=t,
                    iterations=it,
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[i + 1].copy()
                z[i + 1] = s * z[i] + c * zi1
                z[i] = c * z[i] - s * zi1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z.T.copy()


def _off_norm(a):
    off = np.abs(a) ** 2
    np.fill_diagonal(off, 0.0)
    return math.sqrt(float(off.sum()))


def jacobi_hermitian(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigen-decomposition of a dense Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies a real Givens rotation in the ``(p, q)`` plane.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    is_real = not np.any(a.imag)
    v = np.eye(n, dtype=complex)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for sweep in range(max_sweeps):
        if _off_norm(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= np.finfo(float).eps * 1e-3 * scale:
                    continue
                phase = apq / mag
                tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    else:
        raise EigensolverError(
            f"Jacobi iteration did not converge after {max_sweeps} sweeps", matrix=a, iterations=max_sweeps
        )
    w = np.diag(a).real.copy()
    if is_real:
        v = v.real.copy()
    return w, v


def canonicalize(w, v, degeneracy_tol=1e-12):
    """Sort eigenpairs and fix the gauge of every eigenvector.

    Eigenvalues closer than ``degeneracy_tol * max|w|`` form a degenerate
    block; such blocks are re-orthonormalized by Gram-Schmidt on the
    projections of the basis vectors taken in basis order, so the result
    does not depend on which solver produced ``v``. Each eigenvector is then
    multiplied by a phase making its largest-magnitude component real and
    positive (first index wins on ties).
    """
    order = np.argsort(w, kind="stable")
    w = np.asarray(w)[order].copy()
    v = np.asarray(v)[:, order].copy()
    n = w.size
    scale = float(np.abs(w).max()) if n else 0.0
    thresh = degeneracy_tol * scale

    i = 0
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] < thresh:
            j += 1
        if j - i > 1:
            v[:, i:j] = _block_gram_schmidt(v[:, i:j])
        i = j

    for k in range(n):
        col = v[:, k]
        mags = np.abs(col)
        top = int(np.argmax(mags >= mags.max() * (1 - 1e-12)))
        phase = col[top] / mags[top]
        v[:, k] = col / phase
    if np.iscomplexobj(v) and not np.any(v.imag):
        v = v.real.copy()
    return w, v


def _block_gram_schmidt(block):
    n, k = block.shape
    proj = block @ block.conj().T
    out = []
    for idx in range(n):
        x = proj[:, idx].copy()
        for q in out:
            x -= q * np.vdot(q, x)
        nrm = np.linalg.norm(x)
        if nrm > 1e-8:
            out.append(x / nrm)
        if len(out) == k:
            break
    return np.column_stack(out)
