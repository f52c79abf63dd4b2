from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix with a basis label (``"fock"`` or a spectrum tag).

    Positivity is deliberately not enforced: Redfield evolution may
    produce small negative eigenvalues, which are tracked separately.
    """

    entries: np.ndarray
    basis: str = "fock"
    check: bool = True

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"density matrix must be square, got {a.shape}")
        if self.check:
            tr = np.trace(a)
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr} deviates from 1 by more than {TRACE_TOL}")
            if np.abs(a - a.conj().T).max() > HERMITIAN_TOL:
                raise ValueError("density matrix is not Hermitian")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def vec(self) -> np.ndarray:
        """Column-stacked vectorization."""
        return self.entries.reshape(-1, order="F")

    @classmethod
    def from_vec(cls, v, basis="fock", check=True):
        d = int(round(np.sqrt(v.size)))
        return cls(np.asarray(v).reshape(d, d, order="F"), basis=basis, check=check)

    def in_eigenbasis(self, spectrum) -> "DensityMatrix":
        if self.basis == spectrum.tag:
            return self
        if self.basis != spectrum.source_basis:
            raise ValueError(f"state basis {self.basis!r} does not match spectrum {spectrum.source_basis!r}")
        v = spectrum.vectors
        return DensityMatrix(v.conj().T @ self.entries @ v, basis=spectrum.tag, check=self.check)

    def in_source_basis(self, spectrum) -> "DensityMatrix":
        if self.basis == spectrum.source_basis:
            return self
        if self.basis != spectrum.tag:
            raise ValueError(f"state basis {self.basis!r} does not match spectrum {spectrum.tag!r}")
        return DensityMatrix(spectrum.from_eigenbasis(self.entries), basis=spectrum.source_basis, check=self.check)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.entries.conj().T, self.entries)))


def maximally_mixed(dim, basis="fock") -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim, basis=basis)


def fock_mixture(N, occupations, basis="fock") -> DensityMatrix:
    """Equal-weight mixture of Fock states ``|n1>``, ``n1`` in ``occupations``."""
    occ = list(occupations)
    if not occ:
        raise ValueError("occupation list is empty")
    rho = np.zeros((N + 1, N + 1))
    for n in occ:
        if not 0 <= int(n) <= N or int(n) != n:
            raise ValueError(f"occupation {n} outside 0..{N}")
        rho[int(n), int(n)] += 1.0 / len(occ)
    return DensityMatrix(rho, basis=basis)
