"""Truncated cavity/transmon Hilbert spaces and sparse operator algebra.

Operators are ``scipy.sparse.csr_matrix`` instances with complex entries.
States are dense ``numpy`` arrays: kets are 1-d, density matrices 2-d.
The composite ordering is always cavity (outer) ⊗ transmon (inner), so the
basis index of ``|n⟩_c ⊗ |j⟩_q`` is ``n * transmon_levels + j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "HilbertSpec", "DimensionError", "ZERO_TOL",
    "annihilation", "ketbra", "identity", "tensor", "adjoint", "is_hermitian",
    "expectation", "partial_trace", "fock", "coherent_ket", "ket2dm",
    "check_density_matrix",
]

ZERO_TOL = 1e-15


class DimensionError(ValueError):
    """Raised for invalid or mismatched dimensions."""


@dataclass(frozen=True)
class HilbertSpec:
    """Composite space of a truncated cavity and a multilevel transmon."""

    cavity_cutoff: int
    transmon_levels: int = 2

    def __post_init__(self):
        if int(self.cavity_cutoff) < 2:
            raise DimensionError(f"cavity_cutoff must be >= 2, got {self.cavity_cutoff}")
        if int(self.transmon_levels) < 2:
            raise DimensionError(f"transmon_levels must be >= 2, got {self.transmon_levels}")

    @property
    def ordering(self) -> str:
        return "cavity ⊗ transmon"

    @property
    def dim(self) -> int:
        return self.cavity_cutoff * self.transmon_levels

    @property
    def dims(self) -> tuple[int, int]:
        return (self.cavity_cutoff, self.transmon_levels)

    # Embedded single-subsystem operators.
    def a(self) -> sp.csr_matrix:
        return tensor(annihilation(self.cavity_cutoff), identity(self.transmon_levels))

    def num(self) -> sp.csr_matrix:
        a = self.a()
        return _clean(a.getH() @ a)

    def transmon_op(self, op) -> sp.csr_matrix:
        return tensor(identity(self.cavity_cutoff), op)

    def cavity_op(self, op) -> sp.csr_matrix:
        return tensor(op, identity(self.transmon_levels))

    def transmon_lowering(self) -> sp.csr_matrix:
        """Bare transmon ladder ``Σ_j √(j+1) |j⟩⟨j+1|`` embedded in the space."""
        L = self.transmon_levels
        b = sum(np.sqrt(j + 1) * ketbra(L, j, j + 1) for j in range(L - 1))
        return self.transmon_op(b)

    def projector(self, level: int) -> sp.csr_matrix:
        return self.transmon_op(ketbra(self.transmon_levels, level, level))

    def sigma_z(self) -> sp.csr_matrix:
        """``1 - 2|0⟩⟨0|``: equals σ_z for two levels, ground vs. excited manifold otherwise."""
        return _clean(sp.identity(self.dim, dtype=complex, format="csr") - 2 * self.projector(0))

    def ground_state(self) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[0] = 1.0
        return psi


def _clean(op) -> sp.csr_matrix:
    op = sp.csr_matrix(op, dtype=complex)
    if op.nnz:
        op.data[np.abs(op.data) < ZERO_TOL] = 0
        op.eliminate_zeros()
    op.sort_indices()
    return op


def annihilation(n_max: int) -> sp.csr_matrix:
    """Truncated bosonic lowering operator on Fock states ``|0⟩..|n_max-1⟩``."""
    if int(n_max) < 2:
        raise DimensionError(f"n_max must be >= 2, got {n_max}")
    return _clean(sp.diags(np.sqrt(np.arange(1, n_max)), 1, shape=(n_max, n_max)))


def ketbra(levels: int, m: int, n: int) -> sp.csr_matrix:
    if not (0 <= m < levels and 0 <= n < levels):
        raise IndexError(f"|{m}⟩⟨{n}| out of range for {levels} levels")
    return sp.csr_matrix(([1.0 + 0j], ([m], [n])), shape=(levels, levels))


def identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


def tensor(A, B) -> sp.csr_matrix:
    """Kronecker product in cavity ⊗ transmon order."""
    return _clean(sp.kron(sp.csr_matrix(A), sp.csr_matrix(B), format="csr"))


def adjoint(A) -> sp.csr_matrix:
    return sp.csr_matrix(A).getH().tocsr()


def is_hermitian(A, tol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    diff = A - A.getH()
    return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol


def expectation(state, op) -> complex:
    """``tr(ρ op)`` for a density matrix or ``⟨ψ|op|ψ⟩`` for a ket."""
    state = np.asarray(state)
    d = op.shape[0]
    if state.shape[0] != d:
        raise DimensionError(f"state dimension {state.shape[0]} != operator dimension {d}")
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    if state.shape != (d, d):
        raise DimensionError(f"density matrix shape {state.shape} != ({d}, {d})")
    # tr(ρ A) = Σ_ij ρ_ji A_ij
    A = sp.coo_matrix(op)
    return complex(np.sum(state[A.col, A.row] * A.data))


def partial_trace(rho, spec: HilbertSpec, keep: str) -> np.ndarray:
    """Reduce a composite density matrix to ``keep`` in {"cavity", "transmon"}."""
    rho = np.asarray(rho)
    nc, nq = spec.dims
    if rho.shape != (nc * nq, nc * nq):
        raise DimensionError(f"rho shape {rho.shape} does not match {spec}")
    r = rho.reshape(nc, nq, nc, nq)
    if keep == "cavity":
        return np.einsum("ajbj->ab", r)
    if keep in ("transmon", "qubit"):
        return np.einsum("iaib->ab", r)
    raise ValueError(f"unknown subsystem tag {keep!r}; use 'cavity' or 'transmon'")


def fock(n_max: int, n: int) -> np.ndarray:
    psi = np.zeros(n_max, dtype=complex)
    psi[n] = 1.0
    return psi


def coherent_ket(n_max: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state from the number-state series, renormalized."""
    from scipy.special import gammaln

    n = np.arange(n_max)
    if alpha == 0:
        return fock(n_max, 0)
    logmag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    psi = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    return psi / np.linalg.norm(psi)


def ket2dm(psi) -> np.ndarray:
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-10, eig_floor=-1e-8) -> None:
    """Raise ``ValueError`` if ``rho`` violates trace, Hermiticity or positivity slack."""
    rho = np.asarray(rho)
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr} deviates from 1")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"rho not Hermitian: max |ρ - ρ†| = {herm:.3g}")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < eig_floor:
        raise ValueError(f"negative eigenvalue {lam:.3g} below truncation slack")
