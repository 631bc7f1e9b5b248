"""
Dense complex-matrix substrate.

Everything downstream (embeddings, evolutions, states, modular data) goes
through the handful of functions here. Matrices are plain ``numpy`` arrays of
dtype ``complex128``; functions of self-adjoint matrices are always evaluated
through an eigendecomposition of the Hermitian part.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Callable, Literal, Sequence

import numpy as np
import numpy.typing as npt

from .errors import DimensionMismatch, DomainError, NotHermitian, SingularInput

Matrix = npt.NDArray[np.complex128]

HERMITIAN_RTOL = 1e-10
RECONSTRUCTION_RTOL = 1e-10
UNITARY_RTOL = 1e-12  # multiplied by the dimension
SINGULAR_RTOL = 1e-12

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

PAULI = {
    "I": SIGMA_I,
    "X": SIGMA_X,
    "Y": SIGMA_Y,
    "Z": SIGMA_Z,
    "+": SIGMA_PLUS,
    "-": SIGMA_MINUS,
}


def as_matrix(a, *, square: bool = True) -> Matrix:
    """Coerce ``a`` to a finite 2-d complex array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def dagger(a: Matrix) -> Matrix:
    return np.conj(np.transpose(a))


def commutator(a: Matrix, b: Matrix) -> Matrix:
    return a @ b - b @ a


def hermitian_defect(a: Matrix) -> float:
    """Frobenius norm of ``a - a^*``."""
    return float(np.linalg.norm(a - dagger(a)))


def is_hermitian(a: Matrix, rtol: float = HERMITIAN_RTOL) -> bool:
    a = np.asarray(a)
    return hermitian_defect(a) <= rtol * np.linalg.norm(a)


def hermitian_part(a, rtol: float = HERMITIAN_RTOL) -> Matrix:
    """Return ``(a + a^*)/2`` after checking that ``a`` is self-adjoint.

    The asymmetry and the scale are both measured in Frobenius norm, which
    bounds the operator norm of the asymmetry from above.
    """
    a = as_matrix(a)
    if hermitian_defect(a) > rtol * np.linalg.norm(a):
        raise NotHermitian(
            f"asymmetry {hermitian_defect(a):.3e} exceeds {rtol:g} * ||a||"
        )
    return 0.5 * (a + dagger(a))


def tensor_product(*factors) -> Matrix:
    """Kronecker product of one or more matrices, left factor outermost."""
    if not factors:
        return np.ones((1, 1), dtype=complex)
    out = as_matrix(factors[0], square=False)
    for f in factors[1:]:
        out = np.kron(out, as_matrix(f, square=False))
    return out


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem ``a = basis @ diag(eigenvalues) @ basis^*``, eigenvalues ascending."""

    eigenvalues: npt.NDArray[np.float64]
    basis: Matrix

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> Matrix:
        return (self.basis * self.eigenvalues) @ dagger(self.basis)

    def apply(self, f: Callable) -> Matrix:
        with np.errstate(all="ignore"):
            values = np.asarray(f(self.eigenvalues))
        if values.shape != self.eigenvalues.shape:
            values = np.broadcast_to(values, self.eigenvalues.shape)
        if not np.all(np.isfinite(values)):
            bad = self.eigenvalues[~np.isfinite(values)]
            raise DomainError(f"function undefined at eigenvalue(s) {bad[:4]}")
        return (self.basis * values) @ dagger(self.basis)

    def to_eigenbasis(self, a: Matrix) -> Matrix:
        return dagger(self.basis) @ a @ self.basis

    def from_eigenbasis(self, a: Matrix) -> Matrix:
        return self.basis @ a @ dagger(self.basis)

    def unitarity_defect(self) -> float:
        return float(np.linalg.norm(dagger(self.basis) @ self.basis - np.eye(self.dim), 2))


def spectral_decompose(a) -> SpectralDecomposition:
    """Eigendecomposition of a self-adjoint matrix.

    Raises
    ------
    NotHermitian
        If ``||a - a^*||`` exceeds ``1e-10 ||a||``.
    """
    h = hermitian_part(a)
    w, v = np.linalg.eigh(h)
    return SpectralDecomposition(w, v)


def apply_spectral_function(a, f: Callable, decomposition: SpectralDecomposition | None = None) -> Matrix:
    """Evaluate ``f(a)`` for self-adjoint ``a`` through its eigensystem.

    ``f`` acts elementwise on the eigenvalue array and may return complex
    values (``lambda s: np.exp(1j * t * s)`` gives ``e^{itA}``). A non-finite
    value anywhere on the spectrum raises :class:`DomainError`.
    """
    dec = decomposition if decomposition is not None else spectral_decompose(a)
    return dec.apply(f)


def expm_hermitian(a, coeff: complex = 1.0) -> Matrix:
    """``exp(coeff * a)`` for self-adjoint ``a`` and any complex ``coeff``."""
    return apply_spectral_function(a, lambda s: np.exp(coeff * s))


def polar_decompose(a) -> tuple[Matrix, Matrix]:
    """Polar decomposition ``a = u @ modulus`` with ``modulus = (a^* a)^{1/2}``.

    Only injective ``a`` is accepted, so that ``u`` is unitary and unique.
    """
    a = as_matrix(a)
    w, s, vh = np.linalg.svd(a)
    if s.size and s[-1] <= SINGULAR_RTOL * s[0]:
        raise SingularInput(f"smallest singular value {s[-1]:.3e} is numerically zero")
    if s.size and s[0] == 0.0:
        raise SingularInput("zero matrix")
    u = w @ vh
    modulus = (dagger(vh) * s) @ vh
    modulus = 0.5 * (modulus + dagger(modulus))
    return u, modulus


NormKind = Literal["operator", "trace", "frobenius"]


def norm(a, kind: NormKind = "operator") -> float:
    a = np.asarray(a, dtype=complex)
    if kind == "frobenius":
        return float(np.linalg.norm(a))
    if a.size == 0:
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    if kind == "operator":
        return float(s[0])
    if kind == "trace":
        return float(np.sum(s))
    raise ValueError(f"unknown norm kind {kind!r}")


def partial_trace(a, dims: Sequence[int], keep: Sequence[int]) -> Matrix:
    """Trace out every tensor factor not listed in ``keep``.

    ``dims`` gives the factor dimensions in the order the caller used to build
    ``a``; the kept factors come back in that same order. The result is the
    unnormalized partial trace.
    """
    a = as_matrix(a)
    dims = [int(d) for d in dims]
    n = len(dims)
    if prod(dims) != a.shape[0]:
        raise DimensionMismatch(f"factor dims {dims} do not multiply to {a.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionMismatch(f"keep indices {keep} out of range for {n} factors")
    t = a.reshape(dims + dims)
    m = n
    for i in reversed([i for i in range(n) if i not in keep]):
        t = np.trace(t, axis1=i, axis2=i + m)
        m -= 1
    d = prod(dims[k] for k in keep)
    return np.asarray(t).reshape(d, d)


def permute_factors(a: Matrix, dims: Sequence[int], perm: Sequence[int]) -> Matrix:
    """Reorder tensor factors: new factor ``j`` is old factor ``perm[j]``."""
    dims = list(dims)
    n = len(dims)
    perm = list(perm)
    if sorted(perm) != list(range(n)):
        raise DimensionMismatch(f"{perm} is not a permutation of {n} factors")
    if perm == list(range(n)):
        return a
    d = a.shape[0]
    t = a.reshape(dims + dims).transpose(perm + [p + n for p in perm])
    return t.reshape(d, d)


# random instances used by tests and experiment drivers


def random_matrix(rng: np.random.Generator, n: int, m: int | None = None) -> Matrix:
    m = n if m is None else m
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> Matrix:
    g = random_matrix(rng, n)
    return scale * 0.5 * (g + dagger(g))


def random_unitary(rng: np.random.Generator, n: int) -> Matrix:
    q, r = np.linalg.qr(random_matrix(rng, n))
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_density(rng: np.random.Generator, n: int, rank: int | None = None) -> Matrix:
    g = random_matrix(rng, n, n if rank is None else rank)
    rho = g @ dagger(g)
    rho = 0.5 * (rho + dagger(rho))
    return rho / np.trace(rho).real
