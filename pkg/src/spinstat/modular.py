"""
GNS representations of faithful states on full matrix algebras, commutants,
and the Tomita operators ``S, F, Δ, J``.

The GNS space of a faithful density matrix ``ρ`` on ``M_n`` is realized as
``C^{n²}``: the class ``[A]`` has coordinates ``vec(A ρ^{1/2})`` (row-major),
so ``Ω = vec(ρ^{1/2})``, ``π(A) = A ⊗ 1`` and right multiplication by ``C`` is
``1 ⊗ C^T``. The inner product is ``([A], [B]) = ρ(A^* B)``.

Antilinear operators are stored as a matrix ``M`` acting by
``v ↦ M conj(v)``. With that convention the adjoint of ``M`` is ``M^T`` and
a composition ``T_1 T_2`` has matrix ``M_1 conj(M_2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .dynamics import Evolution
from .errors import DimensionMismatch, NonFaithfulState, NonSeparatingVector
from .quasilocal import LocalOperator
from .states import DensityState, gibbs_state

MEMBERSHIP_TOL = 1e-8
FLOW_MATCH_TOL = 1e-8
NULLSPACE_RTOL = 1e-10


def matrix_units(n: int) -> list[np.ndarray]:
    """``E_ij`` in row-major order."""
    out = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            out.append(e)
    return out


@dataclass(frozen=True, eq=False)
class GnsRep:
    ambient_dim: int
    rho: np.ndarray = field(repr=False)
    sqrt_rho: np.ndarray = field(repr=False)
    inv_sqrt_rho: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.ambient_dim ** 2

    @cached_property
    def omega(self) -> np.ndarray:
        return self.sqrt_rho.reshape(-1).copy()

    def vector(self, a) -> np.ndarray:
        """Coordinates of ``[A] = π(A)Ω``."""
        return (linalg.as_matrix(a) @ self.sqrt_rho).reshape(-1)

    def left_action(self, a) -> np.ndarray:
        """``π(A)`` as a matrix on the GNS space."""
        return np.kron(linalg.as_matrix(a), np.eye(self.ambient_dim))

    def right_action(self, c) -> np.ndarray:
        """Right multiplication ``Y ↦ Y C``, an element of the commutant."""
        return np.kron(np.eye(self.ambient_dim), linalg.as_matrix(c).T)

    @property
    def gram_basis(self) -> list[np.ndarray]:
        """Algebra elements ``E_ij ρ^{-1/2}`` whose classes are orthonormal."""
        return [e @ self.inv_sqrt_rho for e in matrix_units(self.ambient_dim)]

    def inner(self, a, b) -> complex:
        """``([A], [B]) = ρ(A^* B)``."""
        return complex(np.vdot(self.vector(a), self.vector(b)))

    def vector_state(self, v: np.ndarray) -> np.ndarray:
        """Density matrix of ``A ↦ (v, π(A)v)/(v, v)``."""
        x = np.asarray(v, dtype=complex).reshape(self.ambient_dim, self.ambient_dim)
        d = x @ linalg.dagger(x)
        return d / np.trace(d).real

    def algebra_basis(self) -> list[np.ndarray]:
        """``π(E_ij)``, a basis of the represented algebra."""
        return [self.left_action(e) for e in matrix_units(self.ambient_dim)]

    def residuals(self, probes: Sequence[np.ndarray] | None = None) -> dict[str, float]:
        """State, norm, multiplicativity and *-residuals on a spanning set."""
        probes = matrix_units(self.ambient_dim) if probes is None else list(probes)
        state = max(abs(np.vdot(self.omega, self.left_action(a) @ self.omega) - np.trace(self.rho @ a)) for a in probes)
        mult = 0.0
        star = 0.0
        for a in probes:
            pa = self.left_action(a)
            star = max(star, np.linalg.norm(self.left_action(linalg.dagger(a)) - linalg.dagger(pa)))
            for b in probes:
                mult = max(mult, np.linalg.norm(self.left_action(a @ b) - pa @ self.left_action(b)))
        return {
            "state": float(state),
            "norm": float(abs(np.linalg.norm(self.omega) - 1.0)),
            "multiplicative": float(mult),
            "star": float(star),
        }


def gns_build(rho: DensityState | np.ndarray) -> GnsRep:
    """GNS triple of a faithful state on ``M_n``."""
    m = rho.matrix if isinstance(rho, DensityState) else linalg.as_matrix(rho)
    dec = linalg.spectral_decompose(m)
    if dec.eigenvalues[0] <= 1e-12:
        raise NonFaithfulState(
            f"smallest eigenvalue {dec.eigenvalues[0]:.3e}; the quotient construction is not supported"
        )
    sq = dec.apply(np.sqrt)
    inv = dec.apply(lambda w: 1.0 / np.sqrt(w))
    return GnsRep(m.shape[0], np.array(m), sq, inv)


def orthonormalize(mats: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of the span of ``mats``."""
    if not mats:
        return []
    shape = mats[0].shape
    stack = np.stack([np.asarray(m, dtype=complex).reshape(-1) for m in mats], axis=1)
    u, s, _ = np.linalg.svd(stack, full_matrices=False)
    if not s.size or s[0] == 0:
        return []
    rank = int(np.sum(s > NULLSPACE_RTOL * s[0]))
    return [u[:, k].reshape(shape) for k in range(rank)]


def commutant_basis(algebra_basis: Sequence[np.ndarray], ambient_dim: int) -> list[np.ndarray]:
    """Orthonormal basis of ``{A : [A, B_k] = 0 for all k}``.

    ``vec(AB − BA) = (1 ⊗ B^T − B ⊗ 1) vec(A)``; the commutant is the null
    space of these blocks stacked.
    """
    n = int(ambient_dim)
    eye = np.eye(n)
    blocks = []
    for b in algebra_basis:
        b = linalg.as_matrix(b)
        if b.shape != (n, n):
            raise DimensionMismatch(f"basis element of shape {b.shape} in ambient dimension {n}")
        blocks.append(np.kron(eye, b.T) - np.kron(b, eye))
    if not blocks:
        return matrix_units(n)
    system = np.vstack(blocks)
    # only the right singular vectors are needed; skipping U keeps this cheap
    _, s, vh = np.linalg.svd(system, full_matrices=False)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > NULLSPACE_RTOL * scale))
    null = vh[rank:].conj()
    return [row.reshape(n, n) for row in null]


def membership_residual(x: np.ndarray, basis: Sequence[np.ndarray]) -> float:
    """Frobenius distance from ``x`` to the span of an orthonormal ``basis``."""
    x = np.asarray(x, dtype=complex)
    if not basis:
        return float(np.linalg.norm(x))
    b = np.stack([np.asarray(m).reshape(-1) for m in basis], axis=1)
    v = x.reshape(-1)
    return float(np.linalg.norm(v - b @ (linalg.dagger(b) @ v)))


@dataclass(frozen=True, eq=False)
class TomitaData:
    s_matrix: np.ndarray = field(repr=False)
    f_matrix: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    sqrt_delta: np.ndarray = field(repr=False)
    j_matrix: np.ndarray = field(repr=False)

    @cached_property
    def delta_spectrum(self) -> linalg.SpectralDecomposition:
        return linalg.spectral_decompose(self.delta)

    def delta_power(self, z: complex) -> np.ndarray:
        """``Δ^z`` through the eigensystem of ``Δ``."""
        return self.delta_spectrum.apply(lambda w: np.exp(z * np.log(w)))

    def conj_by_j(self, x: np.ndarray) -> np.ndarray:
        """The linear map ``J X J`` for a linear ``X``."""
        return self.j_matrix @ np.conj(x) @ np.conj(self.j_matrix)

    def residuals(self) -> dict[str, float]:
        j = self.j_matrix
        eye = np.eye(len(j))
        inv_sqrt = self.delta_power(-0.5)
        return {
            "S=J*Delta^1/2": _fro(self.s_matrix - j @ np.conj(self.sqrt_delta)),
            "J^2=1": _fro(j @ np.conj(j) - eye),
            "J=J*": _fro(j - j.T),
            "Delta^-1/2=J*Delta^1/2*J": _fro(inv_sqrt - self.conj_by_j(self.sqrt_delta)),
            "F=S*": _fro(self.f_matrix - self.s_matrix.T),
            "Delta=FS": _fro(self.delta - self.f_matrix @ np.conj(self.s_matrix)),
            "Delta^-1=SF": _fro(self.delta_power(-1.0) - self.s_matrix @ np.conj(self.f_matrix)),
        }


def _fro(a) -> float:
    return float(np.linalg.norm(a))


def _antilinear_from_pairs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix ``M`` of the antilinear map sending column ``x_k`` to ``y_k``."""
    s = np.linalg.svd(x, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise NonSeparatingVector(f"vectors are numerically dependent (sigma_min={s[-1]:.3e})")
    # M conj(x) = y
    return np.linalg.solve(np.conj(x).T, y.T).T


def tomita_build(rep: GnsRep) -> TomitaData:
    """Assemble ``S``, ``F`` and the polar data ``J``, ``Δ``.

    ``S`` comes from ``S(AΩ) = A^*Ω`` on matrix units. ``F`` is built
    independently from ``F(BΩ) = B^*Ω`` over a computed commutant basis.
    """
    units = matrix_units(rep.ambient_dim)
    x = np.stack([rep.vector(e) for e in units], axis=1)
    y = np.stack([rep.vector(linalg.dagger(e)) for e in units], axis=1)
    m_s = _antilinear_from_pairs(x, y)

    comm = commutant_basis(rep.algebra_basis(), rep.dim)
    xf = np.stack([b @ rep.omega for b in comm], axis=1)
    yf = np.stack([linalg.dagger(b) @ rep.omega for b in comm], axis=1)
    m_f = _antilinear_from_pairs(xf, yf)

    w, modulus = linalg.polar_decompose(m_s)
    sqrt_delta = np.conj(modulus)
    delta = np.conj(linalg.dagger(m_s) @ m_s)
    delta = 0.5 * (delta + linalg.dagger(delta))
    return TomitaData(m_s, m_f, delta, sqrt_delta, w)


def closed_form_residuals(rep: GnsRep, data: TomitaData) -> dict[str, float]:
    """Compare with ``Δ: Y ↦ ρYρ^{-1}`` and ``J: Y ↦ Y^*`` on the matrix realization."""
    n = rep.ambient_dim
    rho_inv = np.linalg.inv(rep.rho)
    delta = np.kron(rep.rho, rho_inv.T)
    # vec(Y^*) = conj(swap vec(Y))
    swap = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            swap[j * n + i, i * n + j] = 1.0
    return {"Delta": _fro(data.delta - delta), "J": _fro(data.j_matrix - swap)}


@dataclass(frozen=True)
class TomitaReport:
    commutant_residual: float
    algebra_residual: float
    t_grid: tuple[float, ...]

    def passed(self, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.commutant_residual <= tol and self.algebra_residual <= tol


def verify_tomita_takesaki(rep: GnsRep, data: TomitaData, t_grid: Sequence[float]) -> TomitaReport:
    """Largest residuals of ``Jπ(A)J ∈ M'`` and ``Δ^{it}π(A)Δ^{-it} ∈ M``."""
    alg = rep.algebra_basis()
    alg_on = orthonormalize(alg)
    comm = commutant_basis(alg, rep.dim)
    c_res = max(membership_residual(data.conj_by_j(a), comm) for a in alg)
    a_res = 0.0
    for t in t_grid:
        if t == 0:
            continue
        u = data.delta_power(1j * t)
        u_inv = data.delta_power(-1j * t)
        a_res = max(a_res, max(membership_residual(u @ a @ u_inv, alg_on) for a in alg))
    return TomitaReport(float(c_res), float(a_res), tuple(float(t) for t in t_grid))


def modular_condition_residual(rep: GnsRep, data: TomitaData, a, b) -> float:
    """``|(Δ^{1/2}[A], Δ^{1/2}[B]) − ([B^*], [A^*])|``."""
    a = linalg.as_matrix(a)
    b = linalg.as_matrix(b)
    lhs = np.vdot(data.sqrt_delta @ rep.vector(a), data.sqrt_delta @ rep.vector(b))
    rhs = np.vdot(rep.vector(linalg.dagger(b)), rep.vector(linalg.dagger(a)))
    return float(abs(lhs - rhs))


@dataclass(frozen=True)
class FlowMatch:
    """Residuals of ``Δ^{it}π(A)Δ^{-it} = π(α^{sβt}A)`` for both signs."""

    residual_plus: float
    residual_minus: float
    tol: float

    @property
    def matching(self) -> tuple[int, ...]:
        return tuple(s for s, r in ((1, self.residual_plus), (-1, self.residual_minus)) if r <= self.tol)

    @property
    def sign(self) -> int | None:
        m = self.matching
        return m[0] if len(m) == 1 else None

    @property
    def ambiguous(self) -> bool:
        return len(self.matching) == 2

    @property
    def matched(self) -> bool:
        return bool(self.matching)


def modular_flow_match(
    h: LocalOperator, beta: float, t_grid: Sequence[float], tol: float = FLOW_MATCH_TOL
) -> FlowMatch:
    """Measure which sign ``s`` makes the modular group of ``gibbs(h, β)`` equal ``α^{sβt}``."""
    if beta == 0:
        raise ValueError("beta must be nonzero")
    rho = gibbs_state(h, beta)
    rep = gns_build(rho)
    data = tomita_build(rep)
    ev = Evolution(h)
    units = matrix_units(rep.ambient_dim)
    res = {1: 0.0, -1: 0.0}
    for t in t_grid:
        u = data.delta_power(1j * t)
        u_inv = data.delta_power(-1j * t)
        for e in units:
            a = LocalOperator(h.lattice, h.region, e)
            flowed = u @ rep.left_action(e) @ u_inv
            for s in (1, -1):
                target = rep.left_action(ev(a, s * beta * t).matrix)
                res[s] = max(res[s], _fro(flowed - target))
    return FlowMatch(res[1], res[-1], tol)
