"""
Heisenberg dynamics generated by an interaction.

Two independent routes are provided: the commutator series
``Σ t^m/m! δ^m A`` with a certified geometric tail, and exact conjugation by
``e^{izH}`` in the eigenbasis of ``H`` (valid for complex ``z``). Time-ordered
integrals (Dyson cocycle, imaginary-time vectors) use nested Gauss-Legendre
rules on the ordered simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import exp
from typing import Sequence

import numpy as np
from scipy.special import gammainc

from . import linalg
from .errors import OutsideConvergenceRadius, RegionNotContained, ToleranceUnreachable
from .interaction import Interaction, hamiltonian, lambda_norm
from .quasilocal import LocalOperator, Region, embed

SERIES_ORDER_CAP = 200
DYSON_ORDER = 3
DYSON_POINTS = 16
_NODE_BUDGET = 1 << 16  # matrices held at once by the nested quadrature


def derivation(phi: Interaction, a: LocalOperator) -> LocalOperator:
    """``δ(A) = i Σ_{X∩supp A≠∅} [Φ(X), A]`` on ``supp A ∪ ⋃X``."""
    meeting = phi.meeting(a.region)
    if not meeting:
        return LocalOperator.zero(a.lattice, a.region)
    target = a.region
    for x in meeting:
        target = target | x
    h = phi.sum_embedded(meeting, target).matrix
    m = embed(a, target).matrix
    return LocalOperator(a.lattice, target, 1j * (h @ m - m @ h))


def iterate_derivation(phi: Interaction, a: LocalOperator, m: int) -> LocalOperator:
    if m < 0:
        raise ValueError("m must be nonnegative")
    for _ in range(m):
        a = derivation(phi, a)
    return a


def derivation_bound(phi: Interaction, a: LocalOperator, m: int, lam: float) -> float:
    """Right side of ``||δ^m A|| <= ||A|| e^{λ|Λ|} m! (2||Φ||_λ/λ)^m``."""
    from math import factorial

    return a.norm() * exp(lam * len(a.region)) * factorial(m) * (2 * lambda_norm(phi, lam) / lam) ** m


@dataclass(frozen=True)
class SeriesEvolutionResult:
    value: LocalOperator
    truncation_order: int
    certified_tail_bound: float


def convergence_radius(phi: Interaction, lam: float) -> float:
    nrm = lambda_norm(phi, lam)
    return float("inf") if nrm == 0 else lam / (2 * nrm)


def evolve_series(
    phi: Interaction,
    a: LocalOperator,
    t: float,
    lam: float,
    tol: float = 1e-8,
    max_order: int = SERIES_ORDER_CAP,
) -> SeriesEvolutionResult:
    """Truncated commutator series for ``α^t(A)``.

    The order ``M`` is the first one for which the geometric majorant
    ``||A|| e^{λ|supp A|} q^{M+1}/(1-q)``, ``q = 2|t| ||Φ||_λ / λ``, drops to
    ``tol``; that majorant is returned as the certified tail bound.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    radius = convergence_radius(phi, lam)
    if abs(t) >= radius:
        raise OutsideConvergenceRadius(f"|t| = {abs(t):g} is not below the radius {radius:g}")
    if t == 0 or radius == float("inf"):
        return SeriesEvolutionResult(a, 0, 0.0)
    q = 2 * abs(t) * lambda_norm(phi, lam) / lam
    c = a.norm() * exp(lam * len(a.region))
    order = 0
    while c * q ** (order + 1) / (1 - q) > tol:
        order += 1
        if order > max_order:
            raise ToleranceUnreachable(f"tolerance {tol:g} needs more than {max_order} terms")
    tail = c * q ** (order + 1) / (1 - q)
    # accumulate (t^m / m!) δ^m A recursively to avoid large factorials
    term = a
    total = a
    for m in range(1, order + 1):
        term = derivation(phi, term) * (t / m)
        total = total + term
    return SeriesEvolutionResult(total, order, float(tail))


class Evolution:
    """Exact dynamics ``α^z(A) = e^{izH} A e^{-izH}`` for a fixed ``H``.

    The eigendecomposition of ``H`` is computed once; complex ``z`` gives the
    analytic continuation used by the KMS condition.
    """

    def __init__(self, h: LocalOperator):
        self.h = h
        self.spectrum = linalg.spectral_decompose(h.matrix)

    @cached_property
    def frequencies(self) -> np.ndarray:
        w = self.spectrum.eigenvalues
        return w[:, None] - w[None, :]

    def _align(self, a: LocalOperator) -> LocalOperator:
        if a.region <= self.h.region:
            return embed(a, self.h.region)
        raise RegionNotContained(
            f"observable on {a.region} is not inside the Hamiltonian region {self.h.region}"
        )

    def eigen(self, a: LocalOperator) -> np.ndarray:
        """Matrix of ``a`` in the eigenbasis of ``H``."""
        return self.spectrum.to_eigenbasis(self._align(a).matrix)

    def __call__(self, a: LocalOperator, z: complex) -> LocalOperator:
        m = self.eigen(a) * np.exp(1j * z * self.frequencies)
        return LocalOperator(a.lattice, self.h.region, self.spectrum.from_eigenbasis(m))

    def unitary(self, t: complex) -> np.ndarray:
        return self.spectrum.apply(lambda s: np.exp(1j * t * s))


def _common(h: LocalOperator, *ops: LocalOperator) -> list[LocalOperator]:
    r = h.region
    for op in ops:
        r = r | op.region
    return [embed(x, r) for x in (h,) + ops]


def evolve_exact(h: LocalOperator, a: LocalOperator, z: complex) -> LocalOperator:
    """``e^{izH} A e^{-izH}``; both operators are embedded in their common region."""
    h, a = _common(h, a)
    return Evolution(h)(a, z)


def convergence_residual(
    phi: Interaction, a: LocalOperator, t: float, regions: Sequence[Region]
) -> list[float]:
    """``||α_{Λ_last}^t A - α_{Λ_j}^t A||`` for each region of an increasing sequence."""
    regions = [Region(r) for r in regions]
    for r, s in zip(regions, regions[1:]):
        if not r <= s:
            raise ValueError(f"regions must be increasing, {r} is not inside {s}")
    if regions and not a.region <= regions[0]:
        raise RegionNotContained(f"observable on {a.region} is not inside {regions[0]}")
    last = regions[-1]
    evolved = [embed(Evolution(hamiltonian(phi, r))(a, t), last) for r in regions]
    return [linalg.norm(evolved[-1].matrix - e.matrix) for e in evolved]


def ordered_series(
    g: np.ndarray,
    frequencies: np.ndarray,
    kappa: complex,
    T: float,
    order: int,
    points: int,
    coupling: complex,
) -> np.ndarray:
    """``Σ_{n≤order} c^n ∫_{0<s_n<…<s_1<T} G(s_n)⋯G(s_1)`` in an eigenbasis.

    ``G(s) = g ∘ exp(κ s ω)`` elementwise, with ``ω_jk = λ_j − λ_k``: real
    time uses ``κ = i`` (``G(s) = α^s P``), imaginary time ``κ = -1``
    (``G(s) = α^{is} P``). The simplex is mapped to a cube by
    ``s_{k+1} = s_k u_{k+1}`` and each axis gets a ``points``-node
    Gauss-Legendre rule.
    """
    d = g.shape[0]
    eye = np.eye(d, dtype=complex)
    if order == 0 or T == 0:
        return eye
    x, w = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w

    def gen(s):
        return g[None] * np.exp(kappa * s[:, None, None] * frequencies[None])

    def levels(s: np.ndarray, depth: int) -> list[np.ndarray]:
        # [I_0(s), ..., I_depth(s)] for a batch of upper limits s
        out = [np.broadcast_to(eye, (len(s), d, d))]
        if depth == 0:
            return out
        acc = [np.zeros((len(s), d, d), dtype=complex) for _ in range(depth)]
        chunk = max(1, _NODE_BUDGET // max(1, points ** depth))
        for lo in range(0, len(s), chunk):
            sb = s[lo:lo + chunk]
            u = (sb[:, None] * x[None, :]).ravel()
            wu = (sb[:, None] * w[None, :]).ravel()
            inner = levels(u, depth - 1)
            gu = gen(u)
            for k in range(depth):
                prod_ = np.matmul(inner[k], gu) * wu[:, None, None]
                acc[k][lo:lo + chunk] = prod_.reshape(len(sb), points, d, d).sum(axis=1)
        return out + acc

    terms = levels(np.array([float(T)]), order)
    total = np.zeros((d, d), dtype=complex)
    for n, t_n in enumerate(terms):
        total += coupling ** n * t_n[0]
    return total


def series_tail(x: float, order: int) -> float:
    """``Σ_{n>order} x^n / n!`` for ``x >= 0``."""
    if x == 0:
        return 0.0
    return float(exp(x) * gammainc(order + 1, x))


@dataclass(frozen=True)
class CocycleResult:
    matrix: np.ndarray
    order: int
    quad_points: int
    unitarity_defect: float
    tail_bound: float


def dyson_cocycle(
    h: LocalOperator,
    p: LocalOperator,
    t: float,
    order: int = DYSON_ORDER,
    quad_points: int = DYSON_POINTS,
) -> CocycleResult:
    """Truncated series ``Γ_t = 1 + Σ_n i^n ∫ (α^{t_n}P)⋯(α^{t_1}P)``.

    ``Γ_t e^{itH} = e^{it(H+P)}`` holds for the full series; ``tail_bound`` is
    the majorant ``Σ_{n>order} (||P|| |t|)^n / n!`` of the truncation error.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    h, p = _common(h, p)
    linalg.hermitian_part(p.matrix)
    ev = Evolution(h)
    g = ev.eigen(p)
    y = ordered_series(g, ev.frequencies, 1j, t, order, quad_points, 1j)
    gamma = ev.spectrum.from_eigenbasis(y)
    defect = linalg.norm(gamma @ linalg.dagger(gamma) - np.eye(len(gamma)))
    return CocycleResult(gamma, order, quad_points, defect, series_tail(p.norm() * abs(t), order))


def perturbed_evolve(h: LocalOperator, p: LocalOperator, a: LocalOperator, t: float) -> LocalOperator:
    """``α_P^t(A) = e^{i(H+P)t} A e^{-i(H+P)t}``."""
    h, p, a = _common(h, p, a)
    return Evolution(h + p)(a, t)


@dataclass(frozen=True)
class ConjugationCheck:
    """Residuals of the two readings of ``Γ_t (α^t A) Γ_?`` against exact ``α_P^t A``."""

    adjoint_residual: float
    literal_residual: float


def cocycle_conjugation_check(
    h: LocalOperator,
    p: LocalOperator,
    a: LocalOperator,
    t: float,
    order: int = DYSON_ORDER,
    quad_points: int = DYSON_POINTS,
) -> ConjugationCheck:
    """Compare ``Γ_t α^t(A) Γ_t^*`` and ``Γ_t α^t(A) Γ_{-t}`` with the exact perturbed flow."""
    h, p, a = _common(h, p, a)
    exact = perturbed_evolve(h, p, a, t).matrix
    free = Evolution(h)(a, t).matrix
    g_t = dyson_cocycle(h, p, t, order, quad_points).matrix
    g_minus = dyson_cocycle(h, p, -t, order, quad_points).matrix
    adj = g_t @ free @ linalg.dagger(g_t)
    lit = g_t @ free @ g_minus
    return ConjugationCheck(linalg.norm(adj - exact), linalg.norm(lit - exact))


def cocycle_residual(
    h: LocalOperator,
    p: LocalOperator,
    t: float,
    s: float,
    order: int = DYSON_ORDER,
    quad_points: int = DYSON_POINTS,
) -> tuple[float, float]:
    """``||Γ_{t+s} - Γ_t α^t(Γ_s)||`` and the combined truncation majorant."""
    h, p = _common(h, p)
    g_ts = dyson_cocycle(h, p, t + s, order, quad_points)
    g_t = dyson_cocycle(h, p, t, order, quad_points)
    g_s = dyson_cocycle(h, p, s, order, quad_points)
    shifted = Evolution(h)(LocalOperator(h.lattice, h.region, g_s.matrix), t).matrix
    residual = linalg.norm(g_ts.matrix - g_t.matrix @ shifted)
    # exact Γ_s is unitary and every partial sum obeys |Γ_t| <= e^{||P|| |t|}
    x = p.norm()
    bound = g_ts.tail_bound + g_t.tail_bound + exp(x * abs(t)) * g_s.tail_bound
    return residual, bound + 1e-13


@dataclass(frozen=True)
class MollerResult:
    value: LocalOperator
    probe: float
    intertwining_defect: float


def moller_approximant(
    h: LocalOperator, p: LocalOperator, a: LocalOperator, t: float, probe: float = 1.0
) -> MollerResult:
    """Finite-time wave operator ``γ^{(t)}(A) = α_P^{-t} α^t A``.

    The defect ``||γ^{(t)}(α^s A) - α_P^s(γ^{(t)} A)||`` at ``s = probe`` is
    reported; it does not vanish in finite volume.
    """
    h, p, a = _common(h, p, a)
    free = Evolution(h)
    pert = Evolution(h + p)

    def gamma(x: LocalOperator) -> LocalOperator:
        return pert(free(x, t), -t)

    value = gamma(a)
    defect = linalg.norm(gamma(free(a, probe)).matrix - pert(value, probe).matrix)
    return MollerResult(value, probe, defect)


def moller_increments(
    h: LocalOperator, p: LocalOperator, a: LocalOperator, t_grid: Sequence[float]
) -> list[float]:
    """Cauchy increments ``||γ^{(t_{k+1})} A - γ^{(t_k)} A||`` along a time grid."""
    values = [moller_approximant(h, p, a, t).value.matrix for t in t_grid]
    return [linalg.norm(b - c) for c, b in zip(values, values[1:])]
