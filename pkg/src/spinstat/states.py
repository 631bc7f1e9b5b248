"""
States as density matrices: Gibbs states, the KMS identity, relative entropy
and the perturbed equilibrium state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .dynamics import DYSON_POINTS, Evolution, _common, ordered_series
from .errors import (
    DimensionMismatch,
    InvalidState,
    NonFaithfulReference,
    OrderTooHigh,
    OutsideStrip,
    OverlappingRegions,
    RegionNotContained,
)
from .quasilocal import Lattice, LocalOperator, Region, embed, union

STATE_TOL = 1e-12
FAITHFUL_TOL = 1e-12
PERTURBATION_ORDER_CAP = 8


@dataclass(frozen=True, eq=False)
class DensityState:
    """Positive unit-trace matrix on ``H_region``."""

    lattice: Lattice
    region: Region
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        region = self.lattice.check_region(Region(self.region))
        object.__setattr__(self, "region", region)
        m = linalg.as_matrix(self.matrix)
        d = self.lattice.hilbert_dim(region)
        if m.shape != (d, d):
            raise DimensionMismatch(f"region {list(region)} needs a {d}x{d} matrix, got {m.shape}")
        scale = max(np.linalg.norm(m), 1.0)
        if linalg.hermitian_defect(m) > STATE_TOL * scale:
            raise InvalidState("density matrix is not self-adjoint")
        m = 0.5 * (m + linalg.dagger(m))
        w = np.linalg.eigvalsh(m)
        if w[0] < -STATE_TOL:
            raise InvalidState(f"density matrix has eigenvalue {w[0]:.3e} < 0")
        if abs(np.trace(m).real - 1.0) > STATE_TOL:
            raise InvalidState(f"trace {np.trace(m).real!r} differs from 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "eigenvalues", w)

    eigenvalues: np.ndarray = field(init=False, repr=False)

    @classmethod
    def from_matrix(cls, lattice: Lattice, region, m, normalize: bool = False) -> DensityState:
        m = linalg.as_matrix(m)
        if normalize:
            m = m / np.trace(m).real
        return cls(lattice, Region(region), m)

    @classmethod
    def maximally_mixed(cls, lattice: Lattice, region) -> DensityState:
        region = Region(region)
        d = lattice.hilbert_dim(region)
        return cls(lattice, region, np.eye(d, dtype=complex) / d)

    @property
    def faithful(self) -> bool:
        return bool(self.eigenvalues[0] > FAITHFUL_TOL)

    @cached_property
    def spectrum(self) -> linalg.SpectralDecomposition:
        return linalg.spectral_decompose(self.matrix)

    def as_operator(self) -> LocalOperator:
        return LocalOperator(self.lattice, self.region, self.matrix)

    def reduced(self, region) -> DensityState:
        """Marginal on a subregion (partial trace)."""
        region = Region(region)
        if not region <= self.region:
            raise RegionNotContained(f"{region} is not inside {self.region}")
        keep = [self.region.index(s) for s in region]
        m = linalg.partial_trace(self.matrix, self.lattice.dims(self.region), keep)
        return DensityState(self.lattice, region, m)


def gibbs_state(h: LocalOperator, beta: float) -> DensityState:
    """``e^{-βH} / Tr e^{-βH}``; negative ``beta`` is allowed."""
    dec = linalg.spectral_decompose(h.matrix)
    expo = -beta * dec.eigenvalues
    weights = np.exp(expo - expo.max())
    weights /= weights.sum()
    return DensityState(h.lattice, h.region, dec.apply(lambda _: weights))


def expect(state: DensityState, a: LocalOperator) -> complex:
    """``Tr(ρ A)`` with ``A`` embedded into the state's region."""
    if not a.region <= state.region:
        raise RegionNotContained(f"observable on {a.region} is not inside the state region {state.region}")
    m = embed(a, state.region).matrix
    return complex(np.einsum("ij,ji->", state.matrix, m))


def evolve_state(state: DensityState, h: LocalOperator, t: float) -> DensityState:
    """Density matrix of ``ρ∘α^t``, i.e. ``e^{-itH} ρ e^{itH}``."""
    ev = Evolution(embed(h, state.region) if h.region <= state.region else h)
    m = ev(state.as_operator(), -t).matrix
    return DensityState(state.lattice, ev.h.region, m)


def kms_residual(h: LocalOperator, beta: float, a: LocalOperator, b: LocalOperator) -> float:
    """``|ρ(A α^{iβ}(B)) − ρ(BA)|`` for the Gibbs state of ``H`` at ``β``."""
    h, a, b = _common(h, a, b)
    rho = gibbs_state(h, beta)
    shifted = Evolution(h)(b, 1j * beta)
    return abs(expect(rho, a @ shifted) - expect(rho, b @ a))


def kms_scale(h: LocalOperator, beta: float, a: LocalOperator, b: LocalOperator) -> float:
    """``||A|| ||B|| e^{|β| ||H||}``, the natural size of the KMS residual."""
    return a.norm() * b.norm() * float(np.exp(abs(beta) * h.norm()))


def strip_function(h: LocalOperator, beta: float, a: LocalOperator, b: LocalOperator, z: complex) -> complex:
    """``F_AB(z) = ρ(A α^z(B))`` on the closed strip between 0 and ``iβ``."""
    z = complex(z)
    lo, hi = sorted((0.0, float(beta)))
    if not lo - 1e-15 <= z.imag <= hi + 1e-15:
        raise OutsideStrip(f"Im z = {z.imag:g} is outside [{lo:g}, {hi:g}]")
    h, a, b = _common(h, a, b)
    rho = gibbs_state(h, beta)
    return expect(rho, a @ Evolution(h)(b, z))


def strip_sup(
    h: LocalOperator,
    beta: float,
    a: LocalOperator,
    b: LocalOperator,
    re_grid: Sequence[float],
    n_im: int = 20,
) -> tuple[float, float]:
    """Largest ``|F_AB|`` on a rectangular strip grid, and the bound ``||A|| ||B||``."""
    h, a, b = _common(h, a, b)
    rho = gibbs_state(h, beta)
    ev = Evolution(h)
    # F(z) = Σ_jk ρ'_kj A'_jk... evaluated in the eigenbasis of H
    ra = ev.eigen(LocalOperator(h.lattice, h.region, rho.matrix) @ a)
    bb = ev.eigen(b)
    coeff = ra.T * bb  # coeff[k, j] = (ρA)'_jk B'_kj
    best = 0.0
    for y in np.linspace(0.0, beta, n_im):
        for x in re_grid:
            z = complex(x, y)
            val = np.sum(coeff * np.exp(1j * z * ev.frequencies))
            best = max(best, abs(val))
    return float(best), a.norm() * b.norm()


def product_state(states: Sequence[DensityState]) -> DensityState:
    """Tensor product of states on disjoint regions, factors in site order."""
    if not states:
        raise ValueError("need at least one state")
    lattice = states[0].lattice
    for i, s in enumerate(states):
        if s.lattice != lattice:
            raise DimensionMismatch("states live on different lattices")
        for t in states[i + 1:]:
            if not s.region.isdisjoint(t.region):
                raise OverlappingRegions(f"{s.region} and {t.region} overlap")
    m = linalg.tensor_product(*(s.matrix for s in states))
    order = [site for s in states for site in s.region]
    total = union(s.region for s in states)
    dims = [lattice.dim(x) for x in order]
    perm = [order.index(x) for x in total]
    return DensityState(lattice, total, linalg.permute_factors(m, dims, perm))


def relative_entropy(mu: DensityState, nu: DensityState) -> float:
    """``Ent(μ|ν) = −tr(μ log μ − μ log ν)``, which is ``<= 0``.

    ``0 log 0 = 0`` on the kernel of ``μ``; ``ν`` must be faithful.
    """
    if mu.region != nu.region:
        raise DimensionMismatch(f"states on {mu.region} and {nu.region}")
    if not nu.faithful:
        raise NonFaithfulReference("reference state has a zero eigenvalue")
    p = np.clip(mu.eigenvalues, 0.0, None)
    mask = p > 0
    ent_mu = float(np.sum(p[mask] * np.log(p[mask])))
    log_nu = nu.spectrum.apply(np.log)
    cross = float(np.einsum("ij,ji->", mu.matrix, log_nu).real)
    return -(ent_mu - cross)


def von_neumann_entropy(state: DensityState) -> float:
    p = state.eigenvalues[state.eigenvalues > 0]
    return float(-np.sum(p * np.log(p)))


def trace_distance(a: DensityState, b: DensityState) -> float:
    """Total-variation distance ``½ ||ρ − σ||_1``."""
    if a.region != b.region:
        raise DimensionMismatch(f"states on {a.region} and {b.region}")
    return 0.5 * linalg.norm(a.matrix - b.matrix, "trace")


def perturbed_state_direct(h: LocalOperator, beta: float, p: LocalOperator) -> DensityState:
    """KMS state at value β of the dynamics generated by ``H + P``."""
    h, p = _common(h, p)
    linalg.hermitian_part(p.matrix)
    return gibbs_state(h + p, beta)


def perturbed_state_series(
    h: LocalOperator,
    beta: float,
    p: LocalOperator,
    order: int = 4,
    quad_points: int = DYSON_POINTS,
    ordered: bool = True,
) -> DensityState:
    """Perturbed state from the imaginary-time expansion of ``Ω_P``.

    ``Ω_P = Σ_n (−1)^n ∫ π((α^{is_n}P)⋯(α^{is_1}P)) Ω`` over
    ``0 <= s_n <= … <= s_1 <= β/2`` in the GNS space of ``gibbs_state(h, β)``,
    and ``ρ_P(A) = (Ω_P, π(A)Ω_P)/(Ω_P, Ω_P)``. With ``ordered=False`` each
    ``s_j`` ranges independently over ``[0, β/2]`` instead.
    """
    from .modular import gns_build

    if order < 0:
        raise ValueError("order must be nonnegative")
    if order > PERTURBATION_ORDER_CAP:
        raise OrderTooHigh(f"order {order} exceeds the cap {PERTURBATION_ORDER_CAP}")
    if ordered and quad_points ** order > 1 << 24:
        raise OrderTooHigh(f"{quad_points}^{order} quadrature nodes; lower quad_points or order")
    h, p = _common(h, p)
    linalg.hermitian_part(p.matrix)
    rho = gibbs_state(h, beta)
    rep = gns_build(rho)
    ev = Evolution(h)
    g = ev.eigen(p)
    if ordered:
        y = ordered_series(g, ev.frequencies, -1.0, beta / 2, order, quad_points, -1.0)
    else:
        k = ordered_series(g, ev.frequencies, -1.0, beta / 2, 1, quad_points, 1.0) - np.eye(len(g))
        y = sum(np.linalg.matrix_power(-k, n) for n in range(order + 1))
    e = ev.spectrum.from_eigenbasis(y)
    omega_p = rep.left_action(e) @ rep.omega
    return DensityState(h.lattice, h.region, rep.vector_state(omega_p))
