"""
Reservoir setups at finite truncation: reference product state, energy
currents, entropy production, steady states by dephasing and the entropy
balance identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import exp
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from . import linalg
from .dynamics import Evolution
from .errors import BadReservoirIndex, DimensionMismatch, DomainError, InvalidPartition, NonFaithfulState, NotUnitary
from .interaction import (
    Interaction,
    ReservoirPartition,
    build_ising_chain,
    check_a2,
    hamiltonian,
    lambda_norm,
    surface_term,
)
from .quasilocal import LocalOperator, Region, commutator, embed
from .states import DensityState, gibbs_state, product_state, relative_entropy

QUAD_PER_UNIT_TIME = 200
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class NessSetup:
    """Interaction, partition ``L = S + R_1 + …`` and optional boundary terms.

    ``boundary_terms[a]`` is an interaction supported inside reservoir ``a``;
    it enters both the reference state (through ``β_a(H_a + B_a)``) and the
    full dynamics ``H_Λ + Σ_a B_a``.
    """

    interaction: Interaction
    partition: ReservoirPartition
    boundary_terms: Mapping[int, Interaction] | None = None

    def __post_init__(self):
        self.partition.check_cover(self.interaction.lattice)
        if not check_a2(self.interaction, self.partition):
            raise InvalidPartition("a term avoiding the small system couples two reservoirs")
        bt = dict(self.boundary_terms or {})
        for a, psi in bt.items():
            self._check_index(a)
            r = self.partition.reservoirs[a]
            outside = [x for x in psi if not x <= r]
            if outside:
                raise InvalidPartition(f"boundary term on {outside[0]} leaves reservoir {a} = {r}")
        object.__setattr__(self, "boundary_terms", bt)

    @classmethod
    def build(cls, phi: Interaction, partition: ReservoirPartition, boundary_terms=None) -> NessSetup:
        return cls(phi, partition, boundary_terms)

    @property
    def lattice(self):
        return self.interaction.lattice

    @property
    def region(self) -> Region:
        return self.lattice.region

    @property
    def n_reservoirs(self) -> int:
        return len(self.partition.reservoirs)

    def _check_index(self, a: int) -> int:
        if not isinstance(a, (int, np.integer)) or not 0 <= a < len(self.partition.reservoirs):
            raise BadReservoirIndex(f"reservoir index {a!r} out of range 0..{len(self.partition.reservoirs) - 1}")
        return int(a)

    def reservoir_hamiltonian(self, a: int) -> LocalOperator:
        """``H_a`` on the full lattice."""
        a = self._check_index(a)
        return embed(hamiltonian(self.interaction, self.partition.reservoirs[a]), self.region)

    def boundary_operator(self, a: int) -> LocalOperator:
        a = self._check_index(a)
        psi = self.boundary_terms.get(a)
        if psi is None or not len(psi):
            return LocalOperator.zero(self.lattice, self.region)
        return embed(hamiltonian(psi, self.partition.reservoirs[a]), self.region)

    @cached_property
    def h_lattice(self) -> LocalOperator:
        return hamiltonian(self.interaction)

    @cached_property
    def h_full(self) -> LocalOperator:
        """Generator ``H_Λ + Σ_a B_a`` of the coupled dynamics."""
        h = self.h_lattice
        for a in self.boundary_terms:
            h = h + self.boundary_operator(a)
        return h

    @cached_property
    def evolution(self) -> Evolution:
        return Evolution(self.h_full)

    @cached_property
    def coupling(self) -> LocalOperator:
        """``V = Σ_{X∩S≠∅} Φ(X)`` on the full lattice."""
        return embed(surface_term(self.interaction, self.partition), self.region)

    @cached_property
    def reference_state(self) -> DensityState:
        """``σ``: normalized trace on ``S`` times ``gibbs(β_a(H_a + B_a))`` on each reservoir."""
        parts = [DensityState.maximally_mixed(self.lattice, self.partition.small_system)]
        for a, (r, beta) in enumerate(zip(self.partition.reservoirs, self.partition.betas)):
            h_a = hamiltonian(self.interaction, r)
            psi = self.boundary_terms.get(a)
            if psi is not None and len(psi):
                h_a = h_a + hamiltonian(psi, r)
            parts.append(gibbs_state(h_a, beta))
        return product_state(parts)

    @cached_property
    def log_reference(self) -> LocalOperator:
        sigma = self.reference_state
        if not sigma.faithful:
            raise NonFaithfulState("reference state is not faithful")
        return LocalOperator(self.lattice, sigma.region, sigma.spectrum.apply(np.log))

    def reference_generator(self) -> LocalOperator:
        """``-log σ`` up to a constant: ``Σ_a β_a (H_a + B_a)``."""
        g = LocalOperator.zero(self.lattice, self.region)
        for a, beta in enumerate(self.partition.betas):
            g = g + beta * (self.reservoir_hamiltonian(a) + self.boundary_operator(a))
        return g

    def repartitioned(self, site: int) -> NessSetup:
        """Same interaction with ``site`` moved from its reservoir into ``S``."""
        part = self.partition.moved_to_system(site)
        bt = {}
        for a, psi in self.boundary_terms.items():
            r = part.reservoirs[a]
            kept = {x: m for x, m in psi.items() if x <= r}
            if kept:
                bt[a] = Interaction(self.lattice, kept)
        return NessSetup(self.interaction, part, bt)


def reservoir_current(setup: NessSetup, a: int) -> LocalOperator:
    """``i[H_Λ − Σ_b H_b, H_a]``, the energy flow into reservoir ``a``."""
    a = setup._check_index(a)
    rest = setup.h_lattice
    for b in range(setup.n_reservoirs):
        rest = rest - setup.reservoir_hamiltonian(b)
    return 1j * commutator(rest, setup.reservoir_hamiltonian(a))


@dataclass(frozen=True)
class CurrentBound:
    norm: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.norm <= self.bound * (1 + 1e-12)


def current_norm_bound(setup: NessSetup, a: int, lam: float) -> CurrentBound:
    """``||current_a||`` against ``2 card S e^λ ||Φ||_λ² / λ``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    c = reservoir_current(setup, a)
    nrm = lambda_norm(setup.interaction, lam)
    bound = 2 * len(setup.partition.small_system) * exp(lam) * nrm ** 2 / lam
    return CurrentBound(c.norm(), bound)


def entropy_production(state: DensityState, setup: NessSetup) -> float:
    """``Σ_a β_a state(current_a)``."""
    if state.region != setup.region:
        raise InvalidPartition(f"state lives on {state.region}, the lattice is {setup.region}")
    total = 0j
    for a, beta in enumerate(setup.partition.betas):
        total += beta * np.einsum("ij,ji->", state.matrix, reservoir_current(setup, a).matrix)
    return float(total.real)


def delta_beta_v(setup: NessSetup) -> LocalOperator:
    """``−δ_β(V) = −i[V, log σ]``."""
    return -1j * commutator(setup.coupling, setup.log_reference)


def _groups(w: np.ndarray, tol: float) -> np.ndarray:
    """Label sorted eigenvalues, starting a new group at every gap above ``tol``."""
    labels = np.zeros(len(w), dtype=int)
    if len(w) > 1:
        labels[1:] = np.cumsum(np.diff(w) > tol)
    return labels


def dephase(state: DensityState, h: LocalOperator, degeneracy_tol: float | None = None) -> DensityState:
    """``Σ_j P_j ρ P_j`` over the eigenprojections of ``h``.

    Eigenvalues closer than ``degeneracy_tol`` (default ``1e-9 ||h||``) share
    a projection.
    """
    h = embed(h, state.region) if h.region <= state.region else h
    dec = linalg.spectral_decompose(h.matrix)
    if degeneracy_tol is None:
        degeneracy_tol = DEGENERACY_RTOL * max(np.abs(dec.eigenvalues).max(initial=0.0), 0.0)
    labels = _groups(dec.eigenvalues, degeneracy_tol)
    mask = labels[:, None] == labels[None, :]
    m = dec.from_eigenbasis(dec.to_eigenbasis(embed(state.as_operator(), h.region).matrix) * mask)
    return DensityState(state.lattice, h.region, m)


def _time_series(setup: NessSetup, a: LocalOperator, state: DensityState | None = None):
    """Coefficients ``c_jk`` and frequencies with ``state(α^t A) = Σ c_jk e^{itω_jk}``."""
    ev = setup.evolution
    rho = setup.reference_state if state is None else state
    r = ev.spectrum.to_eigenbasis(rho.matrix)
    x = ev.eigen(a)
    return (r.T * x).ravel(), ev.frequencies.ravel()


def _evaluate(coeff: np.ndarray, freq: np.ndarray, times: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    out = np.empty(len(times), dtype=complex)
    step = max(1, chunk // max(1, len(coeff)))
    for lo in range(0, len(times), step):
        t = times[lo:lo + step]
        out[lo:lo + step] = np.exp(1j * t[:, None] * freq[None, :]) @ coeff
    return out


def cesaro_average(setup: NessSetup, a: LocalOperator, T: float, samples: int = 2001) -> complex:
    """Trapezoidal ``(1/T)∫_0^T σ(α^t A) dt`` on ``samples`` equispaced points."""
    if not T > 0:
        raise ValueError("T must be positive")
    if samples < 2:
        raise ValueError("samples must be at least 2")
    coeff, freq = _time_series(setup, a)
    times = np.linspace(0.0, T, samples)
    vals = _evaluate(coeff, freq, times)
    return complex(trapezoid(vals, times) / T)


def time_average(setup: NessSetup, a: LocalOperator, T: float, state: DensityState | None = None) -> complex:
    """Exact ``(1/T)∫_0^T state(α^t A) dt`` (``σ`` by default) from the spectral sum."""
    if not T > 0:
        raise ValueError("T must be positive")
    coeff, freq = _time_series(setup, a, state)
    z = 1j * freq * T
    small = np.abs(z) < 1e-8
    with np.errstate(all="ignore"):
        phi = np.where(small, 1.0 + z / 2, np.expm1(z) / np.where(small, 1.0, z))
    return complex(np.sum(coeff * phi))


def cesaro_error_bound(setup: NessSetup, a: LocalOperator, T: float) -> float:
    """``2/(T·gap) ||σ||_F ||A||_F`` for the distance of the exact average to the dephased value."""
    w = setup.evolution.spectrum.eigenvalues
    tol = DEGENERACY_RTOL * max(np.abs(w).max(initial=0.0), 0.0)
    labels = _groups(w, tol)
    centers = np.array([w[labels == g].mean() for g in range(labels.max() + 1)])
    if len(centers) < 2:
        return 0.0
    gap = float(np.diff(centers).min())
    return 2.0 / (T * gap) * np.linalg.norm(setup.reference_state.matrix) * np.linalg.norm(
        embed(a, setup.region).matrix
    )


@dataclass(frozen=True)
class BalanceReport:
    T: float
    lhs: float
    rhs: float
    points: int

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def _simpson_points(T: float, quad_points: int | None) -> int:
    n = quad_points if quad_points is not None else max(3, int(np.ceil(QUAD_PER_UNIT_TIME * T)) + 1)
    return n + 1 if n % 2 == 0 else n


def evolved_reference(setup: NessSetup, T: float) -> DensityState:
    """Density matrix of ``σ∘α^T``."""
    ev = setup.evolution
    sigma = setup.reference_state
    m = ev(sigma.as_operator(), -T).matrix
    return DensityState(setup.lattice, setup.region, m)


def entropy_balance(setup: NessSetup, T: float, quad_points: int | None = None) -> BalanceReport:
    """Both sides of ``∫_0^T (σ∘α^t)(−δ_β V) dt = −Ent(σ∘α^T | σ)``.

    The left side uses composite Simpson on ``quad_points`` nodes (default
    200 per unit time, rounded up to an odd count); the right side is the
    relative entropy of the exactly evolved state.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    n = _simpson_points(T, quad_points)
    x = delta_beta_v(setup)
    coeff, freq = _time_series(setup, x)
    times = np.linspace(0.0, T, n)
    vals = _evaluate(coeff, freq, times).real
    lhs = float(simpson(vals, x=times))
    rhs = -relative_entropy(evolved_reference(setup, T), setup.reference_state)
    return BalanceReport(float(T), lhs, float(rhs), n)


def transient_production(setup: NessSetup, T: float) -> float:
    """``(1/T)∫_0^T σ(α^t(−δ_β V)) dt`` by exact spectral integration."""
    return float(time_average(setup, delta_beta_v(setup), T).real)


def steady_state(setup: NessSetup) -> DensityState:
    """Finite-volume NESS: ``σ`` dephased in the eigenbasis of the full generator."""
    return dephase(setup.reference_state, setup.h_full)


def reference_interaction(setup: NessSetup) -> Interaction:
    """``Σ_a β_a (Φ_a + Ψ_a)``, whose dynamics leaves ``σ`` invariant."""
    terms: dict[Region, np.ndarray] = {}
    for a, (r, beta) in enumerate(zip(setup.partition.reservoirs, setup.partition.betas)):
        for x in setup.interaction.inside(r):
            terms[x] = terms.get(x, 0) + beta * setup.interaction.terms[x]
        psi = setup.boundary_terms.get(a)
        if psi is not None:
            for x, m in psi.items():
                terms[x] = terms.get(x, 0) + beta * m
    return Interaction(setup.lattice, terms)


@dataclass(frozen=True)
class KleinReport:
    lhs: float
    rhs: float
    scale: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + 1e-12 * self.scale


def klein_check(a, u, phi: Callable[[np.ndarray], np.ndarray]) -> KleinReport:
    """``tr(φ(A) U A U^{-1}) <= tr(φ(A) A)`` for self-adjoint ``A``, unitary ``U``, increasing ``φ``."""
    dec = linalg.spectral_decompose(a)
    u = linalg.as_matrix(u)
    n = u.shape[0]
    if u.shape != (dec.dim, dec.dim):
        raise DimensionMismatch(f"U has shape {u.shape}, A is {dec.dim}x{dec.dim}")
    if np.linalg.norm(linalg.dagger(u) @ u - np.eye(n), 2) > 1e-10:
        raise NotUnitary("U is not unitary within 1e-10")
    values = np.asarray(phi(dec.eigenvalues), dtype=float)
    if np.any(np.diff(values) < -1e-12 * max(1.0, np.abs(values).max())):
        raise DomainError("phi is not increasing on the spectrum of A")
    fa = (dec.basis * values) @ linalg.dagger(dec.basis)
    am = dec.reconstruct()
    lhs = np.trace(fa @ u @ am @ linalg.dagger(u)).real
    rhs = np.trace(fa @ am).real
    scale = max(1.0, np.linalg.norm(fa) * np.linalg.norm(am))
    return KleinReport(float(lhs), float(rhs), float(scale))


def chain_setup(
    left: int,
    system: int,
    right: int,
    J: float,
    h: float,
    betas: Sequence[float],
) -> NessSetup:
    """Ising chain ``left + system + right`` with the small system in between.

    Empty sides are omitted, so ``chain_setup(0, 1, 1, …)`` has one reservoir
    and ``betas`` lists one inverse temperature per nonempty side, left first.
    """
    if system < 1 or left < 0 or right < 0:
        raise InvalidPartition("need system >= 1 and nonnegative reservoir sizes")
    n = left + system + right
    phi = build_ising_chain(n, J, h)
    sites = list(phi.lattice.sites)
    s = Region(sites[left:left + system])
    res = [Region(sites[:left])] if left else []
    if right:
        res.append(Region(sites[left + system:]))
    if len(betas) != len(res):
        raise InvalidPartition(f"{len(res)} reservoirs but {len(betas)} inverse temperatures")
    return NessSetup(phi, ReservoirPartition(s, tuple(res), tuple(betas)))


def chain_family(ks: Sequence[int], J: float, h: float, betas: tuple[float, float]) -> list[NessSetup]:
    """``k + 1 + k`` chains for each ``k``."""
    return [chain_setup(k, 1, k, J, h, betas) for k in ks]


@dataclass(frozen=True)
class TrendRow:
    k: int
    T: float
    transient: float
    steady: float


def positivity_trend(family: Sequence[NessSetup], T_grid: Sequence[float]) -> list[TrendRow]:
    """Transient and steady-state entropy production for each setup and time."""
    rows = []
    for setup in family:
        k = max((len(r) for r in setup.partition.reservoirs), default=0)
        steady = entropy_production(steady_state(setup), setup)
        for T in T_grid:
            rows.append(TrendRow(k, float(T), transient_production(setup, T), steady))
    return rows
