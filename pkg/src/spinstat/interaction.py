"""
Interactions, Hamiltonians and reservoir partitions.

An :class:`Interaction` maps finite regions to self-adjoint matrices on those
regions. Terms are stored unembedded and embedded on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import linalg
from .errors import DimensionMismatch, InvalidPartition, InvalidSize, NotHermitian
from .quasilocal import Lattice, LocalOperator, Region, embed, union

TERM_HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Interaction:
    lattice: Lattice
    terms: Mapping[Region, np.ndarray]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        clean = {}
        for region, m in self.terms.items():
            region = self.lattice.check_region(Region(region))
            if not region:
                raise ValueError("interaction terms on the empty region are not allowed")
            m = linalg.as_matrix(m).copy()
            d = self.lattice.hilbert_dim(region)
            if m.shape != (d, d):
                raise DimensionMismatch(f"term on {list(region)} must be {d}x{d}, got {m.shape}")
            if linalg.hermitian_defect(m) > TERM_HERMITIAN_RTOL * np.linalg.norm(m):
                raise NotHermitian(f"term on {list(region)} is not self-adjoint")
            m = 0.5 * (m + linalg.dagger(m))
            m.setflags(write=False)
            clean[region] = clean[region] + m if region in clean else m
        object.__setattr__(self, "terms", MappingProxyType(dict(sorted(clean.items(), key=_term_key))))

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def items(self):
        return self.terms.items()

    def term(self, region: Iterable[int]) -> LocalOperator:
        region = Region(region)
        return LocalOperator(self.lattice, region, self.terms[region])

    def meeting(self, region: Region) -> list[Region]:
        """Regions of the terms that intersect ``region``."""
        region = Region(region)
        return [x for x in self.terms if not x.isdisjoint(region)]

    def inside(self, region: Region) -> list[Region]:
        region = Region(region)
        return [x for x in self.terms if x <= region]

    def restrict(self, region: Region) -> Interaction:
        """Sub-interaction of the terms contained in ``region``."""
        return Interaction(self.lattice, {x: self.terms[x] for x in self.inside(region)})

    def scaled(self, c: float) -> Interaction:
        return Interaction(self.lattice, {x: c * m for x, m in self.terms.items()})

    def __add__(self, other: Interaction) -> Interaction:
        if other.lattice != self.lattice:
            raise DimensionMismatch("interactions live on different lattices")
        merged = dict(self.terms)
        for x, m in other.terms.items():
            merged[x] = merged[x] + m if x in merged else m
        return Interaction(self.lattice, merged)

    def sum_embedded(self, regions: Sequence[Region], target: Region) -> LocalOperator:
        """Σ of the listed terms embedded in ``target`` (memoized)."""
        key = (tuple(regions), Region(target))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        d = self.lattice.hilbert_dim(target)
        acc = np.zeros((d, d), dtype=complex)
        for x in regions:
            acc += embed(self.term(x), target).matrix
        op = LocalOperator(self.lattice, Region(target), acc)
        if len(self._cache) < 4096:
            self._cache[key] = op
        return op


def _term_key(item):
    region, _ = item
    return (len(region), region.sites)


@dataclass(frozen=True)
class ReservoirPartition:
    """Split ``L = S + R_1 + ... + R_m`` with an inverse temperature per reservoir.

    Reservoirs are indexed from 0 in Python.
    """

    small_system: Region
    reservoirs: tuple[Region, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        s = Region(self.small_system)
        res = tuple(Region(r) for r in self.reservoirs)
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "small_system", s)
        object.__setattr__(self, "reservoirs", res)
        object.__setattr__(self, "betas", betas)
        if not s:
            raise InvalidPartition("the small system must be nonempty")
        if len(betas) != len(res):
            raise InvalidPartition(f"{len(res)} reservoirs but {len(betas)} inverse temperatures")
        if any(not b > 0 for b in betas):
            raise InvalidPartition(f"inverse temperatures must be positive: {betas}")
        parts = (s,) + res
        for i, a in enumerate(parts):
            if i > 0 and not a:
                raise InvalidPartition(f"reservoir {i - 1} is empty")
            for b in parts[i + 1:]:
                if not a.isdisjoint(b):
                    raise InvalidPartition(f"regions {a} and {b} overlap")

    @property
    def regions(self) -> tuple[Region, ...]:
        return (self.small_system,) + self.reservoirs

    def check_cover(self, lattice: Lattice) -> None:
        covered = union(self.regions)
        if covered != lattice.region:
            raise InvalidPartition(
                f"partition covers {list(covered)} but the lattice has sites {list(lattice.sites)}"
            )

    def moved_to_system(self, site: int) -> ReservoirPartition:
        """Same partition with ``site`` taken from its reservoir into ``S``."""
        res = []
        found = False
        for r in self.reservoirs:
            if site in r:
                found = True
                r = r - Region([site])
            res.append(r)
        if not found:
            raise InvalidPartition(f"site {site} is not in any reservoir")
        return ReservoirPartition(self.small_system | Region([site]), tuple(res), self.betas)


def lambda_norm(phi: Interaction, lam: float) -> float:
    """``Σ_n e^{nλ} sup_x Σ_{X∋x, |X|=n+1} ||Φ(X)||`` over the finite lattice."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    by_size: dict[int, dict[int, float]] = {}
    for x, m in phi.items():
        size = by_size.setdefault(len(x), {})
        nm = linalg.norm(m)
        for site in x:
            size[site] = size.get(site, 0.0) + nm
    return float(sum(exp((k - 1) * lam) * max(per.values()) for k, per in by_size.items()))


def hamiltonian(phi: Interaction, region: Iterable[int] | None = None) -> LocalOperator:
    """``H(Λ) = Σ_{X⊆Λ} Φ(X)`` on ``Λ`` (the whole lattice by default)."""
    region = phi.lattice.region if region is None else phi.lattice.check_region(Region(region))
    return phi.sum_embedded(phi.inside(region), region)


def boundary_energy(phi: Interaction, region: Iterable[int]) -> LocalOperator:
    """``W(Λ)``: terms meeting both ``Λ`` and its complement, on the union of their supports."""
    region = Region(region)
    crossing = [x for x in phi.meeting(region) if not x <= region]
    return phi.sum_embedded(crossing, union(crossing))


def surface_term(phi: Interaction, partition: ReservoirPartition) -> LocalOperator:
    """``V = Σ_{X∩S≠∅} Φ(X)`` on the union of the supports of those terms."""
    partition.check_cover(phi.lattice)
    touching = phi.meeting(partition.small_system)
    return phi.sum_embedded(touching, union(touching) | partition.small_system)


@dataclass(frozen=True)
class SurfaceBound:
    weight: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.weight <= self.bound * (1 + 1e-12)


def surface_term_bound(phi: Interaction, partition: ReservoirPartition, lam: float) -> SurfaceBound:
    """Compare the λ-weight of ``V`` with ``||Φ||_λ card S``."""
    from .quasilocal import lambda_weight

    v = surface_term(phi, partition)
    return SurfaceBound(lambda_weight(v, lam).value, lambda_norm(phi, lam) * len(partition.small_system))


def check_a2(phi: Interaction, partition: ReservoirPartition) -> bool:
    """True iff no term avoiding ``S`` touches two different reservoirs."""
    for x in phi:
        if not x.isdisjoint(partition.small_system):
            continue
        touched = sum(1 for r in partition.reservoirs if not x.isdisjoint(r))
        if touched > 1:
            return False
    return True


def build_ising_chain(n: int, J: float, h: float, first: int = 1) -> Interaction:
    """Open transverse-field chain: ``h σ_z`` on every site, ``J σ_x σ_x`` on every bond."""
    if n < 1:
        raise InvalidSize(f"chain needs at least one site, got {n}")
    lattice = Lattice.chain(n, 2, first)
    terms: dict[Region, np.ndarray] = {}
    for s in lattice.sites:
        terms[Region([s])] = h * linalg.SIGMA_Z
    bond = np.kron(linalg.SIGMA_X, linalg.SIGMA_X)
    for s in lattice.sites[:-1]:
        terms[Region([s, s + 1])] = J * bond
    return Interaction(lattice, terms)


def build_heisenberg_chain(n: int, J: float, h: float = 0.0, first: int = 1) -> Interaction:
    """Open XXX chain with a uniform longitudinal field."""
    if n < 1:
        raise InvalidSize(f"chain needs at least one site, got {n}")
    lattice = Lattice.chain(n, 2, first)
    terms: dict[Region, np.ndarray] = {}
    if h:
        for s in lattice.sites:
            terms[Region([s])] = h * linalg.SIGMA_Z
    bond = sum(np.kron(p, p) for p in (linalg.SIGMA_X, linalg.SIGMA_Y, linalg.SIGMA_Z))
    for s in lattice.sites[:-1]:
        terms[Region([s, s + 1])] = J * bond
    return Interaction(lattice, terms)
