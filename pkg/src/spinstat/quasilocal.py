"""
Lattice geometry and region-tagged operators.

A :class:`LocalOperator` is a matrix acting on ``H_X = ⊗_{x∈X} H_x`` for a
finite region ``X``, with tensor factors always in ascending site order.
Operators on different regions are combined by embedding both into the union
(``A -> A ⊗ 1``), so ``a + b`` and ``a @ b`` work across supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, prod
from typing import Iterable, Iterator

import numpy as np

from . import linalg
from .errors import DimensionMismatch, InvalidSize, RegionNotContained


@dataclass(frozen=True, init=False)
class Region:
    """Sorted, duplicate-free tuple of site ids. The empty region means scalars."""

    sites: tuple[int, ...]

    def __init__(self, sites: Iterable[int] = ()):
        if isinstance(sites, Region):
            sites = sites.sites
        object.__setattr__(self, "sites", tuple(sorted({int(s) for s in sites})))

    def __iter__(self) -> Iterator[int]:
        return iter(self.sites)

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, site) -> bool:
        return site in self.sites

    def __bool__(self) -> bool:
        return bool(self.sites)

    def __or__(self, other: Region) -> Region:
        return Region(self.sites + Region(other).sites)

    def __and__(self, other: Region) -> Region:
        other = set(Region(other).sites)
        return Region(s for s in self.sites if s in other)

    def __sub__(self, other: Region) -> Region:
        other = set(Region(other).sites)
        return Region(s for s in self.sites if s not in other)

    def __le__(self, other: Region) -> bool:
        return set(self.sites) <= set(Region(other).sites)

    def __lt__(self, other: Region) -> bool:
        return set(self.sites) < set(Region(other).sites)

    def issubset(self, other: Region) -> bool:
        return self <= other

    def isdisjoint(self, other: Region) -> bool:
        return set(self.sites).isdisjoint(Region(other).sites)

    def index(self, site: int) -> int:
        return self.sites.index(site)

    def subsets(self) -> Iterator[Region]:
        n = len(self.sites)
        for mask in range(1 << n):
            yield Region(self.sites[k] for k in range(n) if mask >> k & 1)

    def __repr__(self) -> str:
        return f"Region({list(self.sites)})"


def union(regions: Iterable[Region]) -> Region:
    out: set[int] = set()
    for r in regions:
        out.update(Region(r).sites)
    return Region(out)


@dataclass(frozen=True)
class Lattice:
    """Finite set of sites with a Hilbert-space dimension per site."""

    sites: tuple[int, ...]
    local_dims: tuple[int, ...]

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        dims = tuple(int(d) for d in self.local_dims)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "local_dims", dims)
        if len(sites) != len(dims):
            raise DimensionMismatch("one local dimension per site is required")
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError(f"site ids must be strictly increasing: {sites}")
        if any(d < 2 for d in dims):
            raise ValueError(f"local dimensions must be >= 2: {dims}")

    @classmethod
    def chain(cls, n: int, local_dim: int = 2, first: int = 1) -> Lattice:
        if n < 1:
            raise InvalidSize(f"chain needs at least one site, got {n}")
        return cls(tuple(range(first, first + n)), (local_dim,) * n)

    @property
    def region(self) -> Region:
        return Region(self.sites)

    def dim(self, site: int) -> int:
        try:
            return self.local_dims[self.sites.index(site)]
        except ValueError:
            raise RegionNotContained(f"site {site} is not in the lattice") from None

    def dims(self, region: Region) -> tuple[int, ...]:
        return tuple(self.dim(s) for s in Region(region))

    def hilbert_dim(self, region: Region | None = None) -> int:
        return prod(self.dims(self.region if region is None else region))

    def check_region(self, region: Region) -> Region:
        region = Region(region)
        missing = set(region.sites) - set(self.sites)
        if missing:
            raise RegionNotContained(f"sites {sorted(missing)} are not in the lattice")
        return region


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Operator on ``H_region``; factors in ascending site order."""

    lattice: Lattice
    region: Region
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        region = self.lattice.check_region(self.region)
        object.__setattr__(self, "region", region)
        m = linalg.as_matrix(self.matrix).copy()
        d = self.lattice.hilbert_dim(region)
        if m.shape != (d, d):
            raise DimensionMismatch(f"region {list(region)} needs a {d}x{d} matrix, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, lattice: Lattice, region: Iterable[int] = ()) -> LocalOperator:
        region = Region(region)
        return cls(lattice, region, np.eye(lattice.hilbert_dim(region), dtype=complex))

    @classmethod
    def zero(cls, lattice: Lattice, region: Iterable[int] = ()) -> LocalOperator:
        region = Region(region)
        d = lattice.hilbert_dim(region)
        return cls(lattice, region, np.zeros((d, d), dtype=complex))

    @classmethod
    def at(cls, lattice: Lattice, site: int, matrix) -> LocalOperator:
        return cls(lattice, Region([site]), matrix)

    @classmethod
    def product(cls, lattice: Lattice, factors: dict[int, np.ndarray]) -> LocalOperator:
        """Tensor product of single-site matrices keyed by site."""
        region = Region(factors)
        return cls(lattice, region, linalg.tensor_product(*(factors[s] for s in region)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.lattice.dims(self.region)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> LocalOperator:
        return LocalOperator(self.lattice, self.region, linalg.dagger(self.matrix))

    def embed(self, target: Iterable[int]) -> LocalOperator:
        return embed(self, Region(target))

    def norm(self, kind: linalg.NormKind = "operator") -> float:
        return linalg.norm(self.matrix, kind)

    def is_hermitian(self, rtol: float = linalg.HERMITIAN_RTOL) -> bool:
        return linalg.is_hermitian(self.matrix, rtol)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def _aligned(self, other: LocalOperator) -> tuple[np.ndarray, np.ndarray, Region]:
        if other.lattice != self.lattice:
            raise DimensionMismatch("operators live on different lattices")
        r = self.region | other.region
        return embed(self, r).matrix, embed(other, r).matrix, r

    def __add__(self, other: LocalOperator) -> LocalOperator:
        a, b, r = self._aligned(other)
        return LocalOperator(self.lattice, r, a + b)

    def __sub__(self, other: LocalOperator) -> LocalOperator:
        a, b, r = self._aligned(other)
        return LocalOperator(self.lattice, r, a - b)

    def __neg__(self) -> LocalOperator:
        return LocalOperator(self.lattice, self.region, -self.matrix)

    def __mul__(self, c) -> LocalOperator:
        if isinstance(c, LocalOperator):
            return NotImplemented
        return LocalOperator(self.lattice, self.region, complex(c) * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, c) -> LocalOperator:
        return LocalOperator(self.lattice, self.region, self.matrix / complex(c))

    def __matmul__(self, other: LocalOperator) -> LocalOperator:
        a, b, r = self._aligned(other)
        return LocalOperator(self.lattice, r, a @ b)

    def distance(self, other: LocalOperator, kind: linalg.NormKind = "operator") -> float:
        a, b, _ = self._aligned(other)
        return linalg.norm(a - b, kind)


def commutator(a: LocalOperator, b: LocalOperator) -> LocalOperator:
    x, y, r = a._aligned(b)
    return LocalOperator(a.lattice, r, x @ y - y @ x)


def embed(op: LocalOperator, target: Region) -> LocalOperator:
    """Identify ``op`` with ``op ⊗ 1`` on a larger region ``target``."""
    target = op.lattice.check_region(target)
    if not op.region <= target:
        raise RegionNotContained(f"{op.region} is not contained in {target}")
    if op.region == target:
        return op
    lattice = op.lattice
    rest = target - op.region
    m = np.kron(op.matrix, np.eye(lattice.hilbert_dim(rest), dtype=complex))
    current = list(op.region.sites) + list(rest.sites)
    dims = [lattice.dim(s) for s in current]
    perm = [current.index(s) for s in target.sites]
    return LocalOperator(lattice, target, linalg.permute_factors(m, dims, perm))


def conditional_expectation(op: LocalOperator, target: Region) -> LocalOperator:
    """Normalized partial trace of ``op`` onto ``target ⊆ op.region``."""
    target = Region(target)
    if not target <= op.region:
        raise RegionNotContained(f"{target} is not contained in {op.region}")
    if target == op.region:
        return op
    keep = [op.region.index(s) for s in target]
    traced = op.region - target
    m = linalg.partial_trace(op.matrix, op.dims, keep) / op.lattice.hilbert_dim(traced)
    return LocalOperator(op.lattice, target, m)


def local_decompose(op: LocalOperator, drop_zero: bool = True) -> dict[Region, LocalOperator]:
    """Canonical decomposition ``op = Σ_X Â_X`` into strictly supported pieces.

    ``Â_X = Σ_{Y⊆X} (-1)^{|X∖Y|} π_Y(op)``. Equivalently it is obtained by
    applying, for every site of ``op.region``, either the single-site
    expectation ``E_x`` (site not in ``X``) or ``1 - E_x`` (site in ``X``);
    these commute, and the second form costs one pass per site.
    Components whose Frobenius norm is below ``1e-14 ||op||_F`` are dropped
    unless ``drop_zero`` is false.
    """
    lattice = op.lattice
    sites = op.region.sites
    n = len(sites)
    dims = list(op.dims)
    # entries: (sites still carrying axes, sites kept in X, tensor)
    parts = [(list(sites), (), op.matrix.reshape(dims + dims) if n else op.matrix)]
    for k, site in enumerate(sites):
        d = dims[k]
        eye = np.eye(d, dtype=complex)
        nxt = []
        for present, kept, t in parts:
            m = len(present)
            p = present.index(site)
            tr = np.trace(t, axis1=p, axis2=p + m) / d
            rest = present[:p] + present[p + 1:]
            nxt.append((rest, kept, tr))
            shape = [1] * (2 * m)
            shape[p] = shape[p + m] = d
            back = np.expand_dims(np.expand_dims(tr, p), p + m) * eye.reshape(shape)
            nxt.append((present, kept + (site,), t - back))
        parts = nxt
    scale = np.linalg.norm(op.matrix)
    out: dict[Region, LocalOperator] = {}
    for present, kept, t in parts:
        region = Region(kept)
        d = lattice.hilbert_dim(region)
        m = np.asarray(t).reshape(d, d)
        if drop_zero and np.linalg.norm(m) <= 1e-14 * scale:
            continue
        out[region] = LocalOperator(lattice, region, m)
    return out


@dataclass(frozen=True)
class LambdaWeight:
    """Upper bound ``Σ_X ||Â_X|| e^{λ|X|}`` for the λ-weighted norm."""

    lam: float
    value: float
    components: int = 0


def lambda_weight(op: LocalOperator, lam: float) -> LambdaWeight:
    """λ-weighted norm evaluated on the canonical decomposition.

    The exact λ-norm is an infimum over all decompositions; this is the value
    attained by :func:`local_decompose`, hence an upper bound for it and for
    the operator norm.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    parts = local_decompose(op)
    value = sum(linalg.norm(p.matrix) * exp(lam * len(x)) for x, p in parts.items())
    return LambdaWeight(float(lam), float(value), len(parts))
