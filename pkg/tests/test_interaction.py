import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinstat import linalg
from spinstat.errors import InvalidPartition, InvalidSize, NotHermitian
from spinstat.interaction import (
    Interaction,
    ReservoirPartition,
    boundary_energy,
    build_heisenberg_chain,
    build_ising_chain,
    check_a2,
    hamiltonian,
    lambda_norm,
    surface_term,
    surface_term_bound,
)
from spinstat.linalg import SIGMA_X, SIGMA_Z
from spinstat.quasilocal import Lattice, LocalOperator, Region, embed

I2 = np.eye(2)
XX = np.kron(SIGMA_X, SIGMA_X)
seeds = st.integers(0, 2**31 - 1)


def random_interaction(r, n, p_term=0.5):
    lat = Lattice.chain(n)
    terms = {}
    for k in (1, 2, 3):
        for x in itertools.combinations(lat.sites, k):
            if r.random() < p_term:
                terms[Region(x)] = linalg.random_hermitian(r, 2 ** k)
    return Interaction(lat, terms)


class TestInteraction:
    def test_rejects_non_hermitian(self, chain3):
        with pytest.raises(NotHermitian):
            Interaction(chain3, {Region([1]): np.array([[0, 1], [0, 0]])})

    def test_rejects_empty_region(self, chain3):
        with pytest.raises(ValueError):
            Interaction(chain3, {Region(): np.eye(1)})


class TestLambdaNorm:
    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.3])
    def test_ising(self, lam):
        phi = build_ising_chain(6, J=0.7, h=-0.4)
        assert lambda_norm(phi, lam) == pytest.approx(0.4 + 2 * math.exp(lam) * 0.7, rel=1e-13)

    def test_empty(self, chain3):
        assert lambda_norm(Interaction(chain3, {}), 0.5) == 0

    def test_single_bond(self, chain3):
        phi = Interaction(chain3, {Region([1, 2]): XX})
        assert lambda_norm(phi, 0.0) == pytest.approx(1.0)

    @given(seeds, st.floats(0, 2), st.floats(0, 2))
    def test_monotone(self, seed, a, b):
        phi = random_interaction(np.random.default_rng(seed), 4)
        lo, hi = sorted((a, b))
        assert lambda_norm(phi, lo) <= lambda_norm(phi, hi) * (1 + 1e-14)


class TestHamiltonian:
    def test_two_site_ising(self):
        phi = build_ising_chain(2, J=0.8, h=0.3)
        ref = 0.8 * XX + 0.3 * (np.kron(SIGMA_Z, I2) + np.kron(I2, SIGMA_Z))
        np.testing.assert_allclose(hamiltonian(phi, [1, 2]).matrix, ref, atol=1e-15)

    def test_empty_region(self, ising4):
        h = hamiltonian(ising4, [])
        assert h.matrix.shape == (1, 1) and h.matrix[0, 0] == 0

    def test_single_site(self, ising4):
        np.testing.assert_allclose(hamiltonian(ising4, [2]).matrix, 0.5 * SIGMA_Z)

    def test_self_adjoint(self, heis3):
        assert hamiltonian(heis3).is_hermitian()

    @given(seeds, st.sets(st.integers(1, 4)))
    def test_w_identity(self, seed, lam):
        phi = random_interaction(np.random.default_rng(seed), 4)
        full = phi.lattice.region
        region = Region(lam)
        parts = embed(hamiltonian(phi, region), full) + embed(hamiltonian(phi, full - region), full)
        w = boundary_energy(phi, region)
        total = parts + embed(w, full) if len(w.region) else parts + w
        assert total.distance(hamiltonian(phi)) <= 1e-12 * max(1.0, hamiltonian(phi).norm())

    @given(seeds, st.sets(st.integers(1, 4)), st.sets(st.integers(1, 4)))
    def test_growth_bookkeeping(self, seed, x, y):
        phi = random_interaction(np.random.default_rng(seed), 4)
        small, big = Region(x), Region(x | y)
        diff = hamiltonian(phi, big) - embed(hamiltonian(phi, small), big)
        extra = phi.sum_embedded([r for r in phi.inside(big) if not r <= small], big)
        assert diff.distance(extra) <= 1e-12


class TestBoundaryEnergy:
    def test_single_bond(self):
        phi = build_ising_chain(2, J=0.8, h=0.3)
        w = boundary_energy(phi, [1])
        np.testing.assert_allclose(embed(w, Region([1, 2])).matrix, 0.8 * XX, atol=1e-15)

    def test_whole_lattice(self, ising4):
        assert boundary_energy(ising4, ising4.lattice.sites).norm() == 0

    def test_three_site(self):
        phi = build_ising_chain(3, J=0.8, h=0.3)
        w = boundary_energy(phi, [1, 2])
        assert list(w.region) == [2, 3]
        np.testing.assert_allclose(w.matrix, 0.8 * XX, atol=1e-15)


class TestPartition:
    def test_overlap_rejected(self):
        with pytest.raises(InvalidPartition):
            ReservoirPartition(Region([2]), (Region([1, 2]),), (1.0,))

    def test_beta_count(self):
        with pytest.raises(InvalidPartition):
            ReservoirPartition(Region([2]), (Region([1]), Region([3])), (1.0,))

    def test_positive_betas(self):
        with pytest.raises(InvalidPartition):
            ReservoirPartition(Region([2]), (Region([1]),), (0.0,))

    def test_cover(self, chain3):
        p = ReservoirPartition(Region([2]), (Region([1]),), (1.0,))
        with pytest.raises(InvalidPartition):
            p.check_cover(chain3)

    def test_empty_system(self):
        with pytest.raises(InvalidPartition):
            ReservoirPartition(Region(), (Region([1]),), (1.0,))


class TestSurfaceTerm:
    def test_middle_site(self):
        phi = build_ising_chain(3, J=0.8, h=0.3)
        p = ReservoirPartition(Region([2]), (Region([1]), Region([3])), (1.0, 2.0))
        v = surface_term(phi, p)
        full = Region([1, 2, 3])
        ref = 0.8 * (np.kron(XX, I2) + np.kron(I2, XX)) + 0.3 * np.kron(np.kron(I2, SIGMA_Z), I2)
        np.testing.assert_allclose(embed(v, full).matrix, ref, atol=1e-15)

    def test_nothing_meets(self, chain3):
        phi = Interaction(chain3, {Region([1]): SIGMA_Z, Region([3]): SIGMA_X})
        p = ReservoirPartition(Region([2]), (Region([1]), Region([3])), (1.0, 2.0))
        assert surface_term(phi, p).norm() == 0

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_weight_bound(self, lam):
        # the λ-weight uses e^{λ card X}, the interaction norm e^{λ(card X - 1)}
        phi = build_ising_chain(5, J=0.8, h=0.3)
        p = ReservoirPartition(Region([3]), (Region([1, 2]), Region([4, 5])), (1.0, 2.0))
        b = surface_term_bound(phi, p, lam)
        assert b.weight <= math.exp(lam) * b.bound * (1 + 1e-12)


class TestA2:
    def test_chain(self):
        phi = build_ising_chain(3, J=1, h=0.5)
        p = ReservoirPartition(Region([2]), (Region([1]), Region([3])), (1.0, 2.0))
        assert check_a2(phi, p)

    def test_direct_bond(self):
        phi = build_ising_chain(3, J=1, h=0.5) + Interaction(Lattice.chain(3), {Region([1, 3]): XX})
        p = ReservoirPartition(Region([2]), (Region([1]), Region([3])), (1.0, 2.0))
        assert not check_a2(phi, p)

    @given(seeds)
    def test_brute_force(self, seed):
        r = np.random.default_rng(seed)
        phi = random_interaction(r, 4, p_term=0.3)
        p = ReservoirPartition(Region([2]), (Region([1]), Region([3, 4])), (1.0, 2.0))
        owner = {1: 0, 3: 1, 4: 1}
        ok = all(2 in x or len({owner[s] for s in x}) < 2 for x in phi)
        assert check_a2(phi, p) == ok


class TestBuilders:
    def test_one_site(self):
        phi = build_ising_chain(1, J=1, h=0.5)
        assert list(phi) == [Region([1])]

    def test_two_sites(self):
        assert sorted(len(x) for x in build_ising_chain(2, J=1, h=0.5)) == [1, 1, 2]

    def test_five_sites(self):
        phi = build_ising_chain(5, J=1, h=0.5)
        sizes = [len(x) for x in phi]
        assert sizes.count(1) == 5 and sizes.count(2) == 4
        assert lambda_norm(phi, 0.0) == pytest.approx(2.5)

    def test_invalid(self):
        with pytest.raises(InvalidSize):
            build_ising_chain(0, J=1, h=0.5)

    def test_heisenberg_su2(self):
        phi = build_heisenberg_chain(3, J=1.0)
        h = hamiltonian(phi).matrix
        total_z = sum(embed(LocalOperator.at(phi.lattice, s, SIGMA_Z), phi.lattice.region).matrix for s in phi.lattice.sites)
        assert linalg.norm(h @ total_z - total_z @ h) <= 1e-12
