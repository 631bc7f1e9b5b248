import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinstat import linalg
from spinstat.errors import NonFaithfulState, NotHermitian
from spinstat.linalg import SIGMA_PLUS, SIGMA_Z
from spinstat.modular import (
    closed_form_residuals,
    commutant_basis,
    gns_build,
    matrix_units,
    membership_residual,
    modular_condition_residual,
    modular_flow_match,
    orthonormalize,
    tomita_build,
    verify_tomita_takesaki,
)
from spinstat.quasilocal import Lattice, LocalOperator, Region
from spinstat.states import DensityState, gibbs_state, kms_residual

seeds = st.integers(0, 2**31 - 1)
TOMITA_TOL = {
    "S=J*Delta^1/2": 1e-9,
    "J^2=1": 1e-10,
    "J=J*": 1e-10,
    "Delta^-1/2=J*Delta^1/2*J": 1e-9,
    "F=S*": 1e-9,
    "Delta=FS": 1e-9,
    "Delta^-1=SF": 1e-9,
}


def gibbs_rep(n_sites, beta=1.0, seed=0):
    r = np.random.default_rng(seed)
    lat = Lattice.chain(n_sites)
    h = LocalOperator(lat, lat.region, linalg.random_hermitian(r, 2 ** n_sites))
    return gns_build(gibbs_state(h, beta))


def tracial_rep(n):
    return gns_build(np.eye(n, dtype=complex) / n)


class TestGns:
    def test_tracial_inner_product(self, rng):
        rep = tracial_rep(2)
        assert rep.dim == 4
        a, b = linalg.random_matrix(rng, 2), linalg.random_matrix(rng, 2)
        assert rep.inner(a, b) == pytest.approx(np.trace(linalg.dagger(a) @ b) / 2, abs=1e-14)

    def test_inner_product_is_rho_astar_b(self, rng):
        rho = linalg.random_density(rng, 3)
        rep = gns_build(rho)
        a, b = linalg.random_matrix(rng, 3), linalg.random_matrix(rng, 3)
        assert rep.inner(a, b) == pytest.approx(np.trace(rho @ linalg.dagger(a) @ b), abs=1e-13)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_gibbs_invariants(self, beta):
        q = Lattice.chain(1)
        rep = gns_build(gibbs_state(LocalOperator.at(q, 1, SIGMA_Z), beta))
        res = rep.residuals()
        assert res["state"] <= 1e-11 and res["norm"] <= 1e-12
        assert res["multiplicative"] <= 1e-10 and res["star"] <= 1e-10

    def test_orthonormal_gram_basis(self):
        rep = gibbs_rep(1, seed=3)
        g = np.array([[rep.inner(a, b) for b in rep.gram_basis] for a in rep.gram_basis])
        np.testing.assert_allclose(g, np.eye(4), atol=1e-12)

    def test_non_faithful(self):
        q = Lattice.chain(1)
        with pytest.raises(NonFaithfulState):
            gns_build(DensityState(q, Region([1]), np.diag([1.0, 0.0])))

    def test_vector_state_recovers_rho(self, rng):
        rho = linalg.random_density(rng, 3)
        rep = gns_build(rho)
        np.testing.assert_allclose(rep.vector_state(rep.omega), rho, atol=1e-13)


class TestCommutant:
    def test_full_algebra(self):
        comm = commutant_basis(matrix_units(3), 3)
        assert len(comm) == 1
        assert membership_residual(np.eye(3), comm) <= 1e-12

    def test_scalars(self):
        assert len(commutant_basis([np.eye(3)], 3)) == 9
        assert len(commutant_basis([], 3)) == 9

    def test_tensor_factor(self):
        alg = [np.kron(e, np.eye(2)) for e in matrix_units(2)]
        comm = commutant_basis(alg, 4)
        assert len(comm) == 4
        target = orthonormalize([np.kron(np.eye(2), e) for e in matrix_units(2)])
        for c in comm:
            assert membership_residual(c, target) <= 1e-10
        for t in target:
            assert membership_residual(t, comm) <= 1e-10

    @given(seeds)
    def test_commutes(self, seed):
        r = np.random.default_rng(seed)
        gens = [linalg.random_hermitian(r, 2) for _ in range(1)]
        alg = [np.kron(g, np.eye(2)) for g in gens] + [np.eye(4)]
        comm = commutant_basis(alg, 4)
        for c in comm:
            for a in alg:
                assert linalg.norm(c @ a - a @ c) <= 1e-10


class TestAntilinearConvention:
    @given(seeds)
    def test_adjoint_is_transpose(self, seed):
        r = np.random.default_rng(seed)
        m = linalg.random_matrix(r, 4)
        x = r.normal(size=4) + 1j * r.normal(size=4)
        y = r.normal(size=4) + 1j * r.normal(size=4)
        # (T* x, y) = conj((x, T y)) with T v = M conj(v)
        lhs = np.vdot(m.T @ np.conj(x), y)
        rhs = np.conj(np.vdot(x, m @ np.conj(y)))
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def all_reps():
    return [
        ("tracial-2", tracial_rep(2)),
        ("tracial-4", tracial_rep(4)),
        ("gibbs-2", gibbs_rep(1, seed=1)),
        ("gibbs-4", gibbs_rep(2, seed=2)),
    ]


class TestTomita:
    @pytest.mark.parametrize("label,rep", all_reps())
    def test_invariants(self, label, rep):
        data = tomita_build(rep)
        for key, val in data.residuals().items():
            assert val <= TOMITA_TOL[key], (label, key, val)

    @pytest.mark.parametrize("n", [2, 4])
    def test_tracial(self, n):
        rep = tracial_rep(n)
        data = tomita_build(rep)
        np.testing.assert_allclose(data.delta, np.eye(n * n), atol=1e-12)
        # J is the adjoint map in matrix coordinates
        y = linalg.random_matrix(np.random.default_rng(n), n)
        np.testing.assert_allclose((data.j_matrix @ np.conj(y.reshape(-1))).reshape(n, n), linalg.dagger(y), atol=1e-12)

    @pytest.mark.parametrize("label,rep", all_reps())
    def test_closed_form(self, label, rep):
        data = tomita_build(rep)
        res = closed_form_residuals(rep, data)
        assert res["Delta"] <= 1e-9 and res["J"] <= 1e-9

    def test_delta_conjugation(self):
        rep = gibbs_rep(1, seed=5)
        data = tomita_build(rep)
        y = linalg.random_matrix(np.random.default_rng(0), 2)
        out = (data.delta @ y.reshape(-1)).reshape(2, 2)
        np.testing.assert_allclose(out, rep.rho @ y @ np.linalg.inv(rep.rho), atol=1e-10)

    @given(seeds)
    def test_random_faithful(self, seed):
        r = np.random.default_rng(seed)
        rep = gns_build(linalg.random_density(r, 2))
        if np.linalg.eigvalsh(rep.rho)[0] < 1e-3:
            return
        assert tomita_build(rep).residuals()["S=J*Delta^1/2"] <= 1e-9


class TestVerify:
    @pytest.mark.parametrize("label,rep", all_reps())
    def test_membership(self, label, rep):
        report = verify_tomita_takesaki(rep, tomita_build(rep), [0.3, 1.7])
        assert report.commutant_residual <= 1e-8 and report.algebra_residual <= 1e-8
        assert report.passed()

    def test_zero_time(self):
        rep = gibbs_rep(1, seed=4)
        assert verify_tomita_takesaki(rep, tomita_build(rep), [0.0]).algebra_residual == 0


class TestModularCondition:
    def test_identity(self):
        rep = gibbs_rep(1)
        assert modular_condition_residual(rep, tomita_build(rep), np.eye(2), np.eye(2)) <= 1e-13

    def test_tracial(self, rng):
        rep = tracial_rep(3)
        data = tomita_build(rep)
        a, b = linalg.random_matrix(rng, 3), linalg.random_matrix(rng, 3)
        # ([B*], [A*]) = tr(B A*)/n = tr(A* B)/n
        rhs = np.trace(linalg.dagger(a) @ b) / 3
        lhs = np.vdot(data.sqrt_delta @ rep.vector(a), data.sqrt_delta @ rep.vector(b))
        assert abs(lhs - rhs) <= 1e-11
        assert modular_condition_residual(rep, data, a, b) <= 1e-11

    @pytest.mark.parametrize("seed", range(5))
    def test_gibbs(self, seed):
        rep = gibbs_rep(2, seed=seed)
        data = tomita_build(rep)
        r = np.random.default_rng(seed + 100)
        a, b = linalg.random_matrix(r, 4), linalg.random_matrix(r, 4)
        assert modular_condition_residual(rep, data, a, b) <= 1e-9


class TestFlowMatch:
    def test_zero_time(self):
        q = Lattice.chain(1)
        fm = modular_flow_match(LocalOperator.at(q, 1, SIGMA_Z), 1.0, [0.0])
        assert fm.matching == (1, -1) and fm.ambiguous

    def test_trivial_hamiltonian(self):
        q = Lattice.chain(1)
        fm = modular_flow_match(LocalOperator.zero(q, [1]), 1.0, [0.5])
        assert fm.residual_plus <= 1e-12 and fm.residual_minus <= 1e-12

    def test_unique_sign(self):
        q = Lattice.chain(1)
        h = LocalOperator.at(q, 1, SIGMA_Z)
        fm = modular_flow_match(h, 1.0, [0.5], tol=1e-9)
        assert fm.sign in (1, -1) and fm.matched and not fm.ambiguous
        other = fm.residual_plus if fm.sign == -1 else fm.residual_minus
        assert other > 0.1
        # the modular group is t ↦ α^{sβt}, generated by sβH; the Gibbs state
        # must be KMS for it at value -1
        r = np.random.default_rng(7)
        for _ in range(5):
            a = LocalOperator.at(q, 1, linalg.random_matrix(r, 2))
            b = LocalOperator.at(q, 1, linalg.random_matrix(r, 2))
            assert kms_residual(h * (fm.sign * 1.0), -1.0, a, b) <= 1e-12

    @settings(max_examples=10)
    @given(seeds)
    def test_sign_constant(self, seed):
        r = np.random.default_rng(seed)
        lat = Lattice.chain(2)
        h = LocalOperator(lat, lat.region, linalg.random_hermitian(r, 4))
        fm = modular_flow_match(h, float(r.uniform(0.3, 2)), [0.3, 1.1])
        assert fm.sign is not None

    def test_beta_zero(self):
        q = Lattice.chain(1)
        with pytest.raises(ValueError):
            modular_flow_match(LocalOperator.at(q, 1, SIGMA_Z), 0.0, [0.5])

    def test_not_hermitian(self):
        q = Lattice.chain(1)
        with pytest.raises(NotHermitian):
            modular_flow_match(LocalOperator.at(q, 1, SIGMA_PLUS), 1.0, [0.5])
