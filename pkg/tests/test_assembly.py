import numpy as np
import pytest

from conftest import make_cantilever_model, random_positive_state
from icatop.assembly import (DensityField, FeModel, assemble, element_internal_force,
                             element_tangent, residual_density_derivative)
from icatop.errors import NonPositiveJacobianError
from icatop.material import MaterialParams
from icatop.mesh import LoadCase, build_grid, fix_region

MAT = MaterialParams(3000.0, 0.4)


def q4_stiffness_oracle(ew, eh, t, E, nu):
    """Independent small-strain Q4 element stiffness via the engineering
    B-matrix formulation."""
    C = E / ((1 + nu) * (1 - 2 * nu)) * np.array([
        [1 - nu, nu, 0.0],
        [nu, 1 - nu, 0.0],
        [0.0, 0.0, (1 - 2 * nu) / 2.0]])
    K = np.zeros((8, 8))
    for xi in (-1 / np.sqrt(3), 1 / np.sqrt(3)):
        for eta in (-1 / np.sqrt(3), 1 / np.sqrt(3)):
            dN_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
            dN_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
            dN_dX = dN_dxi * 2.0 / ew
            dN_dY = dN_deta * 2.0 / eh
            B = np.zeros((3, 8))
            B[0, 0::2] = dN_dX
            B[1, 1::2] = dN_dY
            B[2, 0::2] = dN_dY
            B[2, 1::2] = dN_dX
            K += B.T @ C @ B * (ew * eh / 4.0) * t
    return K


class TestElementOperations:
    def test_unpenalized_at_rho_one(self):
        u_e = 0.01 * np.arange(8.0)
        a = element_tangent(1.0, 3.0, u_e, 2.0, 1.0, 1.0, MAT)
        b = element_tangent(1.0, 7.0, u_e, 2.0, 1.0, 1.0, MAT)
        assert np.array_equal(a, b)

    def test_simp_scaling(self):
        rng = np.random.default_rng(0)
        u_e = 0.02 * rng.standard_normal(8)
        base = element_tangent(1.0, 3.0, u_e, 2.0, 1.0, 1.0, MAT)
        for rho in (0.2, 0.77):
            scaled = element_tangent(rho, 3.0, u_e, 2.0, 1.0, 1.0, MAT)
            assert np.allclose(scaled, rho ** 3 * base, rtol=1e-14)

    def test_zero_displacement_matches_q4_oracle(self):
        Ke = element_tangent(1.0, 3.0, np.zeros(8), 10.0, 7.5, 2.0, MAT)
        Ko = q4_stiffness_oracle(10.0, 7.5, 2.0, MAT.E, MAT.nu)
        assert np.allclose(Ke, Ko, rtol=1e-12, atol=1e-12 * np.abs(Ko).max())

    def test_zero_displacement_zero_force(self):
        f = element_internal_force(0.7, 3.0, np.zeros(8), 2.0, 1.0, 1.0, MAT)
        assert np.all(f == 0.0)

    def test_force_is_energy_gradient(self):
        from icatop.material import deformation_gradient, gauss_shape_gradients, strain_energy
        rng = np.random.default_rng(1)
        u_e = 0.05 * rng.standard_normal(8)
        G = gauss_shape_gradients(2.0, 1.0)

        def energy(u):
            W = 0.0
            for qp in range(4):
                F, _ = deformation_gradient(G[qp], u)
                W += strain_energy(F, MAT)
            return 0.55 ** 3 * W * (2.0 * 1.0 / 4.0) * 1.0

        f = element_internal_force(0.55, 3.0, u_e, 2.0, 1.0, 1.0, MAT)
        h = 5e-7
        for k in range(8):
            d = np.zeros(8)
            d[k] = h
            fd = (energy(u_e + d) - energy(u_e - d)) / (2 * h)
            assert abs(f[k] - fd) <= 1e-6 * (1.0 + abs(f[k]))

    def test_tangent_is_force_jacobian(self):
        rng = np.random.default_rng(2)
        u_e = 0.05 * rng.standard_normal(8)
        K = element_tangent(0.8, 2.0, u_e, 2.0, 1.0, 1.0, MAT)
        h = 2e-6
        for k in range(8):
            d = np.zeros(8)
            d[k] = h
            fd = (element_internal_force(0.8, 2.0, u_e + d, 2.0, 1.0, 1.0, MAT)
                  - element_internal_force(0.8, 2.0, u_e - d, 2.0, 1.0, 1.0, MAT)) / (2 * h)
            assert np.abs(K[:, k] - fd).max() <= 1e-5 * (1.0 + np.abs(K[:, k]).max())

    def test_nonpositive_jacobian_propagates(self):
        u_e = np.zeros(8)
        u_e[0::2] = [0.0, -2.5, -2.5, 0.0]      # collapses the element
        with pytest.raises(NonPositiveJacobianError):
            element_tangent(1.0, 3.0, u_e, 1.0, 1.0, 1.0, MAT)


class TestGlobalAssembly:
    def test_residual_at_zero_is_minus_load(self, cantilever_model):
        model = cantilever_model
        rho = np.full(model.mesh.n_el, 0.6)
        r = model.residual(rho, 3.0, np.zeros(model.mesh.n_free))
        assert np.array_equal(r, -model.f_free)

    def test_single_element_tangent_matches_global(self):
        mesh = build_grid(1, 1, 2.0, 1.0, 1.5)
        mesh = fix_region(mesh, lambda x, y: x <= 1e-12, axes="both")
        model = FeModel(mesh, LoadCase(), MAT)
        rho = np.array([0.9])
        u = np.array([0.01, -0.02, 0.015, 0.005])
        Ke = element_tangent(0.9, 3.0, mesh.scatter(u)[mesh.elem_dofs[0]],
                             2.0, 1.0, 1.5, MAT)
        keep = mesh.full_to_free[mesh.elem_dofs[0]] >= 0
        K = model.tangent(rho, 3.0, u).to_csr().toarray()
        assert np.allclose(K, Ke[np.ix_(keep, keep)], rtol=1e-13)

    def test_tangent_is_residual_jacobian(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=3)
        K = model.tangent(rho, 3.0, u)
        rng = np.random.default_rng(4)
        h = 1e-6
        for _ in range(20):
            w = rng.standard_normal(model.mesh.n_free)
            w /= np.linalg.norm(w)
            fd = (model.residual(rho, 3.0, u + h * w)
                  - model.residual(rho, 3.0, u - h * w)) / (2 * h)
            Kw = K.matvec(w)
            assert np.abs(Kw - fd).max() <= 1e-5 * (1.0 + np.abs(Kw).max())

    def test_tangent_exactly_symmetric(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=5)
        A = model.tangent(rho, 3.0, u).to_csr()
        assert abs(A - A.T).max() == 0.0

    def test_residual_is_potential_gradient(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=6)
        r = model.residual(rho, 3.0, u)
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(10):
            w = rng.standard_normal(model.mesh.n_free)
            w /= np.linalg.norm(w)
            fd = (model.potential_energy(rho, 3.0, u + h * w)
                  - model.potential_energy(rho, 3.0, u - h * w)) / (2 * h)
            assert abs(fd - r @ w) <= 1e-6 * (1.0 + abs(r @ w))

    def test_spring_terms(self):
        model = make_cantilever_model(nx=4, ny=2, load=-5.0, spring=7.5)
        mesh = model.mesh
        rho = np.full(mesh.n_el, 1e-3)
        K = model.tangent(rho, 3.0, np.zeros(mesh.n_free))
        i = mesh.full_to_free[2 * mesh.node_id(4, 1) + 1]
        # spring appears exactly once on the diagonal
        bare = make_cantilever_model(nx=4, ny=2, load=-5.0)
        K0 = bare.tangent(rho, 3.0, np.zeros(mesh.n_free))
        diff = K.to_csr().diagonal() - K0.to_csr().diagonal()
        expect = np.zeros(mesh.n_free)
        expect[i] = 7.5
        assert np.array_equal(diff, expect)
        # and contributes k*u to the residual
        rng = np.random.default_rng(8)
        u = 0.01 * rng.standard_normal(mesh.n_free)
        delta_r = model.residual(rho, 3.0, u) - bare.residual(rho, 3.0, u)
        expect_r = np.zeros(mesh.n_free)
        expect_r[i] = 7.5 * u[i]
        assert np.allclose(delta_r, expect_r, rtol=1e-12, atol=1e-12)

    def test_assemble_bundle(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=9)
        sys = assemble(model, rho, 3.0, u)
        assert np.array_equal(sys.r, sys.f_int + model.spring_free * u - sys.f)
        assert sys.K.n == model.mesh.n_free

    def test_element_failure_names_element(self, cantilever_model):
        model = cantilever_model
        rho = np.full(model.mesh.n_el, 0.5)
        u = np.zeros(model.mesh.n_free)
        # crush one interior element by huge opposing displacements
        mesh = model.mesh
        n0 = mesh.elems[20]
        full = np.zeros(mesh.n_dof)
        full[2 * n0[0]] = 50.0
        full[2 * n0[1]] = -50.0
        with pytest.raises(NonPositiveJacobianError) as err:
            model.residual(rho, 3.0, mesh.gather(full))
        assert err.value.element is not None


class TestDensityDerivative:
    def test_zero_state_gives_zero(self, cantilever_model):
        model = cantilever_model
        rho = np.full(model.mesh.n_el, 0.5)
        idx, vals = residual_density_derivative(model, 7, rho, 3.0,
                                                np.zeros(model.mesh.n_free))
        assert np.all(vals == 0.0)

    def test_matches_fd(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=10)
        h = 1e-6
        for e in (0, 17, 31):
            idx, vals = residual_density_derivative(model, e, rho, 3.0, u)
            hi, lo = rho.copy(), rho.copy()
            hi[e] += h
            lo[e] -= h
            fd = (model.residual(hi, 3.0, u) - model.residual(lo, 3.0, u)) / (2 * h)
            dense = np.zeros(model.mesh.n_free)
            dense[idx] = vals
            assert np.abs(dense - fd).max() <= 1e-6 * (1.0 + np.abs(vals).max())
            # sparse support: nothing outside the element's DOFs
            mask = np.ones(model.mesh.n_free, dtype=bool)
            mask[idx] = False
            assert np.abs(fd[mask]).max() <= 1e-9 * (1.0 + np.abs(vals).max())

    def test_p_equal_one_is_density_independent(self, cantilever_model):
        model = cantilever_model
        rho, u = random_positive_state(model, seed=11)
        other = np.clip(rho * 0.5, 1e-3, 1.0)
        _, a = residual_density_derivative(model, 12, rho, 1.0, u)
        _, b = residual_density_derivative(model, 12, other, 1.0, u)
        assert np.array_equal(a, b)


def test_density_field_validation():
    v = np.full(4, 0.5)
    DensityField(np.array([0.5, 1.0, 0.001, 0.2]), 3.0, 0.001, v)
    with pytest.raises(ValueError):
        DensityField(np.array([0.5, 1.2, 0.001, 0.2]), 3.0, 0.001, v)
    with pytest.raises(ValueError):
        DensityField(np.full(4, 0.5), 0.5, 0.001, v)
    with pytest.raises(ValueError):
        DensityField(np.full(4, 0.5), 3.0, 0.001, np.zeros(4))
