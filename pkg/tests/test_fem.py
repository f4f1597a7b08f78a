from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracshe.fem import (
    Mesh1D,
    assemble,
    generalized_eigs,
    interpolate_at_quad,
    l2_distance,
    l2_project,
    load_vector,
    prolong,
    solve_shifted,
    uniform_eigenvalue,
)


def hat(mesh, i):
    """Interior hat function i (0-based dof index)."""
    xi = mesh.nodes[i]
    h = mesh.h
    return lambda x: max(0.0, 1.0 - abs(x - xi) / h)


def quad_load(mesh, f):
    out = []
    for i, xi in enumerate(mesh.nodes):
        phi = hat(mesh, i)
        val, _ = integrate.quad(lambda x: f(x) * phi(x), xi - mesh.h, xi + mesh.h,
                                points=[xi], epsabs=1e-14, epsrel=1e-12, limit=200)
        out.append(val)
    return np.array(out)


class TestAssembly:
    def test_quarter_mesh(self):
        ops = assemble(Mesh1D(4))
        np.testing.assert_allclose(
            ops.stiff_dense(), [[8, -4, 0], [-4, 8, -4], [0, -4, 8]], rtol=0, atol=1e-14)
        np.testing.assert_allclose(
            ops.mass_dense(),
            [[1 / 6, 1 / 24, 0], [1 / 24, 1 / 6, 1 / 24], [0, 1 / 24, 1 / 6]], rtol=0, atol=1e-15)

    def test_against_quadrature_of_hats(self):
        mesh = Mesh1D(5)
        ops = assemble(mesh)
        m = np.array([[integrate.quad(lambda x: hat(mesh, i)(x) * hat(mesh, j)(x), 0, 1,
                                      points=list(mesh.nodes))[0]
                       for j in range(mesh.n_dof)] for i in range(mesh.n_dof)])
        np.testing.assert_allclose(ops.mass_dense(), m, atol=1e-12)

    @pytest.mark.parametrize("n", [4, 8, 17, 64])
    def test_row_sums_and_symmetry(self, n):
        ops = assemble(Mesh1D(n))
        M, S = ops.mass_dense(), ops.stiff_dense()
        assert np.sum(M[1]) == pytest.approx(ops.mesh.h, rel=1e-14)
        np.testing.assert_array_equal(S, S.T)
        assert np.all(np.diag(S) > 0)
        assert np.all(np.linalg.eigvalsh(M) > 0)

    def test_matvec_batched(self):
        ops = assemble(Mesh1D(9))
        v = np.random.default_rng(1).standard_normal((4, ops.n_dof))
        np.testing.assert_allclose(ops.mass_matvec(v), v @ ops.mass_dense(), atol=1e-15)
        np.testing.assert_allclose(ops.stiff_matvec(v), v @ ops.stiff_dense(), atol=1e-12)

    def test_bad_mesh(self):
        with pytest.raises(ValueError):
            Mesh1D(1)
        with pytest.raises(ValueError):
            Mesh1D(2.5)


class TestProjection:
    def test_identity_on_vh(self):
        mesh = Mesh1D(16)
        ops = assemble(mesh)
        coef = np.random.default_rng(0).standard_normal(mesh.n_dof)
        f = lambda x: np.interp(x, np.r_[0.0, mesh.nodes, 1.0], np.r_[0.0, coef, 0.0])
        np.testing.assert_allclose(l2_project(ops, f), coef, atol=1e-12)

    def test_zero(self):
        ops = assemble(Mesh1D(10))
        assert np.all(l2_project(ops, lambda x: np.zeros_like(x)) == 0.0)

    def test_sine_against_fine_quadrature(self):
        mesh = Mesh1D(64)
        ops = assemble(mesh)
        coef = l2_project(ops, lambda x: np.sin(np.pi * x))
        ref = np.linalg.solve(ops.mass_dense(), quad_load(mesh, lambda x: math.sin(math.pi * x)))
        np.testing.assert_allclose(coef, ref, atol=1e-10)
        dev = np.max(np.abs(coef - np.sin(np.pi * mesh.nodes)))
        assert dev <= mesh.h**2

    @pytest.mark.parametrize("f", [
        lambda x: np.sin(np.pi * x),
        lambda x: np.exp(x) * x * (1 - x),
        lambda x: np.cos(7 * x),
        lambda x: np.abs(x - 0.3) ** 0.5,
    ])
    def test_stability(self, f):
        mesh = Mesh1D(32)
        ops = assemble(mesh)
        coef = l2_project(ops, f)
        norm_f = math.sqrt(integrate.quad(lambda x: f(x) ** 2, 0, 1, points=[0.3], limit=200)[0])
        assert ops.mass_norm(coef) <= norm_f + 1e-6

    def test_galerkin_orthogonality(self):
        mesh = Mesh1D(20)
        ops = assemble(mesh)
        f = lambda x: np.exp(np.sin(3 * x))
        coef = l2_project(ops, f)
        # (f - P_h f, phi_i) = load_i - (M coef)_i with the load by adaptive quadrature
        resid = quad_load(mesh, lambda x: float(f(x))) - ops.mass_matvec(coef)
        assert np.max(np.abs(resid)) <= 1e-8

    def test_load_vector_reproduces_mass(self):
        mesh = Mesh1D(12)
        ops = assemble(mesh)
        v = np.random.default_rng(3).standard_normal(mesh.n_dof)
        np.testing.assert_allclose(load_vector(mesh, interpolate_at_quad(mesh, v)),
                                   ops.mass_matvec(v), atol=1e-15)


class TestEigen:
    def test_closed_form(self):
        mesh = Mesh1D(16)
        lam, _ = generalized_eigs(assemble(mesh), 5)
        closed = [uniform_eigenvalue(mesh.h, j) for j in range(1, 6)]
        np.testing.assert_allclose(lam, closed, rtol=1e-12)

    def test_first_eigenvalue_from_above(self):
        vals = [generalized_eigs(assemble(Mesh1D(n)), 1)[0][0] for n in (4, 8, 16, 32, 64)]
        assert np.all(np.diff(vals) < 0)
        assert np.all(np.array(vals) > np.pi**2)
        assert vals[-1] == pytest.approx(np.pi**2, rel=1e-3)

    def test_residual_and_orthonormality(self):
        ops = assemble(Mesh1D(40))
        lam, vec = generalized_eigs(ops, 39)
        M, S = ops.mass_dense(), ops.stiff_dense()
        for j in range(39):
            phi = vec[:, j]
            assert np.linalg.norm(S @ phi - lam[j] * M @ phi) <= 1e-10 * np.linalg.norm(S @ phi)
        np.testing.assert_allclose(vec.T @ M @ vec, np.eye(39), atol=1e-12)
        assert np.all(np.diff(lam) > 0)

    def test_count_bounds(self):
        ops = assemble(Mesh1D(5))
        with pytest.raises(ValueError):
            generalized_eigs(ops, 0)
        with pytest.raises(ValueError):
            generalized_eigs(ops, 5)


class TestShiftedSolve:
    def test_zero(self):
        ops = assemble(Mesh1D(8))
        assert np.all(solve_shifted(ops, 0.1, np.zeros(7)) == 0.0)

    def test_round_trip_and_residual(self):
        ops = assemble(Mesh1D(50))
        ta = 0.03**0.6
        v = np.random.default_rng(5).standard_normal(ops.n_dof)
        A = ops.mass_dense() / ta + ops.stiff_dense()
        rhs = A @ v
        u = solve_shifted(ops, ta, rhs)
        np.testing.assert_allclose(u, v, atol=1e-12 * np.max(np.abs(v)) * 10)
        assert np.linalg.norm(A @ u - rhs) <= 1e-12 * np.linalg.norm(rhs)

    def test_eigenmode(self):
        ops = assemble(Mesh1D(32))
        lam, vec = generalized_eigs(ops, 6)
        ta = 0.01**0.7
        for j in range(6):
            u = solve_shifted(ops, ta, ops.mass_matvec(vec[:, j]))
            np.testing.assert_allclose(u, vec[:, j] / (1.0 / ta + lam[j]), atol=1e-13)

    def test_batched(self):
        ops = assemble(Mesh1D(10))
        rhs = np.random.default_rng(2).standard_normal((3, ops.n_dof))
        batched = solve_shifted(ops, 0.5, rhs)
        for i in range(3):
            np.testing.assert_allclose(batched[i], solve_shifted(ops, 0.5, rhs[i]), atol=1e-15)

    @pytest.mark.parametrize("tau,alpha", [(1e-1, 0.3), (1e-3, 0.5), (1e-4, 0.9)])
    def test_resolvent_bound(self, tau, alpha):
        ops = assemble(Mesh1D(64))
        lam, vec = generalized_eigs(ops, ops.n_dof)
        ta = tau**alpha
        # M-norm amplification of v -> (tau^-a M + S)^{-1} M v, measured through the solver
        out = solve_shifted(ops, ta, ops.mass_matvec(vec.T))
        amp = ops.mass_norm(out) / ops.mass_norm(vec.T)
        np.testing.assert_allclose(amp, 1.0 / (1.0 / ta + lam), rtol=1e-10)
        assert np.max(amp) <= ta * (1 + 1e-12)
        v = np.random.default_rng(11).standard_normal((200, ops.n_dof))
        ratio = ops.mass_norm(solve_shifted(ops, ta, ops.mass_matvec(v))) / ops.mass_norm(v)
        assert np.max(ratio) <= ta * (1 + 1e-12)

    def test_bad_shift(self):
        with pytest.raises(ValueError):
            solve_shifted(assemble(Mesh1D(4)), 0.0, np.zeros(3))


class TestNestedDistance:
    def test_self_distance_zero(self):
        mesh = Mesh1D(8)
        v = np.arange(7.0)
        assert l2_distance(mesh, v, mesh, v) == 0.0

    def test_prolong_exact(self):
        coarse, fine = Mesh1D(4), Mesh1D(12)
        v = np.array([1.0, -2.0, 0.5])
        p = prolong(v, coarse, fine)
        np.testing.assert_allclose(p[[2, 5, 8]], v)
        assert l2_distance(coarse, v, fine, p) == pytest.approx(0.0, abs=1e-15)

    def test_against_quadrature(self):
        coarse, fine = Mesh1D(4), Mesh1D(8)
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(3), rng.standard_normal(7)
        fa = lambda x: np.interp(x, np.r_[0, coarse.nodes, 1], np.r_[0, a, 0])
        fb = lambda x: np.interp(x, np.r_[0, fine.nodes, 1], np.r_[0, b, 0])
        ref = math.sqrt(integrate.quad(lambda x: (fa(x) - fb(x)) ** 2, 0, 1,
                                       points=list(fine.nodes), epsabs=1e-14)[0])
        assert l2_distance(coarse, a, fine, b) == pytest.approx(ref, rel=1e-10)
        assert l2_distance(fine, b, coarse, a) == pytest.approx(ref, rel=1e-10)

    def test_not_nested(self):
        with pytest.raises(ValueError):
            l2_distance(Mesh1D(4), np.zeros(3), Mesh1D(6), np.zeros(5))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 80), seed=st.integers(0, 2**32 - 1))
def test_mass_norm_matches_exact_integral(n, seed):
    # ||v||^2 for a P1 function is sum over cells of h/3 (a^2 + ab + b^2)
    mesh = Mesh1D(n)
    v = np.random.default_rng(seed).standard_normal(mesh.n_dof)
    full = np.r_[0.0, v, 0.0]
    exact = math.fsum(mesh.h / 3 * (full[:-1] ** 2 + full[:-1] * full[1:] + full[1:] ** 2))
    assert assemble(mesh).mass_norm(v) ** 2 == pytest.approx(exact, rel=1e-12)
