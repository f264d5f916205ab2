import math

import numpy as np
import pytest
import scipy.linalg

from memodiff.errors import CoercivityError
from memodiff.mesh_fem import (
    CoefficientField,
    TridiagMatrix,
    assemble,
    build_mesh,
    dual_norm,
    form_constants,
    interpolate,
    norm_h,
    seminorm_v,
)

ONE = CoefficientField.constant(1.0)
ZERO = CoefficientField.constant(0.0)


def test_build_mesh_uniform_partition():
    mesh = build_mesh(1.0, 4)
    np.testing.assert_allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    mesh2 = build_mesh(2.0, 2)
    np.testing.assert_allclose(mesh2.nodes, [0.0, 1.0, 2.0])


@pytest.mark.parametrize("length,n", [(1.0, 1), (0.0, 4), (-2.0, 4), (1.0, 0)])
def test_build_mesh_rejects_degenerate(length, n):
    with pytest.raises(ValueError):
        build_mesh(length, n)


def test_classical_p1_stencils():
    mesh = build_mesh(1.0, 4)
    fem = assemble(mesh, ONE, ZERO)
    np.testing.assert_allclose(fem.k0.diag, 8.0)
    np.testing.assert_allclose(fem.k0.off, -4.0)
    np.testing.assert_allclose(fem.mass.diag, 1.0 / 6.0)
    np.testing.assert_allclose(fem.mass.off, 1.0 / 24.0)
    np.testing.assert_allclose(fem.k1.diag, 0.0)
    np.testing.assert_allclose(fem.k1.off, 0.0)


def test_assemble_rejects_noncoercive_a0():
    mesh = build_mesh(1.0, 8)
    flat = CoefficientField(func=lambda x: np.zeros_like(x), a_min=0.0, a_max=0.0)
    with pytest.raises(CoercivityError):
        assemble(mesh, flat, ZERO)


def test_matrices_symmetric_and_coercive():
    mesh = build_mesh(1.0, 16)
    fem = assemble(mesh, CoefficientField(lambda x: 1.0 + x, 1.0, 2.0), ONE)
    rng = np.random.default_rng(0)
    fc = form_constants(fem)
    for _ in range(50):
        v = rng.standard_normal(fem.n_dofs)
        assert fem.k0.quad(v) >= fc.alpha0 * fem.s.quad(v) * (1.0 - 1e-12)
    for m in (fem.mass, fem.k0, fem.k1, fem.s):
        dense = m.dense()
        np.testing.assert_allclose(dense, dense.T)


def test_norm_h_zero_and_scaling(fem32):
    z = np.zeros(fem32.n_dofs)
    assert norm_h(z, fem32) == 0.0
    rng = np.random.default_rng(1)
    v = rng.standard_normal(fem32.n_dofs)
    assert norm_h(2.0 * v, fem32) == pytest.approx(2.0 * norm_h(v, fem32), rel=1e-14)


def _fem(n):
    mesh = build_mesh(1.0, n)
    return assemble(mesh, ONE, ZERO)


def test_interpolant_norms_converge_at_second_order():
    # \int_0^1 sin^2(pi x) dx = 1/2 and \int_0^1 pi^2 cos^2(pi x) dx = pi^2/2
    errs_h, errs_v = [], []
    for n in (32, 64, 128):
        fem = _fem(n)
        v = interpolate(lambda x: np.sin(np.pi * x), fem.mesh)
        errs_h.append(abs(norm_h(v, fem) - math.sqrt(0.5)))
        errs_v.append(abs(seminorm_v(v, fem) - math.pi / math.sqrt(2.0)))
    for errs in (errs_h, errs_v):
        for i in range(len(errs) - 1):
            assert errs[i + 1] < errs[i]
            assert errs[i] / errs[i + 1] > 3.0  # ~4 expected for O(h^2)


def test_poincare_inequality_random_vectors(fem32):
    rng = np.random.default_rng(42)
    c = fem32.mesh.length / math.pi
    for _ in range(1000):
        v = rng.standard_normal(fem32.n_dofs)
        assert norm_h(v, fem32) <= c * seminorm_v(v, fem32) * (1.0 + 1e-12)


def test_dual_norm_riesz_identity(fem32):
    rng = np.random.default_rng(7)
    assert dual_norm(np.zeros(fem32.n_dofs), fem32) == 0.0
    for _ in range(20):
        v = rng.standard_normal(fem32.n_dofs)
        g = fem32.s.matvec(v)
        assert dual_norm(g, fem32) == pytest.approx(seminorm_v(v, fem32), rel=1e-12)


def test_duality_bound_random_pairs(fem32):
    rng = np.random.default_rng(8)
    for _ in range(100):
        g = rng.standard_normal(fem32.n_dofs)
        v = rng.standard_normal(fem32.n_dofs)
        assert abs(g @ v) <= dual_norm(g, fem32) * seminorm_v(v, fem32) * (1.0 + 1e-12)


def test_dimension_mismatch_rejected(fem32):
    with pytest.raises(ValueError):
        norm_h(np.zeros(3), fem32)
    with pytest.raises(ValueError):
        dual_norm(np.zeros(fem32.n_dofs + 1), fem32)


def test_form_constants_unit_and_scaled_coefficients():
    mesh = build_mesh(1.0, 32)
    fem = assemble(mesh, ONE, ZERO)
    fc = form_constants(fem)
    assert fc.alpha0 == pytest.approx(1.0, abs=1e-10)
    assert fc.lambda0 == pytest.approx(1.0, abs=1e-10)
    assert fc.lambda1 == pytest.approx(0.0, abs=1e-12)
    fem3 = assemble(mesh, CoefficientField.constant(3.0), ZERO)
    fc3 = form_constants(fem3)
    assert fc3.alpha0 == pytest.approx(3.0, rel=1e-10)
    assert fc3.lambda0 == pytest.approx(3.0, rel=1e-10)


def test_form_constants_bounded_by_coefficient_range():
    # a1(x) = 1 + x on (0, 1): Rayleigh quotients sit inside [1, 2]
    mesh = build_mesh(1.0, 64)
    fem = assemble(mesh, ONE, CoefficientField(lambda x: 1.0 + x, 1.0, 2.0))
    eigs = scipy.linalg.eigh(fem.k1.dense(), fem.s.dense(), eigvals_only=True)
    assert 1.0 - 1e-10 <= eigs[0] <= eigs[-1] <= 2.0 + 1e-10
    assert form_constants(fem).lambda1 == pytest.approx(eigs[-1], rel=1e-12)


def test_tridiag_solve_matches_dense():
    rng = np.random.default_rng(3)
    diag = 2.0 + rng.random(12)
    off = -0.5 * rng.random(11)
    m = TridiagMatrix(diag=diag, off=off)
    rhs = rng.standard_normal(12)
    np.testing.assert_allclose(m.solve(rhs), np.linalg.solve(m.dense(), rhs), rtol=1e-12)


def test_tridiag_factor_rejects_indefinite():
    m = TridiagMatrix(diag=np.array([1.0, -2.0, 1.0]), off=np.array([0.0, 0.0]))
    with pytest.raises(CoercivityError):
        m.factor()
