import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kineticfv.cweno import (
    EPS_WEIGHTS,
    LAMBDA_CENTRAL,
    POWER,
    CwenoError,
    build_operator,
    central_polynomial,
    fit_linear_polynomials,
    fit_optimal_polynomial,
    nonlinear_weights,
    oscillation_indicator,
    reconstruct,
)
from kineticfv.mesh import Rect, from_triangulation, perturbed_lattice, periodic_triangle_mesh, \
    rectangle_tagger, structured_triangulation


def cell_averages(mesh, fn):
    """Cell averages of ``fn`` by the mesh's own quadrature."""
    vals = fn(mesh.cell_qp)
    return np.einsum("iq,iq->i", mesh.cell_qw, vals) / mesh.area


def poly(degree, seed=0):
    rng = np.random.default_rng(seed)
    terms = [(p, q, rng.uniform(-1, 1)) for p in range(degree + 1) for q in range(degree + 1 - p)]

    def fn(x):
        return sum(c * x[..., 0] ** p * x[..., 1] ** q for p, q, c in terms)
    return fn


def face_point_values(op, F):
    """Reconstructed values at every edge quadrature point, from the production coefficients."""
    coeffs = op.coefficients(F[:, None])[..., 0]
    m = op.mesh
    out = []
    for i in range(m.ncell):
        pts = m.edge_qp[i, : m.nvert[i]]
        out.append((op.evaluate(i, coeffs[i], F[i], pts), pts))
    return out


# --- construction -----------------------------------------------------------

def test_default_constants():
    assert EPS_WEIGHTS == 1e-14 and POWER == 4 and LAMBDA_CENTRAL == 0.8


@pytest.mark.parametrize("kw", [dict(degree=4), dict(degree=2, power=2), dict(degree=2, lambda_central=1.0)])
def test_invalid_configuration(dual_mesh, kw):
    with pytest.raises(CwenoError):
        build_operator(dual_mesh, **kw)


@pytest.mark.parametrize("degree", [1, 2])
def test_basis_zero_mean(dual_mesh, degree):
    op = build_operator(dual_mesh, degree)
    m = dual_mesh
    for i in range(m.ncell):
        phi = op.basis_at(i, m.cell_qp[i])
        assert np.all(np.abs(m.cell_qw[i] @ phi / m.area[i]) <= 1e-13)


def test_linear_weights_sum_to_one(dual_mesh):
    op = build_operator(dual_mesh, 2)
    nsec = op.sec_valid.sum(axis=1)
    assert np.allclose(op.lam0 + nsec * op.lam_sec, 1.0, atol=1e-15)
    assert np.all(op.lam0 > 0) and np.all(op.lam_sec[nsec > 0] > 0)
    assert np.array_equal(nsec[nsec > 0] <= dual_mesh.nvert[nsec > 0], np.ones(np.sum(nsec > 0), bool))


# --- exactness and conservation ---------------------------------------------

@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("which", ["unit_triangles", "dual_mesh"])
def test_optimal_fit_exactness(which, degree, request):
    mesh = request.getfixturevalue(which)
    op = build_operator(mesh, degree)
    fn = poly(degree, seed=degree)
    F = cell_averages(mesh, fn)
    for i in range(mesh.ncell):
        rec = op.evaluate(i, fit_optimal_polynomial(op, i, F), F[i], mesh.cell_qp[i])
        assert np.max(np.abs(rec - fn(mesh.cell_qp[i]))) <= 1e-11


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("which", ["unit_triangles", "dual_mesh"])
def test_pipeline_exactness(which, degree, request):
    """Frozen weights reproduce degree-M data; nonlinear weights reproduce
    data every candidate can represent (degree one)."""
    mesh = request.getfixturevalue(which)
    op = build_operator(mesh, degree)
    for frozen, data_degree in ((True, degree), (False, 1)):
        fn = poly(data_degree, seed=degree)
        F = cell_averages(mesh, fn)
        coeffs = op.coefficients(F[:, None], frozen)[..., 0]
        for i in range(mesh.ncell):
            rec = op.evaluate(i, coeffs[i], F[i], mesh.cell_qp[i])
            assert np.max(np.abs(rec - fn(mesh.cell_qp[i]))) <= 1e-11


def test_optimal_fit_constant_and_average(dual_mesh):
    op = build_operator(dual_mesh, 2)
    F = np.full(dual_mesh.ncell, 3.7)
    for i in range(dual_mesh.ncell):
        assert np.all(np.abs(fit_optimal_polynomial(op, i, F)) <= 1e-13)
        assert all(np.all(np.abs(s) <= 1e-13) for s in fit_linear_polynomials(op, i, F))


def test_sector_polynomials_exact_on_linear_field(dual_mesh):
    op = build_operator(dual_mesh, 2)
    fn = poly(1, seed=5)
    F = cell_averages(dual_mesh, fn)
    for i in range(dual_mesh.ncell):
        for s in fit_linear_polynomials(op, i, F):
            pts = dual_mesh.cell_qp[i]
            assert np.max(np.abs(op.evaluate(i, np.r_[s, 0, 0, 0], F[i], pts) - fn(pts))) <= 1e-12


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), frozen=st.booleans())
def test_conservation(seed, frozen, periodic_duals):
    op = build_operator(periodic_duals, 2)
    m = periodic_duals
    F = np.random.default_rng(seed).uniform(-1, 1, (m.ncell, 3))
    vals = op.point_values(F, frozen)
    avg = np.einsum("iq,iqk->ik", m.cell_qw, vals) / m.area[:, None]
    assert np.max(np.abs(avg - F)) <= 1e-13


def test_constant_field_everywhere(periodic_tris):
    op = build_operator(periodic_tris, 2)
    F = np.full((periodic_tris.ncell, 2), -1.25)
    assert np.max(np.abs(op.face_values(F)[:, :3] + 1.25)) <= 1e-14


def test_frozen_weights_are_linear(periodic_duals):
    op = build_operator(periodic_duals, 2)
    rng = np.random.default_rng(8)
    f, g = rng.normal(size=(2, periodic_duals.ncell, 1))
    lhs = op.coefficients(2.0 * f - 0.5 * g, frozen=True)
    rhs = 2.0 * op.coefficients(f, frozen=True) - 0.5 * op.coefficients(g, frozen=True)
    assert np.allclose(lhs, rhs, atol=1e-13)


# --- building blocks --------------------------------------------------------

def test_central_polynomial_identity():
    rng = np.random.default_rng(0)
    p_opt = rng.normal(size=5)
    secs = [rng.normal(size=2) for _ in range(3)]
    lam0, lam_s = 0.8, 0.2 / 3
    p0 = central_polynomial(p_opt, secs, lam0, lam_s)
    back = lam0 * p0
    for s in secs:
        back[:2] += lam_s * s
    assert np.allclose(back, p_opt, atol=1e-13)
    lin = rng.normal(size=2)
    assert np.allclose(central_polynomial(lin, [lin] * 3, lam0, lam_s), lin, atol=1e-15)


def test_indicator_examples(unit_triangles):
    op = build_operator(unit_triangles, 2)
    m = unit_triangles
    for i in (0, 7):
        assert oscillation_indicator(op, i, np.zeros(5)) == 0.0
        # p = (x - xb)/h has gradient 1/h: sigma = |P| / h^2
        assert oscillation_indicator(op, i, np.array([1.0, 0, 0, 0, 0])) == pytest.approx(
            m.area[i] / m.radius[i] ** 2, rel=1e-13)
        c = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
        assert oscillation_indicator(op, i, 3 * c) == pytest.approx(9 * oscillation_indicator(op, i, c), rel=1e-13)


def test_indicator_quadratic_term_oracle(unit_triangles):
    """Second derivatives enter with h^2 scaling: check against direct quadrature."""
    op = build_operator(unit_triangles, 2)
    m = unit_triangles
    i = 3
    h = m.radius[i]
    xb = m.barycenter[i]
    # p = ((x - xb)/h)^2 : dp/dx = 2(x - xb)/h^2, d2p/dx2 = 2/h^2
    dx = m.cell_qp[i][:, 0] - xb[0]
    expected = m.cell_qw[i] @ ((2 * dx / h ** 2) ** 2) + h ** 2 * m.area[i] * (2 / h ** 2) ** 2
    c = np.zeros(5)
    c[op.exps.index((2, 0))] = 1.0
    assert oscillation_indicator(op, i, c) == pytest.approx(expected, rel=1e-12)


def test_weight_examples():
    lams = np.array([0.8, 0.1, 0.1])
    assert np.allclose(nonlinear_weights(np.full(3, 0.3), lams), lams, atol=1e-15)
    w = nonlinear_weights(np.array([0.0, 1e3, 1e3]), lams)
    assert w[0] == pytest.approx(1.0, abs=1e-15)
    assert nonlinear_weights(np.array([0.1, 2.0, 5.0]), lams).sum() == pytest.approx(1.0, abs=1e-15)


@given(c=st.floats(0.5, 2.0), seed=st.integers(0, 1000))
def test_weights_scale_invariant_for_large_indicators(c, seed):
    sig = np.random.default_rng(seed).uniform(1e-3, 1.0, 4)
    lams = np.array([0.8, 0.2 / 3, 0.2 / 3, 0.2 / 3])
    assert np.max(np.abs(nonlinear_weights(c * c * sig, lams) - nonlinear_weights(sig, lams))) <= 1e-6


# --- production kernel vs single-cell reference -----------------------------

@pytest.mark.parametrize("degree", [1, 2])
def test_kernel_matches_reference(periodic_duals, degree):
    op = build_operator(periodic_duals, degree)
    rng = np.random.default_rng(degree)
    F = rng.uniform(0, 1, (periodic_duals.ncell, 2))
    F[:, 1] = np.where(periodic_duals.barycenter[:, 0] > 1.0, 1.0, 0.0)
    for frozen in (True, False):
        coeffs = op.coefficients(F, frozen)
        for k in range(2):
            for i in range(periodic_duals.ncell):
                ref = reconstruct(op, F[:, k], i, frozen)
                assert np.allclose(coeffs[i, :, k], ref.coeffs, rtol=1e-11, atol=1e-13)
    fv = op.face_values(F)
    i = 4
    ref = reconstruct(op, F[:, 0], i)
    m = periodic_duals
    for e in range(m.nvert[i]):
        mean = m.edge_qw[i, e] @ ref(m.edge_qp[i, e]) / m.edge_length[i, e]
        assert fv[i, e, 0] == pytest.approx(mean, abs=1e-13)


# --- accuracy and non-oscillation -------------------------------------------

def periodic_mesh(n):
    dom = Rect(0.0, 2.0, 0.0, 2.0)
    return periodic_triangle_mesh(perturbed_lattice(dom, n, n, 0.2, seed=n, cell_centred=True), dom)


def smooth(x):
    return 1.0 + 0.5 * np.sin(math.pi * x[..., 0]) * np.cos(math.pi * x[..., 1])


def face_errors(n, degree, frozen):
    m = periodic_mesh(n)
    op = build_operator(m, degree)
    F = cell_averages(m, smooth)
    coeffs = op.coefficients(F[:, None], frozen)[..., 0]
    errs = []
    for i in range(m.ncell):
        pts = m.edge_qp[i, : m.nvert[i]]
        errs.append(np.abs(op.evaluate(i, coeffs[i], F[i], pts) - smooth(pts)).ravel())
    return np.concatenate(errs), m.h


@pytest.mark.parametrize("degree", [1, 2])
def test_refinement_order(degree):
    """Mean face-point error for the nonlinear reconstruction, max error for the linear one."""
    (e1, h1), (e2, h2) = face_errors(16, degree, False), face_errors(32, degree, False)
    assert math.log(e1.mean() / e2.mean()) / math.log(h1 / h2) >= degree + 0.7
    (f1, h1), (f2, h2) = face_errors(16, degree, True), face_errors(32, degree, True)
    assert math.log(f1.max() / f2.max()) / math.log(h1 / h2) >= degree + 0.7


def test_step_is_not_amplified():
    """A step on mesh lines: face values stay within the stencil's range."""
    dom = Rect(0.0, 4.0, 0.0, 1.0)
    m = from_triangulation(structured_triangulation(dom, 24, 6, "/"), tagger=rectangle_tagger(dom))
    op = build_operator(m, 2)
    for k in range(2, 23):
        x0 = k / 6.0
        F = cell_averages(m, lambda x: np.where(x[..., 0] < x0, 1.0, 0.0))
        fv = op.face_values(F[:, None])[..., 0]
        for i in range(m.ncell):
            st_vals = F[m.stencil[i]]
            vals = fv[i, : m.nvert[i]]
            assert vals.min() >= st_vals.min() - 1e-8
            assert vals.max() <= st_vals.max() + 1e-8
