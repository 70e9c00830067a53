import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpsim import Grid, build_laplacian, discrete_norm, eigen_decompose
from wpsim.discretization import DIRICHLET, NEUMANN, outward_normal_derivative, read_fields_csv, write_fields_csv
from wpsim.errors import UnsupportedDim


def closed_form_dirichlet(n_interior, h, count):
    k = np.arange(1, count + 1)
    return 2.0 / h**2 * (1.0 - np.cos(k * np.pi * h))


def test_grid_basics():
    g = Grid(((0.0, 2.0), (1.0, 2.0)), (5, 3))
    assert g.dim == 2 and g.size == 15
    assert g.spacing == (0.5, 0.5)
    # lexicographic: last axis fastest
    np.testing.assert_array_equal(g.coords[1][:3], [1.0, 1.5, 2.0])
    assert g.boundary_mask.sum() == 15 - 3
    np.testing.assert_allclose(g.weights.sum(), 2.0)
    with pytest.raises(ValueError):
        Grid(((0.0, 1.0),), (2,))
    with pytest.raises(UnsupportedDim):
        Grid(((0, 1), (0, 1), (0, 1)), (3, 3, 3))


def test_linear_function_is_harmonic():
    g = Grid(((0.0, 1.0),), (17,))
    op = build_laplacian(g, DIRICHLET)
    f = g.axis(0).copy()
    lap = op.apply(f)
    np.testing.assert_allclose(lap, 0.0, atol=1e-10)


def test_stencil_second_order():
    errs, hs = [], []
    for n in (17, 33, 65, 129, 257):
        g = Grid(((0.0, 1.0),), (n,))
        op = build_laplacian(g, DIRICHLET)
        x = g.axis(0)
        lap = op.apply(np.sin(np.pi * x))
        errs.append(np.max(np.abs(lap + np.pi**2 * np.sin(np.pi * x[op.free]))))
        hs.append(g.spacing[0])
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_neumann_solution_second_order_with_flux():
    # ghost-node closure: O(h) truncation on boundary rows, O(h^2) for the solution.
    # f = cos(x) + x^2/2 on (0,1) solves f - lap f = cos(x) + x^2/2 - 1 + cos(x).
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    errs, hs = [], []
    for n in (17, 33, 65, 129):
        g = Grid(((0.0, 1.0),), (n,))
        op = build_laplacian(g, NEUMANN)
        x = g.axis(0)
        exact = np.cos(x) + x**2 / 2
        flux = np.zeros(n)
        flux[-1] = 1.0 - np.sin(1.0)
        rhs = 2 * np.cos(x) + x**2 / 2 - 1 + op.correction(flux)
        sol = spla.spsolve((sp.eye(n) - op.matrix).tocsc(), rhs)
        errs.append(np.max(np.abs(sol - exact)))
        hs.append(g.spacing[0])
        interior = np.abs(op.apply(exact, flux) - (1 - np.cos(x)))[1:-1]
        assert interior.max() < hs[-1] ** 2
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_neumann_constant_in_kernel():
    for g in (Grid(((0.0, 1.0),), (9,)), Grid(((0.0, 1.0), (0.0, 2.0)), (7, 9))):
        op = build_laplacian(g, NEUMANN)
        np.testing.assert_array_equal(op.apply(np.ones(g.size)), 0.0)
        np.testing.assert_allclose(np.asarray(op.matrix.sum(axis=1)).ravel(), 0.0, atol=1e-9)


@pytest.mark.parametrize("kind", [DIRICHLET, NEUMANN])
def test_weighted_symmetry(kind):
    g = Grid(((0.0, 1.0), (0.0, 1.5)), (6, 8))
    op = build_laplacian(g, kind)
    WA = (np.diag(op.weights) @ op.matrix.toarray())
    np.testing.assert_allclose(WA, WA.T, atol=1e-9)
    S = op.symmetric_form.toarray()
    np.testing.assert_allclose(S, S.T, atol=1e-9)
    if kind == DIRICHLET:
        A = op.matrix.toarray()
        np.testing.assert_allclose(A, A.T)


@pytest.mark.parametrize("n", [9, 33, 100])
def test_dirichlet_eigenvalues_closed_form(n):
    g = Grid(((0.0, 1.0),), (n,))
    op = build_laplacian(g, DIRICHLET)
    count = 5
    lams = np.array([lam for lam, _ in eigen_decompose(op, count)])
    expected = closed_form_dirichlet(n - 2, g.spacing[0], count)
    np.testing.assert_allclose(lams, expected, rtol=1e-10)


def test_eigenvalues_positive_and_neumann_kernel():
    g = Grid(((0.0, 1.0),), (21,))
    lams = [lam for lam, _ in eigen_decompose(build_laplacian(g, DIRICHLET), 19)]
    assert min(lams) > 0
    pairs = eigen_decompose(build_laplacian(g, NEUMANN), 3)
    assert abs(pairs[0][0]) < 1e-10 and pairs[1][0] > 1e-3
    np.testing.assert_allclose(pairs[0][1], 1.0, rtol=1e-10)  # unit L2 on a unit interval
    assert discrete_norm(pairs[1][1], g) == pytest.approx(1.0, rel=1e-12)


def test_eigenvectors_are_eigenvectors():
    g = Grid(((0.0, 2.0),), (41,))
    for kind in (DIRICHLET, NEUMANN):
        op = build_laplacian(g, kind)
        for lam, phi in eigen_decompose(op, 4):
            np.testing.assert_allclose(op.apply(phi), -lam * phi[op.free], atol=1e-8)


def test_tensor_eigenvalues():
    gx, gy = Grid(((0.0, 1.0),), (11,)), Grid(((0.0, 2.0),), (13,))
    g2 = Grid(((0.0, 1.0), (0.0, 2.0)), (11, 13))
    lx = [lam for lam, _ in eigen_decompose(build_laplacian(gx, DIRICHLET), 5)]
    ly = [lam for lam, _ in eigen_decompose(build_laplacian(gy, DIRICHLET), 5)]
    sums = np.sort(np.add.outer(lx, ly).ravel())[:6]
    l2 = [lam for lam, _ in eigen_decompose(build_laplacian(g2, DIRICHLET), 6)]
    np.testing.assert_allclose(l2, sums, rtol=1e-10)


def test_large_grid_uses_sparse_eigensolver():
    g = Grid(((0.0, 1.0),), (4003,))
    lam = eigen_decompose(build_laplacian(g, DIRICHLET), 2)
    expected = closed_form_dirichlet(4001, g.spacing[0], 2)
    np.testing.assert_allclose([l for l, _ in lam], expected, rtol=1e-8)


def test_eigen_sign_deterministic():
    g = Grid(((0.0, 1.0),), (31,))
    op = build_laplacian(g, DIRICHLET)
    a = eigen_decompose(op, 3)
    b = eigen_decompose(op, 3)
    for (_, p), (_, q) in zip(a, b):
        np.testing.assert_array_equal(p, q)
    assert np.sum(a[0][1]) > 0


def test_dirichlet_harmonic_extension_is_linear_interpolant():
    g = Grid(((0.0, 1.0),), (11,))
    op = build_laplacian(g, DIRICHLET)
    template = g.zeros()
    template[0], template[-1] = 2.0, -1.0
    import scipy.sparse.linalg as spla
    x = spla.spsolve(op.matrix.tocsc(), -op.correction(template))
    full = op.embed(x, template)
    np.testing.assert_allclose(full, 2.0 - 3.0 * g.axis(0), atol=1e-12)


def test_norm_examples():
    g = Grid(((0.0, 1.0),), (101,))
    assert discrete_norm(np.ones(g.size), g) == pytest.approx(1.0, rel=1e-14)
    assert discrete_norm(np.full(g.size, -3.5), g, "Linf") == 3.5
    errs = []
    for n in (17, 33, 65, 129):
        gg = Grid(((0.0, 1.0),), (n,))
        errs.append(abs(discrete_norm(np.sin(np.pi * gg.axis(0)), gg) - 1 / np.sqrt(2)))
    # trapezoid weights integrate sin^2 exactly here, well inside the O(h^2) bound
    assert all(e <= (1 / (n - 1)) ** 2 for e, n in zip(errs, (17, 33, 65, 129)))
    # H2 seminorm of sin(pi x): ||pi^2 sin|| = pi^2/sqrt(2)
    assert discrete_norm(np.sin(np.pi * g.axis(0)), g, "H2") == pytest.approx(np.pi**2 / np.sqrt(2), rel=2e-3)
    assert discrete_norm(np.full(g.size, 2.0), g, "Lq", q=3) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        discrete_norm(np.ones(3), g, "H7")


@given(st.floats(-1e3, 1e3), st.floats(1e-6, 1e3))
@settings(max_examples=30)
def test_norm_homogeneity(a, s):
    g = Grid(((0.0, 1.0),), (9,))
    f = a * np.cos(g.axis(0))
    assert discrete_norm(s * f, g) == pytest.approx(abs(s) * discrete_norm(f, g), rel=1e-12, abs=1e-300)


def test_outward_normal_derivative():
    g = Grid(((0.0, 1.0),), (21,))
    x = g.axis(0)
    d = outward_normal_derivative(x**2, g)
    np.testing.assert_allclose([d[0], d[-1]], [0.0, 2.0], atol=1e-12)


def test_fields_csv_roundtrip(tmp_path):
    g = Grid(((0.0, 1.0), (0.0, 1.0)), (4, 3))
    rng = np.random.default_rng(1)
    u = rng.standard_normal(g.size)
    write_fields_csv(tmp_path / "f.csv", g, {"u": u})
    back = read_fields_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back["u"], u)
    np.testing.assert_array_equal(back["y"], g.coords[1])
