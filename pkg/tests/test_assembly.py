"""Assembly: quadrature, dof classification, matrices, system formation."""

import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from igarad.assembly import (
    NonPositiveJacobianError,
    QuadratureRule,
    assemble,
    build_system,
    classify_dofs,
    edge_load,
    expand_solution,
)
from igarad.bspline import TensorProductSpace, basis_matrix, make_uniform_open_knots
from igarad.geometry import CoonsSurface, DomainConfig, coons_patch, make_line, make_semicircle_patch
from igarad.solver import direct_solve


def unit_square_patch():
    return coons_patch(
        make_line((0, 0), (1, 0)),
        make_line((0, 1), (1, 1)),
        make_line((0, 0), (0, 1)),
        make_line((1, 0), (1, 1)),
    )


def make_space(order, n, m):
    return TensorProductSpace(make_uniform_open_knots(order, n), make_uniform_open_knots(order, m))


def brute_force_matrices(space, geometry, points=12):
    """Independent dense quadrature of the stiffness and mass entries."""
    ref_x, ref_w = np.polynomial.legendre.leggauss(points)
    kvx, kve = space.kv_xi, space.kv_eta
    xs, ws_x = [], []
    for s in kvx.spans():
        t0, t1 = kvx.knots[s], kvx.knots[s + 1]
        xs.extend(0.5 * (t0 + t1) + 0.5 * (t1 - t0) * ref_x)
        ws_x.extend(0.5 * (t1 - t0) * ref_w)
    es, ws_e = [], []
    for s in kve.spans():
        t0, t1 = kve.knots[s], kve.knots[s + 1]
        es.extend(0.5 * (t0 + t1) + 0.5 * (t1 - t0) * ref_x)
        ws_e.extend(0.5 * (t1 - t0) * ref_w)
    xs, ws_x, es, ws_e = map(np.asarray, (xs, ws_x, es, ws_e))
    bx = basis_matrix(kvx, xs)
    dbx = basis_matrix(kvx, xs, deriv=1)
    be = basis_matrix(kve, es)
    dbe = basis_matrix(kve, es, deriv=1)
    _, F_xi, F_eta, det, _ = geometry.jacobian_grid(xs, es)
    g11 = (F_xi**2).sum(-1)
    g12 = (F_xi * F_eta).sum(-1)
    g22 = (F_eta**2).sum(-1)
    w2d = np.outer(ws_x, ws_e)
    N = space.size
    S = np.zeros((N, N))
    M = np.zeros((N, N))
    for q in range(N):
        iq, jq = space.unflatten(q)
        vq = np.outer(bx[:, iq], be[:, jq])
        gq_x = np.outer(dbx[:, iq], be[:, jq])
        gq_e = np.outer(bx[:, iq], dbe[:, jq])
        for p in range(q, N):
            ip, jp = space.unflatten(p)
            vp = np.outer(bx[:, ip], be[:, jp])
            gp_x = np.outer(dbx[:, ip], be[:, jp])
            gp_e = np.outer(bx[:, ip], dbe[:, jp])
            integ = (
                gq_x * gp_x * g22 - (gq_x * gp_e + gq_e * gp_x) * g12 + gq_e * gp_e * g11
            ) / det
            S[p, q] = S[q, p] = np.sum(integ * w2d)
            M[p, q] = M[q, p] = np.sum(vq * vp * det * w2d)
    return S, M


class TestQuadratureRule:
    def test_exactness_on_monomials(self):
        space = make_space(3, 6, 5)
        quad = QuadratureRule(space)
        # Gauss with q points integrates degree 2q-1 exactly on each span
        for rule, kv in ((quad.xi, space.kv_xi), (quad.eta, space.kv_eta)):
            npts = rule.nodes.shape[1]
            for deg in range(2 * npts):
                approx = np.sum(rule.weights * rule.nodes**deg)
                assert approx == pytest.approx(1.0 / (deg + 1), rel=1e-13)

    def test_under_integration_warning(self):
        space = make_space(4, 6, 6)
        with pytest.warns(UserWarning, match="under-integrates"):
            QuadratureRule(space, points_xi=3, points_eta=5)

    def test_default_points(self):
        space = make_space(4, 6, 6)
        quad = QuadratureRule(space)
        assert quad.points_xi == 5 and quad.points_eta == 5


class TestClassifyDofs:
    def test_aperture_preimages(self):
        cfg = DomainConfig(a=0.01, r=0.133, theta=math.pi / 4)
        space = make_space(4, 40, 30)
        part = classify_dofs(space, cfg)
        assert part.xi_left == pytest.approx(0.462406015, rel=1e-8)
        assert part.xi_right == pytest.approx(0.537593985, rel=1e-8)
        assert part.n_free + part.n_dirichlet == space.size

    def test_paper_index_range_generic_placement(self):
        # when the aperture endpoints fall strictly inside spans the
        # Dirichlet set is exactly the active range of those two spans
        cfg = DomainConfig(a=0.01, r=0.133, theta=math.pi / 4)
        space = make_space(4, 40, 30)
        part = classify_dofs(space, cfg)
        kv = space.kv_xi
        s1, s2 = kv.find_span(part.xi_left), kv.find_span(part.xi_right)
        assert kv.knots[s1] < part.xi_left and kv.knots[s2] < part.xi_right
        expected = np.arange(s1 - kv.degree, s2 + 1)
        assert np.array_equal(part.dirichlet, expected)

    def test_free_bottom_functions_vanish_on_aperture(self):
        cfg = DomainConfig(a=0.3, r=1.0, theta=math.pi / 4)
        space = make_space(3, 18, 9)
        part = classify_dofs(space, cfg)
        xis = np.linspace(part.xi_left, part.xi_right, 50)
        bm = basis_matrix(space.kv_xi, xis)
        bottom_free = [q for q in part.free if q < space.n]
        for q in bottom_free:
            assert np.max(np.abs(bm[:, q])) <= 1e-14

    def test_dirichlet_functions_sum_to_one_on_aperture(self):
        cfg = DomainConfig(a=0.3, r=1.0, theta=math.pi / 4)
        for aligned_bp in (False, True):
            kvx = make_uniform_open_knots(3, 18)
            if aligned_bp:
                kvx = kvx.with_breakpoints([0.35, 0.65])
            space = TensorProductSpace(kvx, make_uniform_open_knots(3, 9))
            part = classify_dofs(space, cfg)
            xis = np.linspace(part.xi_left, part.xi_right, 50)
            bm = basis_matrix(space.kv_xi, xis)
            total = bm[:, part.dirichlet].sum(axis=1)
            assert np.max(np.abs(total - 1.0)) <= 1e-13


class TestAssembleIdentityGeometry:
    def test_single_element_bilinear_matrices(self):
        space = make_space(2, 2, 2)
        mats = assemble(space, unit_square_patch(), QuadratureRule(space))
        m1 = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
        k1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
        S_exact = np.kron(m1, k1) + np.kron(k1, m1)
        M_exact = np.kron(m1, m1)
        assert np.max(np.abs(mats.stiffness.toarray() - S_exact)) <= 1e-14
        assert np.max(np.abs(mats.mass.toarray() - M_exact)) <= 1e-14
        assert mats.mass.diagonal() == pytest.approx(np.full(4, 1 / 9))
        assert mats.stiffness.diagonal() == pytest.approx(np.full(4, 2 / 3))

    def test_two_by_two_elements_against_oracle(self):
        space = make_space(2, 3, 3)
        geometry = unit_square_patch()
        mats = assemble(space, geometry, QuadratureRule(space))
        S_o, M_o = brute_force_matrices(space, geometry)
        scale_s = np.max(np.abs(S_o))
        scale_m = np.max(np.abs(M_o))
        assert np.max(np.abs(mats.stiffness.toarray() - S_o)) / scale_s <= 1e-9
        assert np.max(np.abs(mats.mass.toarray() - M_o)) / scale_m <= 1e-9

    def test_refinement_invariance_polynomial_integrand(self):
        space = make_space(3, 6, 5)
        geometry = unit_square_patch()
        a = assemble(space, geometry, QuadratureRule(space))
        b = assemble(space, geometry, QuadratureRule(space, points_xi=8, points_eta=8))
        for x, y in ((a.stiffness, b.stiffness), (a.mass, b.mass), (a.robin_mass, b.robin_mass)):
            d = (x - y).tocoo()
            rel = np.max(np.abs(d.data)) / np.max(np.abs(y.data)) if d.nnz else 0.0
            assert rel <= 1e-12


@pytest.fixture(scope="module")
def semi_setup():
    cfg = DomainConfig(a=0.01, r=0.133, theta=math.pi / 4)
    geometry = make_semicircle_patch(cfg)
    space = make_space(4, 16, 12)
    quad = QuadratureRule(space)
    return cfg, geometry, space, quad, assemble(space, geometry, quad)


@pytest.fixture(scope="module")
def sys_setup():
    cfg = DomainConfig(a=0.3, r=1.0, theta=math.pi / 4)
    geometry = make_semicircle_patch(cfg)
    space = make_space(3, 14, 10)
    quad = QuadratureRule(space)
    return cfg, geometry, space, quad, assemble(space, geometry, quad)


class TestAssembleSemicircle:

    def test_total_mass_is_domain_area(self, semi_setup):
        cfg, _, _, _, mats = semi_setup
        area = math.pi * cfg.r**2 / 2
        assert abs(mats.mass.sum() - area) <= 1e-10

    def test_total_robin_mass_is_arc_length(self, semi_setup):
        cfg, _, _, _, mats = semi_setup
        assert abs(mats.robin_mass.sum() - math.pi * cfg.r) <= 1e-8

    def test_matrices_symmetric(self, semi_setup):
        _, _, _, _, mats = semi_setup
        for mat in (mats.stiffness, mats.mass, mats.robin_mass):
            d = (mat - mat.T).tocoo()
            asym = np.max(np.abs(d.data)) if d.nnz else 0.0
            assert asym <= 1e-13 * max(1.0, np.max(np.abs(mat.data)))

    def test_mass_positive_definite_dense_oracle(self, semi_setup):
        _, _, space, _, mats = semi_setup
        assert space.size <= 400
        eigs = np.linalg.eigvalsh(mats.mass.toarray())
        assert eigs.min() > 0.0

    def test_robin_rows_vanish_for_interior_dofs(self, semi_setup):
        _, _, space, _, mats = semi_setup
        E = mats.robin_mass.tocsr()
        boundary = set()
        for j in range(space.m):
            boundary.add(space.flat_index(0, j))
            boundary.add(space.flat_index(space.n - 1, j))
        for i in range(space.n):
            boundary.add(space.flat_index(i, space.m - 1))
        nz_rows = np.nonzero(np.diff(E.indptr))[0]
        assert set(nz_rows.tolist()) <= boundary

    def test_sparsity_bound(self, semi_setup):
        _, _, space, _, mats = semi_setup
        p = max(space.kv_xi.degree, space.kv_eta.degree)
        frac = mats.stiffness.nnz / space.size**2
        assert frac <= (2 * p + 1) ** 2 / space.size

    def test_galerkin_consistency_energy_oracle(self):
        # w^T S w must equal the physical Dirichlet energy of the spline
        # field, computed here by direct high-order quadrature.  Uses a
        # quarter annulus: rational and curved but nowhere degenerate, so
        # both quadratures converge (the semicircle patch has singular
        # metric corners where no fixed rule reaches 1e-9).
        from igarad.geometry import make_arc

        geometry = coons_patch(
            make_arc((0, 0), 1.0, 0.0, math.pi / 2),
            make_arc((0, 0), 0.5, 0.0, math.pi / 2),
            make_line((1, 0), (0.5, 0)),
            make_line((0, 1), (0, 0.5)),
        )
        space = TensorProductSpace(
            make_uniform_open_knots(3, 4), make_uniform_open_knots(3, 3)
        )  # 2 x 1 elements
        # both sides use converged rules: on spans this coarse the default
        # rule's rational-integrand error (~1e-5) would mask formula bugs
        mats = assemble(space, geometry, QuadratureRule(space, points_xi=24, points_eta=24))
        rng = np.random.default_rng(2)
        w = rng.standard_normal(space.size)
        quad_form = float(w @ (mats.stiffness @ w))
        ref_x, ref_w = np.polynomial.legendre.leggauss(24)
        energy = 0.0
        kvx, kve = space.kv_xi, space.kv_eta
        for sx in kvx.spans():
            t0, t1 = kvx.knots[sx], kvx.knots[sx + 1]
            xs = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * ref_x
            wx = 0.5 * (t1 - t0) * ref_w
            for se in kve.spans():
                u0, u1 = kve.knots[se], kve.knots[se + 1]
                es = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * ref_x
                we = 0.5 * (u1 - u0) * ref_w
                grid = w.reshape(space.m, space.n).T
                bx = basis_matrix(kvx, xs)
                dbx = basis_matrix(kvx, xs, deriv=1)
                be = basis_matrix(kve, es)
                dbe = basis_matrix(kve, es, deriv=1)
                du_dxi = dbx @ grid @ be.T
                du_deta = bx @ grid @ dbe.T
                _, F_xi, F_eta, det, _ = geometry.jacobian_grid(xs, es)
                gx = (F_eta[..., 1] * du_dxi - F_xi[..., 1] * du_deta) / det
                gy = (-F_eta[..., 0] * du_dxi + F_xi[..., 0] * du_deta) / det
                energy += np.sum((gx**2 + gy**2) * det * np.outer(wx, we))
        assert quad_form == pytest.approx(energy, rel=1e-9)

    def test_refinement_invariance_smooth_parts(self):
        # The metric degenerates at the two top corners, so the stiffness
        # entries of corner-supported dofs converge slowly in quadrature;
        # away from them (and for mass and boundary mass globally) doubling
        # the rule leaves entries unchanged to tight tolerance.
        cfg = DomainConfig(a=0.01, r=0.133, theta=math.pi / 4)
        geometry = make_semicircle_patch(cfg)
        space = make_space(4, 48, 36)
        a = assemble(space, geometry, QuadratureRule(space))
        b = assemble(space, geometry, QuadratureRule(space, points_xi=10, points_eta=10))
        for x, y, tol in ((a.mass, b.mass, 1e-10), (a.robin_mass, b.robin_mass, 1e-12)):
            d = (x - y).tocoo()
            rel = np.max(np.abs(d.data)) / np.max(np.abs(y.data)) if d.nnz else 0.0
            assert rel <= tol
        corner = set()
        k = space.kv_xi.order
        for i in list(range(k + 1)) + list(range(space.n - k - 1, space.n)):
            for j in range(space.m - k - 1, space.m):
                corner.add(space.flat_index(i, j))
        d = (a.stiffness - b.stiffness).tocoo()
        ref = np.max(np.abs(b.stiffness.data))
        worst = max(
            (abs(v) for i, j, v in zip(d.row, d.col, d.data) if i not in corner and j not in corner),
            default=0.0,
        )
        assert worst / ref <= 1e-8

    def test_nonpositive_jacobian_detected(self):
        # fold the square by swapping two corners: det changes sign
        bowtie = coons_patch(
            make_line((0, 0), (1, 0)),
            make_line((1, 1), (0, 1)),
            make_line((0, 0), (1, 1)),
            make_line((1, 0), (0, 1)),
        )
        space = make_space(2, 3, 3)
        with pytest.raises(NonPositiveJacobianError) as err:
            assemble(space, bowtie, QuadratureRule(space))
        assert 0.0 <= err.value.xi <= 1.0
        assert err.value.det <= 0.0


class TestBuildSystem:

    def test_zero_wavenumber_zero_amplitude(self, sys_setup):
        _, _, space, _, mats = sys_setup
        part = classify_dofs(space, DomainConfig(a=0.3, r=1.0))
        A, b = build_system(mats, part, 0.0, 0.0)
        assert np.all(b == 0.0)
        x = direct_solve(A, b)
        assert np.max(np.abs(x)) == 0.0

    def test_system_symmetric_not_hermitian(self, sys_setup):
        cfg, _, space, _, mats = sys_setup
        part = classify_dofs(space, cfg)
        A, _ = build_system(mats, part, 40.0, 1.0)
        d = (A - A.T).tocoo()
        assert (np.max(np.abs(d.data)) if d.nnz else 0.0) <= 1e-13
        h = (A - A.conj().T).tocoo()
        assert np.max(np.abs(h.data)) > 0.0

    def test_post_solve_dirichlet_value(self, sys_setup):
        cfg, geometry, space, _, mats = sys_setup
        part = classify_dofs(space, cfg)
        k = 40.0
        A, b = build_system(mats, part, k, cfg.amplitude)
        alpha = expand_solution(part, direct_solve(A, b), cfg.amplitude)
        xis = np.linspace(part.xi_left, part.xi_right, 100)
        vals = space.evaluate(alpha, xis, [0.0])[:, 0]
        assert np.max(np.abs(vals - cfg.amplitude)) <= 1e-10

    def test_empty_dirichlet_rejected(self, sys_setup):
        from igarad.assembly import DofPartition

        _, _, space, _, mats = sys_setup
        empty = DofPartition(
            free=np.arange(space.size, dtype=np.int64),
            dirichlet=np.array([], dtype=np.int64),
            xi_left=0.4,
            xi_right=0.6,
        )
        with pytest.raises(ValueError, match="Dirichlet"):
            build_system(mats, empty, 10.0, 1.0)


class TestEdgeLoad:
    def test_constant_data_integrates_edge_length(self):
        # sum of the load vector for g = 1 is the edge arc length
        cfg = DomainConfig(a=0.01, r=0.5, theta=math.pi / 4)
        geometry = make_semicircle_patch(cfg)
        space = make_space(3, 8, 8)
        quad = QuadratureRule(space)
        one = lambda pts, normals: np.ones(pts.shape[0], dtype=complex)
        total = 0.0 + 0.0j
        for edge in ("left", "top", "right"):
            total += edge_load(space, geometry, quad, edge, one).sum()
        assert total.real == pytest.approx(math.pi * cfg.r, rel=1e-9)
        bottom = edge_load(space, geometry, quad, "bottom", one).sum()
        assert bottom.real == pytest.approx(2 * cfg.r, rel=1e-12)

    def test_outward_normals(self):
        cfg = DomainConfig(a=0.01, r=1.0, theta=math.pi / 4)
        geometry = make_semicircle_patch(cfg)
        space = make_space(3, 8, 8)
        quad = QuadratureRule(space)
        seen = {}

        def capture(edge):
            def fn(pts, normals):
                seen[edge] = (pts.copy(), normals.copy())
                return np.zeros(pts.shape[0])

            return fn

        for edge in ("left", "top", "right", "bottom"):
            edge_load(space, geometry, quad, edge, capture(edge))
        for edge in ("left", "top", "right"):
            pts, normals = seen[edge]
            radial = pts / np.hypot(pts[:, 0], pts[:, 1])[:, None]
            assert np.max(np.abs(normals - radial)) < 1e-12
        _, normals = seen["bottom"]
        assert np.max(np.abs(normals - [0.0, -1.0])) < 1e-12

    def test_outward_normals_unit_square(self):
        geometry = unit_square_patch()
        space = make_space(2, 4, 4)
        quad = QuadratureRule(space)
        expected = {
            "left": (-1.0, 0.0),
            "right": (1.0, 0.0),
            "bottom": (0.0, -1.0),
            "top": (0.0, 1.0),
        }
        for edge, ref in expected.items():
            seen = {}

            def fn(pts, normals, _edge=edge, _seen=seen):
                _seen["n"] = normals.copy()
                return np.zeros(pts.shape[0])

            edge_load(space, geometry, quad, edge, fn)
            assert np.max(np.abs(seen["n"] - ref)) < 1e-13

    def test_restricted_range(self):
        cfg = DomainConfig(a=0.25, r=1.0, theta=math.pi / 4)
        geometry = make_semicircle_patch(cfg)
        space = make_space(3, 9, 6)
        quad = QuadratureRule(space)
        one = lambda pts, normals: np.ones(pts.shape[0], dtype=complex)
        part = classify_dofs(space, cfg)
        left = edge_load(space, geometry, quad, "bottom", one, t_range=(0.0, part.xi_left))
        right = edge_load(space, geometry, quad, "bottom", one, t_range=(part.xi_right, 1.0))
        # each baffle side has physical length r - a
        assert left.sum().real == pytest.approx(cfg.r - cfg.a, rel=1e-12)
        assert right.sum().real == pytest.approx(cfg.r - cfg.a, rel=1e-12)
