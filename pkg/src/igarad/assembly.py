"""Galerkin assembly of the Helmholtz sesquilinear form on the unit square.

All integrals are computed in parametric coordinates: the gradient term is
pulled back with the metric ``(J^T J)^{-1} |det J|``, the mass term is
weighted by ``|det J|``, and the impedance (Robin) boundary term becomes
three line integrals along the parametric edges xi=0, eta=1, xi=1 with the
edge speed as arc-length factor.  The inverse geometry map is never
evaluated.

Matrices are accumulated over the full ``N x N`` index set in triplet form
and restricted to free/Dirichlet blocks in :func:`build_system`.  The
element loop is serial; evaluation of the immutable spaces and geometry is
pure, so a parallel loop with a deterministic merge could replace it
without changing results beyond summation order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bspline import KnotVector, TensorProductSpace, eval_basis
from .geometry import CoonsSurface, DomainConfig


class NonPositiveJacobianError(RuntimeError):
    """Geometry map is degenerate or folded at a quadrature point."""

    def __init__(self, xi: float, eta: float, det: float):
        super().__init__(
            f"nonpositive Jacobian determinant det={det:.6g} at (xi, eta)=({xi:.6g}, {eta:.6g})"
        )
        self.xi = xi
        self.eta = eta
        self.det = det


@dataclass(frozen=True)
class _DirectionRule:
    """Per-span Gauss-Legendre rule along one parametric direction."""

    spans: np.ndarray
    nodes: np.ndarray    # (n_elements, n_points)
    weights: np.ndarray  # (n_elements, n_points)


def _direction_rule(kv: KnotVector, npoints: int) -> _DirectionRule:
    spans = kv.spans()
    ref_x, ref_w = np.polynomial.legendre.leggauss(npoints)
    t0 = kv.knots[spans]
    t1 = kv.knots[spans + 1]
    mid = 0.5 * (t0 + t1)
    half = 0.5 * (t1 - t0)
    return _DirectionRule(
        spans=spans,
        nodes=mid[:, None] + half[:, None] * ref_x[None, :],
        weights=half[:, None] * ref_w[None, :],
    )


class QuadratureRule:
    """Tensor Gauss-Legendre quadrature per nonempty knot span.

    The default of ``order + 1`` points per direction per span integrates
    the polynomial part of every integrand exactly; the rational geometry
    weight makes no rule exact, so accuracy is guarded by refinement
    tests.  Rules with fewer than ``order`` points per span trigger an
    under-integration warning.
    """

    def __init__(self, space: TensorProductSpace, points_xi: int | None = None, points_eta: int | None = None):
        self.points_xi = points_xi if points_xi is not None else space.kv_xi.order + 1
        self.points_eta = points_eta if points_eta is not None else space.kv_eta.order + 1
        for npts, kv, name in (
            (self.points_xi, space.kv_xi, "xi"),
            (self.points_eta, space.kv_eta, "eta"),
        ):
            if npts < 1:
                raise ValueError("quadrature needs at least one point per span")
            if npts < kv.order:
                warnings.warn(
                    f"{npts} Gauss points per span under-integrates order-{kv.order} "
                    f"splines in {name}",
                    stacklevel=2,
                )
        self.xi = _direction_rule(space.kv_xi, self.points_xi)
        self.eta = _direction_rule(space.kv_eta, self.points_eta)


def _tabulate(kv: KnotVector, rule: _DirectionRule):
    """Basis values/derivatives on the rule's nodes.

    Returns ``(vals, ders, first)`` with ``vals[e, a, q]`` the a-th active
    function at node q of element e and ``first[e]`` its global offset.
    """
    n_el, n_q = rule.nodes.shape
    k = kv.order
    vals = np.empty((n_el, k, n_q))
    ders = np.empty((n_el, k, n_q))
    first = np.empty(n_el, dtype=np.int64)
    for e in range(n_el):
        first[e] = rule.spans[e] - kv.degree
        for q in range(n_q):
            be = eval_basis(kv, rule.nodes[e, q], 1)
            vals[e, :, q] = be.values
            ders[e, :, q] = be.derivatives[0]
    return vals, ders, first


@dataclass(frozen=True)
class DofPartition:
    """Split of the flattened dof indices into free and Dirichlet sets.

    Dirichlet dofs are the bottom-row (eta index 0) basis functions whose
    support meets the transducer aperture on the bottom edge; every other
    basis function vanishes identically on that segment.
    """

    free: np.ndarray
    dirichlet: np.ndarray
    xi_left: float
    xi_right: float

    @property
    def n_free(self) -> int:
        return self.free.size

    @property
    def n_dirichlet(self) -> int:
        return self.dirichlet.size


def classify_dofs(space: TensorProductSpace, cfg: DomainConfig) -> DofPartition:
    """Locate the Dirichlet dofs from the aperture preimage.

    The bottom edge is traversed affinely, so the aperture endpoints
    (-a, 0) and (a, 0) pull back to ``(r -/+ a) / (2 r)``.
    """
    if not 0.0 < cfg.a < cfg.r:
        raise ValueError("aperture must satisfy 0 < a < r")
    xi_left = (cfg.r - cfg.a) / (2.0 * cfg.r)
    xi_right = (cfg.r + cfg.a) / (2.0 * cfg.r)
    kv = space.kv_xi
    # B_i is not identically null on the aperture iff its open support
    # (t_i, t_{i+order}) meets (xi_left, xi_right).  When the aperture
    # endpoints sit between knots this is the active range of the two
    # containing spans; when they coincide with knots the function whose
    # support only touches an endpoint is correctly excluded.
    i_all = np.arange(kv.num_basis)
    on_aperture = (kv.knots[i_all] < xi_right) & (kv.knots[i_all + kv.order] > xi_left)
    dirichlet = i_all[on_aperture].astype(np.int64)  # flat q = 0*n + i
    mask = np.ones(space.size, dtype=bool)
    mask[dirichlet] = False
    return DofPartition(
        free=np.nonzero(mask)[0].astype(np.int64),
        dirichlet=dirichlet,
        xi_left=xi_left,
        xi_right=xi_right,
    )


@dataclass(frozen=True)
class SystemMatrices:
    """Stiffness, mass and Robin boundary-mass matrices over all N dofs.

    Entries are real; the complex Helmholtz combination is formed in
    :func:`build_system`.
    """

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    robin_mass: sp.csr_matrix


def assemble(space: TensorProductSpace, geometry: CoonsSurface, quad: QuadratureRule) -> SystemMatrices:
    """Assemble stiffness, mass and Robin boundary-mass matrices.

    Aborts with :class:`NonPositiveJacobianError` if the geometry Jacobian
    determinant is nonpositive at any quadrature point.
    """
    kvx, kve = space.kv_xi, space.kv_eta
    n = space.n
    N = space.size
    k1, k2 = kvx.order, kve.order
    L = k1 * k2

    bx, dbx, fx = _tabulate(kvx, quad.xi)
    be, dbe, fe = _tabulate(kve, quad.eta)
    E1, q1 = quad.xi.nodes.shape
    E2, q2 = quad.eta.nodes.shape

    xi_flat = quad.xi.nodes.ravel()
    eta_flat = quad.eta.nodes.ravel()
    _, F_xi, F_eta, det, _ = geometry.jacobian_grid(xi_flat, eta_flat)
    if np.any(det <= 0.0):
        p, q = np.unravel_index(int(np.argmin(det)), det.shape)
        raise NonPositiveJacobianError(xi_flat[p], eta_flat[q], float(det.min()))

    g11 = (F_xi**2).sum(axis=-1)
    g12 = (F_xi * F_eta).sum(axis=-1)
    g22 = (F_eta**2).sum(axis=-1)
    w2d = np.outer(quad.xi.weights.ravel(), quad.eta.weights.ravel())
    W11 = g22 / det * w2d
    W12 = -g12 / det * w2d
    W22 = g11 / det * w2d
    Wm = det * w2d

    n_entries = E1 * E2 * L * L
    rows = np.empty(n_entries, dtype=np.int64)
    cols = np.empty(n_entries, dtype=np.int64)
    s_vals = np.empty(n_entries)
    m_vals = np.empty(n_entries)

    ge = fe[:, None] + np.arange(k2)[None, :]  # (E2, k2) eta dof indices
    block = E2 * L * L
    for e1 in range(E1):
        sl = slice(e1 * q1, (e1 + 1) * q1)

        def _slab(W):
            return np.ascontiguousarray(
                W[sl].reshape(q1, E2, q2).transpose(1, 0, 2).reshape(E2, q1 * q2)
            )

        w11, w12, w22, wm = _slab(W11), _slab(W12), _slab(W22), _slab(Wm)
        # local parametric gradients / values: (E2, L, q1*q2)
        p_dxi = np.einsum("aq,ebp->eabqp", dbx[e1], be).reshape(E2, L, q1 * q2)
        p_deta = np.einsum("aq,ebp->eabqp", bx[e1], dbe).reshape(E2, L, q1 * q2)
        p_val = np.einsum("aq,ebp->eabqp", bx[e1], be).reshape(E2, L, q1 * q2)

        # Symmetric-by-construction local matrices: the diagonal metric
        # terms are Gram products Q Q^T, the cross term is T + T^T.
        qa = p_dxi * np.sqrt(w11)[:, None, :]
        qb = p_deta * np.sqrt(w22)[:, None, :]
        t = np.matmul(p_dxi * w12[:, None, :], p_deta.transpose(0, 2, 1))
        k_loc = np.matmul(qa, qa.transpose(0, 2, 1))
        k_loc += np.matmul(qb, qb.transpose(0, 2, 1))
        k_loc += t + t.transpose(0, 2, 1)
        qm = p_val * np.sqrt(wm)[:, None, :]
        m_loc = np.matmul(qm, qm.transpose(0, 2, 1))

        gdof = (ge[:, None, :] * n + (fx[e1] + np.arange(k1))[None, :, None]).reshape(E2, L)
        out = slice(e1 * block, (e1 + 1) * block)
        rows[out] = np.broadcast_to(gdof[:, :, None], (E2, L, L)).ravel()
        cols[out] = np.broadcast_to(gdof[:, None, :], (E2, L, L)).ravel()
        s_vals[out] = k_loc.ravel()
        m_vals[out] = m_loc.ravel()

    stiffness = sp.coo_matrix((s_vals, (rows, cols)), shape=(N, N)).tocsr()
    mass = sp.coo_matrix((m_vals, (rows, cols)), shape=(N, N)).tocsr()
    robin = _robin_mass(space, geometry, quad)
    for mat in (stiffness, mass, robin):
        mat.sum_duplicates()
        mat.sort_indices()
    return SystemMatrices(stiffness=stiffness, mass=mass, robin_mass=robin)


_ROBIN_EDGES = ("left", "top", "right")


def _edge_geometry(space, edge):
    if edge in ("left", "right"):
        kv = space.kv_eta
    elif edge in ("bottom", "top"):
        kv = space.kv_xi
    else:
        raise ValueError(f"unknown edge {edge!r}")
    return kv


def _edge_speed_points_normals(geometry: CoonsSurface, edge: str, ts: np.ndarray):
    """Physical points, edge speed (arc-length factor) and outward normals."""
    if edge in ("left", "right"):
        xi0 = 0.0 if edge == "left" else 1.0
        F, _, F_t, _, _ = geometry.jacobian_grid([xi0], ts)
        F, F_t = F[0], F_t[0]
    else:
        eta0 = 0.0 if edge == "bottom" else 1.0
        F, F_t, _, _, _ = geometry.jacobian_grid(ts, [eta0])
        F, F_t = F[:, 0], F_t[:, 0]
    speed = np.hypot(F_t[:, 0], F_t[:, 1])
    # Outward normal for a positively oriented patch (det J > 0): rotate
    # the edge tangent by -90 deg on bottom/right, +90 deg on top/left.
    if edge in ("bottom", "right"):
        normal = np.column_stack([F_t[:, 1], -F_t[:, 0]]) / speed[:, None]
    else:
        normal = np.column_stack([-F_t[:, 1], F_t[:, 0]]) / speed[:, None]
    return F, speed, normal


def _edge_dofs(space: TensorProductSpace, edge: str, idx: np.ndarray) -> np.ndarray:
    """Flat dof indices of the edge's active 1D basis functions."""
    if edge == "left":
        return idx * space.n
    if edge == "right":
        return idx * space.n + (space.n - 1)
    if edge == "bottom":
        return idx
    return (space.m - 1) * space.n + idx


def _robin_mass(space: TensorProductSpace, geometry: CoonsSurface, quad: QuadratureRule) -> sp.csr_matrix:
    """Boundary mass over the three impedance edges (xi=0, eta=1, xi=1)."""
    N = space.size
    rows, cols, vals = [], [], []
    for edge in _ROBIN_EDGES:
        kv = _edge_geometry(space, edge)
        rule = quad.eta if edge in ("left", "right") else quad.xi
        bvals, _, first = _tabulate(kv, rule)
        n_el, k, n_q = bvals.shape
        for e in range(n_el):
            ts = rule.nodes[e]
            _, speed, _ = _edge_speed_points_normals(geometry, edge, ts)
            q = bvals[e] * np.sqrt(rule.weights[e] * speed)[None, :]
            loc = q @ q.T
            dofs = _edge_dofs(space, edge, first[e] + np.arange(k))
            rows.append(np.repeat(dofs, k))
            cols.append(np.tile(dofs, k))
            vals.append(loc.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()


def _subspan_rule(kv: KnotVector, npoints: int, lo: float, hi: float):
    """Gauss nodes/weights per span restricted to the interval [lo, hi]."""
    ref_x, ref_w = np.polynomial.legendre.leggauss(npoints)
    out = []
    for s in kv.spans():
        t0, t1 = max(kv.knots[s], lo), min(kv.knots[s + 1], hi)
        if t1 - t0 <= 1e-15:
            continue
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        out.append((s, mid + half * ref_x, half * ref_w))
    return out


def edge_load(
    space: TensorProductSpace,
    geometry: CoonsSurface,
    quad: QuadratureRule,
    edge: str,
    data,
    t_range: tuple[float, float] = (0.0, 1.0),
) -> np.ndarray:
    """Boundary load vector ``l_p = int_edge g psi_p ds`` over all N dofs.

    ``data(points, normals)`` receives physical points ``(P, 2)`` and
    outward unit normals and returns complex values.  ``t_range``
    restricts the integral to a parametric sub-interval of the edge.
    """
    kv = _edge_geometry(space, edge)
    npts = quad.points_eta if edge in ("left", "right") else quad.points_xi
    load = np.zeros(space.size, dtype=complex)
    for s, ts, ws in _subspan_rule(kv, npts, *t_range):
        pts, speed, normal = _edge_speed_points_normals(geometry, edge, ts)
        g = np.asarray(data(pts, normal), dtype=complex)
        bvals = np.empty((kv.order, ts.size))
        for qi, t in enumerate(ts):
            bvals[:, qi] = eval_basis(kv, t, 0).values
        first = s - kv.degree
        dofs = _edge_dofs(space, edge, first + np.arange(kv.order))
        load[dofs] += bvals @ (ws * speed * g)
    return load


def build_system(
    matrices: SystemMatrices,
    partition: DofPartition,
    wavenumber: float,
    dirichlet_values,
    load: np.ndarray | None = None,
):
    """Form the restricted complex system ``A alpha0 = b``.

    ``A`` is the free-free block of ``S - k^2 M + i k E``; the Dirichlet
    coupling moves to the right-hand side with the sign that makes the
    reconstructed field attain the prescribed boundary values, and any
    boundary load is added on top.  Returns ``(A, b)``.
    """
    if partition.n_dirichlet == 0:
        raise ValueError("no Dirichlet dofs: the radiation problem needs a source")
    k = float(wavenumber)
    full = (matrices.stiffness - k**2 * matrices.mass).astype(complex)
    if k != 0.0:
        full = full + (1j * k) * matrices.robin_mass
    full = full.tocsr()
    free, diri = partition.free, partition.dirichlet
    A = full[free][:, free].tocsr()
    A.sort_indices()
    coupling = full[free][:, diri]
    values = np.asarray(dirichlet_values, dtype=complex)
    if values.ndim == 0:
        values = np.full(diri.size, complex(values))
    b = -coupling @ values
    if load is not None:
        b = b + np.asarray(load, dtype=complex)[free]
    return A, b


def expand_solution(partition: DofPartition, free_values: np.ndarray, dirichlet_values) -> np.ndarray:
    """Scatter free and Dirichlet coefficients into the full-length vector."""
    values = np.asarray(dirichlet_values, dtype=complex)
    if values.ndim == 0:
        values = np.full(partition.n_dirichlet, complex(values))
    alpha = np.empty(partition.n_free + partition.n_dirichlet, dtype=complex)
    alpha[partition.free] = free_values
    alpha[partition.dirichlet] = values
    return alpha
