"""Exact NURBS geometry of the semicircular radiation domain.

The domain is the upper half-disc of radius ``r`` centered at the origin.
Its boundary is split into four rational quadratic B-spline curves: the
diameter (bottom), two side arcs of polar angle ``theta`` adjacent to the
diameter, and the remaining top arc.  The surface map from the unit square
is the bilinearly blended Coons patch of those curves, built in
homogeneous coordinates so the result is again a rational B-spline with
the stated knot vectors.

All circle arcs are represented exactly (samples lie on the circle to
roundoff), which is the point of using rational splines for the geometry.
Curves and surfaces are immutable after construction; evaluation is pure
and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bspline import KnotVector, basis_matrix, elevate_order, insert_knots

_CORNER_TOL = 1e-10


@dataclass(frozen=True)
class DomainConfig:
    """Physical and geometric parameters of the radiation problem.

    ``r`` is normally derived from the near-field length (``r = rho * a^2
    / lambda``); use :meth:`from_frequency` for that.  ``theta`` is the
    polar angle subtended by each of the two side arcs.
    """

    a: float
    r: float
    theta: float = math.pi / 4
    amplitude: complex = 1.0 + 0.0j
    frequency: float | None = None
    sound_speed: float = 1500.0

    def __post_init__(self):
        if not 0.0 < self.a < self.r:
            raise ValueError(f"need 0 < a < r, got a={self.a}, r={self.r}")
        if not 0.0 < self.theta < math.pi / 2:
            raise ValueError(f"theta must lie in (0, pi/2), got {self.theta}")
        if self.frequency is not None and self.frequency <= 0:
            raise ValueError("frequency must be positive")

    @classmethod
    def from_frequency(
        cls,
        frequency: float,
        half_aperture: float = 0.01,
        sound_speed: float = 1500.0,
        radius_factor: float = 2.0,
        theta: float = math.pi / 4,
        amplitude: complex = 1.0 + 0.0j,
    ) -> "DomainConfig":
        """Config with ``r = radius_factor * a^2 / lambda``."""
        lam = sound_speed / frequency
        r = radius_factor * half_aperture**2 / lam
        return cls(
            a=half_aperture,
            r=r,
            theta=theta,
            amplitude=amplitude,
            frequency=frequency,
            sound_speed=sound_speed,
        )

    @property
    def wavenumber(self) -> float:
        if self.frequency is None:
            raise ValueError("wavenumber undefined: config has no frequency")
        return 2.0 * math.pi * self.frequency / self.sound_speed

    @property
    def wavelength(self) -> float:
        if self.frequency is None:
            raise ValueError("wavelength undefined: config has no frequency")
        return self.sound_speed / self.frequency


def near_field_length(cfg: DomainConfig) -> float:
    """Near-field (natural focus) distance ``a^2 / lambda``."""
    return cfg.a**2 / cfg.wavelength


class RationalCurve:
    """Planar rational B-spline curve (control points, positive weights, knots)."""

    def __init__(self, ctrl, weights, kv: KnotVector) -> None:
        ctrl = np.asarray(ctrl, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if ctrl.ndim != 2 or ctrl.shape[1] != 2:
            raise ValueError("ctrl must have shape (n, 2)")
        if weights.shape != (ctrl.shape[0],):
            raise ValueError("weights length must match control point count")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if ctrl.shape[0] != kv.num_basis:
            raise ValueError(
                f"{ctrl.shape[0]} control points incompatible with space of dim {kv.num_basis}"
            )
        self.ctrl = ctrl
        self.weights = weights
        self.kv = kv

    @property
    def num_ctrl(self) -> int:
        return self.ctrl.shape[0]

    def homogeneous(self) -> np.ndarray:
        """Rows (w*x, w*y, w)."""
        return np.column_stack([self.ctrl * self.weights[:, None], self.weights])

    @classmethod
    def from_homogeneous(cls, coeffs: np.ndarray, kv: KnotVector) -> "RationalCurve":
        w = coeffs[:, 2]
        return cls(coeffs[:, :2] / w[:, None], w, kv)

    def evaluate(self, ts) -> np.ndarray:
        """Curve points, shape (len(ts), 2)."""
        hom = basis_matrix(self.kv, ts) @ self.homogeneous()
        return hom[:, :2] / hom[:, 2:3]

    def derivative(self, ts) -> np.ndarray:
        """First derivative via the quotient rule, shape (len(ts), 2)."""
        hom = basis_matrix(self.kv, ts) @ self.homogeneous()
        dhom = basis_matrix(self.kv, ts, deriv=1) @ self.homogeneous()
        pts = hom[:, :2] / hom[:, 2:3]
        return (dhom[:, :2] - pts * dhom[:, 2:3]) / hom[:, 2:3]

    def reversed(self) -> "RationalCurve":
        """Same point set traced in the opposite direction."""
        knots = 1.0 - self.kv.knots[::-1]
        return RationalCurve(
            self.ctrl[::-1].copy(), self.weights[::-1].copy(), KnotVector(self.kv.order, knots)
        )

    def elevated(self) -> "RationalCurve":
        """Degree-elevated curve (homogeneous coordinates)."""
        coeffs, kv = elevate_order(self.homogeneous(), self.kv)
        return RationalCurve.from_homogeneous(coeffs, kv)

    def refined(self, new_knots) -> "RationalCurve":
        """Knot-inserted curve, geometry unchanged (homogeneous coordinates)."""
        coeffs, kv = insert_knots(self.homogeneous(), self.kv, new_knots)
        return RationalCurve.from_homogeneous(coeffs, kv)


def make_line(p0, p1) -> RationalCurve:
    """Straight segment as an order-2 rational curve with unit weights."""
    kv = KnotVector(2, [0.0, 0.0, 1.0, 1.0])
    return RationalCurve(np.array([p0, p1], dtype=float), np.ones(2), kv)


def make_arc(center, radius: float, angle_start: float, angle_end: float) -> RationalCurve:
    """Exact rational quadratic circle arc between two polar angles.

    Sweeps larger than a quarter circle are split into equal segments of
    at most pi/2, giving doubled interior knots; the interior control
    point of each segment carries weight ``cos(half sweep)``.
    """
    sweep = angle_end - angle_start
    if not 0.0 < sweep < 2.0 * math.pi:
        raise ValueError(f"arc sweep must lie in (0, 2*pi), got {sweep}")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    nseg = max(1, math.ceil(sweep / (math.pi / 2.0) - 1e-14))
    seg = sweep / nseg
    half = seg / 2.0
    w_mid = math.cos(half)

    angles_on = angle_start + seg * np.arange(nseg + 1)
    ctrl = [center + radius * np.array([math.cos(angles_on[0]), math.sin(angles_on[0])])]
    weights = [1.0]
    for s in range(nseg):
        mid = angles_on[s] + half
        ctrl.append(center + (radius / w_mid) * np.array([math.cos(mid), math.sin(mid)]))
        weights.append(w_mid)
        ctrl.append(center + radius * np.array([math.cos(angles_on[s + 1]), math.sin(angles_on[s + 1])]))
        weights.append(1.0)

    interior = np.repeat(np.arange(1, nseg) / nseg, 2)
    knots = np.concatenate([np.zeros(3), interior, np.ones(3)])
    return RationalCurve(np.array(ctrl), np.array(weights), KnotVector(3, knots))


def make_semicircle_boundary(cfg: DomainConfig):
    """Four compatible boundary curves (bottom, top, left, right).

    Orientations give a valid Coons boundary with F(0,0) = (-r, 0): the
    bottom runs left to right along y = 0, the side arcs run upward from
    the diameter, the top arc runs left to right.  The bottom segment is
    degree-elevated to quadratic and knot-refined onto the top arc's knot
    vector.
    """
    r, theta = cfg.r, cfg.theta
    c_l = make_arc((0.0, 0.0), r, math.pi - theta, math.pi).reversed()
    c_r = make_arc((0.0, 0.0), r, 0.0, theta)
    c_t = make_arc((0.0, 0.0), r, theta, math.pi - theta).reversed()
    c_b = make_line((-r, 0.0), (r, 0.0)).elevated()
    interior = c_t.kv.knots[c_t.kv.order : -c_t.kv.order]
    if interior.size:
        c_b = c_b.refined(interior)
    if c_b.kv != c_t.kv:
        raise RuntimeError("bottom/top knot vectors failed to match after refinement")
    return c_b, c_t, c_l, c_r


@dataclass(frozen=True)
class JacobianData:
    """Surface Jacobian at one parametric point (columns F_xi, F_eta)."""

    J: np.ndarray
    det: float
    mean_ratio: float


class CoonsSurface:
    """Tensor-product rational B-spline surface (the domain parametrization).

    Control net ``ctrl[i, j]`` with weights ``w[i, j]``; ``i`` runs along
    xi (bottom/top direction), ``j`` along eta (left/right direction).

    The mean-ratio quality reported by :meth:`jacobian` and
    :meth:`quality_grid` is measured against a reference rectangle with
    the patch's physical aspect ratio (width x height of the mapped
    domain): it is 1 where the map is conformal up to that overall
    aspect and tends to 0 at degenerate points.  For unit-aspect domains
    this is the classical ``2 det J / (|F_xi|^2 + |F_eta|^2)``.
    """

    def __init__(self, ctrl, weights, kv_xi: KnotVector, kv_eta: KnotVector) -> None:
        ctrl = np.asarray(ctrl, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if ctrl.shape != (kv_xi.num_basis, kv_eta.num_basis, 2):
            raise ValueError("ctrl must have shape (n_xi, n_eta, 2)")
        if weights.shape != ctrl.shape[:2]:
            raise ValueError("weights grid must match the control net")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        self.ctrl = ctrl
        self.weights = weights
        self.kv_xi = kv_xi
        self.kv_eta = kv_eta
        self._extents: tuple[float, float] | None = None

    def _homogeneous(self) -> np.ndarray:
        return np.concatenate(
            [self.ctrl * self.weights[..., None], self.weights[..., None]], axis=2
        )

    @property
    def extents(self) -> tuple[float, float]:
        """Physical (width, height) of the patch, from dense boundary samples."""
        if self._extents is None:
            ts = np.linspace(0.0, 1.0, 513)
            pts = np.vstack(
                [self.edge_curve(e).evaluate(ts) for e in ("bottom", "top", "left", "right")]
            )
            w = float(pts[:, 0].max() - pts[:, 0].min())
            h = float(pts[:, 1].max() - pts[:, 1].min())
            self._extents = (w, h)
        return self._extents

    def evaluate_grid(self, xis, etas) -> np.ndarray:
        """Surface points on the tensor grid, shape (len(xis), len(etas), 2)."""
        hom = self._homogeneous()
        bx = basis_matrix(self.kv_xi, xis)
        be = basis_matrix(self.kv_eta, etas)
        acc = np.einsum("pi,ijc,qj->pqc", bx, hom, be)
        return acc[..., :2] / acc[..., 2:3]

    def jacobian_grid(self, xis, etas):
        """Points, first derivatives, det and mean ratio on a tensor grid.

        Returns ``(F, F_xi, F_eta, det, mean_ratio)`` with leading shape
        ``(len(xis), len(etas))``.
        """
        hom = self._homogeneous()
        bx = basis_matrix(self.kv_xi, xis)
        dbx = basis_matrix(self.kv_xi, xis, deriv=1)
        be = basis_matrix(self.kv_eta, etas)
        dbe = basis_matrix(self.kv_eta, etas, deriv=1)
        acc = np.einsum("pi,ijc,qj->pqc", bx, hom, be)
        acc_x = np.einsum("pi,ijc,qj->pqc", dbx, hom, be)
        acc_e = np.einsum("pi,ijc,qj->pqc", bx, hom, dbe)
        w = acc[..., 2:3]
        F = acc[..., :2] / w
        F_xi = (acc_x[..., :2] - F * acc_x[..., 2:3]) / w
        F_eta = (acc_e[..., :2] - F * acc_e[..., 2:3]) / w
        det = F_xi[..., 0] * F_eta[..., 1] - F_xi[..., 1] * F_eta[..., 0]
        ew, eh = self.extents
        denom = (F_xi**2).sum(axis=-1) / ew**2 + (F_eta**2).sum(axis=-1) / eh**2
        mean_ratio = 2.0 * (det / (ew * eh)) / denom
        return F, F_xi, F_eta, det, mean_ratio

    def evaluate(self, xi: float, eta: float) -> np.ndarray:
        """Single surface point."""
        return self.evaluate_grid([xi], [eta])[0, 0]

    def jacobian(self, xi: float, eta: float) -> JacobianData:
        """Jacobian data at a single parametric point."""
        _, F_xi, F_eta, det, mr = self.jacobian_grid([xi], [eta])
        J = np.column_stack([F_xi[0, 0], F_eta[0, 0]])
        return JacobianData(J=J, det=float(det[0, 0]), mean_ratio=float(mr[0, 0]))

    def quality_grid(self, grid_res: int):
        """Mean-ratio samples on a uniform parametric grid.

        Samples sit at the midpoints of a ``grid_res x grid_res`` uniform
        partition of the parameter square (the map may degenerate exactly
        at isolated boundary corners, so sampling stays interior).
        Returns ``(xis, etas, points, mean_ratio)`` where ``points`` has
        shape ``(grid_res, grid_res, 2)``.
        """
        if grid_res < 2:
            raise ValueError("grid_res must be at least 2")
        xis = (np.arange(grid_res) + 0.5) / grid_res
        etas = (np.arange(grid_res) + 0.5) / grid_res
        F, _, _, _, mr = self.jacobian_grid(xis, etas)
        return xis, etas, F, mr

    def edge_curve(self, edge: str) -> RationalCurve:
        """Boundary restriction as a curve; edge in {bottom, top, left, right}."""
        hom = self._homogeneous()
        if edge == "bottom":
            return RationalCurve.from_homogeneous(hom[:, 0, :], self.kv_xi)
        if edge == "top":
            return RationalCurve.from_homogeneous(hom[:, -1, :], self.kv_xi)
        if edge == "left":
            return RationalCurve.from_homogeneous(hom[0, :, :], self.kv_eta)
        if edge == "right":
            return RationalCurve.from_homogeneous(hom[-1, :, :], self.kv_eta)
        raise ValueError(f"unknown edge {edge!r}")


def _match_space(coeffs: np.ndarray, kv: KnotVector, target: KnotVector) -> np.ndarray:
    """Represent a spline exactly on a finer/higher-order clamped space."""
    while kv.order < target.order:
        coeffs, kv = elevate_order(coeffs, kv)
    missing = []
    knots = list(kv.knots)
    for u in target.knots:
        if u in knots:
            knots.remove(u)
        else:
            missing.append(u)
    if missing:
        coeffs, kv = insert_knots(coeffs, kv, sorted(missing))
    if kv != target:
        raise ValueError("source knot vector is not a sub-vector of the target")
    return coeffs


def coons_patch(c_b, c_t, c_l, c_r) -> CoonsSurface:
    """Bilinearly blended Coons patch of four boundary curves.

    ``c_b``/``c_t`` must share a knot vector (the xi direction) and
    ``c_l``/``c_r`` likewise (eta); corners must match.  The blend (ruled
    surface in eta plus ruled surface in xi minus the bilinear corner
    patch) is performed on homogeneous control points, so the boundary
    curves are reproduced exactly.
    """
    if c_b.kv != c_t.kv:
        raise ValueError("bottom and top curves must share a knot vector")
    if c_l.kv != c_r.kv:
        raise ValueError("left and right curves must share a knot vector")
    kv_xi, kv_eta = c_b.kv, c_l.kv

    # Corner compatibility in homogeneous coordinates: positions must
    # coincide and the end weights must agree for the blend to reproduce
    # the boundary curves exactly.
    corners = [
        (c_b.evaluate([0.0])[0], c_l.evaluate([0.0])[0], c_b.weights[0], c_l.weights[0]),
        (c_b.evaluate([1.0])[0], c_r.evaluate([0.0])[0], c_b.weights[-1], c_r.weights[0]),
        (c_t.evaluate([0.0])[0], c_l.evaluate([1.0])[0], c_t.weights[0], c_l.weights[-1]),
        (c_t.evaluate([1.0])[0], c_r.evaluate([1.0])[0], c_t.weights[-1], c_r.weights[-1]),
    ]
    for pa, pb, wa, wb in corners:
        if np.max(np.abs(pa - pb)) > _CORNER_TOL:
            raise ValueError(f"corner mismatch {pa} vs {pb} exceeds {_CORNER_TOL}")
        if abs(wa - wb) > _CORNER_TOL:
            raise ValueError("corner weights of adjacent boundary curves must agree")

    hb, ht = c_b.homogeneous(), c_t.homogeneous()
    hl, hr = c_l.homogeneous(), c_r.homogeneous()
    n, m = kv_xi.num_basis, kv_eta.num_basis
    lin = KnotVector(2, [0.0, 0.0, 1.0, 1.0])

    # Ruled surface spanned between bottom and top: for each xi control
    # index, write the straight homogeneous segment on the eta space.
    ruled_bt = np.empty((n, m, 3))
    for i in range(n):
        ruled_bt[i] = _match_space(np.vstack([hb[i], ht[i]]), lin, kv_eta)
    ruled_lr = np.empty((n, m, 3))
    for j in range(m):
        ruled_lr[:, j, :] = _match_space(np.vstack([hl[j], hr[j]]), lin, kv_xi)
    left_line = _match_space(np.vstack([hb[0], ht[0]]), lin, kv_eta)
    right_line = _match_space(np.vstack([hb[-1], ht[-1]]), lin, kv_eta)
    corner_patch = np.empty((n, m, 3))
    for j in range(m):
        corner_patch[:, j, :] = _match_space(
            np.vstack([left_line[j], right_line[j]]), lin, kv_xi
        )

    hom = ruled_bt + ruled_lr - corner_patch
    w = hom[..., 2]
    if np.any(w <= 0.0):
        raise ValueError("Coons blend produced nonpositive weights")
    return CoonsSurface(hom[..., :2] / w[..., None], w, kv_xi, kv_eta)


def make_semicircle_patch(cfg: DomainConfig) -> CoonsSurface:
    """Coons parametrization of the semicircular domain for ``cfg``."""
    return coons_patch(*make_semicircle_boundary(cfg))


def write_quality_csv(path, surface: CoonsSurface, grid_res: int) -> None:
    """Quality-map CSV with columns xi, eta, x, y, mean_ratio."""
    xis, etas, F, mr = surface.quality_grid(grid_res)
    rows = []
    for p, xi in enumerate(xis):
        for q, eta in enumerate(etas):
            rows.append((xi, eta, F[p, q, 0], F[p, q, 1], mr[p, q]))
    data = np.asarray(rows)
    header = "xi,eta,x,y,mean_ratio"
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
