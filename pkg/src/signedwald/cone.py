"""Projection onto polyhedral cones ``{u : A u <= 0}``.

The signed Wald statistic is the squared distance from the standardized
estimate to the cone whose normals are the rows of the symmetric square root
of the covariance. Projection onto a single half-space has a closed form;
the intersection is handled with Dykstra's cyclic projection algorithm.

Dykstra's recursion, in the increment form used here: with point
``x = u_hat + sum_j delta_j`` and per-constraint increments ``delta_j``,
each step over constraint ``j`` computes ``y = x - delta_j``,
``x' = P_j(y)`` and stores ``delta_j = x' - y``. Constraints are visited in
index order every cycle.

Projections onto a vertex or a low-dimensional face can converge slowly
(linear rate close to one when normals are strongly correlated). The
increments carry the Lagrange multipliers, so every few cycles the active set
is read off them and the projection onto that face is solved exactly; if the
KKT conditions hold the iteration stops with the exact projection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCorrelation, DimensionMismatch, InputError, NoConvergence, ZeroNormal
from .linalg import correlation, sym_sqrt

DEFAULT_TOL = 1e-10
DEFAULT_MAX_CYCLES = 10_000
FEAS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Polyhedral cone ``C = {u : normals @ u <= 0}``; row ``j`` is the normal of ``K_j``."""

    normals: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float)).copy()
        if a.ndim != 2:
            raise DimensionMismatch("normals must be a 2-d array")
        if np.any(np.linalg.norm(a, axis=1) <= 0):
            raise ZeroNormal("every half-space normal needs positive norm")
        a.setflags(write=False)
        object.__setattr__(self, "normals", a)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_covariance(cls, cov) -> ConeSpec:
        """Cone ``{u : sqrt(cov) @ u <= 0}`` with the symmetric square root."""
        return cls(sym_sqrt(cov))

    def contains(self, u, tol: float = FEAS_TOL) -> bool:
        u = np.asarray(u, dtype=float)
        scale = max(np.linalg.norm(u), 1.0) * np.linalg.norm(self.normals, axis=1)
        return bool(np.all(self.normals @ u <= tol * scale))


def project_halfspace(x, normal) -> np.ndarray:
    """Project ``x`` onto ``{u : normal @ u <= 0}``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(normal, dtype=float)
    nn = a @ a
    if not nn > 0:
        raise ZeroNormal("normal has zero norm")
    return x - max(0.0, float(a @ x)) / nn * a


@dataclass
class DykstraResult:
    point: np.ndarray
    sq_distance: float
    cycles: int
    displacement: float


def dykstra_project(
    u_hat,
    cone: ConeSpec,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    certify: bool = True,
) -> DykstraResult:
    """Nearest point of ``cone`` to ``u_hat`` by Dykstra's cyclic projections.

    Iteration stops once the largest point displacement over one full cycle
    drops below ``tol * max(1, |u_hat|)`` and the point is feasible within
    ``1e-9 * max(1, |u_hat|)``, or earlier when the active set read off the
    increments certifies the exact projection (``certify=False`` runs plain
    Dykstra iterations).

    Raises
    ------
    NoConvergence
        If the stopping rule is not met within ``max_cycles`` cycles.
    """
    u = np.asarray(u_hat, dtype=float)
    if u.ndim != 1 or u.size != cone.dim:
        raise DimensionMismatch(f"u_hat must be a vector of length {cone.dim}")
    points, cycles, disp = _dykstra_batch(u[None, :], cone, tol, max_cycles, certify)
    point = points[0]
    return DykstraResult(point, float(np.sum((u - point) ** 2)), int(cycles[0]), float(disp[0]))


def project_many(
    u_hat, cone: ConeSpec, tol: float = DEFAULT_TOL, max_cycles: int = DEFAULT_MAX_CYCLES, certify: bool = True
):
    """Project each row of ``u_hat``; returns ``(points, sq_distances)``.

    Rows are processed independently: a row that has converged is frozen, so
    apart from rounding in batched matrix products the result for a row does
    not depend on the other rows in the batch.
    """
    u = np.atleast_2d(np.asarray(u_hat, dtype=float))
    if u.shape[1] != cone.dim:
        raise DimensionMismatch(f"rows must have length {cone.dim}")
    points, _, _ = _dykstra_batch(u, cone, tol, max_cycles, certify)
    return points, np.sum((u - points) ** 2, axis=1)


def _dykstra_batch(u, cone, tol, max_cycles, certify=True):
    if not tol > 0 or max_cycles < 1:
        raise InputError("tol must be positive and max_cycles at least 1")
    a = cone.normals
    a_sq = np.einsum("ij,ij->i", a, a)
    b, dim = u.shape
    n_con = a.shape[0]
    scale = np.maximum(1.0, np.linalg.norm(u, axis=1))
    a_norm = np.sqrt(a_sq)

    points = u.copy()
    cycles = np.zeros(b, dtype=np.int64)
    disp_out = np.zeros(b)

    # Rows already inside the cone are their own projection.
    inside = np.all(u @ a.T <= 0.0, axis=1)
    active = np.flatnonzero(~inside)
    if active.size == 0:
        return points, cycles, disp_out

    x = u[active].copy()
    delta = np.zeros((n_con, active.size, dim))
    for cycle in range(1, max_cycles + 1):
        start = x.copy()
        for j in range(n_con):
            y = x - delta[j]
            viol = y @ a[j]
            x = y - (np.maximum(viol, 0.0) / a_sq[j])[:, None] * a[j]
            delta[j] = x - y
        disp = np.max(np.abs(x - start), axis=1)
        feas = np.max((x @ a.T) / a_norm, axis=1)
        sc = scale[active]
        done = (disp < tol * sc) & (feas <= FEAS_TOL * sc)
        if certify and (cycle <= 4 or cycle % 4 == 0):
            cert, exact = _kkt_certify(u[active], delta, a, a_sq, sc)
            x[cert] = exact[cert]
            done |= cert
        if np.any(done):
            idx = active[done]
            points[idx] = x[done]
            cycles[idx] = cycle
            disp_out[idx] = disp[done]
            keep = ~done
            active, x, delta = active[keep], x[keep], delta[:, keep]
            if active.size == 0:
                return points, cycles, disp_out
    raise NoConvergence(
        f"{active.size} projection(s) not converged after {max_cycles} cycles "
        f"(max displacement {float(np.max(disp)):.3e})"
    )


def _kkt_certify(u, delta, a, a_sq, scale):
    """Exact projections for rows whose active set can be recovered from the increments.

    Each increment is ``-lambda_j * a_j`` with a cumulative multiplier
    ``lambda_j >= 0``, so ``lambda_j > 0`` gives a first guess ``S`` of the
    active set. For a guess ``S`` the candidate ``p = u - A_S^T lam_S`` with
    ``A_S p = 0`` is the projection iff ``lam_S >= 0`` and ``p`` satisfies
    the other constraints (KKT conditions, sufficient for this convex
    problem). A failed guess is repaired for at most ``2 J`` steps by
    dropping the most negative multiplier or adding the most violated
    constraint. Rows that cannot be certified are left to further cycles.
    """
    n_con = a.shape[0]
    a_norm = np.sqrt(a_sq)
    pattern = (-np.einsum("jbd,jd->bj", delta, a) / a_sq) > 0
    ok = np.zeros(u.shape[0], dtype=bool)
    exact = np.empty_like(u)
    pending = np.arange(u.shape[0])
    bits = 1 << np.arange(n_con, dtype=np.int64)
    for _ in range(2 * n_con):
        if pending.size == 0:
            break
        codes = pattern[pending] @ bits
        next_pending = []
        for code in np.unique(codes):
            rows = pending[codes == code]
            if code == 0:
                continue
            sel = (code & bits) > 0
            a_s = a[sel]
            try:
                lam = np.linalg.solve(a_s @ a_s.T, a_s @ u[rows].T).T
            except np.linalg.LinAlgError:
                continue
            p = u[rows] - lam @ a_s
            tol = FEAS_TOL * scale[rows]
            lam_scaled = lam * a_norm[sel]
            slack = (p @ a.T) / a_norm
            lam_ok = np.all(lam_scaled >= -tol[:, None], axis=1)
            feas_ok = np.all(slack <= tol[:, None], axis=1)
            good = lam_ok & feas_ok
            ok[rows[good]] = True
            exact[rows[good]] = p[good]
            # repair the guess for the rest
            idx_s = np.flatnonzero(sel)
            drop = rows[~lam_ok]
            if drop.size:
                pattern[drop, idx_s[np.argmin(lam_scaled[~lam_ok], axis=1)]] = False
            add_mask = lam_ok & ~feas_ok
            if np.any(add_mask):
                pattern[rows[add_mask], np.argmax(slack[add_mask], axis=1)] = True
            next_pending.append(rows[~good])
        pending = np.concatenate(next_pending) if next_pending else pending[:0]
    return ok, exact


class Region(enum.Enum):
    """Which piece of the two-constraint geometry a point falls in."""

    INTERIOR = "interior"
    FACET1 = "facet1"
    FACET2 = "facet2"
    POLAR = "polar"


@dataclass(frozen=True)
class TwoHGeometry:
    """Geometry of the two-hypothesis cone at a point.

    ``beta1``/``beta2`` are slopes ``u2/u1`` of the boundary rays on which
    constraint 1 (resp. 2) is active; ``None`` for a vertical ray.
    """

    rho: float
    beta1: float | None
    beta2: float | None
    region: Region
    projection: np.ndarray


def _boundary_ray(a_own, a_other):
    r = np.array([-a_own[1], a_own[0]])
    if a_other @ r > 0:
        r = -r
    if abs(r[0]) < 1e-15 * np.linalg.norm(r):
        return r, None
    return r, float(r[1] / r[0])


def two_h_geometry(u_hat, sigma) -> TwoHGeometry:
    """Classify ``u_hat`` against the cone ``{u : sqrt(sigma) @ u <= 0}`` in two dimensions.

    The region is decided from the active set of the projection, never from
    the slopes, so vertical boundary rays are handled.
    """
    u = np.asarray(u_hat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if u.shape != (2,) or sigma.shape != (2, 2):
        raise DimensionMismatch("two_h_geometry needs a 2-vector and a 2x2 matrix")
    rho = float(correlation(sigma)[0, 1])
    if abs(rho) >= 1 - 1e-10:
        raise DegenerateCorrelation(f"|rho| = {abs(rho)} too close to 1")
    a = sym_sqrt(sigma)
    _, beta1 = _boundary_ray(a[0], a[1])
    _, beta2 = _boundary_ray(a[1], a[0])

    s = a @ u
    if np.all(s <= 0):
        return TwoHGeometry(rho, beta1, beta2, Region.INTERIOR, u.copy())
    # u lies in the polar cone iff it is a non-negative combination of the normals
    lam = np.linalg.solve(a.T, u)
    if np.all(lam >= 0):
        return TwoHGeometry(rho, beta1, beta2, Region.POLAR, np.zeros(2))
    # Otherwise exactly one facet projection is feasible; at the region
    # boundaries rounding can blur this, so take the least violating one.
    best = None
    for j, region in ((0, Region.FACET1), (1, Region.FACET2)):
        if s[j] > 0:
            p = u - s[j] / (a[j] @ a[j]) * a[j]
            viol = float(a[1 - j] @ p)
            if best is None or viol < best[0]:
                best = (viol, region, p)
    return TwoHGeometry(rho, beta1, beta2, best[1], best[2])
