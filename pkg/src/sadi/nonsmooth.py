"""Nonsmooth analysis: Clarke gradients, set-valued derivatives, reduced
inclusions, generalized decay derivatives, and a grid-based stability
certifier.

Scalar functions are piecewise smooth with declared affine kink surfaces.
Gradient hulls come from evaluating adjacent piece gradients at the kink;
the reduction/derivative machinery works on vertex descriptions and small
linear programs, which is exact for the polytopal values this package
produces (null spaces of dimension <= 1 in particular).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .sets import (
    Box,
    ConvexSet,
    Polytope,
    SetValuedMap,
    Singleton,
    _as_vector,
    _check_dims,
    _dedupe_points,
    canonical_vertices,
    least_norm_point,
    support,
)
from .sets import _canonical, _sphere_directions

__all__ = [
    "SmoothPiece",
    "KinkSurface",
    "PiecewiseSmoothScalar",
    "clarke_gradient",
    "Interval",
    "set_valued_derivative",
    "u_reduced",
    "u_generalized_derivative",
    "NEG_INFINITY",
    "NegInfinity",
    "StabilityCertificate",
    "certify_stability",
]

_CONSTANCY_TOL = 1e-9


class NegInfinity:
    """Distinguished minus-infinity sentinel.

    Supports ordering against floats but no arithmetic, so it can never
    leak into numeric accumulations.
    """

    __slots__ = ()

    def __lt__(self, other):
        return not isinstance(other, NegInfinity)

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return isinstance(other, NegInfinity)

    def __eq__(self, other):
        return isinstance(other, NegInfinity)

    def __hash__(self):
        return hash("NegInfinity")

    def __repr__(self):
        return "NEG_INFINITY"


NEG_INFINITY = NegInfinity()


@dataclass(frozen=True)
class SmoothPiece:
    predicate: Callable[[np.ndarray], bool]
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KinkSurface:
    """Affine surface {x : <normal, x> = offset} where the gradient may jump."""

    normal: tuple
    offset: float

    @staticmethod
    def coordinate(i: int, threshold: float, dim: int) -> "KinkSurface":
        normal = [0.0] * dim
        normal[i] = 1.0
        return KinkSurface(tuple(normal), float(threshold))


class PiecewiseSmoothScalar:
    """Locally Lipschitz scalar function, smooth off declared kink surfaces."""

    def __init__(self, dim: int, pieces: Sequence[SmoothPiece],
                 kinks: Sequence[KinkSurface] = (), regular: bool = True,
                 name: str = "", lipschitz_bound: Optional[float] = None):
        self.dim = int(dim)
        self.pieces = list(pieces)
        self.kinks = list(kinks)
        self.regular = bool(regular)
        self.name = name
        self.lipschitz_bound = lipschitz_bound

    def piece_at(self, x: np.ndarray) -> SmoothPiece:
        for piece in self.pieces:
            if piece.predicate(x):
                return piece
        raise ValueError(f"no smooth piece matches {x.tolist()} in {self.name or '<anon>'}")

    def value(self, x) -> float:
        x = _as_vector(x, "point")
        _check_dims(x.shape[0], self.dim, "scalar function")
        return float(self.piece_at(x).value(x))

    def __call__(self, x) -> float:
        return self.value(x)

    def active_kinks(self, x: np.ndarray, tol: float = _CONSTANCY_TOL) -> list[KinkSurface]:
        out = []
        for k in self.kinks:
            n = np.asarray(k.normal, dtype=float)
            if abs(float(n @ x) - k.offset) <= tol * (1.0 + abs(k.offset)):
                out.append(k)
        return out

    def gradient(self, x) -> np.ndarray:
        """Classical gradient; raises on a kink surface."""
        x = _as_vector(x, "point")
        if self.active_kinks(x):
            raise ValueError("gradient undefined on a kink surface; use clarke_gradient")
        return _as_vector(self.piece_at(x).gradient(x), "gradient")


def smooth_scalar(dim: int, value, gradient, name: str = "",
                  regular: bool = True) -> PiecewiseSmoothScalar:
    """Single-piece everywhere-smooth function."""
    return PiecewiseSmoothScalar(
        dim, [SmoothPiece(lambda x: True, value, gradient)], kinks=(),
        regular=regular, name=name)


def clarke_gradient(u: PiecewiseSmoothScalar, x, tol: float = _CONSTANCY_TOL) -> ConvexSet:
    """Hull of the gradient limits of the pieces whose closure contains x."""
    x = _as_vector(x, "point")
    _check_dims(x.shape[0], u.dim, "clarke_gradient")
    active = u.active_kinks(x, tol)
    if not active:
        return Singleton(u.piece_at(x).gradient(x))

    normals = np.asarray([k.normal for k in active], dtype=float)
    unit = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    grads = []
    for signs in itertools.product((-1.0, 1.0), repeat=len(active)):
        probe = x + h * (np.asarray(signs) @ unit)
        if u.active_kinks(probe, tol):
            raise ValueError("kink surfaces too close or not transversal at this point")
        try:
            piece = u.piece_at(probe)
        except ValueError as exc:
            raise ValueError("point sits on an undeclared kink") from exc
        grads.append(_as_vector(piece.gradient(x), "gradient"))
    pts = _dedupe_points(np.asarray(grads))
    if pts.shape[0] == 1:
        return Singleton(pts[0])
    if u.dim == 1:
        return Box([float(pts.min())], [float(pts.max())])
    return Polytope(pts)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __contains__(self, a: float) -> bool:
        return self.lo - 1e-12 <= a <= self.hi + 1e-12


def _gradient_vertices(u: PiecewiseSmoothScalar, x: np.ndarray) -> np.ndarray:
    return canonical_vertices(clarke_gradient(u, x))


def set_valued_derivative(v: PiecewiseSmoothScalar, fmap: SetValuedMap, x) -> Optional[Interval]:
    """Values a such that some q in F(x) has <p, q> = a for every Clarke
    gradient element p of v; returned as an interval hull, or None if no
    candidate q qualifies.
    """
    if not v.regular:
        raise ValueError("set-valued derivative requires a regular function")
    x = _as_vector(x, "point")
    value = fmap.value(x)
    p_verts = _gradient_vertices(v, x)
    if p_verts.shape[0] == 1:
        p = p_verts[0]
        return Interval(-support(value, -p), support(value, p))
    base = p_verts[0]
    diffs = p_verts[1:] - base
    scale = 1.0 + float(np.max(np.abs(p_verts)))
    candidates = [row for row in canonical_vertices(value)]
    candidates.append(least_norm_point(value))
    found = []
    for q in candidates:
        if float(np.max(np.abs(diffs @ q))) <= _CONSTANCY_TOL * scale * (1.0 + float(np.max(np.abs(q)))):
            found.append(float(base @ q))
    if not found:
        return None
    return Interval(min(found), max(found))


def _constancy_rows(u_list: Sequence[PiecewiseSmoothScalar], x: np.ndarray) -> np.ndarray:
    rows = []
    for u in u_list:
        verts = _gradient_vertices(u, x)
        if verts.shape[0] <= 1:
            continue
        diffs = verts[1:] - verts[0]
        for row in diffs:
            if float(np.max(np.abs(row))) > _CONSTANCY_TOL:
                rows.append(row)
    if not rows:
        return np.zeros((0, x.shape[0]))
    return np.asarray(rows)


def _reduced_polytope(value: ConvexSet, rows: np.ndarray,
                      tol: float = _CONSTANCY_TOL) -> Optional[ConvexSet]:
    """Intersect ``value`` with the null space of ``rows`` (constancy
    constraints), via LPs over the vertex hull.  Exact when the null space
    has dimension <= 1; otherwise the hull of LP-optimal points is an inner
    approximation whose support matches along the probed directions.
    """
    d = rows.shape[1]
    verts, radius = _canonical(value)
    if radius > tol:
        # polytopize the ball part with boundary points (inner approximation)
        dirs = _sphere_directions(d, _ball_facets_for(d))
        verts = (verts[:, None, :] + radius * dirs[None, :, :]).reshape(-1, d)
    m = verts.shape[0]
    scale = 1.0 + float(np.max(np.abs(verts)))
    dv = rows @ verts.T  # (k, m)
    a_eq = np.ones((1, m))
    b_eq = np.array([1.0])
    a_ub = np.vstack([dv, -dv])
    b_ub = np.full(2 * rows.shape[0], tol * scale)
    bounds = [(0.0, None)] * m

    feas = linprog(np.zeros(m), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                   bounds=bounds, method="highs")
    if not feas.success:
        return None

    # basis of the constraint null space
    _, sv, vt = np.linalg.svd(rows)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)))
    null = vt[rank:].T  # (d, k')
    if null.shape[1] == 0:
        return Singleton(np.zeros(d))

    dirs = []
    for j in range(null.shape[1]):
        dirs.append(null[:, j])
        dirs.append(-null[:, j])
    if null.shape[1] >= 2:
        mix = _sphere_directions(null.shape[1], 16)
        for w in mix:
            dirs.append(null @ w)

    points = []
    for direction in dirs:
        c = -(verts @ direction)
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method="highs")
        if res.success:
            points.append(verts.T @ res.x)
    if not points:
        return None
    pts = _dedupe_points(np.asarray(points), tol=1e-10 * scale)
    if pts.shape[0] == 1:
        return Singleton(pts[0])
    if d == 1:
        return Box([float(pts.min())], [float(pts.max())])
    return Polytope(pts)


def _ball_facets_for(d: int) -> int:
    return 32 if d <= 2 else 64


def u_reduced(fmap: SetValuedMap, u_list: Sequence[PiecewiseSmoothScalar], x) -> Optional[ConvexSet]:
    """Subset of F(x) whose inner product is constant over each Clarke
    gradient in the collection; None when the reduction is empty.  An empty
    collection leaves F(x) unchanged.
    """
    x = _as_vector(x, "point")
    value = fmap.value(x)
    rows = _constancy_rows(u_list, x)
    if rows.shape[0] == 0:
        return value
    return _reduced_polytope(value, rows)


def u_generalized_derivative(v: PiecewiseSmoothScalar,
                             u_list: Sequence[PiecewiseSmoothScalar],
                             fmap: SetValuedMap, x):
    """min (regular v) or max (non-regular v) over Clarke-gradient vertices
    of the support of the reduced set; the sentinel when the reduction is
    empty.
    """
    x = _as_vector(x, "point")
    reduced = u_reduced(fmap, u_list, x)
    if reduced is None:
        return NEG_INFINITY
    p_verts = _gradient_vertices(v, x)
    vals = [support(reduced, p) for p in p_verts]
    return min(vals) if v.regular else max(vals)


# ---------------------------------------------------------------------------
# grid certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridRecord:
    x: tuple
    derivative: object  # float or NEG_INFINITY
    bound: float        # the decay threshold, i.e. -bound_fn(x)
    passed: bool


@dataclass
class StabilityCertificate:
    """Grid evidence for a decay condition ``derivative <= -bound`` away
    from the equilibrium.  Evidence only: grid parameters are part of the
    statement, nothing is claimed between grid points.
    """

    grid_lo: tuple
    grid_hi: tuple
    resolution: tuple
    exclude_radius: float
    records: list = field(default_factory=list)
    name: str = ""

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def min_margin(self) -> float:
        margins = [r.bound - r.derivative for r in self.records
                   if not isinstance(r.derivative, NegInfinity)]
        return min(margins) if margins else math.inf

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"certificate[{self.name}] {status}: {len(self.records)} grid points, "
                f"min margin {self.min_margin:.6g}, {len(self.failures)} failures")

    def to_text(self) -> str:
        lines = [
            f"# stability certificate: {self.name}",
            f"# grid lo={list(self.grid_lo)} hi={list(self.grid_hi)} "
            f"resolution={list(self.resolution)} exclude_radius={self.exclude_radius}",
            f"# points={len(self.records)} min_margin={self.min_margin:.17g} "
            f"passed={self.passed}",
            "x,derivative,bound,pass",
        ]
        for r in self.records:
            coord = " ".join(f"{c:.17g}" for c in r.x)
            deriv = "-inf" if isinstance(r.derivative, NegInfinity) else f"{r.derivative:.17g}"
            lines.append(f"{coord},{deriv},{r.bound:.17g},{int(r.passed)}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _grid_points(lo, hi, resolution):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.isscalar(resolution) or isinstance(resolution, int):
        resolution = [int(resolution)] * lo.shape[0]
    axes = [np.linspace(lo[i], hi[i], int(resolution[i])) for i in range(lo.shape[0])]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts, tuple(int(r) for r in resolution)


def certify_stability(v: PiecewiseSmoothScalar,
                      u_list: Sequence[PiecewiseSmoothScalar],
                      fmap: SetValuedMap,
                      grid_lo, grid_hi, resolution,
                      exclude_radius: float,
                      bound: PiecewiseSmoothScalar,
                      pass_tol: float = 1e-9,
                      name: str = "") -> StabilityCertificate:
    """Evaluate the generalized decay inequality at every grid point outside
    the excluded ball around the origin.  Failures are recorded, not raised.
    """
    pts, res = _grid_points(grid_lo, grid_hi, resolution)
    lo = np.atleast_1d(np.asarray(grid_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(grid_hi, dtype=float))
    cert = StabilityCertificate(
        grid_lo=tuple(lo.tolist()), grid_hi=tuple(hi.tolist()),
        resolution=res, exclude_radius=float(exclude_radius), name=name)
    for x in pts:
        if float(np.linalg.norm(x)) <= exclude_radius:
            continue
        deriv = u_generalized_derivative(v, u_list, fmap, x)
        threshold = -bound.value(x)
        if isinstance(deriv, NegInfinity):
            ok = True
        else:
            ok = deriv <= threshold + pass_tol
        cert.records.append(GridRecord(tuple(x.tolist()), deriv, threshold, ok))
    return cert
