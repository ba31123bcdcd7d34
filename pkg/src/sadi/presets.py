"""Ready-made experiment presets with analytic ground truths.

Each preset bundles the recursion pieces (drift, noise, bias, schedule),
the analysis map used by the calculus and integrators, the known
equilibrium when one exists, and a Lyapunov bundle for grid certification.
Fast vectorized sample terms mirror the declarative maps exactly on
generic states; the agreement is covered by tests.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import (
    Drift,
    GaussianNoise,
    NoNoise,
    NoiseModel,
    ProjectionRegion,
    NoProjection,
    RunSpec,
    ShrinkingGaussianBias,
    StepSchedule,
    ZeroBias,
    _role_generator,
    ROLE_BIAS,
)
from .nonsmooth import (
    KinkSurface,
    PiecewiseSmoothScalar,
    SmoothPiece,
    StabilityCertificate,
    certify_stability,
    smooth_scalar,
)
from .sets import (
    Box,
    ConvexSet,
    FieldPiece,
    LeastNorm,
    PiecewiseField,
    Polytope,
    Region,
    SetValuedMap,
    Singleton,
    contains,
    krasovskii,
    minkowski_sum,
)

__all__ = [
    "RegressionLaw",
    "SignFilterLaw",
    "StabilityBundle",
    "Preset",
    "lasso_preset",
    "pegasos_preset",
    "rootfind_preset",
    "sign_error_filter_preset",
    "nonconvergence_preset",
    "preset_by_name",
    "simulate_nonconv",
    "NonconvRun",
    "nonconv_regions",
]


# ---------------------------------------------------------------------------
# data laws
# ---------------------------------------------------------------------------


@dataclass
class RegressionLaw:
    """(feature, response) law y = theta^T x + noise for regression drifts.

    ``features="ones"`` fixes x to the all-ones vector (the scalar-probe
    family); ``features="gaussian"`` draws x ~ N(mean, cov).
    """

    theta: np.ndarray
    features: str = "ones"
    noise_std: float = 1.0
    feature_mean: Optional[np.ndarray] = None
    feature_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.features not in ("ones", "gaussian"):
            raise ValueError("features must be 'ones' or 'gaussian'")
        if self.features == "gaussian":
            if self.feature_mean is None:
                self.feature_mean = np.zeros(self.dim)
            self.feature_mean = np.atleast_1d(np.asarray(self.feature_mean, dtype=float))
            if self.feature_cov is None:
                self.feature_cov = np.eye(self.dim)
            self.feature_cov = np.atleast_2d(np.asarray(self.feature_cov, dtype=float))

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    def second_moment(self) -> np.ndarray:
        if self.features == "ones":
            return np.ones((self.dim, self.dim))
        return self.feature_cov + np.outer(self.feature_mean, self.feature_mean)

    def cross_moment(self) -> np.ndarray:
        return self.second_moment() @ self.theta

    def noise_model(self) -> NoiseModel:
        """Samples feeding the smooth regression term.

        ones: a single response-noise component.  gaussian: the feature
        vector followed by the response-noise component.
        """
        if self.features == "ones":
            return GaussianNoise([0.0], [[self.noise_std ** 2]])
        d = self.dim
        mean = np.concatenate([self.feature_mean, [0.0]])
        cov = np.zeros((d + 1, d + 1))
        cov[:d, :d] = self.feature_cov
        cov[d, d] = self.noise_std ** 2
        return GaussianNoise(mean, cov)

    def smooth_term(self) -> Callable:
        """Rowwise (y - w.x) x with (x, y) decoded from the noise sample."""
        theta = self.theta
        if self.features == "ones":
            theta_sum = float(np.sum(theta))

            def term(w_rows, z_rows):
                resid = theta_sum + z_rows[:, 0] - np.sum(w_rows, axis=1)
                return np.repeat(resid[:, None], w_rows.shape[1], axis=1)

            return term

        d = self.dim

        def term(w_rows, z_rows):
            x = z_rows[:, :d]
            y = x @ theta + z_rows[:, d]
            resid = y - np.einsum("ij,ij->i", w_rows, x)
            return resid[:, None] * x

        return term


@dataclass
class SignFilterLaw:
    """Stationary (y, phi) law with phi = all-ones: y = phi^T theta + noise."""

    theta_true: np.ndarray
    noise: str = "laplace"
    scale: float = 1.0

    def __post_init__(self):
        self.theta_true = np.atleast_1d(np.asarray(self.theta_true, dtype=float))
        if self.noise not in ("laplace", "gaussian"):
            raise ValueError("noise must be 'laplace' or 'gaussian'")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if self.scale == 0 and self.dim != 1:
            raise ValueError("noiseless sign filter supported in one dimension only")

    @property
    def dim(self) -> int:
        return self.theta_true.shape[0]

    def noise_cdf(self, t: float) -> float:
        if self.scale == 0:
            return 0.0 if t < 0 else 1.0
        if self.noise == "laplace":
            if t < 0:
                return 0.5 * math.exp(t / self.scale)
            return 1.0 - 0.5 * math.exp(-t / self.scale)
        return 0.5 * (1.0 + math.erf(t / (self.scale * math.sqrt(2.0))))

    def mean_sign_drift(self, theta) -> np.ndarray:
        """E[phi sign(y - phi^T theta)] = (1 - 2 F(shift)) * ones."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        shift = float(np.sum(theta) - np.sum(self.theta_true))
        return (1.0 - 2.0 * self.noise_cdf(shift)) * np.ones(self.dim)

    def noise_model(self) -> NoiseModel:
        if self.noise == "gaussian":
            return GaussianNoise([0.0], [[self.scale ** 2]])
        b = self.scale

        def sampler_block(gen, n):
            u = gen.random((n, 1)) - 0.5
            return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))

        class _Laplace(NoiseModel):
            dim = 1

            def sample_block(self, gen, n):
                return sampler_block(gen, n)

            def describe(self):
                return {"kind": "laplace", "scale": b}

        return _Laplace()


# ---------------------------------------------------------------------------
# preset containers
# ---------------------------------------------------------------------------


@dataclass
class StabilityBundle:
    """Everything the grid certifier needs: the shifted map (equilibrium at
    the origin), the Lyapunov function, the reduction collection, the decay
    bound, and the documented grid."""

    v: PiecewiseSmoothScalar
    u_list: list
    shifted_map: SetValuedMap
    bound: PiecewiseSmoothScalar
    grid_lo: tuple
    grid_hi: tuple
    resolution: int
    exclude_radius: float

    def certify(self, name: str = "") -> StabilityCertificate:
        return certify_stability(self.v, self.u_list, self.shifted_map,
                                 self.grid_lo, self.grid_hi, self.resolution,
                                 self.exclude_radius, self.bound, name=name)


@dataclass
class Preset:
    name: str
    dim: int
    drift: Drift
    schedule: StepSchedule
    noise_xi: NoiseModel
    noise_zeta: NoiseModel
    noise_zetatilde: NoiseModel
    bias: object
    projection: ProjectionRegion
    x_star: Optional[np.ndarray] = None
    roots: Optional[list] = None
    stability: Optional[StabilityBundle] = None
    notes: str = ""
    default_x0: Optional[np.ndarray] = None

    def run_spec(self, x0=None, n_steps: int = 1000, schedule: Optional[StepSchedule] = None,
                 bias=None, projection: Optional[ProjectionRegion] = None,
                 name: Optional[str] = None, fingerprint: str = "") -> RunSpec:
        if x0 is None:
            x0 = self.default_x0 if self.default_x0 is not None else np.zeros(self.dim)
        return RunSpec(
            drift=self.drift,
            schedule=schedule or self.schedule,
            x0=np.asarray(x0, dtype=float),
            n_steps=int(n_steps),
            noise_xi=self.noise_xi,
            noise_zeta=self.noise_zeta,
            noise_zetatilde=self.noise_zetatilde,
            bias=bias if bias is not None else self.bias,
            projection=projection or self.projection,
            name=name or self.name,
            fingerprint=fingerprint,
        )

    def limit_value(self, x) -> ConvexSet:
        """Mean limit dynamics at x: smooth mean plus the analysis map."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        parts = []
        if self.drift.smooth_mean is not None:
            parts.append(Singleton(self.drift.mean_field(x)))
        if self.drift.set_map is not None:
            parts.append(self.drift.set_map.value(x))
        if not parts:
            raise ValueError("preset has no limit dynamics")
        out = parts[0]
        for p in parts[1:]:
            out = minkowski_sum(out, p)
        return out

    def check_root(self, point=None, tol: float = 1e-9) -> bool:
        pts = [point] if point is not None else (
            [self.x_star] if self.x_star is not None else (self.roots or []))
        if not pts:
            raise ValueError("no declared root to check")
        zero = np.zeros(self.dim)
        return all(contains(self.limit_value(p), zero, tol) for p in pts)


# ---------------------------------------------------------------------------
# shared Lyapunov ingredients
# ---------------------------------------------------------------------------


def _squared_norm(dim: int) -> PiecewiseSmoothScalar:
    return smooth_scalar(dim, lambda x: float(x @ x), lambda x: 2.0 * x,
                         name="squared_norm")


def _coordinate_sum(dim: int) -> PiecewiseSmoothScalar:
    ones = np.ones(dim)
    return smooth_scalar(dim, lambda x: float(np.sum(x)), lambda x: np.array(ones),
                         name="coordinate_sum")


def _scaled_squared_norm(dim: int, c: float, name: str) -> PiecewiseSmoothScalar:
    return smooth_scalar(dim, lambda x: c * float(x @ x), lambda x: 2.0 * c * x, name=name)


# ---------------------------------------------------------------------------
# the soft-threshold interval map and the lasso preset
# ---------------------------------------------------------------------------


def _sign_interval_bounds(w: np.ndarray, lam: float):
    lo = np.where(w > 0.0, -lam, np.where(w < 0.0, lam, -lam))
    hi = np.where(w > 0.0, -lam, np.where(w < 0.0, lam, lam))
    return lo, hi


def sign_interval_map(dim: int, lam: float, name: str = "subgradient_box") -> SetValuedMap:
    """Product of per-coordinate intervals: {-lam} for positive entries,
    {+lam} for negative ones, [-lam, lam] at zero."""

    def rule(w: np.ndarray) -> ConvexSet:
        lo, hi = _sign_interval_bounds(w, lam)
        return Box(lo, hi)

    return SetValuedMap(dim, [Region(lambda w: True, rule)],
                        common_bound=lam * math.sqrt(dim), name=name,
                        thresholds=[[0.0]] * dim)


def soft_threshold_solution(m: np.ndarray, b: np.ndarray, lam: float,
                            max_iter: int = 10_000, tol: float = 1e-14) -> np.ndarray:
    """Minimizer of 0.5 w'Mw - b'w + lam*|w|_1 by cyclic coordinate descent."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = b.shape[0]
    w = np.zeros(d)
    for _ in range(max_iter):
        delta = 0.0
        for i in range(d):
            r = b[i] - m[i] @ w + m[i, i] * w[i]
            new = math.copysign(max(abs(r) - lam, 0.0), r) / m[i, i]
            delta = max(delta, abs(new - w[i]))
            w[i] = new
        if delta < tol:
            break
    return w


def lasso_preset(lam: float, data: Optional[RegressionLaw] = None, dim: int = 1,
                 schedule: Optional[StepSchedule] = None) -> Preset:
    """Online L1-penalized regression: smooth residual term plus the
    per-coordinate sign interval map scaled by the penalty."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if data is None:
        data = RegressionLaw(theta=np.ones(dim), features="ones")
    dim = data.dim
    m = data.second_moment()
    b = data.cross_moment()
    eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
    pd = bool(eigs[0] > 1e-12)
    if not pd:
        warnings.warn("feature second moment is not positive definite; "
                      "no unique minimizer is declared", stacklevel=2)

    gmap = sign_interval_map(dim, lam)

    def sample_term(w_rows, xi_rows, u_rows):
        return -lam * np.sign(w_rows)

    def smooth_mean(w):
        return b - m @ w

    drift = Drift(dim=dim, smooth=data.smooth_term(), smooth_mean=smooth_mean,
                  set_map=gmap, selector=LeastNorm(), sample_term=sample_term)

    x_star = soft_threshold_solution(m, b, lam) if pd else None

    stability = None
    if pd and x_star is not None:
        shift = np.array(x_star)

        def shifted_rule(w: np.ndarray) -> ConvexSet:
            lo, hi = _sign_interval_bounds(w + shift, lam)
            return Box(lo + (b - m @ (w + shift)), hi + (b - m @ (w + shift)))

        span = 3.0 if dim == 1 else 2.0
        bound_norm = float(np.linalg.norm(b)) + float(np.linalg.norm(m)) * (
            span * math.sqrt(dim) + float(np.linalg.norm(shift))) + lam * math.sqrt(dim)
        shifted = SetValuedMap(dim, [Region(lambda w: True, shifted_rule)],
                               common_bound=bound_norm + 1.0, name="lasso_shifted")
        c1 = float(eigs[0])
        stability = StabilityBundle(
            v=_squared_norm(dim), u_list=[_coordinate_sum(dim)], shifted_map=shifted,
            bound=_scaled_squared_norm(dim, c1, "decay_bound"),
            grid_lo=tuple([-span] * dim), grid_hi=tuple([span] * dim),
            resolution=241 if dim == 1 else 41, exclude_radius=0.01)

    return Preset(
        name="lasso", dim=dim, drift=drift,
        schedule=schedule or StepSchedule.power_law(1.0, 0.5),
        noise_xi=NoNoise(0), noise_zeta=data.noise_model(), noise_zetatilde=NoNoise(0),
        bias=ZeroBias(dim), projection=NoProjection(),
        x_star=x_star, stability=stability,
        default_x0=np.full(dim, 5.0),
        notes=f"penalty={lam}; minimizer from coordinate descent" if pd else
        f"penalty={lam}; degenerate second moment",
    )


# ---------------------------------------------------------------------------
# pegasos (hinge-loss SVM) preset
# ---------------------------------------------------------------------------


def pegasos_preset(lam: float, feature_mean=(1.0, 2.0), feature_cov=None,
                   ridge_coeff: float = 2.0,
                   schedule: Optional[StepSchedule] = None) -> Preset:
    """Ridge term plus per-sample hinge subgradient.

    The smooth part is -ridge_coeff*lam*w; ridge_coeff=2 matches the
    squared-norm penalty lam*|w|^2 (gradient 2*lam*w), ridge_coeff=1 the
    half-penalty convention.  The analysis map applies the margin condition
    to the mean feature vector.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    mu = np.atleast_1d(np.asarray(feature_mean, dtype=float))
    dim = mu.shape[0]
    cov = np.eye(dim) if feature_cov is None else np.atleast_2d(np.asarray(feature_cov, dtype=float))
    kappa = float(ridge_coeff) * lam

    segment = Polytope(np.stack([np.zeros(dim), mu]))

    def margin(w: np.ndarray) -> float:
        return float(w @ mu)

    gmap = SetValuedMap(
        dim,
        [
            Region(lambda w: margin(w) > 1.0, lambda w: Singleton(np.zeros(dim))),
            Region(lambda w: margin(w) < 1.0, lambda w: Singleton(mu)),
            Region(lambda w: True, lambda w: segment),
        ],
        common_bound=float(np.linalg.norm(mu)) + 1e-12,
        name="hinge_mean",
    )

    def smooth(w_rows, z_rows):
        return -kappa * w_rows

    def smooth_mean(w):
        return -kappa * np.asarray(w, dtype=float)

    def sample_term(w_rows, xi_rows, u_rows):
        active = np.einsum("ij,ij->i", w_rows, xi_rows) < 1.0
        return xi_rows * active[:, None]

    drift = Drift(dim=dim, smooth=smooth, smooth_mean=smooth_mean,
                  set_map=gmap, selector=LeastNorm(), sample_term=sample_term)

    mu2 = float(mu @ mu)
    if mu2 == 0.0:
        x_star = np.zeros(dim)
    elif kappa <= mu2:
        x_star = mu / mu2          # margin boundary equilibrium
    else:
        x_star = mu / kappa        # interior active-hinge equilibrium

    shift = np.array(x_star)

    def shifted_rule_factory():
        def value(w: np.ndarray) -> ConvexSet:
            return minkowski_sum(Singleton(-kappa * (w + shift)), gmap.value(w + shift))

        return value

    shifted_value = shifted_rule_factory()
    shifted = SetValuedMap(dim, [Region(lambda w: True, shifted_value)],
                           common_bound=kappa * (2.0 * math.sqrt(dim) +
                                                 float(np.linalg.norm(shift))) +
                           float(np.linalg.norm(mu)) + 1.0,
                           name="hinge_mean_shifted")
    stability = StabilityBundle(
        v=_squared_norm(dim), u_list=[_coordinate_sum(dim)], shifted_map=shifted,
        bound=_scaled_squared_norm(dim, lam, "decay_bound"),
        grid_lo=tuple([-2.0] * dim), grid_hi=tuple([2.0] * dim),
        resolution=81, exclude_radius=0.01)

    return Preset(
        name="pegasos", dim=dim, drift=drift,
        schedule=schedule or StepSchedule.power_law(1.0, 0.5),
        noise_xi=GaussianNoise(mu, cov), noise_zeta=NoNoise(0), noise_zetatilde=NoNoise(0),
        bias=ZeroBias(dim), projection=NoProjection(),
        x_star=x_star, stability=stability,
        default_x0=np.array([3.0, 5.0]) if dim == 2 else np.zeros(dim),
        notes=f"ridge gradient {ridge_coeff}*lam*w",
    )


# ---------------------------------------------------------------------------
# two-dimensional root finding preset
# ---------------------------------------------------------------------------


def _unit_spike_bounds(v: float):
    # the auxiliary interval: [-1, 1] exactly at v == 1, {0} elsewhere
    if v == 1.0:
        return -1.0, 1.0
    return 0.0, 0.0


def rootfind_preset(schedule: Optional[StepSchedule] = None) -> Preset:
    """Zero finding for the planar map whose components swap coordinates
    with a sign flip and carry a unit interval spike on the lines w_i = 1."""
    dim = 2

    def rule(w: np.ndarray) -> ConvexSet:
        base = np.array([-w[0] + w[1], -w[0] - w[1]])
        lo2, hi2 = _unit_spike_bounds(w[1])
        lo1, hi1 = _unit_spike_bounds(w[0])
        return Box(base + np.array([lo2, lo1]), base + np.array([hi2, hi1]))

    gmap = SetValuedMap(dim, [Region(lambda w: True, rule)],
                        common_bound=10.0, name="rootfind",
                        thresholds=[[1.0], [1.0]])

    def sample_term(w_rows, xi_rows, u_rows):
        return np.stack([-w_rows[:, 0] + w_rows[:, 1],
                         -w_rows[:, 0] - w_rows[:, 1]], axis=1)

    drift = Drift(dim=dim, smooth=None, smooth_mean=None, set_map=gmap,
                  selector=LeastNorm(), sample_term=sample_term)

    # the reduction collection: per-coordinate hinge sums with kinks at +-1
    u_fn = _corner_hinge_sum()

    stability = StabilityBundle(
        v=_squared_norm(dim), u_list=[u_fn], shifted_map=gmap,
        bound=_scaled_squared_norm(dim, 1.0, "decay_bound"),
        grid_lo=(-3.0, -3.0), grid_hi=(3.0, 3.0), resolution=121,
        exclude_radius=0.01)

    return Preset(
        name="rootfind", dim=dim, drift=drift,
        schedule=schedule or StepSchedule.power_law(1.0, 0.5),
        noise_xi=NoNoise(0), noise_zeta=NoNoise(0), noise_zetatilde=NoNoise(0),
        bias=ShrinkingGaussianBias(dim, c=1.0, gamma=0.0), projection=NoProjection(),
        x_star=np.zeros(dim), stability=stability,
        default_x0=np.array([1.0, 1.0]),
        notes="unit-variance Gaussian disturbance enters through the bias stream",
    )


def _corner_hinge_sum() -> PiecewiseSmoothScalar:
    """max(v-1,0) - min(v+1,0) summed over both coordinates; slopes are 0 in
    the middle band and +-1 outside, with kinks on |v_i| = 1."""

    def slope(v: float) -> float:
        if v > 1.0:
            return 1.0
        if v < -1.0:
            return -1.0
        return 0.0

    def hinge(v: float) -> float:
        return max(v - 1.0, 0.0) - min(v + 1.0, 0.0)

    def region_pred(sig1: int, sig2: int):
        def pred(w: np.ndarray) -> bool:
            ok1 = (w[0] >= 1.0 if sig1 > 0 else (w[0] <= -1.0 if sig1 < 0 else -1.0 <= w[0] <= 1.0))
            ok2 = (w[1] >= 1.0 if sig2 > 0 else (w[1] <= -1.0 if sig2 < 0 else -1.0 <= w[1] <= 1.0))
            return ok1 and ok2

        return pred

    pieces = []
    for sig1, sig2 in itertools.product((1, 0, -1), repeat=2):
        grad = np.array([float(sig1), float(sig2)])
        pieces.append(SmoothPiece(
            region_pred(sig1, sig2),
            lambda w: hinge(w[0]) + hinge(w[1]),
            lambda w, g=grad: np.array(g),
        ))
    kinks = [KinkSurface.coordinate(i, t, 2) for i in (0, 1) for t in (1.0, -1.0)]
    return PiecewiseSmoothScalar(2, pieces, kinks=kinks, regular=True,
                                 name="corner_hinge_sum")


# ---------------------------------------------------------------------------
# sign-error adaptive filter preset
# ---------------------------------------------------------------------------


def sign_error_filter_preset(law: Optional[SignFilterLaw] = None,
                             schedule: Optional[StepSchedule] = None) -> Preset:
    """Median-seeking filter: each step moves along phi times the sign of
    the prediction residual."""
    if law is None:
        law = SignFilterLaw(theta_true=np.zeros(1))
    dim = law.dim

    if law.scale > 0:
        field = PiecewiseField(
            dim,
            [FieldPiece(lambda t: True, law.mean_sign_drift)],
            thresholds=[[]] * dim,
        )
    else:
        t_star = float(law.theta_true[0])
        field = PiecewiseField(
            1,
            [
                FieldPiece(lambda t: t[0] > t_star, lambda t: np.array([-1.0])),
                FieldPiece(lambda t: t[0] < t_star, lambda t: np.array([1.0])),
                FieldPiece(lambda t: True, lambda t: np.array([0.0])),
            ],
            thresholds=[[t_star]],
        )

    def mean_rule(theta: np.ndarray) -> ConvexSet:
        return krasovskii(field, theta)

    gmap = SetValuedMap(dim, [Region(lambda t: True, mean_rule)],
                        common_bound=math.sqrt(dim) + 1e-9, name="sign_filter_mean",
                        thresholds=[[float(law.theta_true[0])]] if law.scale == 0 else None)

    theta_sum = float(np.sum(law.theta_true))

    def sample_term(t_rows, xi_rows, u_rows):
        resid = theta_sum + xi_rows[:, 0] - np.sum(t_rows, axis=1)
        return np.repeat(np.sign(resid)[:, None], t_rows.shape[1], axis=1)

    # the mean dynamics live entirely in the analysis map, so no smooth mean
    drift = Drift(dim=dim, smooth=None, smooth_mean=None,
                  set_map=gmap, selector=LeastNorm(), sample_term=sample_term)

    return Preset(
        name="sign_filter", dim=dim, drift=drift,
        schedule=schedule or StepSchedule.power_law(1.0, 0.5),
        noise_xi=law.noise_model(), noise_zeta=NoNoise(0), noise_zetatilde=NoNoise(0),
        bias=ZeroBias(dim), projection=NoProjection(),
        x_star=np.array(law.theta_true),
        notes="root unique in one dimension; higher dimensions share the residual hyperplane",
    )


# ---------------------------------------------------------------------------
# non-convergence showcase preset
# ---------------------------------------------------------------------------

_NONCONV_THRESHOLDS = [[-2.0, -1.0, 1.0, 2.0], [-2.0, -1.0, 1.0, 2.0]]


def _nonconv_rule(w: np.ndarray) -> ConvexSet:
    x1, x2 = float(w[0]), float(w[1])
    if x1 == 2.0 and x2 == 2.0:
        return Box([0.0, -2.0], [1.0, 1.0])
    if 1.0 <= x1 <= 2.0 and -1.0 < x2 <= 2.0:
        return Box([0.0, -2.0], [0.0, -1.0])
    if -1.0 < x1 <= 2.0 and -2.0 < x2 <= -1.0:
        return Box([-2.0, 0.0], [-1.0, 0.0])
    if -2.0 < x1 <= -1.0 and -2.0 <= x2 < -1.0:
        return Box([0.0, 1.0], [0.0, 2.0])
    if -2.0 <= x1 < 1.0 and 1.0 <= x2 <= 2.0:
        return Box([1.0, 0.0], [2.0, 0.0])
    return Singleton([-0.005 * x1, -0.005 * x2])


def nonconv_regions(points: np.ndarray) -> np.ndarray:
    """Vectorized region id per point: 1 the double root cell, 2..5 the
    annular branch corridors, 6 the inward-creep remainder."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x1, x2 = pts[:, 0], pts[:, 1]
    r1 = (x1 == 2.0) & (x2 == 2.0)
    r2 = (x1 >= 1.0) & (x1 <= 2.0) & (x2 > -1.0) & (x2 <= 2.0) & ~r1
    r3 = (x1 > -1.0) & (x1 <= 2.0) & (x2 > -2.0) & (x2 <= -1.0)
    r4 = (x1 > -2.0) & (x1 <= -1.0) & (x2 >= -2.0) & (x2 < -1.0)
    r5 = (x1 >= -2.0) & (x1 < 1.0) & (x2 >= 1.0) & (x2 <= 2.0)
    return np.select([r1, r2, r3, r4, r5], [1, 2, 3, 4, 5], default=6)


def nonconvergence_preset(schedule: Optional[StepSchedule] = None) -> Preset:
    """The cycling field whose roots repel: corridor branches push the state
    around an annulus, so checkpoints rarely sit near either root."""
    dim = 2
    gmap = SetValuedMap(dim, [Region(lambda w: True, _nonconv_rule)],
                        common_bound=4.0, name="nonconv",
                        thresholds=_NONCONV_THRESHOLDS)

    def sample_term(w_rows, xi_rows, u_rows):
        region = nonconv_regions(w_rows)
        g = np.where(
            (region == 2)[:, None], [0.0, -1.0],
            np.where((region == 3)[:, None], [-1.0, 0.0],
                     np.where((region == 4)[:, None], [0.0, 1.0],
                              np.where((region == 5)[:, None], [1.0, 0.0],
                                       np.where((region == 1)[:, None], [0.0, 0.0],
                                                np.zeros(2))))))
        creep = region == 6
        if creep.any():
            g = np.where(creep[:, None], -0.005 * w_rows, g)
        return g

    drift = Drift(dim=dim, smooth=None, smooth_mean=None, set_map=gmap,
                  selector=LeastNorm(), sample_term=sample_term)

    return Preset(
        name="nonconv", dim=dim, drift=drift,
        schedule=schedule or StepSchedule.power_law(1.0, 0.5),
        noise_xi=NoNoise(0), noise_zeta=NoNoise(0), noise_zetatilde=NoNoise(0),
        bias=ShrinkingGaussianBias(dim, c=1.0, gamma=0.0), projection=NoProjection(),
        x_star=None, roots=[np.zeros(2), np.array([2.0, 2.0])],
        default_x0=np.array([2.0, 2.0]),
        notes="both roots fail every stability criterion; the path cycles",
    )


@dataclass
class NonconvRun:
    checkpoint_indices: np.ndarray
    checkpoint_states: np.ndarray
    regions_visited: set
    region_counts: np.ndarray  # counts for ids 1..6
    final: np.ndarray
    path: Optional[np.ndarray] = None


def simulate_nonconv(n_steps: int, seed: int, w0=(2.0, 2.0),
                     checkpoint_every: int = 100_000,
                     keep_path: bool = False) -> NonconvRun:
    """Specialized scalar loop for long single runs of the cycling preset.

    Reproduces the generic engine bit for bit (same substreams, same
    arithmetic order) at a fraction of the per-step cost.
    """
    sched = StepSchedule.power_law(1.0, 0.5)
    a = sched.step_sizes(0, n_steps).tolist()
    gen = _role_generator(seed, 0, ROLE_BIAS)
    beta = gen.standard_normal((n_steps, 2))
    b1 = beta[:, 0].tolist()
    b2 = beta[:, 1].tolist()
    x1, x2 = float(w0[0]), float(w0[1])
    counts = [0, 0, 0, 0, 0, 0]
    cks, ck_states = [], []
    path = [(x1, x2)] if keep_path else None
    for n in range(n_steps):
        if 1.0 <= x1 <= 2.0 and -1.0 < x2 <= 2.0 and not (x1 == 2.0 and x2 == 2.0):
            g1 = 0.0
            g2 = -1.0
            counts[1] += 1
        elif -1.0 < x1 <= 2.0 and -2.0 < x2 <= -1.0:
            g1 = -1.0
            g2 = 0.0
            counts[2] += 1
        elif -2.0 < x1 <= -1.0 and -2.0 <= x2 < -1.0:
            g1 = 0.0
            g2 = 1.0
            counts[3] += 1
        elif -2.0 <= x1 < 1.0 and 1.0 <= x2 <= 2.0:
            g1 = 1.0
            g2 = 0.0
            counts[4] += 1
        elif x1 == 2.0 and x2 == 2.0:
            g1 = 0.0
            g2 = 0.0
            counts[0] += 1
        else:
            g1 = -0.005 * x1
            g2 = -0.005 * x2
            counts[5] += 1
        an = a[n]
        x1 = x1 + an * (g1 + b1[n])
        x2 = x2 + an * (g2 + b2[n])
        if keep_path:
            path.append((x1, x2))
        if (n + 1) % checkpoint_every == 0:
            cks.append(n + 1)
            ck_states.append((x1, x2))
    visited = {i + 1 for i, c in enumerate(counts) if c > 0}
    return NonconvRun(
        checkpoint_indices=np.asarray(cks, dtype=int),
        checkpoint_states=np.asarray(ck_states, dtype=float).reshape(-1, 2),
        regions_visited=visited,
        region_counts=np.asarray(counts, dtype=int),
        final=np.array([x1, x2]),
        path=np.asarray(path) if keep_path else None,
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def preset_by_name(name: str, params: Optional[dict] = None) -> Preset:
    params = dict(params or {})
    if name == "lasso":
        data_params = params.pop("data", None)
        data = RegressionLaw(**data_params) if data_params else None
        return lasso_preset(params.pop("lam", 0.7), data=data, **params)
    if name == "pegasos":
        return pegasos_preset(params.pop("lam", 1.0), **params)
    if name == "rootfind":
        return rootfind_preset(**params)
    if name == "sign_filter":
        law_params = params.pop("law", None)
        law = SignFilterLaw(**law_params) if law_params else None
        return sign_error_filter_preset(law, **params)
    if name == "nonconv":
        return nonconvergence_preset(**params)
    raise ValueError(f"unknown preset {name!r}")
