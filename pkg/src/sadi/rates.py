"""Rate-of-convergence diagnostics: normalized iterate series, a
stochastic-differential-inclusion simulator for the limit law, empirical
tightness checks, outer set-derivative verification, and marginal
distribution comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import StepSchedule, Trajectory
from .sets import (
    Ball,
    LeastNorm,
    SetValuedMap,
    hausdorff,
    minkowski_sum,
    scale,
    select,
    support,
)

__all__ = [
    "NormalizedSeries",
    "normalize",
    "SDIModel",
    "simulate_sdi",
    "TightnessReport",
    "tightness_diagnostic",
    "OuterDerivativeReport",
    "outer_t_check",
    "ks_distance",
    "KSReport",
    "compare_to_sdi",
]


@dataclass
class NormalizedSeries:
    """Iterate deviations from a limit point, scaled by 1/sqrt(step size)."""

    schedule: StepSchedule
    values: np.ndarray  # (M, d); row j is the normalized iterate at start+j
    start: int
    x_star: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def last_index(self) -> int:
        return self.start + self.values.shape[0] - 1

    def value(self, n: int) -> np.ndarray:
        if n < self.start or n > self.last_index:
            raise ValueError(f"index {n} outside [{self.start}, {self.last_index}]")
        return np.array(self.values[n - self.start])

    def interpolate(self, t: float, shift: Optional[int] = None) -> np.ndarray:
        """Piecewise-constant value at shifted time t (shift defaults to the
        series start index)."""
        shift = self.start if shift is None else shift
        s = t + self.schedule.time_at(shift)
        n = self.schedule.mesh_index(s)
        n = max(self.start, min(n, self.last_index))
        return self.value(n)

    @classmethod
    def from_iterates(cls, iterates: np.ndarray, schedule: StepSchedule,
                      x_star, start: int = 0) -> "NormalizedSeries":
        iterates = np.asarray(iterates, dtype=float)
        x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
        if start < 0 or start >= iterates.shape[0]:
            raise ValueError("start index outside the recorded range")
        idx = np.arange(start, iterates.shape[0])
        a = schedule.step_sizes(start, iterates.shape[0])
        vals = (iterates[idx] - x_star) / np.sqrt(a)[:, None]
        return cls(schedule=schedule, values=vals, start=start, x_star=x_star)


def normalize(traj: Trajectory, x_star, start: int = 0) -> NormalizedSeries:
    """(X_n - x*) / sqrt(a_n) for n >= start."""
    return NormalizedSeries.from_iterates(traj.iterates, traj.schedule, x_star, start)


@dataclass
class SDIModel:
    """Linear-plus-set-valued drift with additive Brownian noise.

    The drift is (A + I/2 if half_identity) u + selection from t_map(u);
    ``sigma`` is the Brownian covariance.  ``t_map`` None means {0}.
    """

    A: np.ndarray
    sigma: np.ndarray
    t_map: Optional[SetValuedMap] = None
    half_identity: bool = False

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        d = self.A.shape[0]
        if self.A.shape != (d, d):
            raise ValueError("A must be square")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = float(sigma) * np.eye(d)
        elif sigma.ndim == 1:
            sigma = np.diag(sigma)
        if sigma.shape != (d, d):
            raise ValueError("sigma must match A")
        sym = 0.5 * (sigma + sigma.T)
        w, v = np.linalg.eigh(sym)
        if np.any(w < -1e-10):
            raise ValueError("sigma must be positive semidefinite")
        self.sigma = sym
        self.sigma_root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def drift_matrix(self) -> np.ndarray:
        if self.half_identity:
            return self.A + 0.5 * np.eye(self.dim)
        return self.A

    def check_homogeneity(self, probes: Sequence, scales=(0.5, 2.0, 3.0),
                          tol: float = 1e-6) -> bool:
        """Spot-check positive homogeneity of the set-valued part."""
        if self.t_map is None:
            return True
        for x in probes:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            for k in scales:
                lhs = self.t_map.value(k * x)
                rhs = scale(k, self.t_map.value(x))
                if hausdorff(lhs, rhs) > tol:
                    return False
        return True


def simulate_sdi(model: SDIModel, u0, dt: float, horizon: float,
                 strategy=None, seed: int = 0, n_reps: int = 1,
                 record_paths: bool = True):
    """Euler-Maruyama paths of the limit inclusion, one selector value per
    step; reproducible given the seed.

    ``u0`` may be a single vector (shared start) or an (n_reps, d) array of
    per-replication starts.  Returns (n_reps, K+1, d) paths, or (n_reps, d)
    finals when ``record_paths`` is false.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    strategy = strategy or LeastNorm()
    d = model.dim
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim <= 1:
        u = np.tile(np.atleast_1d(u0), (n_reps, 1))
    else:
        if u0.shape != (n_reps, d):
            raise ValueError("u0 must be a vector or an (n_reps, dim) array")
        u = np.array(u0)
    n_steps = int(math.ceil(horizon / dt - 1e-12)) if horizon > 0 else 0
    gen = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    sqdt = math.sqrt(dt)
    drift_matrix = model.drift_matrix()
    paths = np.empty((n_reps, n_steps + 1, d)) if record_paths else None
    if record_paths:
        paths[:, 0, :] = u
    for k in range(n_steps):
        linear = u @ drift_matrix.T
        if model.t_map is not None:
            sel = np.empty_like(u)
            for i in range(n_reps):
                sel[i] = select(model.t_map, u[i], strategy, gen)
            linear = linear + sel
        noise = gen.standard_normal((n_reps, d)) @ model.sigma_root.T
        u = u + dt * linear + sqdt * noise
        if not np.all(np.isfinite(u)):
            from .engine import SimulationBlowup

            raise SimulationBlowup(k)
        if record_paths:
            paths[:, k + 1, :] = u
    return paths if record_paths else u


@dataclass
class TightnessReport:
    checkpoints: np.ndarray
    quantiles: np.ndarray
    kappa: float
    flag: str

    def __str__(self):
        rows = ", ".join(f"n={int(n)}: {q:.4g}" for n, q in zip(self.checkpoints, self.quantiles))
        return f"tightness[{self.flag}] kappa={self.kappa}: {rows}"

    def to_text(self) -> str:
        lines = [f"# tightness diagnostic kappa={self.kappa} flag={self.flag}",
                 "checkpoint,quantile"]
        for n, q in zip(self.checkpoints, self.quantiles):
            lines.append(f"{int(n)},{q:.17g}")
        return "\n".join(lines) + "\n"


def tightness_diagnostic(series: Sequence[NormalizedSeries], kappa: float,
                         n_checkpoints: int = 10) -> TightnessReport:
    """Empirical (1-kappa)-quantiles of the normalized magnitudes across the
    ensemble at spread-out checkpoints.

    The sequence is called tight-consistent when the late-checkpoint maximum
    stays within twice the first checkpoint's quantile, and diverging
    otherwise; with slowly growing normalizations this comparison against
    the initial level is what actually separates the two behaviours at
    finite horizons.
    """
    if len(series) < 100:
        raise ValueError("tightness diagnostic needs at least 100 replications")
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    start = series[0].start
    last = series[0].last_index
    for s in series:
        if s.start != start or s.last_index != last:
            raise ValueError("all series must share the same index range")
    idx = np.unique(np.linspace(start, last, max(2, n_checkpoints)).astype(int))
    mags = np.empty((len(series), idx.shape[0]))
    for i, s in enumerate(series):
        mags[i] = [float(np.linalg.norm(s.value(int(n)))) for n in idx]
    quant = np.quantile(mags, 1.0 - kappa, axis=0)
    late = quant[idx.shape[0] // 2:]
    base = quant[0]
    flag = "tight-consistent" if float(np.max(late)) <= 2.0 * float(base) else "diverging"
    return TightnessReport(checkpoints=idx, quantiles=quant, kappa=kappa, flag=flag)


@dataclass
class OuterDerivativeReport:
    x_star: tuple
    delta: float
    n_probes: int
    failures: list  # (probe, direction, violation)
    worst_violation: float

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        tag = "holds" if self.passed else f"fails at {len(self.failures)} probes"
        return (f"outer derivative check at {list(self.x_star)} (delta={self.delta}): {tag}; "
                f"worst violation {self.worst_violation:.3g}")


def _sampled_directions(d: int, n: int) -> np.ndarray:
    from .sets import _sphere_directions

    return _sphere_directions(d, n)


def outer_t_check(gmap: SetValuedMap, x_star, t_map: SetValuedMap, delta: float,
                  probes: Sequence, n_dirs: int = 32,
                  tol: float = 1e-9) -> OuterDerivativeReport:
    """Verify the one-sided expansion: each probe value must be contained in
    value(x*) + t_map(probe - x*) + delta*|probe - x*|*ball, via support
    dominance over sampled directions.  Failures are data, not errors.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    base = gmap.value(x_star)
    dirs = _sampled_directions(x_star.shape[0], n_dirs)
    failures = []
    worst = 0.0
    for probe in probes:
        x = np.atleast_1d(np.asarray(probe, dtype=float))
        offset = x - x_star
        radius = delta * float(np.linalg.norm(offset))
        envelope = minkowski_sum(minkowski_sum(base, t_map.value(offset)),
                                 Ball(np.zeros_like(x), radius))
        val = gmap.value(x)
        for p in dirs:
            gap = support(val, p) - support(envelope, p)
            if gap > tol:
                failures.append((tuple(x.tolist()), tuple(p.tolist()), float(gap)))
                worst = max(worst, float(gap))
    return OuterDerivativeReport(tuple(x_star.tolist()), float(delta), len(list(probes)),
                                 failures, worst)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.shape[0]
    fb = np.searchsorted(b, pooled, side="right") / b.shape[0]
    return float(np.max(np.abs(fa - fb)))


@dataclass
class KSReport:
    t_eval: float
    distances: np.ndarray  # per coordinate
    n_series: int
    n_sdi: int

    def __str__(self):
        ds = ", ".join(f"{d:.4g}" for d in self.distances)
        return (f"marginal comparison at t={self.t_eval}: KS per coordinate [{ds}] "
                f"({self.n_series} vs {self.n_sdi} samples)")


def compare_to_sdi(series: Sequence[NormalizedSeries], model: SDIModel,
                   t_eval: float, n_sdi_reps: int, strategy=None,
                   seed: int = 0, dt: float = 1e-3) -> KSReport:
    """Kolmogorov-Smirnov distance per coordinate between the normalized
    ensemble at shifted time t_eval and simulated limit paths started from
    the ensemble's own initial values.

    Descriptive only: weak convergence holds toward a solution set, so no
    single-law acceptance threshold is attached.
    """
    if len(series) < 200:
        raise ValueError("marginal comparison needs at least 200 replications")
    if n_sdi_reps < 200:
        raise ValueError("marginal comparison needs at least 200 simulated paths")
    sa_vals = np.stack([s.interpolate(t_eval) for s in series])
    starts = np.stack([s.value(s.start) for s in series])
    gen = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(7,)))
    pick = gen.integers(0, starts.shape[0], size=n_sdi_reps)
    u0 = starts[pick]
    finals = simulate_sdi(model, u0, dt=dt, horizon=t_eval, strategy=strategy,
                          seed=seed, n_reps=n_sdi_reps, record_paths=False)
    dists = np.array([ks_distance(sa_vals[:, j], finals[:, j])
                      for j in range(sa_vals.shape[1])])
    return KSReport(t_eval=float(t_eval), distances=dists,
                    n_series=len(series), n_sdi=int(n_sdi_reps))
