"""The stochastic approximation engine.

One recursion step adds, scaled by the step size, a set-valued selection, a
smooth noisy term, a pure-noise term, and a bias term, then optionally
projects onto a compact region.  Randomness is split into per-role
substreams keyed by (seed, replication, role), so adding or editing one
role never perturbs another role's draws, and replications are independent
regardless of how they are chunked across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .sets import ConvexSet, Box as BoxSet, Ball as BallSet, LeastNorm, SetValuedMap, select

__all__ = [
    "StepSchedule",
    "time_mesh",
    "mesh_index",
    "NoiseModel",
    "NoNoise",
    "GaussianNoise",
    "UniformNoise",
    "BoundedNoise",
    "BiasModel",
    "ZeroBias",
    "ShrinkingGaussianBias",
    "ConstantBias",
    "CustomBias",
    "ProjectionRegion",
    "NoProjection",
    "BoxRegion",
    "BallRegion",
    "project",
    "Drift",
    "Trajectory",
    "interpolate",
    "RunSpec",
    "step",
    "run",
    "run_ensemble",
    "EnsembleResult",
    "SimulationBlowup",
]

# substream role tags
ROLE_XI = 0
ROLE_ZETA = 1
ROLE_ZETATILDE = 2
ROLE_BIAS = 3
ROLE_SELECTOR = 4
ROLE_PERTURB = 5


class SimulationBlowup(RuntimeError):
    def __init__(self, step_index: int):
        super().__init__(f"non-finite iterate at step {step_index}")
        self.step_index = step_index


# ---------------------------------------------------------------------------
# step-size schedules and the interpolation time mesh
# ---------------------------------------------------------------------------


class StepSchedule:
    """Positive step sizes a_n with a_n -> 0 and divergent partial sums.

    Built-in families use (n+1) in denominators so that a_0 is finite; the
    asymptotics are unchanged.
    """

    def __init__(self, kind: str, fn: Callable[[np.ndarray], np.ndarray], params: dict):
        self.kind = kind
        self._fn = fn
        self.params = dict(params)
        self._times = np.zeros(1)  # t_0 = 0
        probe = self.step_sizes(0, 4)
        if np.any(probe <= 0.0):
            raise ValueError("step sizes must be positive")

    @classmethod
    def harmonic(cls, c: float = 1.0) -> "StepSchedule":
        c = float(c)
        if c <= 0:
            raise ValueError("c must be positive")
        return cls("harmonic", lambda n: c / (n + 1.0), {"c": c})

    @classmethod
    def power_law(cls, c: float = 1.0, alpha: float = 0.5) -> "StepSchedule":
        c, alpha = float(c), float(alpha)
        if c <= 0:
            raise ValueError("c must be positive")
        if not (0.0 < alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        return cls("power_law", lambda n: c * (n + 1.0) ** (-alpha), {"c": c, "alpha": alpha})

    @classmethod
    def custom(cls, fn: Callable[[int], float]) -> "StepSchedule":
        def vec(n: np.ndarray) -> np.ndarray:
            return np.asarray([float(fn(int(i))) for i in np.atleast_1d(n)])

        return cls("custom", vec, {})

    def step_sizes(self, n0: int, n1: int) -> np.ndarray:
        return np.asarray(self._fn(np.arange(n0, n1, dtype=float)), dtype=float)

    def step_size(self, n: int) -> float:
        if n < 0:
            raise ValueError("step index must be nonnegative")
        return float(self.step_sizes(n, n + 1)[0])

    def _ensure_times(self, n: int) -> None:
        have = self._times.shape[0] - 1
        if n <= have:
            return
        extra = self.step_sizes(have, n)
        self._times = np.concatenate([self._times, self._times[-1] + np.cumsum(extra)])

    def time_at(self, n: int) -> float:
        if n < 0:
            raise ValueError("mesh index must be nonnegative")
        self._ensure_times(n)
        return float(self._times[n])

    def mesh_index(self, t: float) -> int:
        if t < 0.0:
            return 0
        block = max(64, self._times.shape[0])
        while self._times[-1] <= t:
            self._ensure_times(self._times.shape[0] - 1 + block)
            block *= 2
            if self._times.shape[0] > 100_000_000:
                raise ValueError("time beyond any representable mesh horizon")
        return int(np.searchsorted(self._times, t, side="right")) - 1

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def time_mesh(sched: StepSchedule, n: int) -> float:
    """t_n, the cumulative sum of the first n step sizes (t_0 = 0)."""
    return sched.time_at(n)


def mesh_index(sched: StepSchedule, t: float) -> int:
    """Largest n with t_n <= t; zero for negative t."""
    return sched.mesh_index(t)


# ---------------------------------------------------------------------------
# noise and bias families
# ---------------------------------------------------------------------------


class NoiseModel:
    dim: int = 0

    def sample_block(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, gen: np.random.Generator) -> np.ndarray:
        return self.sample_block(gen, 1)[0]

    def describe(self) -> dict:
        raise NotImplementedError


class NoNoise(NoiseModel):
    def __init__(self, dim: int = 0):
        self.dim = int(dim)

    def sample_block(self, gen, n):
        return np.zeros((n, self.dim))

    def describe(self):
        return {"kind": "none", "dim": self.dim}


class GaussianNoise(NoiseModel):
    """i.i.d. Gaussian draws with the given mean and covariance."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.shape[0]
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = np.eye(self.dim) * float(cov)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match the mean")
        self.cov = cov
        # symmetric PSD square root
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        if np.any(w < -1e-10):
            raise ValueError("covariance must be positive semidefinite")
        self._root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T

    def sample_block(self, gen, n):
        z = gen.standard_normal((n, self.dim))
        return self.mean + z @ self._root.T

    def describe(self):
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class UniformNoise(NoiseModel):
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("uniform noise requires lo <= hi componentwise")
        self.dim = self.lo.shape[0]

    def sample_block(self, gen, n):
        return self.lo + gen.random((n, self.dim)) * (self.hi - self.lo)

    def describe(self):
        return {"kind": "uniform", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class BoundedNoise(NoiseModel):
    """Custom sampler with a declared hard bound on the Euclidean norm."""

    def __init__(self, sampler: Callable[[np.random.Generator], np.ndarray], bound: float, dim: int):
        self.sampler = sampler
        self.bound = float(bound)
        self.dim = int(dim)

    def sample_block(self, gen, n):
        out = np.empty((n, self.dim))
        for i in range(n):
            v = np.atleast_1d(np.asarray(self.sampler(gen), dtype=float))
            if np.linalg.norm(v) > self.bound + 1e-12:
                raise ValueError("bounded noise sampler exceeded its declared bound")
            out[i] = v
        return out

    def describe(self):
        return {"kind": "bounded", "bound": self.bound, "dim": self.dim}


class BiasModel:
    dim: int = 0
    declared_eta: float = 0.0

    def sample_block(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_at(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return self.sample_block(gen, 1)[0]

    def describe(self) -> dict:
        raise NotImplementedError


class ZeroBias(BiasModel):
    def __init__(self, dim: int):
        self.dim = int(dim)
        self.declared_eta = 0.0

    def sample_block(self, gen, n):
        return np.zeros((n, self.dim))

    def describe(self):
        return {"kind": "zero", "dim": self.dim}


class ShrinkingGaussianBias(BiasModel):
    """Gaussian bias whose variance at step n is c*(n+1)**(-gamma).

    gamma > 0 vanishes almost surely; gamma = 0 is a constant-variance bias.
    """

    def __init__(self, dim: int, c: float = 1.0, gamma: float = 1.0):
        self.dim = int(dim)
        self.c = float(c)
        self.gamma = float(gamma)
        if self.c < 0:
            raise ValueError("variance scale must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.declared_eta = 0.0 if self.gamma > 0 or self.c == 0 else math.inf

    def variance_at(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return self.c * (n + 1.0) ** (-self.gamma)

    def sample_block(self, gen, n):
        z = gen.standard_normal((n, self.dim))
        sd = np.sqrt(self.variance_at(np.arange(n)))
        return z * sd[:, None]

    def sample_at(self, gen, n):
        return gen.standard_normal(self.dim) * math.sqrt(float(self.variance_at(n)))

    def describe(self):
        return {"kind": "gaussian_shrinking", "c": self.c, "gamma": self.gamma, "dim": self.dim}


class ConstantBias(BiasModel):
    def __init__(self, vector):
        self.vector = np.atleast_1d(np.asarray(vector, dtype=float))
        self.dim = self.vector.shape[0]
        self.declared_eta = float(np.linalg.norm(self.vector))

    def sample_block(self, gen, n):
        return np.tile(self.vector, (n, 1))

    def describe(self):
        return {"kind": "constant", "vector": self.vector.tolist()}


class CustomBias(BiasModel):
    """Caller-supplied rule ``fn(gen, n) -> vector`` with a declared
    asymptotic bound on its norm."""

    def __init__(self, fn: Callable[[np.random.Generator, int], np.ndarray],
                 dim: int, declared_eta: float = 0.0):
        self.fn = fn
        self.dim = int(dim)
        self.declared_eta = float(declared_eta)

    def sample_block(self, gen, n):
        out = np.empty((n, self.dim))
        for i in range(n):
            out[i] = np.atleast_1d(np.asarray(self.fn(gen, i), dtype=float))
        return out

    def sample_at(self, gen, n):
        return np.atleast_1d(np.asarray(self.fn(gen, n), dtype=float))

    def describe(self):
        return {"kind": "custom", "dim": self.dim, "eta": self.declared_eta}


# ---------------------------------------------------------------------------
# projection regions
# ---------------------------------------------------------------------------


class ProjectionRegion:
    def project_rows(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def as_convex_set(self) -> ConvexSet:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class NoProjection(ProjectionRegion):
    def project_rows(self, x):
        return x

    def describe(self):
        return {"kind": "none"}


class BoxRegion(ProjectionRegion):
    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(self.lo >= self.hi):
            raise ValueError("box region requires lo < hi componentwise")

    def project_rows(self, x):
        return np.clip(x, self.lo, self.hi)

    def as_convex_set(self):
        return BoxSet(self.lo, self.hi)

    def describe(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class BallRegion(ProjectionRegion):
    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball region requires radius > 0")

    def project_rows(self, x):
        y = np.array(x, dtype=float)
        r2 = self.radius * self.radius
        for _ in range(10):
            delta = y - self.center
            n2 = np.einsum("ij,ij->i", delta, delta)
            mask = n2 > r2
            if not mask.any():
                return y
            y[mask] = self.center + delta[mask] * (self.radius / np.sqrt(n2[mask]))[:, None]
        # force the postcondition against last-ulp rounding
        delta = y - self.center
        n2 = np.einsum("ij,ij->i", delta, delta)
        for i in np.nonzero(n2 > r2)[0]:
            s = 1.0
            while float((delta[i] * s) @ (delta[i] * s)) > r2:
                s = np.nextafter(s, 0.0)
            y[i] = self.center + delta[i] * s
        return y

    def as_convex_set(self):
        return BallSet(self.center, self.radius)

    def describe(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


def project(region: ProjectionRegion, x) -> np.ndarray:
    """Orthogonal projection onto the region (identity inside, idempotent)."""
    if isinstance(region, NoProjection) or region is None:
        raise ValueError("project requires a concrete region")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return region.project_rows(x[None, :])[0]


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


@dataclass
class Drift:
    """One step's deterministic structure.

    ``smooth(x_rows, zeta_rows)`` is the noisy continuous term; its mean
    ``smooth_mean`` (when known) feeds root checks and limit dynamics.  The
    set-valued term is either ``sample_term(x_rows, xi_rows, u_rows)``
    (vectorized, possibly sample-dependent) or a selector applied to
    ``set_map`` row by row.  ``m_rule(x, xi) -> radius`` inflates the
    selection by a random point of the closed ball of that radius.
    """

    dim: int
    smooth: Optional[Callable] = None
    smooth_mean: Optional[Callable] = None
    set_map: Optional[SetValuedMap] = None
    selector: object = field(default_factory=LeastNorm)
    sample_term: Optional[Callable] = None
    m_rule: Optional[Callable] = None

    def set_term_rows(self, x_rows: np.ndarray, xi_rows: np.ndarray,
                      u_rows: np.ndarray, pert_rows: Optional[np.ndarray]) -> np.ndarray:
        if self.sample_term is not None:
            b = np.asarray(self.sample_term(x_rows, xi_rows, u_rows), dtype=float)
        elif self.set_map is not None:
            b = np.empty_like(x_rows)
            for i in range(x_rows.shape[0]):
                b[i] = _select_row(self.set_map, x_rows[i], self.selector, u_rows[i])
        else:
            return np.zeros_like(x_rows)
        if self.m_rule is not None:
            if pert_rows is None:
                raise ValueError("perturbation draws missing for m_rule")
            for i in range(x_rows.shape[0]):
                radius = float(self.m_rule(x_rows[i], xi_rows[i]))
                if radius != 0.0:
                    b[i] = b[i] + radius * _ball_point(pert_rows[i], self.dim)
        return b

    def mean_field(self, x: np.ndarray) -> np.ndarray:
        if self.smooth_mean is None:
            raise ValueError("drift has no declared smooth mean")
        return np.atleast_1d(np.asarray(self.smooth_mean(np.asarray(x, dtype=float)), dtype=float))


class _PrimedGenerator:
    """Feeds one pre-drawn uniform, then defers to nothing; enough for the
    single-draw contract of UniformVertex inside the engine loop."""

    __slots__ = ("u",)

    def __init__(self, u: float):
        self.u = float(u)

    def random(self):
        return self.u


def _select_row(mapping: SetValuedMap, x: np.ndarray, strategy, u: float) -> np.ndarray:
    return select(mapping, x, strategy, _PrimedGenerator(u))


def _ball_point(pert_row: np.ndarray, dim: int) -> np.ndarray:
    g = pert_row[:dim]
    u = pert_row[dim]
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return np.zeros(dim)
    return (u ** (1.0 / dim)) * g / norm


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """A recorded run: N+1 iterates plus the per-step summands that rebuild
    each transition exactly."""

    schedule: StepSchedule
    iterates: np.ndarray          # (N+1, d)
    step_sizes_used: np.ndarray   # (N,)
    set_terms: np.ndarray         # (N, d)
    smooth_terms: np.ndarray      # (N, d)
    noise_terms: np.ndarray       # (N, d)
    bias_terms: np.ndarray        # (N, d)
    projection_active: np.ndarray  # (N,) bool
    seed: int
    fingerprint: str = ""
    name: str = ""

    @property
    def n_steps(self) -> int:
        return self.iterates.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.iterates.shape[1]

    def interpolate(self, t: float, mode: str = "linear", shift: int = 0) -> np.ndarray:
        return interpolate(self, t, mode, shift)

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        d = self.dim
        cols = (["n", "t", "a"]
                + [f"x{i}" for i in range(d)]
                + [f"set{i}" for i in range(d)]
                + [f"smooth{i}" for i in range(d)]
                + [f"noise{i}" for i in range(d)]
                + [f"bias{i}" for i in range(d)]
                + ["projected"])
        meta = {"seed": self.seed, "fingerprint": self.fingerprint or "-", "name": self.name or "-"}
        if header:
            meta.update(header)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            fh.write(",".join(cols) + "\n")
            for n in range(self.n_steps):
                row = [str(n), _fmt(self.schedule.time_at(n)), _fmt(self.step_sizes_used[n])]
                row += [_fmt(v) for v in self.iterates[n]]
                row += [_fmt(v) for v in self.set_terms[n]]
                row += [_fmt(v) for v in self.smooth_terms[n]]
                row += [_fmt(v) for v in self.noise_terms[n]]
                row += [_fmt(v) for v in self.bias_terms[n]]
                row += [str(int(self.projection_active[n]))]
                fh.write(",".join(row) + "\n")


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def interpolate(traj: Trajectory, t: float, mode: str = "linear", shift: int = 0) -> np.ndarray:
    """Piecewise-constant or piecewise-linear interpolation of the iterate
    path, optionally shifted by t_n; times at or before the shifted origin
    return the initial iterate, times beyond the recorded horizon raise.
    """
    mode = {"PiecewiseConstant": "constant", "PiecewiseLinear": "linear"}.get(mode, mode)
    if mode not in ("constant", "linear"):
        raise ValueError("mode must be 'constant' or 'linear'")
    sched = traj.schedule
    t_shift = sched.time_at(shift)
    if t <= -t_shift:
        return np.array(traj.iterates[0])
    s = t + t_shift
    n_steps = traj.n_steps
    t_end = sched.time_at(n_steps)
    if s > t_end:
        if s <= t_end * (1.0 + 1e-12) + 1e-12:
            return np.array(traj.iterates[n_steps])
        raise ValueError(f"time {t} is beyond the recorded horizon")
    n = sched.mesh_index(s)
    if n >= n_steps:
        return np.array(traj.iterates[n_steps])
    if mode == "constant":
        return np.array(traj.iterates[n])
    t_n = sched.time_at(n)
    a_n = traj.step_sizes_used[n] if n < len(traj.step_sizes_used) else sched.step_size(n)
    w = (s - t_n) / a_n
    return (1.0 - w) * traj.iterates[n] + w * traj.iterates[n + 1]


# ---------------------------------------------------------------------------
# run descriptions and the loop
# ---------------------------------------------------------------------------


@dataclass
class RunSpec:
    drift: Drift
    schedule: StepSchedule
    x0: np.ndarray
    n_steps: int
    noise_xi: NoiseModel = field(default_factory=NoNoise)
    noise_zeta: NoiseModel = field(default_factory=NoNoise)
    noise_zetatilde: NoiseModel = field(default_factory=NoNoise)
    bias: Optional[BiasModel] = None
    projection: ProjectionRegion = field(default_factory=NoProjection)
    name: str = "run"
    fingerprint: str = ""

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.shape[0] != self.drift.dim:
            raise ValueError("x0 dimension does not match the drift")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.bias is None:
            self.bias = ZeroBias(self.drift.dim)
        if self.noise_zetatilde.dim not in (0, self.drift.dim):
            raise ValueError("additive noise term must match the state dimension")
        if self.bias.dim != self.drift.dim:
            raise ValueError("bias dimension does not match the state")


def _role_generator(seed: int, rep: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), int(role))))


def step(x, n: int, drift: Drift, noises, bias: BiasModel, sched: StepSchedule,
         proj: ProjectionRegion, rng: np.random.Generator):
    """One reference recursion step; draws noise sequentially from ``rng``.

    Returns the next iterate and a log of every summand.  The engine loop
    reproduces this arithmetic with role-split streams.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise_xi, noise_zeta, noise_zt = noises
    xi = noise_xi.sample_block(rng, 1)
    zeta = noise_zeta.sample_block(rng, 1)
    zt = noise_zt.sample_block(rng, 1)
    beta = bias.sample_at(rng, n)[None, :]
    u = rng.random()
    pert = None
    if drift.m_rule is not None:
        pert = np.concatenate([rng.standard_normal(drift.dim), [rng.random()]])[None, :]
    x_rows = x[None, :]
    b = drift.set_term_rows(x_rows, xi, np.array([u]), pert)
    h = drift.smooth(x_rows, zeta) if drift.smooth is not None else np.zeros_like(x_rows)
    h0 = zt if noise_zt.dim else np.zeros_like(x_rows)
    a_n = sched.step_size(n)
    total = b + h + h0 + beta
    x_next = x_rows + a_n * total
    projected = False
    if not isinstance(proj, NoProjection):
        before = x_next
        x_next = proj.project_rows(x_next)
        projected = bool(np.any(before != x_next))
    if not np.all(np.isfinite(x_next)):
        raise SimulationBlowup(n)
    log = {
        "a": a_n,
        "set_term": b[0],
        "smooth_term": h[0],
        "noise_term": h0[0],
        "bias_term": beta[0],
        "projected": projected,
    }
    return x_next[0], log


@dataclass
class EnsembleResult:
    finals: np.ndarray               # (R, d)
    fail_steps: np.ndarray           # (R,) first non-finite step, -1 if clean
    checkpoint_indices: np.ndarray   # (K,)
    checkpoint_states: Optional[np.ndarray]  # (R, K, d)
    paths: Optional[np.ndarray]      # (R, N+1, d)

    @property
    def n_failed(self) -> int:
        return int(np.sum(self.fail_steps >= 0))

    def clean_finals(self) -> np.ndarray:
        return self.finals[self.fail_steps < 0]


def _simulate_reps(spec: RunSpec, seed: int, reps: Sequence[int],
                   checkpoints: Optional[Sequence[int]], record_paths: bool,
                   record_logs: bool):
    drift = spec.drift
    d = drift.dim
    n_steps = spec.n_steps
    r = len(reps)
    a = spec.schedule.step_sizes(0, n_steps) if n_steps else np.zeros(0)

    def block(model, role):
        if model.dim == 0:
            return np.zeros((r, n_steps, 0))
        out = np.empty((r, n_steps, model.dim))
        for i, rep in enumerate(reps):
            out[i] = model.sample_block(_role_generator(seed, rep, role), n_steps)
        return out

    xi = block(spec.noise_xi, ROLE_XI)
    zeta = block(spec.noise_zeta, ROLE_ZETA)
    zt = block(spec.noise_zetatilde, ROLE_ZETATILDE)
    beta = block(spec.bias, ROLE_BIAS)
    usel = np.empty((r, n_steps))
    for i, rep in enumerate(reps):
        usel[i] = _role_generator(seed, rep, ROLE_SELECTOR).random(n_steps)
    pert = None
    if drift.m_rule is not None:
        pert = np.empty((r, n_steps, d + 1))
        for i, rep in enumerate(reps):
            g = _role_generator(seed, rep, ROLE_PERTURB)
            pert[i, :, :d] = g.standard_normal((n_steps, d))
            pert[i, :, d] = g.random(n_steps)

    x = np.tile(spec.x0, (r, 1))
    fail = np.full(r, -1, dtype=int)
    ck = sorted(set(int(c) for c in checkpoints)) if checkpoints else []
    ck_states = np.empty((r, len(ck), d)) if ck else None
    ck_pos = {c: i for i, c in enumerate(ck)}
    paths = np.empty((r, n_steps + 1, d)) if record_paths else None
    if record_paths:
        paths[:, 0, :] = x
    logs = None
    if record_logs:
        logs = {k: np.zeros((n_steps, d)) for k in ("set", "smooth", "noise", "bias")}
        logs["projected"] = np.zeros(n_steps, dtype=bool)
    if 0 in ck_pos:
        ck_states[:, ck_pos[0], :] = x

    has_proj = not isinstance(spec.projection, NoProjection)
    zeros = np.zeros((r, d))
    for n in range(n_steps):
        b = drift.set_term_rows(x, xi[:, n, :], usel[:, n],
                                pert[:, n, :] if pert is not None else None)
        h = drift.smooth(x, zeta[:, n, :]) if drift.smooth is not None else zeros
        h0 = zt[:, n, :] if spec.noise_zetatilde.dim else zeros
        bb = beta[:, n, :]
        total = b + h + h0 + bb
        x_new = x + a[n] * total
        projected_rows = np.zeros(r, dtype=bool)
        if has_proj:
            proj_new = spec.projection.project_rows(x_new)
            projected_rows = np.any(proj_new != x_new, axis=1)
            x_new = proj_new
        bad = ~np.all(np.isfinite(x_new), axis=1)
        newly = bad & (fail < 0)
        if newly.any():
            fail[newly] = n
        x = x_new
        if record_paths:
            paths[:, n + 1, :] = x
        if (n + 1) in ck_pos:
            ck_states[:, ck_pos[n + 1], :] = x
        if record_logs:
            logs["set"][n] = b[0]
            logs["smooth"][n] = h[0]
            logs["noise"][n] = h0[0]
            logs["bias"][n] = bb[0]
            logs["projected"][n] = projected_rows[0]

    result = EnsembleResult(
        finals=x,
        fail_steps=fail,
        checkpoint_indices=np.asarray(ck, dtype=int),
        checkpoint_states=ck_states,
        paths=paths,
    )
    return result, a, logs


def run(spec: RunSpec, seed: int) -> Trajectory:
    """One fully-logged replication; raises on the first non-finite iterate."""
    result, a, logs = _simulate_reps(spec, seed, [0], None, record_paths=True,
                                     record_logs=True)
    if result.fail_steps[0] >= 0:
        raise SimulationBlowup(int(result.fail_steps[0]))
    return Trajectory(
        schedule=spec.schedule,
        iterates=result.paths[0],
        step_sizes_used=a,
        set_terms=logs["set"],
        smooth_terms=logs["smooth"],
        noise_terms=logs["noise"],
        bias_terms=logs["bias"],
        projection_active=logs["projected"],
        seed=int(seed),
        fingerprint=spec.fingerprint,
        name=spec.name,
    )


def run_ensemble(spec: RunSpec, seed: int, n_reps: int,
                 checkpoints: Optional[Sequence[int]] = None,
                 record_paths: bool = False, threads: int = 1) -> EnsembleResult:
    """Independent replications with per-replication substreams.

    Results are identical for any thread count: every replication's draws
    are keyed by its absolute index, and chunks are merged in order.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    reps = list(range(n_reps))
    threads = max(1, int(threads))
    if threads == 1 or n_reps == 1:
        chunks = [reps]
    else:
        size = math.ceil(n_reps / threads)
        chunks = [reps[i:i + size] for i in range(0, n_reps, size)]

    if len(chunks) == 1:
        result, _, _ = _simulate_reps(spec, seed, reps, checkpoints, record_paths, False)
        return result

    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda ch: _simulate_reps(spec, seed, ch, checkpoints, record_paths, False)[0],
            chunks))
    finals = np.concatenate([p.finals for p in parts], axis=0)
    fails = np.concatenate([p.fail_steps for p in parts], axis=0)
    ck_idx = parts[0].checkpoint_indices
    ck = (np.concatenate([p.checkpoint_states for p in parts], axis=0)
          if parts[0].checkpoint_states is not None else None)
    paths = (np.concatenate([p.paths for p in parts], axis=0)
             if record_paths else None)
    return EnsembleResult(finals, fails, ck_idx, ck, paths)
