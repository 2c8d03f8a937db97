"""Poisson intensity estimation testbed.

A smooth random intensity drives an inhomogeneous Poisson process; events
are simulated by thinning.  The intensity is modeled as a nonnegative
combination of uniform B-splines grouped into frames, so the negative
log-likelihood splits into frame losses coupling consecutive coefficient
blocks: a linear term from the integral of the intensity plus one negative
log per event.  Integrals of the basis over a frame are computed in closed
form; event terms sample the basis directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..convex_frames import FrameLoss, HeadLoss

__all__ = [
    "SplineNhppConfig",
    "SplineBasis",
    "BumpIntensity",
    "EventBatch",
    "NhppFrameLoss",
    "NhppHeadLoss",
    "NhppProblem",
    "simulate_nhpp",
    "build_nhpp_losses",
    "generate_problem",
    "bspline_value",
    "bspline_integral",
]


def bspline_value(u, degree: int):
    """Cardinal B-spline of the given polynomial degree on knots 0..degree+1."""
    u = np.asarray(u, dtype=float)
    if degree == 0:
        return ((u >= 0.0) & (u < 1.0)).astype(float)
    lower = bspline_value(u, degree - 1)
    upper = bspline_value(u - 1.0, degree - 1)
    return (u * lower + (degree + 1.0 - u) * upper) / degree


def bspline_integral(u, degree: int):
    """Exact cumulative integral of the cardinal B-spline from 0 to ``u``.

    Uses the telescoping identity between a spline and the derivative of
    the next-degree one, so the result is a finite sum of next-degree
    spline values.
    """
    u = np.minimum(np.maximum(np.asarray(u, dtype=float), 0.0), degree + 1.0)
    total = np.zeros_like(u)
    for i in range(degree + 2):
        total += bspline_value(u - i, degree + 1)
    return total


@dataclass
class SplineNhppConfig:
    """Geometry and rate-model parameters of the testbed.

    ``spline_order`` is the polynomial degree of the B-splines (2 gives
    quadratic, C^1 basis functions spanning three knot intervals).  The
    intensity is a positive floor plus a few random positive bumps, all
    scaled by ``rate_scale``.
    """

    splines_per_frame: int = 8
    spline_order: int = 2
    frame_length: float = 1.0
    n_frames: int = 40
    rate_seed: int = 0
    rate_floor: float = 30.0
    n_bumps: tuple = (3, 6)
    bump_amp: tuple = (10.0, 30.0)
    bump_width: tuple = (0.8, 3.0)
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.splines_per_frame < max(3, self.spline_order + 1):
            raise ValueError("need at least degree + 1 splines per frame")
        if self.rate_floor <= 0:
            raise ValueError("the intensity floor must be positive")

    @property
    def horizon(self) -> float:
        return self.frame_length * self.n_frames


class SplineBasis:
    """Uniform B-splines on a global knot grid, grouped into frames.

    Spline ``j`` starts at knot ``j h`` with ``h = frame_length / N``;
    frame ``k`` owns splines ``kN .. (k+1)N - 1``.  Because a spline spans
    ``degree + 1`` knot intervals, any time point is covered by splines of
    at most two consecutive frames.
    """

    def __init__(self, n_per_frame: int, degree: int, frame_length: float,
                 n_frames: int):
        self.n = int(n_per_frame)
        self.degree = int(degree)
        self.frame_length = float(frame_length)
        self.n_frames = int(n_frames)
        self.h = self.frame_length / self.n

    @property
    def horizon(self) -> float:
        return self.frame_length * self.n_frames

    def frame_values(self, k: int, times) -> np.ndarray:
        """Values of frame ``k``'s splines at the given times, (m, N)."""
        times = np.asarray(times, dtype=float).reshape(-1)
        starts = (k * self.n + np.arange(self.n)) * self.h
        return bspline_value((times[:, None] - starts[None, :]) / self.h,
                             self.degree)

    def frame_integrals(self, k: int, lo: float, hi: float) -> np.ndarray:
        """Exact integrals of frame ``k``'s splines over [lo, hi]."""
        starts = (k * self.n + np.arange(self.n)) * self.h
        upper = bspline_integral((hi - starts) / self.h, self.degree)
        lower = bspline_integral((lo - starts) / self.h, self.degree)
        return self.h * (upper - lower)

    def intensity(self, coeffs, times) -> np.ndarray:
        """Evaluate the modeled intensity for stacked frame coefficients."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_frames, self.n):
            raise ValueError("coefficients must be (n_frames, N)")
        times = np.asarray(times, dtype=float).reshape(-1)
        out = np.zeros_like(times)
        frame = np.clip((times / self.frame_length).astype(int), 0,
                        self.n_frames - 1)
        for k in range(self.n_frames):
            m = frame == k
            if not np.any(m):
                continue
            out[m] += self.frame_values(k, times[m]) @ coeffs[k]
            if k > 0:
                out[m] += self.frame_values(k - 1, times[m]) @ coeffs[k - 1]
        return out


class BumpIntensity:
    """Positive floor plus a sum of Gaussian bumps; the analytic maximum
    ``floor + sum(amplitudes)`` dominates the rate everywhere."""

    def __init__(self, floor, amps, centers, widths, scale=1.0):
        self.floor = float(floor)
        self.amps = np.asarray(amps, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        self.widths = np.asarray(widths, dtype=float)
        self.scale = float(scale)
        if np.any(self.amps < 0) or self.floor <= 0:
            raise ValueError("intensity must stay positive")

    @classmethod
    def random(cls, config: SplineNhppConfig):
        rng = np.random.default_rng(config.rate_seed)
        k = int(rng.integers(config.n_bumps[0], config.n_bumps[1] + 1))
        amps = rng.uniform(*config.bump_amp, size=k)
        centers = rng.uniform(0.0, config.horizon, size=k)
        widths = rng.uniform(*config.bump_width, size=k)
        return cls(config.rate_floor, amps, centers, widths,
                   scale=config.rate_scale)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.floor, dtype=float)
        for a, c, w in zip(self.amps, self.centers, self.widths):
            out += a * np.exp(-0.5 * ((t - c) / w) ** 2)
        return self.scale * out

    @property
    def lam_max(self) -> float:
        return self.scale * (self.floor + float(np.sum(self.amps)))

    @property
    def lam_floor(self) -> float:
        return self.scale * self.floor


def simulate_nhpp(rate_fn, lam_max: float, t_end: float, seed) -> np.ndarray:
    """Thinning simulation of an inhomogeneous Poisson process.

    Homogeneous candidates arrive at rate ``lam_max`` on [0, t_end]; each
    is accepted with probability ``rate(t)/lam_max``.  Deterministic given
    the seed.  Raises if the claimed bound is violated at a sampled point.
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    if lam_max <= 0:
        if lam_max < 0:
            raise ValueError("lam_max must be nonnegative")
        return np.empty(0)
    n_cand = rng.poisson(lam_max * t_end)
    times = np.sort(rng.uniform(0.0, t_end, size=n_cand))
    u = rng.uniform(size=n_cand)
    rates = np.asarray(rate_fn(times), dtype=float)
    if np.any(rates > lam_max * (1.0 + 1e-12)):
        raise ValueError("rate exceeds the claimed bound lam_max")
    return times[u * lam_max < rates]


@dataclass
class EventBatch:
    """Per-frame data: event times, exact basis integrals over the frame
    interval, and basis samples at the events."""

    k: int
    events: np.ndarray
    a: np.ndarray            # integrals of frame-k splines
    b: np.ndarray            # integrals of frame-(k-1) splines
    C: np.ndarray            # (events, N) frame-k spline samples
    D: np.ndarray            # (events, N) frame-(k-1) spline samples

    def __post_init__(self):
        if np.any(np.diff(self.events) < 0):
            raise ValueError("events must be sorted")


class NhppFrameLoss(FrameLoss):
    """Negative log-likelihood contribution of one frame interval.

    f(x_prev, x_cur) = <x_cur, a> + <x_prev, b> - sum_m log(<x_cur, c_m> +
    <x_prev, d_m>).  The domain is the set where every event intensity is
    positive; outside it the value is ``inf``.
    """

    def __init__(self, a, b, C, D, init_scale=1.0):
        self.a = np.asarray(a, dtype=float).reshape(-1)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.n = self.a.size
        self.C = np.asarray(C, dtype=float).reshape(-1, self.n)
        self.D = np.asarray(D, dtype=float).reshape(-1, self.n)
        if self.C.shape != self.D.shape or self.b.size != self.n:
            raise ValueError("inconsistent event/integral dimensions")
        rowsum = self.C.sum(axis=1) + self.D.sum(axis=1)
        if self.C.shape[0] and np.any(rowsum <= 0.0):
            raise ValueError("an event is not covered by any basis function")
        self.init_scale = float(init_scale)
        self.mu = 0.0
        self.L = math.inf

    def _event_rates(self, x_prev, x_cur):
        return self.C @ x_cur + self.D @ x_prev

    def eval(self, x_prev, x_cur):
        lin = float(self.a @ x_cur + self.b @ x_prev)
        if self.C.shape[0] == 0:
            return lin
        s = self._event_rates(x_prev, x_cur)
        if np.any(s <= 0.0):
            return math.inf
        return lin - float(np.sum(np.log(s)))

    def grad(self, x_prev, x_cur):
        if self.C.shape[0] == 0:
            return np.concatenate([self.b, self.a])
        inv = 1.0 / self._event_rates(x_prev, x_cur)
        return np.concatenate([self.b - self.D.T @ inv,
                               self.a - self.C.T @ inv])

    def hess(self, x_prev, x_cur):
        n = self.n
        if self.C.shape[0] == 0:
            z = np.zeros((n, n))
            return z, z.copy(), z.copy()
        w = 1.0 / self._event_rates(x_prev, x_cur) ** 2
        Cw = self.C * w[:, None]
        G_cc = Cw.T @ self.C
        E = Cw.T @ self.D
        G_pp = (self.D * w[:, None]).T @ self.D
        return G_pp, E, G_cc

    def feasible_point(self):
        p = np.full(self.n, self.init_scale)
        return p, p.copy()

    def declare_box(self, lo: float, hi: float):
        """Set curvature bounds valid on the coefficient box [lo, hi]^n.

        Event rates are monotone in the (nonnegative) coefficients, so the
        per-event weights are bracketed by the box corners.
        """
        if not 0 < lo <= hi:
            raise ValueError("box must satisfy 0 < lo <= hi")
        if self.C.shape[0] == 0:
            self.mu, self.L = 0.0, 0.0
            return self
        W = np.hstack([self.D, self.C])
        rowsum = W.sum(axis=1)
        # lower curvature uses weights at the large-rate corner of the box
        G_lo = (W * (1.0 / (hi * rowsum) ** 2)[:, None]).T @ W
        G_hi = (W * (1.0 / (lo * rowsum) ** 2)[:, None]).T @ W
        self.mu = max(float(np.linalg.eigvalsh(G_lo)[0]), 0.0)
        self.L = float(np.linalg.eigvalsh(G_hi)[-1])
        return self


class NhppHeadLoss(HeadLoss):
    """Frame-0 interval terms: only the first coefficient block appears."""

    def __init__(self, a, C, init_scale=1.0):
        self.a = np.asarray(a, dtype=float).reshape(-1)
        self.n = self.a.size
        self.C = np.asarray(C, dtype=float).reshape(-1, self.n)
        if self.C.shape[0] and np.any(self.C.sum(axis=1) <= 0.0):
            raise ValueError("an event is not covered by any basis function")
        self.init_scale = float(init_scale)
        self.mu = 0.0
        self.L = math.inf

    def eval(self, x):
        lin = float(self.a @ x)
        if self.C.shape[0] == 0:
            return lin
        s = self.C @ x
        if np.any(s <= 0.0):
            return math.inf
        return lin - float(np.sum(np.log(s)))

    def grad(self, x):
        if self.C.shape[0] == 0:
            return self.a.copy()
        return self.a - self.C.T @ (1.0 / (self.C @ x))

    def hess(self, x):
        if self.C.shape[0] == 0:
            return np.zeros((self.n, self.n))
        w = 1.0 / (self.C @ x) ** 2
        return (self.C * w[:, None]).T @ self.C

    def feasible_point(self):
        return np.full(self.n, self.init_scale)

    def declare_box(self, lo: float, hi: float):
        if not 0 < lo <= hi:
            raise ValueError("box must satisfy 0 < lo <= hi")
        if self.C.shape[0] == 0:
            self.mu, self.L = 0.0, 0.0
            return self
        rowsum = self.C.sum(axis=1)
        G_lo = (self.C * (1.0 / (hi * rowsum) ** 2)[:, None]).T @ self.C
        G_hi = (self.C * (1.0 / (lo * rowsum) ** 2)[:, None]).T @ self.C
        self.mu = max(float(np.linalg.eigvalsh(G_lo)[0]), 0.0)
        self.L = float(np.linalg.eigvalsh(G_hi)[-1])
        return self


@dataclass
class NhppProblem:
    """Everything needed to stream or batch-solve one simulated instance."""

    config: SplineNhppConfig
    basis: SplineBasis
    events: np.ndarray
    batches: list
    head: NhppHeadLoss
    frames: list
    init_scale: float

    def events_per_frame(self) -> np.ndarray:
        edges = np.arange(self.config.n_frames + 1) * self.config.frame_length
        return np.histogram(self.events, bins=edges)[0]


def build_nhpp_losses(config: SplineNhppConfig, events) -> NhppProblem:
    """Assemble per-frame event batches and frame losses from event times.

    Basis integrals over each frame interval are exact; event samples
    evaluate the basis at the event times.  Events outside the horizon are
    an error.
    """
    events = np.sort(np.asarray(events, dtype=float).reshape(-1))
    basis = SplineBasis(config.splines_per_frame, config.spline_order,
                        config.frame_length, config.n_frames)
    if events.size and (events[0] < 0.0 or events[-1] >= basis.horizon):
        raise ValueError("event outside the modeled horizon")
    ell = config.frame_length
    K = config.n_frames
    init_scale = max(float(events.size) / basis.horizon, 1.0)
    frame_of = np.clip((events / ell).astype(int), 0, K - 1)
    batches = []
    for k in range(K):
        ev = events[frame_of == k]
        a = basis.frame_integrals(k, k * ell, (k + 1) * ell)
        if k == 0:
            b = np.zeros(basis.n)
            D = np.zeros((ev.size, basis.n))
        else:
            b = basis.frame_integrals(k - 1, k * ell, (k + 1) * ell)
            D = basis.frame_values(k - 1, ev)
        C = basis.frame_values(k, ev)
        batches.append(EventBatch(k=k, events=ev, a=a, b=b, C=C, D=D))
    head = NhppHeadLoss(batches[0].a, batches[0].C, init_scale)
    frames = [NhppFrameLoss(bt.a, bt.b, bt.C, bt.D, init_scale)
              for bt in batches[1:]]
    return NhppProblem(config=config, basis=basis, events=events,
                       batches=batches, head=head, frames=frames,
                       init_scale=init_scale)


def generate_problem(config: SplineNhppConfig, event_seed=None) -> NhppProblem:
    """Simulate one instance end to end: intensity, events, losses."""
    intensity = BumpIntensity.random(config)
    seed = config.rate_seed + 1 if event_seed is None else event_seed
    events = simulate_nhpp(intensity, intensity.lam_max, config.horizon, seed)
    problem = build_nhpp_losses(config, events)
    problem.intensity = intensity
    return problem


def barriered_problem(problem: NhppProblem, weight: float = 1.0):
    """Nonnegativity-constrained view: losses augmented with a fixed-weight
    log-barrier on every coefficient block.

    The weight is split across the two blocks of each pair loss, so every
    interior block carries the full weight overall while each loss stays
    strongly convex on any positive box.  Iterates remain strictly
    positive because the barrier domain is the open positive orthant.
    Returns ``(head, frames)``.
    """
    from ..noa import BarrierFrameLoss, BarrierHeadLoss

    half = 0.5 * weight
    head = BarrierHeadLoss(problem.head, half)
    frames = [BarrierFrameLoss(f, half, barrier_prev=True)
              for f in problem.frames]
    return head, frames


def intensity_l2_error(basis: SplineBasis, coeffs_a, coeffs_b,
                       t_lo=None, t_hi=None, n_grid: int = 2000) -> float:
    """Relative L2 distance between two modeled intensities on a grid."""
    t_lo = 0.0 if t_lo is None else t_lo
    t_hi = basis.horizon if t_hi is None else t_hi
    ts = np.linspace(t_lo, t_hi, n_grid)
    lam_a = basis.intensity(coeffs_a, ts)
    lam_b = basis.intensity(coeffs_b, ts)
    denom = np.linalg.norm(lam_b)
    return float(np.linalg.norm(lam_a - lam_b) / max(denom, 1e-300))
