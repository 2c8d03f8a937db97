"""Online Newton solver with a sliding window of frame losses.

Each time step appends one convex frame loss, warm-starts from the
previous solution, and runs damped Newton steps on the trailing window of
at most ``B`` frames with the frame just behind the window frozen as a
boundary condition.  Every Newton system is block-tridiagonal and solved
with one forward and one backward sweep over the window, so the cost per
iteration is a fixed multiple of ``B n^3`` no matter how long the stream
has been running.

A log-barrier wrapper handles componentwise nonnegativity constraints by
re-solving the window over a tightening barrier schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .blocktridiag import BREAKDOWN_COND, FactorizationBreakdownError
from .convex_frames import (
    AggregateObjective,
    ConvergenceError,
    FixedPrev,
    FrameLoss,
    HeadLoss,
    aggregate_grad,
    aggregate_hessian,
    aggregate_value,
    armijo_accepts,
    isolated_minimizer,
)
from .stream_ls import fit_log_slope

__all__ = [
    "TAIL_MIN",
    "ISOLATED",
    "NoaConfig",
    "NoaState",
    "OpCounter",
    "BarrierSchedule",
    "InfeasibleWarmStartError",
    "window_objective",
    "newton_step",
    "advance",
    "barrier_solve",
    "update_decay",
    "write_trace_csv",
]

# new-frame initialization policies
TAIL_MIN = "tail-min"    # minimize the new loss with its first argument fixed
ISOLATED = "isolated"    # the new loss's isolated pair minimizer


class InfeasibleWarmStartError(RuntimeError):
    """Barrier stages require a strictly feasible starting window."""


@dataclass
class NoaConfig:
    """Solver knobs for the online Newton iteration.

    ``eps0`` is the stopping tolerance on the squared gradient norm of the
    window system.  ``reuse_first_factorization`` carries factorization
    blocks whose inputs are provably unchanged into the first iteration of
    the next time step; it changes nothing about the results.
    """

    buffer_B: int = 8
    eps0: float = 1e-16
    max_newton_iters: int = 50
    armijo_shrink: float = 0.5
    armijo_c1: float = 1e-4
    max_backtracks: int = 60
    new_frame_init: str = ISOLATED
    reuse_first_factorization: bool = False

    def __post_init__(self):
        if self.buffer_B < 1:
            raise ValueError("buffer_B must be >= 1")
        if self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if self.new_frame_init not in (TAIL_MIN, ISOLATED):
            raise ValueError(f"unknown init policy {self.new_frame_init!r}")


class OpCounter:
    """Counts block-level O(n^3) operations spent in window solves."""

    def __init__(self):
        self.factorizations = 0
        self.block_solves = 0
        self.block_products = 0

    @property
    def total(self):
        return self.factorizations + self.block_solves + self.block_products


class NoaState:
    """Sliding-window solver state.

    ``blocks`` holds the live iterate for frames ``window_start ..
    window_start + len(blocks) - 1``; ``boundary`` is the frozen value of
    the frame just before the window (``None`` while the window is still
    growing).  Archived frames are never rewritten.
    """

    def __init__(self, config: NoaConfig, head: HeadLoss | None = None):
        self.config = config
        self.head = head
        self.losses = []         # window losses; losses[0] couples into the
                                 # boundary once one exists
        self.blocks = []         # live frame estimates (list of n-vectors)
        self.window_start = 0
        self.boundary = None
        self.archive = []        # frozen (frame, value) pairs
        self.frames_total = 0
        self.time_step = 0
        self.newton_iters = []   # iterations per completed time step
        self.step_norms = []     # (time_step, newton_iter, step_norm)
        self.trace = []          # (time_step, iter, grad_norm, step_norm, tau)
        self.update_log = []     # (time_step, lag, magnitude)
        self.counter = OpCounter()
        self._reuse_cache = None

    @property
    def n_window(self) -> int:
        return len(self.blocks)

    def window_frames(self):
        return list(range(self.window_start, self.window_start + len(self.blocks)))

    def estimates(self) -> dict:
        out = {frame: val for frame, val in self.archive}
        for k, val in enumerate(self.blocks):
            out[self.window_start + k] = val
        return out

    def estimate_array(self) -> np.ndarray:
        est = self.estimates()
        return np.stack([est[t] for t in sorted(est)])


def window_objective(losses, boundary=None, head=None) -> AggregateObjective:
    """Build the window objective for a list of losses.

    With a boundary vector, the first loss has its previous-frame argument
    pinned and becomes the head of the objective; without one the losses
    act on one more block than there are losses (the growing phase).
    """
    if boundary is not None:
        if not losses:
            raise ValueError("a bounded window needs at least one loss")
        return AggregateObjective(frames=losses[1:],
                                  head=FixedPrev(losses[0], boundary))
    return AggregateObjective(frames=losses, head=head)


def _counted_sweep(diag, off, neg_grad, counter=None, prefix=None):
    """Forward/backward solve of the window Newton system.

    Returns ``(steps, aux)`` where ``aux = (factors, U, v)`` can be fed
    back as ``prefix=(aux, k)`` to reuse the first ``k`` frames verbatim
    when their inputs are unchanged.  Block operation counts land in
    ``counter``.
    """
    T1 = len(diag)
    factors, Us, vs = [], [], []
    start = 0
    if prefix is not None:
        (pf, pU, pv), k = prefix
        k = min(k, T1 - 1, len(pf), len(pU), len(pv))
        if k > 0:
            factors = pf[:k]
            Us = pU[:k]          # U[k-1] couples frame k-1 into frame k
            vs = pv[:k]
            start = k
    for t in range(start, T1):
        if t == 0:
            Q = diag[0]
            rhs = neg_grad[0]
        else:
            E = off[t - 1]
            if len(Us) < t:
                Us.append(lu_solve(factors[t - 1], E.T, check_finite=False))
                if counter is not None:
                    counter.block_solves += 1
            Q = diag[t] - E @ Us[t - 1]
            rhs = neg_grad[t] - E @ vs[t - 1]
            if counter is not None:
                counter.block_products += 2
        cond = np.linalg.cond(Q)
        if not np.isfinite(cond) or cond > BREAKDOWN_COND:
            raise FactorizationBreakdownError(t, cond)
        fac = lu_factor(Q, check_finite=False)
        factors.append(fac)
        vs.append(lu_solve(fac, rhs, check_finite=False))
        if counter is not None:
            counter.factorizations += 1
            counter.block_solves += 1
    steps = [vs[T1 - 1]]
    for t in range(T1 - 2, -1, -1):
        steps.append(vs[t] - Us[t] @ steps[-1])
        if counter is not None:
            counter.block_products += 1
    steps.reverse()
    return np.stack(steps), (factors, Us, vs)


def newton_step(obj: AggregateObjective, blocks, counter: OpCounter = None,
                prefix=None):
    """One Newton direction for the window system at the given blocks.

    Solves ``F'(y) s = -F(y)`` with a single forward and backward sweep
    over the window; returns ``(s, F)`` plus the sweep cache.
    """
    y = obj.check_blocks(blocks)
    g = aggregate_grad(obj, y)
    H = aggregate_hessian(obj, y)
    s, aux = _counted_sweep(H.diag, H.offdiag, -g, counter, prefix)
    return s, g, aux


def _reuse_key(state: NoaState, losses):
    return (tuple(id(f) for f in losses), id(state.head),
            state.boundary is None)


def _solve_window(state: NoaState, obj: AggregateObjective, reuse_key=None):
    """Damped Newton until the squared window gradient norm is below eps0."""
    cfg = state.config
    y = np.stack(state.blocks)
    f = aggregate_value(obj, y)
    if not math.isfinite(f):
        raise ValueError("window warm start is infeasible")
    grad_trace = []
    k = 0
    prefix = None
    if cfg.reuse_first_factorization and state._reuse_cache is not None:
        aux, n_then, key = state._reuse_cache
        # reuse is exact only while the window start has not moved and the
        # prefix losses are the very same objects: then every block before
        # the two newest ones is built from unchanged inputs
        if (reuse_key is not None and key == reuse_key
                and n_then == len(state.blocks) - 1):
            prefix = (aux, max(0, len(state.blocks) - 2))
    state._reuse_cache = None
    while True:
        g = aggregate_grad(obj, y)
        gn2 = float(np.sum(g * g))
        grad_trace.append(math.sqrt(gn2))
        if gn2 < cfg.eps0:
            break
        if k >= cfg.max_newton_iters:
            raise ConvergenceError(
                f"window Newton: no convergence in {cfg.max_newton_iters} "
                f"iterations (grad norm {grad_trace[-1]:.3e})", grad_trace)
        H = aggregate_hessian(obj, y)
        s, _ = _counted_sweep(H.diag, H.offdiag, -g, state.counter,
                              prefix if k == 0 else None)
        slope = float(np.sum(g * s))
        tau = 1.0
        for _ in range(cfg.max_backtracks):
            yn = y + tau * s
            fn = aggregate_value(obj, yn)
            if armijo_accepts(f, fn, tau, slope, cfg.armijo_c1):
                break
            tau *= cfg.armijo_shrink
        else:
            raise ConvergenceError("window line search failed", grad_trace)
        y, f = yn, fn
        k += 1
        sn = float(np.linalg.norm(s))
        state.trace.append((state.time_step, k, grad_trace[-1], sn, tau))
        state.step_norms.append((state.time_step, k, sn))
    if cfg.reuse_first_factorization and reuse_key is not None:
        g = aggregate_grad(obj, y)
        H = aggregate_hessian(obj, y)
        _, aux = _counted_sweep(H.diag, H.offdiag, -g)
        state._reuse_cache = (aux, len(state.blocks),
                              _reuse_key(state, state.losses))
    state.blocks = [row.copy() for row in y]
    return k, grad_trace


def _evict_to_capacity(state: NoaState):
    # keep room so that appending one block leaves at most B in the window
    while len(state.blocks) >= state.config.buffer_B:
        frozen = state.blocks.pop(0)
        state.archive.append((state.window_start, frozen))
        if state.boundary is not None:
            state.losses.pop(0)
        state.boundary = frozen
        state.window_start += 1
        state._reuse_cache = None


def _init_new_block(state: NoaState, f_new: FrameLoss, prev_val):
    cfg = state.config
    if cfg.new_frame_init == ISOLATED:
        return isolated_minimizer(f_new)[1]
    # tail-min: minimize the new loss with the previous frame pinned
    head = FixedPrev(f_new, prev_val)
    v = f_new.feasible_point()[1].astype(float)
    for _ in range(8):
        if math.isfinite(head.eval(v)):
            break
        v = 3.0 * v + 1e-3
    else:
        raise ValueError("could not find a feasible tail init")
    for _ in range(100):
        g = head.grad(v)
        if np.linalg.norm(g) < 1e-10:
            return v
        s = np.linalg.solve(head.hess(v), -g)
        tau, fv = 1.0, head.eval(v)
        for _ in range(60):
            vn = v + tau * s
            fn = head.eval(vn)
            if armijo_accepts(fv, fn, tau, float(g @ s)):
                break
            tau *= 0.5
        else:
            raise ConvergenceError("tail init line search failed")
        v = vn
    return v


def advance(state: NoaState, f_new: FrameLoss) -> NoaState:
    """Consume one new frame loss and re-solve the trailing window.

    Warm-starts every existing window frame at its previous value and the
    new frame per the configured policy, evicts frames that fall out of
    the buffer (freezing them at their last solved value), and iterates
    damped Newton steps until the window gradient meets the tolerance.
    """
    state.time_step += 1
    before = {state.window_start + k: v.copy()
              for k, v in enumerate(state.blocks)}
    if state.frames_total == 0:
        if state.head is not None:
            x0 = _head_min(state.head)
        elif state.config.new_frame_init == ISOLATED:
            x0 = isolated_minimizer(f_new)[0]
        else:
            x0 = f_new.feasible_point()[0].astype(float)
        state.losses = [f_new]
        state.blocks = [x0, _init_new_block(state, f_new, x0)]
        state.frames_total = 2
    else:
        _evict_to_capacity(state)
        prev_val = state.blocks[-1]
        state.losses.append(f_new)
        state.blocks.append(_init_new_block(state, f_new, prev_val))
        state.frames_total += 1
    obj = window_objective(state.losses, state.boundary, state.head)
    iters, _ = _solve_window(state, obj,
                             reuse_key=_reuse_key(state, state.losses[:-1]))
    state.newton_iters.append(iters)
    newest = state.frames_total - 1
    for k, val in enumerate(state.blocks):
        frame = state.window_start + k
        if frame in before:
            lag = newest - frame
            state.update_log.append(
                (state.time_step, lag,
                 float(np.linalg.norm(val - before[frame]))))
    return state


def _head_min(head: HeadLoss):
    x = head.feasible_point().astype(float)
    fx = head.eval(x)
    for _ in range(100):
        g = head.grad(x)
        if np.linalg.norm(g) < 1e-10:
            break
        s = np.linalg.solve(head.hess(x), -g)
        tau = 1.0
        for _ in range(60):
            xn = x + tau * s
            fn = head.eval(xn)
            if armijo_accepts(fx, fn, tau, float(g @ s)):
                break
            tau *= 0.5
        else:
            raise ConvergenceError("head minimization line search failed")
        x, fx = xn, fn
    return x


class BarrierFrameLoss(FrameLoss):
    """A frame loss plus ``-w * sum(log(x_cur))`` (optionally also on prev).

    Keeps the base loss's declared curvature bounds; the barrier only adds
    convex curvature on the positive orthant.
    """

    def __init__(self, base: FrameLoss, weight: float, barrier_prev=False):
        self.base = base
        self.w = float(weight)
        self.barrier_prev = barrier_prev
        self.n = base.n
        self.mu = base.mu
        self.L = base.L

    def _safe_logsum(self, x):
        if np.any(x <= 0.0):
            return math.inf
        return float(np.sum(np.log(x)))

    def eval(self, x_prev, x_cur):
        val = self.base.eval(x_prev, x_cur)
        pen = self._safe_logsum(x_cur)
        if self.barrier_prev:
            pen2 = self._safe_logsum(x_prev)
            if not math.isfinite(pen2):
                return math.inf
            pen += pen2
        if not math.isfinite(pen) or not math.isfinite(val):
            return math.inf
        return val - self.w * pen

    def grad(self, x_prev, x_cur):
        g = self.base.grad(x_prev, x_cur).copy()
        g[self.n:] -= self.w / x_cur
        if self.barrier_prev:
            g[:self.n] -= self.w / x_prev
        return g

    def hess(self, x_prev, x_cur):
        G_pp, E, G_cc = self.base.hess(x_prev, x_cur)
        G_cc = G_cc + np.diag(self.w / x_cur ** 2)
        if self.barrier_prev:
            G_pp = G_pp + np.diag(self.w / x_prev ** 2)
        return G_pp, E, G_cc

    def feasible_point(self):
        u, v = self.base.feasible_point()
        return np.maximum(u, 1e-6), np.maximum(v, 1e-6)

    def declare_box(self, lo: float, hi: float):
        """Curvature bounds on [lo, hi]^n including the barrier terms.

        The barrier only strengthens the declared lower bound when it acts
        on both blocks of the pair.
        """
        if hasattr(self.base, "declare_box"):
            self.base.declare_box(lo, hi)
        gain = self.w / hi ** 2 if self.barrier_prev else 0.0
        self.mu = self.base.mu + gain
        self.L = self.base.L + self.w / lo ** 2
        return self


class BarrierHeadLoss(HeadLoss):
    def __init__(self, base: HeadLoss, weight: float):
        self.base = base
        self.w = float(weight)
        self.n = base.n
        self.mu = base.mu
        self.L = base.L

    def eval(self, x):
        if np.any(x <= 0.0):
            return math.inf
        val = self.base.eval(x)
        if not math.isfinite(val):
            return math.inf
        return val - self.w * float(np.sum(np.log(x)))

    def grad(self, x):
        return self.base.grad(x) - self.w / x

    def hess(self, x):
        return self.base.hess(x) + np.diag(self.w / x ** 2)

    def feasible_point(self):
        return np.maximum(self.base.feasible_point(), 1e-6)

    def declare_box(self, lo: float, hi: float):
        if hasattr(self.base, "declare_box"):
            self.base.declare_box(lo, hi)
        self.mu = self.base.mu + self.w / hi ** 2
        self.L = self.base.L + self.w / lo ** 2
        return self


@dataclass
class BarrierSchedule:
    """Path-following schedule: barrier weight ``1/mu``, ``mu`` growing by
    ``growth`` per stage until ``components/mu < gap_tol``."""

    mu0: float = 1.0
    growth: float = 10.0
    gap_tol: float = 1e-6


def _barrier_objective(state: NoaState, weight: float) -> AggregateObjective:
    # split weights: each loss barriers both of its blocks at half weight,
    # so interior blocks (touched by two losses) carry the full weight and
    # every pair loss is itself strongly convex on the box
    half = 0.5 * weight
    wrapped = [BarrierFrameLoss(f, half, barrier_prev=True) for f in state.losses]
    if state.boundary is not None:
        return AggregateObjective(
            frames=wrapped[1:], head=FixedPrev(wrapped[0], state.boundary))
    head = BarrierHeadLoss(state.head, half) if state.head is not None else None
    return AggregateObjective(frames=wrapped, head=head)


def barrier_solve(state: NoaState, f_new: FrameLoss,
                  schedule: BarrierSchedule = None) -> NoaState:
    """Advance one time step under componentwise nonnegativity.

    Runs the window solve over a tightening log-barrier schedule.  The
    warm start must be strictly positive; the final iterate is strictly
    positive with duality-gap proxy ``components/mu`` below the schedule
    tolerance.
    """
    schedule = schedule or BarrierSchedule()
    state.time_step += 1
    before = {state.window_start + k: v.copy()
              for k, v in enumerate(state.blocks)}
    if state.frames_total == 0:
        u0, v0 = f_new.feasible_point()
        state.losses = [f_new]
        state.blocks = [np.maximum(u0, 1e-8).astype(float),
                        np.maximum(v0, 1e-8).astype(float)]
        state.frames_total = 2
    else:
        _evict_to_capacity(state)
        state.losses.append(f_new)
        guess = np.maximum(f_new.feasible_point()[1], 1e-8).astype(float)
        state.blocks.append(guess)
        state.frames_total += 1
    if any(np.any(b <= 0.0) for b in state.blocks):
        raise InfeasibleWarmStartError(
            "barrier stages need a strictly positive warm start")
    components = len(state.blocks) * state.blocks[0].size
    mu = schedule.mu0
    total_iters = 0
    while True:
        obj = _barrier_objective(state, 1.0 / mu)
        iters, _ = _solve_window(state, obj)
        total_iters += iters
        if components / mu < schedule.gap_tol:
            break
        mu *= schedule.growth
    state.newton_iters.append(total_iters)
    newest = state.frames_total - 1
    for k, val in enumerate(state.blocks):
        frame = state.window_start + k
        if frame in before:
            state.update_log.append(
                (state.time_step, newest - frame,
                 float(np.linalg.norm(val - before[frame]))))
    return state


@dataclass
class NoaDecay:
    lags: list
    magnitudes: list
    fitted_ratio: float


def update_decay(state: NoaState) -> NoaDecay:
    """Per-lag median update magnitudes and their fitted geometric ratio."""
    by_lag = {}
    for _, lag, mag in state.update_log:
        if lag >= 1:
            by_lag.setdefault(lag, []).append(mag)
    lags = sorted(by_lag)
    medians = [float(np.median(by_lag[lag])) for lag in lags]
    scale = max(medians, default=0.0)
    if scale == 0.0:
        return NoaDecay(lags, medians, 0.0)
    slope = fit_log_slope(lags, medians, floor=1e-14 * scale)
    return NoaDecay(lags, medians,
                    math.exp(slope) if slope is not None else 0.0)


def write_trace_csv(state: NoaState, path):
    """Dump the Newton iteration trace:
    time_step,newton_iter,grad_norm,step_norm,damping."""
    with open(path, "w") as fh:
        fh.write("time_step,newton_iter,grad_norm,step_norm,damping\n")
        for ts, it, gn, sn, tau in state.trace:
            fh.write(f"{ts},{it},{gn:.17g},{sn:.17g},{tau:.17g}\n")
