"""Convex frame losses and the aggregate objective they induce.

A frame loss couples two consecutive blocks of variables; the aggregate
objective is a sum of such losses (optionally plus a head term on the very
first block).  Because each loss touches only neighboring blocks, the
aggregate Hessian is symmetric block-tridiagonal, which is what the
streaming solvers exploit.

This module provides the loss contract, quadratic reference losses, dense
assembly of the aggregate gradient/Hessian, batch and isolated minimizers
used as test oracles, and the diagnostic constants of the convex decay
theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocktridiag import (
    BlockTridiagSystem,
    LuStreamCache,
    _finish_report,
    backward_sweep,
    forward_step,
    lu_append,
    spectral_norm,
)

__all__ = [
    "ConvergenceError",
    "FrameLoss",
    "HeadLoss",
    "FixedPrev",
    "QuadraticFrameLoss",
    "QuadraticHeadLoss",
    "AggregateObjective",
    "ConvexRateReport",
    "aggregate_value",
    "aggregate_grad",
    "aggregate_hessian",
    "batch_minimize",
    "isolated_minimizer",
    "conditional_decoupling_check",
    "rate_report",
    "quadratic_stream",
    "fd_gradient",
    "fd_hessian",
]


class ConvergenceError(RuntimeError):
    """Newton iteration failed to reach its tolerance."""

    def __init__(self, message, grad_norms=None):
        self.grad_norms = list(grad_norms or [])
        super().__init__(message)


class FrameLoss:
    """Contract for one loss term f(x_prev, x_cur).

    Implementations expose the scalar value, the stacked gradient, the
    three second-derivative blocks, and declared curvature bounds
    ``mu <= lambda_min(hess) <= lambda_max(hess) <= L`` on their domain.
    Evaluations must be pure; points outside the domain return ``inf``.
    """

    n: int
    mu: float = 0.0
    L: float = math.inf

    def eval(self, x_prev, x_cur) -> float:
        raise NotImplementedError

    def grad(self, x_prev, x_cur) -> np.ndarray:
        """Stacked gradient ``(d/dx_prev, d/dx_cur)`` of length 2n."""
        raise NotImplementedError

    def hess(self, x_prev, x_cur):
        """Blocks ``(G_prev_prev, E_cross, G_cur_cur)``.

        ``E_cross`` is the mixed block d^2 f / dx_cur dx_prev, i.e. the
        lower-left block of the full 2n-by-2n Hessian.
        """
        raise NotImplementedError

    def feasible_point(self):
        """A strictly feasible (x_prev, x_cur) pair to start iterations."""
        z = np.zeros(self.n)
        return z, z.copy()


class HeadLoss:
    """A loss on the first block only (no coupling to a previous frame)."""

    n: int
    mu: float = 0.0
    L: float = math.inf

    def eval(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def feasible_point(self):
        return np.zeros(self.n)


class FixedPrev(HeadLoss):
    """A frame loss with its first argument frozen, seen as a head loss."""

    def __init__(self, base: FrameLoss, x_prev):
        self.base = base
        self.x_prev = np.asarray(x_prev, dtype=float).copy()
        self.n = base.n
        self.mu = base.mu
        self.L = base.L

    def eval(self, x):
        return self.base.eval(self.x_prev, x)

    def grad(self, x):
        return self.base.grad(self.x_prev, x)[self.n:]

    def hess(self, x):
        return self.base.hess(self.x_prev, x)[2]

    def feasible_point(self):
        return self.base.feasible_point()[1]


class QuadraticFrameLoss(FrameLoss):
    """Regularized linear least-squares pair loss
    ``||B x_prev + A x_cur - y||^2 + gamma ||x_cur||^2``.

    The Hessian is constant; declared curvature bounds are its exact
    extreme eigenvalues.
    """

    def __init__(self, B, A, y, gamma=0.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.gamma = float(gamma)
        if self.B.shape != self.A.shape or self.A.shape[0] != self.y.size:
            raise ValueError("row counts of A, B, y must agree")
        self.n = self.A.shape[1]
        self._G_pp = 2.0 * (self.B.T @ self.B)
        self._E = 2.0 * (self.A.T @ self.B)
        self._G_cc = 2.0 * (self.A.T @ self.A + self.gamma * np.eye(self.n))
        full = np.block([[self._G_pp, self._E.T], [self._E, self._G_cc]])
        w = np.linalg.eigvalsh(full)
        self.mu = max(float(w[0]), 0.0)
        self.L = float(w[-1])

    def eval(self, x_prev, x_cur):
        r = self.B @ x_prev + self.A @ x_cur - self.y
        return float(r @ r + self.gamma * (x_cur @ x_cur))

    def grad(self, x_prev, x_cur):
        r = self.B @ x_prev + self.A @ x_cur - self.y
        return np.concatenate([2.0 * (self.B.T @ r),
                               2.0 * (self.A.T @ r) + 2.0 * self.gamma * x_cur])

    def hess(self, x_prev, x_cur):
        return self._G_pp, self._E, self._G_cc


class QuadraticHeadLoss(HeadLoss):
    """First-batch loss ``||A x - y||^2 + gamma ||x||^2``."""

    def __init__(self, A, y, gamma=0.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.gamma = float(gamma)
        self.n = self.A.shape[1]
        self._H = 2.0 * (self.A.T @ self.A + self.gamma * np.eye(self.n))
        w = np.linalg.eigvalsh(self._H)
        self.mu = max(float(w[0]), 0.0)
        self.L = float(w[-1])

    def eval(self, x):
        r = self.A @ x - self.y
        return float(r @ r + self.gamma * (x @ x))

    def grad(self, x):
        r = self.A @ x - self.y
        return 2.0 * (self.A.T @ r) + 2.0 * self.gamma * x

    def hess(self, x):
        return self._H


class AggregateObjective:
    """Sum of pair losses over consecutive blocks, plus an optional head.

    ``frames[k]`` couples blocks ``(k, k+1)`` of the stacked variable, so an
    objective with ``T`` pair losses acts on ``T + 1`` blocks.  Evaluation
    order is fixed for reproducibility.
    """

    def __init__(self, frames, head: HeadLoss | None = None):
        self.frames = list(frames)
        self.head = head
        if not self.frames and head is None:
            raise ValueError("objective needs at least one loss term")
        n_candidates = [f.n for f in self.frames] + ([head.n] if head else [])
        if len(set(n_candidates)) != 1:
            raise ValueError("all losses must share the block dimension")
        self.n = n_candidates[0]

    @property
    def n_blocks(self) -> int:
        return len(self.frames) + 1

    def check_blocks(self, xbar):
        xbar = np.asarray(xbar, dtype=float)
        if xbar.shape != (self.n_blocks, self.n):
            raise ValueError(
                f"expected {self.n_blocks} blocks of size {self.n}, "
                f"got shape {xbar.shape}"
            )
        return xbar

    def default_init(self) -> np.ndarray:
        blocks = []
        if self.head is not None:
            blocks.append(self.head.feasible_point())
        elif self.frames:
            blocks.append(self.frames[0].feasible_point()[0])
        for f in self.frames:
            blocks.append(f.feasible_point()[1])
        return np.stack(blocks)


def aggregate_value(obj: AggregateObjective, xbar) -> float:
    xbar = obj.check_blocks(xbar)
    total = obj.head.eval(xbar[0]) if obj.head is not None else 0.0
    for t, f in enumerate(obj.frames, start=1):
        total += f.eval(xbar[t - 1], xbar[t])
    return float(total)


def aggregate_grad(obj: AggregateObjective, xbar) -> np.ndarray:
    """Block gradient of the aggregate objective, shape (T+1, n)."""
    xbar = obj.check_blocks(xbar)
    n = obj.n
    g = np.zeros_like(xbar)
    if obj.head is not None:
        g[0] += obj.head.grad(xbar[0])
    for t, f in enumerate(obj.frames, start=1):
        gf = f.grad(xbar[t - 1], xbar[t])
        g[t - 1] += gf[:n]
        g[t] += gf[n:]
    return g


def aggregate_hessian(obj: AggregateObjective, xbar) -> BlockTridiagSystem:
    """Block-tridiagonal Hessian of the aggregate objective (no rhs).

    Main diagonal block t sums the cur-cur block of frame t and the
    prev-prev block of frame t+1 (endpoints as appropriate); off-diagonal
    block t is the mixed block of frame t+1.
    """
    xbar = obj.check_blocks(xbar)
    T1 = obj.n_blocks
    diag = [np.zeros((obj.n, obj.n)) for _ in range(T1)]
    off = []
    if obj.head is not None:
        diag[0] += obj.head.hess(xbar[0])
    for t, f in enumerate(obj.frames, start=1):
        G_pp, E, G_cc = f.hess(xbar[t - 1], xbar[t])
        diag[t - 1] += G_pp
        diag[t] += G_cc
        off.append(np.asarray(E, dtype=float))
    return BlockTridiagSystem(diag=diag, offdiag=off, rhs=None)


def _solve_newton_system(diag, off, neg_grad):
    """Solve the block-tridiagonal Newton system by one forward/backward sweep."""
    cache = LuStreamCache()
    lu_append(cache, diag[0])
    forward_step(cache, neg_grad[0])
    for t in range(1, len(diag)):
        lu_append(cache, diag[t], off[t - 1])
        forward_step(cache, neg_grad[t], off[t - 1])
    return np.stack(backward_sweep(cache))


def armijo_accepts(f, fn, tau, slope, c1=1e-4):
    """Sufficient-decrease test with a floating-point resolution allowance.

    Near the optimum the predicted decrease drops below what double
    precision can resolve in the objective value; the slack keeps the line
    search from rejecting such steps (the iterate still moves by at most
    the Newton step, and the gradient test governs termination).
    """
    if not math.isfinite(fn):
        return False
    return fn <= f + c1 * tau * slope + 1e-13 * (1.0 + abs(f))


def _damped_newton(obj, x0, grad_tol, max_iters, shrink=0.5, c1=1e-4,
                   max_backtracks=60):
    """Damped Newton on block variables; returns (xbar, grad_norm_trace)."""
    x = obj.check_blocks(x0).copy()
    f = aggregate_value(obj, x)
    if not math.isfinite(f):
        raise ValueError("initial point is infeasible")
    trace = []
    for _ in range(max_iters + 1):
        g = aggregate_grad(obj, x)
        gn = float(np.linalg.norm(g))
        trace.append(gn)
        if gn < grad_tol:
            return x, trace
        H = aggregate_hessian(obj, x)
        s = _solve_newton_system(H.diag, H.offdiag, -g)
        slope = float(np.sum(g * s))
        tau = 1.0
        for _ in range(max_backtracks):
            xn = x + tau * s
            fn = aggregate_value(obj, xn)
            if armijo_accepts(f, fn, tau, slope, c1):
                break
            tau *= shrink
        else:
            raise ConvergenceError("line search failed", trace)
        x, f = xn, fn
    raise ConvergenceError(
        f"no convergence within {max_iters} iterations "
        f"(last gradient norm {trace[-1]:.3e})", trace)


def batch_minimize(obj: AggregateObjective, init=None, *, grad_tol=1e-11,
                   max_iters=100) -> np.ndarray:
    """Full-dimensional damped Newton oracle for the aggregate objective.

    The Newton systems are solved through the block-tridiagonal sweeps.
    Converges to gradient norm below ``grad_tol``; starting at the
    minimizer costs no iterations beyond the convergence check.
    """
    x0 = obj.default_init() if init is None else init
    x, _ = _damped_newton(obj, x0, grad_tol, max_iters)
    return x


def isolated_minimizer(f: FrameLoss, *, grad_tol=1e-10, max_iters=100):
    """Minimize a single pair loss over its 2n variables (damped Newton).

    Requires the loss to be strongly convex; the minimizer is then unique.
    """
    u, v = f.feasible_point()
    z = np.concatenate([u, v]).astype(float)
    n = f.n
    val = f.eval(z[:n], z[n:])
    if not math.isfinite(val):
        raise ValueError("feasible point of the loss is not feasible")
    trace = []
    for _ in range(max_iters + 1):
        g = f.grad(z[:n], z[n:])
        gn = float(np.linalg.norm(g))
        trace.append(gn)
        if gn < grad_tol:
            return z[:n].copy(), z[n:].copy()
        G_pp, E, G_cc = f.hess(z[:n], z[n:])
        H = np.block([[G_pp, E.T], [E, G_cc]])
        try:
            s = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "isolated minimizer: singular pair Hessian; the loss is not "
                "strongly convex over both blocks", trace) from exc
        slope = float(g @ s)
        tau = 1.0
        for _ in range(60):
            zn = z + tau * s
            fn = f.eval(zn[:n], zn[n:])
            if armijo_accepts(val, fn, tau, slope):
                break
            tau *= 0.5
        else:
            raise ConvergenceError("isolated minimizer line search failed", trace)
        z, val = zn, fn
    raise ConvergenceError(
        f"isolated minimizer: no convergence within {max_iters} iterations "
        f"(last gradient norm {trace[-1]:.3e})", trace)


def conditional_decoupling_check(obj: AggregateObjective, tau: int, *,
                                 xhat=None, tol=1e-8) -> bool:
    """Fix block ``tau`` at the batch solution and re-minimize the tail.

    Returns True when the tail solve reproduces the batch solution on
    every later block to within ``tol``, which is the conditional
    decoupling property of the chain-structured objective.
    """
    T = len(obj.frames)
    if not 0 <= tau < T:
        raise ValueError(f"tau must be in [0, {T - 1}]")
    if xhat is None:
        xhat = batch_minimize(obj, obj.default_init())
    xhat = obj.check_blocks(xhat)
    # head is the loss over blocks (tau, tau+1) with its prev argument
    # pinned; pair losses resume from the next one
    tail = AggregateObjective(
        frames=obj.frames[tau + 1:],
        head=FixedPrev(obj.frames[tau], xhat[tau]),
    )
    sol = batch_minimize(tail, xhat[tau + 1:].copy(), grad_tol=1e-12,
                         max_iters=100)
    dev = float(np.max(np.linalg.norm(sol - xhat[tau + 1:], axis=1)))
    return dev <= tol


@dataclass
class ConvexRateReport:
    """Decay-rate constants implied by the declared curvature bounds.

    ``a`` is the geometric contraction ratio of backward updates for
    smooth strongly convex frame losses; the remaining constants bound the
    solution norms (``M_x``, ``M_g``), the per-update decay (``C0``), the
    distance to the settled solution (``C1``) and the truncation error as
    a function of buffer size (``C_b``).
    """

    a: float
    kappa: float
    delta: float
    theta: float
    M_x: float
    M_g: float
    C0: float
    C1: float
    C_b: float
    eps_star: float | None
    rho: float | None
    dominant: bool
    mu_min: float
    L_max: float


def rate_report(obj: AggregateObjective, isolated=None, *,
                sample_points=None) -> ConvexRateReport:
    """Compute the convex-case decay constants for an objective.

    ``isolated`` is the list of isolated pair minimizers (computed if
    omitted).  ``theta`` is measured empirically as the largest coupling
    norm over the given sample points (the stacked isolated minimizers by
    default), scaled by ``kappa``.
    """
    losses = list(obj.frames)
    mus = [f.mu for f in losses]
    Ls = [f.L for f in losses]
    if obj.head is not None:
        mus.append(obj.head.mu)
        Ls.append(obj.head.L)
    mu_min = min(mus)
    L_max = max(Ls)
    if mu_min <= 0.0 or not math.isfinite(L_max):
        raise ValueError("rate report needs declared bounds 0 < mu <= L < inf")
    kappa = 0.5 * (2.0 * L_max + mu_min)
    a = (2.0 * L_max - mu_min) / (2.0 * L_max + mu_min)
    delta = a

    if isolated is None:
        isolated = [isolated_minimizer(f) for f in losses]
    M_x = 0.0
    for u, v in isolated:
        M_x = max(M_x, float(np.linalg.norm(np.concatenate([u, v]))))
    if obj.head is not None:
        # a head contributes a lone first-block minimizer to the bound
        from_head = _head_minimizer_norm(obj.head)
        M_x = max(M_x, from_head)

    if sample_points is None:
        sample_points = [_stack_isolated(obj, isolated)]
    theta = 0.0
    for xbar in sample_points:
        H = aggregate_hessian(obj, xbar)
        for E in H.offdiag:
            theta = max(theta, spectral_norm(E) / kappa)

    M_g = 2.0 * M_x * kappa * math.sqrt(L_max ** 2 + theta ** 2)
    C0 = M_g / mu_min
    C1 = C0 * (2.0 * L_max - mu_min) / (2.0 * mu_min)
    cond = _finish_report(kappa, delta, theta)
    coupling = theta / (1.0 - delta)
    C_b = C0 * (1.0 / (1.0 - a) + 1.0 / (1.0 - coupling)) if coupling < 1.0 \
        else math.inf
    return ConvexRateReport(
        a=a, kappa=kappa, delta=delta, theta=theta, M_x=M_x, M_g=M_g,
        C0=C0, C1=C1, C_b=C_b, eps_star=cond.eps_star, rho=cond.rho,
        dominant=cond.dominant, mu_min=mu_min, L_max=L_max)


def _head_minimizer_norm(head: HeadLoss) -> float:
    x = head.feasible_point().astype(float)
    for _ in range(100):
        g = head.grad(x)
        if np.linalg.norm(g) < 1e-10:
            break
        x = x + np.linalg.solve(head.hess(x), -g)
    return float(np.linalg.norm(x))


def _stack_isolated(obj: AggregateObjective, isolated) -> np.ndarray:
    blocks = [isolated[0][0]] + [pair[1] for pair in isolated]
    return np.stack(blocks)


def quadratic_stream(batches, gamma=0.0):
    """View a least-squares batch stream as (head loss, pair losses).

    The aggregate objective of the result has twice the normal-equations
    system as its Hessian and the same minimizer, which is what makes the
    online Newton solver directly comparable to the streaming
    least-squares solver.
    """
    if not batches:
        raise ValueError("need at least one batch")
    head = QuadraticHeadLoss(batches[0].A, batches[0].y, gamma)
    frames = [QuadraticFrameLoss(b.B, b.A, b.y, gamma) for b in batches[1:]]
    return head, frames


def fd_gradient(f, x, step=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def fd_hessian(f, x, step=1e-4) -> np.ndarray:
    """Second-order central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    k = x.size
    H = np.zeros((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = step
        for j in range(i, k):
            ej = np.zeros(k)
            ej[j] = step
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej)
                       - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * step * step)
            H[j, i] = H[i, j]
    return H
