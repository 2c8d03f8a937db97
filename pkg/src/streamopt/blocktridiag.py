"""Streaming block LU factorization for symmetric block-tridiagonal systems.

Systems handled here have dense n-by-n blocks ``H_t`` on the main diagonal,
coupling blocks ``E_t`` on the first block sub-diagonal (``E_t.T`` above),
and a block right-hand side ``g_t``.  The factorization is incremental:
frames are appended one at a time, the forward variable is advanced with
them, and the trailing part of the solution can be refreshed by a backward
sweep of any depth without touching older frames.

A conditioning report quantifies how strongly the diagonal blocks dominate
the coupling blocks; under dominance the pivot blocks stay uniformly
well-conditioned and the backward updates contract geometrically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

__all__ = [
    "FULL",
    "BREAKDOWN_COND",
    "FactorizationBreakdownError",
    "BlockTridiagSystem",
    "LuStreamCache",
    "ConditioningReport",
    "SensitivityCheck",
    "lu_append",
    "forward_step",
    "backward_sweep",
    "assemble_dense",
    "solve_dense",
    "conditioning_report",
    "first_block_sensitivity",
    "spectral_norm",
    "epsilon_fixed_point",
    "contractive_recursion_bound",
]

# Sentinel meaning "no truncation": sweep over the whole history.
FULL = None

# Condition estimate on a pivot block above which the factorization is
# declared broken instead of silently producing garbage.
BREAKDOWN_COND = 1e12

_SYM_TOL = 1e-12


class FactorizationBreakdownError(RuntimeError):
    """A pivot block is singular or too ill-conditioned to apply."""

    def __init__(self, frame: int, cond: float):
        self.frame = frame
        self.cond = cond
        super().__init__(
            f"pivot block Q_{frame} unusable "
            f"(condition estimate {cond:.3e} exceeds {BREAKDOWN_COND:.1e})"
        )


def _as_block(M, n, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
    return M


def _check_symmetric(H, label):
    scale = np.linalg.norm(H, "fro")
    if scale == 0.0:
        return
    if np.linalg.norm(H - H.T, "fro") > _SYM_TOL * scale:
        raise ValueError(f"{label} is not symmetric to relative tolerance {_SYM_TOL}")


@dataclass
class BlockTridiagSystem:
    """A symmetric block-tridiagonal system ``H x = g``.

    Parameters
    ----------
    diag : list of (n, n) arrays
        Main-diagonal blocks ``H_t``; each must be symmetric.
    offdiag : list of (n, n) arrays
        Sub-diagonal coupling blocks ``E_t`` (block row t+1, column t).
        Must have one entry fewer than ``diag``.
    rhs : list of (n,) arrays, optional
        Right-hand-side blocks ``g_t``, one per diagonal block.  May be
        ``None`` for rhs-free uses (e.g. Hessian containers).
    """

    diag: list
    offdiag: list
    rhs: list | None = None

    def __post_init__(self):
        if not self.diag:
            raise ValueError("system needs at least one diagonal block")
        n = np.asarray(self.diag[0]).shape[0]
        self.diag = [_as_block(H, n, f"diag[{t}]") for t, H in enumerate(self.diag)]
        for t, H in enumerate(self.diag):
            _check_symmetric(H, f"diag[{t}]")
        if len(self.offdiag) != len(self.diag) - 1:
            raise ValueError("need len(offdiag) == len(diag) - 1")
        self.offdiag = [
            _as_block(E, n, f"offdiag[{t}]") for t, E in enumerate(self.offdiag)
        ]
        if self.rhs is not None:
            if len(self.rhs) != len(self.diag):
                raise ValueError("need len(rhs) == len(diag)")
            self.rhs = [np.asarray(g, dtype=float).reshape(n) for g in self.rhs]

    @property
    def n(self) -> int:
        return self.diag[0].shape[0]

    @property
    def n_frames(self) -> int:
        return len(self.diag)


class LuStreamCache:
    """Recursive block LU state ``{Q_t, U_t, v_t}`` appended frame by frame.

    ``Q_0 = H_0`` and for later frames ``U_{t-1} = Q_{t-1}^{-1} E_{t-1}.T``
    and ``Q_t = H_t - E_{t-1} U_{t-1}``.  Pivot inverses are never formed;
    each ``Q_t`` keeps a partially pivoted LU factorization that is reused
    for every solve against it.
    """

    def __init__(self):
        self.Q = []
        self.U = []
        self.v = []
        self._factors = []
        self._conds = []

    def __len__(self):
        return len(self.Q)

    def solve_pivot(self, t, rhs):
        """Apply ``Q_t^{-1}`` to a vector or matrix right-hand side."""
        cond = self._conds[t]
        if not np.isfinite(cond) or cond > BREAKDOWN_COND:
            raise FactorizationBreakdownError(t, cond)
        return lu_solve(self._factors[t], rhs, check_finite=False)

    def _push_pivot(self, Q):
        self.Q.append(Q)
        self._conds.append(np.linalg.cond(Q))
        try:
            with warnings.catch_warnings():
                # a singular pivot is caught by the condition check on use
                warnings.simplefilter("ignore", LinAlgWarning)
                self._factors.append(lu_factor(Q, check_finite=False))
        except Exception:
            self._factors.append(None)
            self._conds[-1] = np.inf


def lu_append(cache: LuStreamCache, H_new, E_prev=None) -> LuStreamCache:
    """Append one frame to the streaming factorization.

    The seeding call (empty cache) takes ``H_new`` only and sets
    ``Q_0 = H_0``.  Later calls consume the coupling block ``E_prev``
    between the previous and the new frame, appending
    ``U_{t-1} = Q_{t-1}^{-1} E_{t-1}.T`` and ``Q_t = H_t - E_{t-1} U_{t-1}``.

    Raises
    ------
    FactorizationBreakdownError
        If the previous pivot block has condition estimate above
        ``BREAKDOWN_COND``.
    """
    H_new = np.atleast_2d(np.asarray(H_new, dtype=float))
    if len(cache) == 0:
        if E_prev is not None:
            raise ValueError("seeding call must not pass a coupling block")
        cache._push_pivot(H_new.copy())
        return cache
    if E_prev is None:
        raise ValueError("non-seeding call needs the coupling block E_prev")
    E_prev = np.atleast_2d(np.asarray(E_prev, dtype=float))
    t_prev = len(cache) - 1
    U_prev = cache.solve_pivot(t_prev, E_prev.T)
    cache.U.append(U_prev)
    cache._push_pivot(H_new - E_prev @ U_prev)
    return cache


def forward_step(cache: LuStreamCache, g_t, E_prev=None) -> LuStreamCache:
    """Advance the forward variable: ``v_t = Q_t^{-1}(g_t - E_{t-1} v_{t-1})``.

    The pivot block for this frame must already be appended.  The first
    call (no previous forward variable) reduces to ``v_0 = Q_0^{-1} g_0``.
    """
    t = len(cache.v)
    if t >= len(cache.Q):
        raise ValueError("append the pivot block for this frame first")
    g_t = np.asarray(g_t, dtype=float).reshape(-1)
    if t == 0:
        rhs = g_t
    else:
        if E_prev is None:
            raise ValueError("frames beyond the first need the coupling block")
        rhs = g_t - np.atleast_2d(np.asarray(E_prev, dtype=float)) @ cache.v[t - 1]
    cache.v.append(cache.solve_pivot(t, rhs))
    return cache


def backward_sweep(cache: LuStreamCache, depth=FULL):
    """Back-substitute the trailing ``depth`` frame estimates.

    Returns ``[xhat_{T-depth+1}, ..., xhat_T]`` in ascending frame order,
    where ``xhat_T = v_T`` and ``xhat_t = v_t - U_t xhat_{t+1}``.  With
    ``depth=FULL`` the result solves the whole system.
    """
    T = len(cache.Q) - 1
    if T < 0 or len(cache.v) != len(cache.Q):
        raise ValueError("forward sweep incomplete")
    if depth is FULL:
        depth = T + 1
    depth = int(depth)
    if not 1 <= depth <= T + 1:
        raise ValueError(f"depth must be in [1, {T + 1}], got {depth}")
    out = [cache.v[T]]
    for t in range(T - 1, T - depth, -1):
        out.append(cache.v[t] - cache.U[t] @ out[-1])
    out.reverse()
    return out


def assemble_dense(system: BlockTridiagSystem) -> np.ndarray:
    """Materialize the full dense matrix of a block-tridiagonal system."""
    n, T1 = system.n, system.n_frames
    A = np.zeros((n * T1, n * T1))
    for t, H in enumerate(system.diag):
        A[t * n:(t + 1) * n, t * n:(t + 1) * n] = H
    for t, E in enumerate(system.offdiag):
        A[(t + 1) * n:(t + 2) * n, t * n:(t + 1) * n] = E
        A[t * n:(t + 1) * n, (t + 1) * n:(t + 2) * n] = E.T
    return A


def solve_dense(system: BlockTridiagSystem):
    """Dense-factorization oracle for the full system (test reference)."""
    if system.rhs is None:
        raise ValueError("system has no right-hand side")
    A = assemble_dense(system)
    g = np.concatenate(system.rhs)
    x = np.linalg.solve(A, g)
    return [x[t * system.n:(t + 1) * system.n] for t in range(system.n_frames)]


def spectral_norm(M, tol=1e-10, max_iter=10000) -> float:
    """Largest singular value by power iteration on ``M.T @ M``.

    Deterministic start vector; iteration stops when the Rayleigh estimate
    changes by less than ``tol`` (relative).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[1]
    x = np.ones(k) + 1e-3 * np.arange(k)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = M.T @ (M @ x)
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        sigma_new = math.sqrt(max(lam, 0.0))
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new
        sigma = sigma_new
    return sigma


def epsilon_fixed_point(delta, theta, tol=1e-12, max_iter=1000000) -> float:
    """Iterate ``eps_t = delta + theta^2 / (1 - eps_{t-1})`` to its limit.

    Starting from ``eps_0 = delta`` the sequence is monotonically
    nondecreasing whenever ``theta <= (1 - delta)/2`` and converges to the
    closed-form limit of the pivot-conditioning bound.
    """
    eps = delta
    for _ in range(max_iter):
        nxt = delta + theta * theta / (1.0 - eps)
        if abs(nxt - eps) < tol:
            return nxt
        eps = nxt
    return eps


def contractive_recursion_bound(a, b, t) -> float:
    """Resolved bound for ``z_0 <= b``, ``z_t <= b + a z_{t-1}``.

    Returns ``b (1 - a^{t+1}) / (1 - a)``; for ``a < 1`` this is also
    uniformly bounded by ``b / (1 - a)``.
    """
    if a < 0 or b < 0:
        raise ValueError("recursion constants must be nonnegative")
    if a == 1.0:
        return b * (t + 1)
    return b * (1.0 - a ** (t + 1)) / (1.0 - a)


@dataclass
class ConditioningReport:
    """Dominance constants of a block-tridiagonal system.

    ``kappa`` rescales the diagonal blocks toward identity; ``delta`` is the
    worst deviation ``||H_t / kappa - I||`` and ``theta`` the worst coupling
    ``||E_t|| / kappa``.  When ``theta <= (1 - delta)/2`` the pivot blocks
    satisfy ``||Q_t / kappa - I|| <= eps_star`` uniformly, and backward
    updates contract with ratio ``rho = theta / (1 - eps_star)``.
    """

    kappa: float
    delta: float
    theta: float
    eps_star: float | None
    rho: float | None
    dominant: bool


def conditioning_report(system: BlockTridiagSystem, *, norm_tol=1e-10,
                        norm_max_iter=10000) -> ConditioningReport:
    """Measure ``kappa``, ``delta``, ``theta`` and the implied decay bounds.

    ``kappa`` is the mean of the extreme eigenvalues over all diagonal
    blocks.  Operator norms are estimated by power iteration.  A system
    whose coupling exceeds ``(1 - delta)/2`` is flagged non-dominant and
    gets no ``eps_star``; that is a report outcome, not an error.
    """
    lam_lo = math.inf
    lam_hi = -math.inf
    for H in system.diag:
        w = np.linalg.eigvalsh(H)
        lam_lo = min(lam_lo, w[0])
        lam_hi = max(lam_hi, w[-1])
    kappa = 0.5 * (lam_lo + lam_hi)
    if kappa <= 0.0:
        return ConditioningReport(kappa, math.inf, math.inf, None, None, False)
    eye = np.eye(system.n)
    delta = max(
        spectral_norm(H / kappa - eye, tol=norm_tol, max_iter=norm_max_iter)
        for H in system.diag
    )
    if system.offdiag:
        theta = max(
            spectral_norm(E, tol=norm_tol, max_iter=norm_max_iter)
            for E in system.offdiag
        ) / kappa
    else:
        theta = 0.0
    return _finish_report(kappa, delta, theta)


def _finish_report(kappa, delta, theta) -> ConditioningReport:
    eps_star = None
    rho = None
    if delta < 1.0:
        disc = 0.25 * (1.0 - delta) ** 2 - theta * theta
        if disc >= -1e-15:
            eps_star = 0.5 * (1.0 + delta) - math.sqrt(max(disc, 0.0))
            rho = theta / (1.0 - eps_star)
    dominant = delta < 1.0 and theta < 0.5 * (1.0 - delta)
    return ConditioningReport(kappa, delta, theta, eps_star, rho, dominant)


@dataclass
class SensitivityCheck:
    """Measured vs guaranteed first-block sensitivity of a bordered solve."""

    ratio: float
    alpha: float
    beta: float
    bound: float


def first_block_sensitivity(system: BlockTridiagSystem) -> SensitivityCheck:
    """Solve a system whose rhs lives only in the first block and check that
    the trailing solution is bounded by ``alpha * beta * ||h_0||``.

    ``alpha`` is the norm of the border column under the first block and
    ``beta`` the inverse norm of the trailing principal submatrix.  Raises
    if the guaranteed bound is violated (which would indicate a broken
    solve) or if the trailing block is singular.
    """
    if system.rhs is None:
        raise ValueError("system has no right-hand side")
    n = system.n
    if any(np.any(g != 0.0) for g in system.rhs[1:]):
        raise ValueError("right-hand side must vanish outside the first block")
    if system.n_frames < 2:
        raise ValueError("need at least two frames to partition")
    A = assemble_dense(system)
    g = np.concatenate(system.rhs)
    x = np.linalg.solve(A, g)
    h0, y = x[:n], x[n:]
    V = A[n:, :n]
    B = A[n:, n:]
    alpha = np.linalg.norm(V, 2)
    smin = np.linalg.svd(B, compute_uv=False)[-1]
    if smin == 0.0:
        raise np.linalg.LinAlgError("trailing block is singular")
    beta = 1.0 / smin
    nh0 = np.linalg.norm(h0)
    ny = np.linalg.norm(y)
    ratio = ny / nh0 if nh0 > 0.0 else (0.0 if ny == 0.0 else math.inf)
    bound = alpha * beta
    if ratio > bound * (1.0 + 1e-9) + 1e-15:
        raise ArithmeticError(
            f"sensitivity ratio {ratio:.6e} exceeds guaranteed bound {bound:.6e}"
        )
    return SensitivityCheck(ratio=ratio, alpha=alpha, beta=beta, bound=bound)
