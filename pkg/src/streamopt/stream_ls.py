"""Streaming regularized least squares over coupled frame pairs.

Each measurement batch ``y_t ~ B_t x_{t-1} + A_t x_t`` appends one frame of
unknowns.  The solver maintains the block LU factorization of the growing
normal equations incrementally: finalize the previous pivot block with the
new batch, advance the forward variable, then refresh the trailing
estimates with a backward sweep.  The sweep may be truncated to the last
``B`` frames, after which older frames are frozen and moved to an archive;
the forward recursion stays exact either way, so estimates are exact for
as long as a frame stays inside the buffer.

Per-append update magnitudes are recorded by lag, which is what the decay
diagnostics fit a geometric ratio to.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .blocktridiag import (
    BREAKDOWN_COND,
    FULL,
    BlockTridiagSystem,
    ConditioningReport,
    FactorizationBreakdownError,
    _finish_report,
    spectral_norm,
)

__all__ = [
    "LsBatch",
    "LsStreamState",
    "DecayFit",
    "TruncationComparison",
    "BufferSweep",
    "ingest",
    "decay_profile",
    "normal_equations",
    "truncation_error",
    "truncation_sweep",
    "settling_constant",
    "truncation_bound",
    "write_archive_csv",
    "write_decay_csv",
    "fit_log_slope",
]

_FMT = "{:.17g}"


@dataclass
class LsBatch:
    """One measurement batch: ``y ~ B x_prev + A x_cur`` at frame ``t``.

    ``B`` is absent exactly at ``t = 0``.  Row counts may vary from batch
    to batch; only the column count is fixed.
    """

    t: int
    y: np.ndarray
    A: np.ndarray
    B: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.shape[0] != self.y.size:
            raise ValueError("row counts of A and y must agree")
        if self.t == 0:
            if self.B is not None:
                raise ValueError("batch 0 must not carry a coupling matrix")
        else:
            if self.B is None:
                raise ValueError("batches beyond the first need B")
            self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
            if self.B.shape != self.A.shape:
                raise ValueError("A and B must have the same shape")


class LsStreamState:
    """State of the streaming least-squares solver.

    Parameters
    ----------
    n : int
        Frame dimension.
    gamma : float
        Tikhonov weight on each frame (>= 0).
    buffer_B : int or FULL
        Number of trailing frames refreshed per append.  ``FULL`` keeps
        every frame live; an integer ``B`` freezes frames once they fall
        ``B`` behind, retaining only the last ``B - 1`` cached sweep
        blocks.
    archive_sink : writable text file, optional
        If given, evicted frames are spooled there as CSV rows
        ``frame,component,value`` at full double precision.
    """

    def __init__(self, n: int, gamma: float = 0.0, buffer_B=FULL,
                 archive_sink=None):
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if buffer_B is not FULL and int(buffer_B) < 1:
            raise ValueError("buffer_B must be a positive integer or FULL")
        self.n = int(n)
        self.gamma = float(gamma)
        self.buffer_B = buffer_B if buffer_B is FULL else int(buffer_B)
        self.archive_sink = archive_sink

        self.t_next = 0
        self._Qp = None          # provisional pivot block of the newest frame
        self._gp = None          # provisional rhs block
        self._E_last = None      # coupling block between the last two frames
        if buffer_B is FULL:
            self._v = []
            self._U = []
        else:
            self._v = deque(maxlen=max(1, self.buffer_B - 1))
            self._U = deque(maxlen=max(0, self.buffer_B - 1))
        self.live = []           # estimates for frames live_start .. t_next-1
        self.live_start = 0
        self.archive = []        # frozen (frame, estimate) pairs, append-only
        self.update_log = []     # (append_T, lag, magnitude)
        # running conditioning tracker: extreme eigenvalues of finalized
        # diagonal blocks and coupling-block norms
        self._h_extremes = []
        self._e_norms = []
        self._S_last = None      # A^T A + gamma I of the newest frame
        self._checksum = [0, 0.0]

    # -- small helpers ----------------------------------------------------

    @property
    def frames_total(self) -> int:
        return self.t_next

    def _solve(self, Q, rhs, frame):
        cond = np.linalg.cond(Q)
        if not np.isfinite(cond) or cond > BREAKDOWN_COND:
            raise FactorizationBreakdownError(frame, cond)
        return lu_solve(lu_factor(Q, check_finite=False), rhs,
                        check_finite=False)

    def _absorb_checksum(self, batch: LsBatch):
        self._checksum[0] += 1
        s = float(np.sum(batch.y)) + float(np.sum(batch.A))
        if batch.B is not None:
            s += float(np.sum(batch.B))
        self._checksum[1] += s

    def stream_id(self):
        return (self.n, self.gamma, self._checksum[0], self._checksum[1])

    def final_estimates(self) -> dict:
        """Frozen archive plus the current live estimates, by frame index."""
        out = {frame: val for frame, val in self.archive}
        for k, val in enumerate(self.live):
            out[self.live_start + k] = val
        return out

    def conditioning(self) -> ConditioningReport:
        """Dominance report accumulated while streaming.

        Uses the exact eigenvalue extremes of the (symmetric) finalized
        diagonal blocks plus the current provisional one, and the recorded
        coupling-block norms.
        """
        if self._S_last is None:
            raise ValueError("no batches ingested")
        extremes = list(self._h_extremes)
        w = np.linalg.eigvalsh(self._S_last)
        extremes.append((float(w[0]), float(w[-1])))
        lam_lo = min(e[0] for e in extremes)
        lam_hi = max(e[1] for e in extremes)
        kappa = 0.5 * (lam_lo + lam_hi)
        if kappa <= 0:
            return ConditioningReport(kappa, math.inf, math.inf, None, None,
                                      False)
        delta = max(max(abs(hi / kappa - 1.0), abs(lo / kappa - 1.0))
                    for lo, hi in extremes)
        theta = max(self._e_norms) / kappa if self._e_norms else 0.0
        return _finish_report(kappa, delta, theta)


def ingest(state: LsStreamState, batch: LsBatch) -> LsStreamState:
    """Consume one batch: advance the factorization, refresh the tail.

    Runs one outer step of the streaming solver: finalize the previous
    pivot and rhs with the new batch, advance the forward variable, form
    the new coupling and provisional blocks, compute the newest frame
    estimate, then back-substitute through the trailing buffer.  Update
    magnitudes are recorded per lag before anything is overwritten, and a
    frame falling out of the buffer is archived at its final value.
    """
    if batch.t != state.t_next:
        raise ValueError(
            f"batch out of order: expected frame {state.t_next}, got {batch.t}")
    if batch.A.shape[1] != state.n:
        raise ValueError(f"batch has {batch.A.shape[1]} columns, state has n={state.n}")
    state._absorb_checksum(batch)
    A, y = batch.A, batch.y
    gamma_eye = state.gamma * np.eye(state.n)
    t = batch.t

    if t == 0:
        state._Qp = A.T @ A + gamma_eye
        state._gp = A.T @ y
        xhat = state._solve(state._Qp, state._gp, 0)
        state.live = [xhat]
        state.live_start = 0
        state._S_last = state._Qp.copy()
        state.t_next = 1
        return state

    B = batch.B
    # finalize the previous frame's pivot and rhs with the new coupling data
    Q_prev = state._Qp + B.T @ B
    g_prev = state._gp + B.T @ y
    if t == 1:
        v_prev = state._solve(Q_prev, g_prev, 0)
    else:
        v_prev = state._solve(Q_prev, g_prev - state._E_last @ state._v[-1],
                              t - 1)
    E_new = A.T @ B
    U_prev = state._solve(Q_prev, E_new.T, t - 1)
    state._Qp = A.T @ A - E_new @ U_prev + gamma_eye
    state._gp = A.T @ y
    xhat_t = state._solve(state._Qp, state._gp - E_new @ v_prev, t)

    state._v.append(v_prev)
    state._U.append(U_prev)
    state._E_last = E_new

    # conditioning tracker: the previous diagonal block is now final
    w = np.linalg.eigvalsh(state._S_last + B.T @ B)
    state._h_extremes.append((float(w[0]), float(w[-1])))
    state._e_norms.append(spectral_norm(E_new))
    state._S_last = A.T @ A + gamma_eye

    # backward sweep over the trailing buffer
    if state.buffer_B is FULL:
        back_steps = t
    else:
        back_steps = min(state.buffer_B - 1, t)
    new_vals = [xhat_t]
    for ell in range(1, back_steps + 1):
        val = state._v[-ell] - state._U[-ell] @ new_vals[-1]
        prev = state.live[(t - ell) - state.live_start]
        state.update_log.append((t, ell, float(np.linalg.norm(val - prev))))
        new_vals.append(val)

    # evict the frame that falls out of the buffer, then store the refresh
    if state.buffer_B is not FULL and len(state.live) == state.buffer_B:
        frozen = state.live.pop(0)
        frame = state.live_start
        state.live_start += 1
        state.archive.append((frame, frozen))
        if state.archive_sink is not None:
            _write_rows(state.archive_sink, frame, frozen)
    for ell in range(back_steps, 0, -1):
        state.live[(t - ell) - state.live_start] = new_vals[ell]
    state.live.append(xhat_t)
    state.t_next = t + 1
    return state


def normal_equations(batches, gamma=0.0) -> BlockTridiagSystem:
    """Assemble the full normal-equations system of a batch list.

    Memory grows with the stream, so this is an oracle for tests and
    reports, not part of the streaming path.
    """
    if not batches:
        raise ValueError("need at least one batch")
    T = len(batches) - 1
    n = batches[0].A.shape[1]
    diag, off, rhs = [], [], []
    for t, b in enumerate(batches):
        H = b.A.T @ b.A + gamma * np.eye(n)
        g = b.A.T @ b.y
        if t < T:
            nxt = batches[t + 1]
            H = H + nxt.B.T @ nxt.B
            g = g + nxt.B.T @ nxt.y
            off.append(nxt.A.T @ nxt.B)
        diag.append(H)
        rhs.append(g)
    return BlockTridiagSystem(diag, off, rhs)


@dataclass
class DecayFit:
    """Geometric fit of per-lag update magnitudes against the theory bound."""

    lags: list
    magnitudes: list
    fitted_ratio: float
    bound_ratio: float
    report: ConditioningReport


def fit_log_slope(xs, ys, floor=0.0):
    """Least-squares slope of ``log(y)`` against ``x``; ignores entries at
    or below ``floor``.  Returns ``None`` with fewer than two usable points."""
    pairs = [(x, y) for x, y in zip(xs, ys) if y > floor]
    if len(pairs) < 2:
        return None
    xs = np.array([p[0] for p in pairs], dtype=float)
    ly = np.log([p[1] for p in pairs])
    return float(np.polyfit(xs, ly, 1)[0])


def decay_profile(state: LsStreamState) -> DecayFit:
    """Fit the geometric decay ratio of backward updates per lag.

    Requires a FULL-buffer run with at least 10 appends.  All-zero update
    magnitudes (fully decoupled frames) report a fitted ratio of 0.
    """
    if state.buffer_B is not FULL:
        raise ValueError("decay profile needs a FULL-buffer run")
    if state.t_next < 10:
        raise ValueError("decay profile needs at least 10 appends")
    by_lag = {}
    for _, lag, mag in state.update_log:
        by_lag.setdefault(lag, []).append(mag)
    lags = sorted(by_lag)
    medians = [float(np.median(by_lag[lag])) for lag in lags]
    scale = max(medians, default=0.0)
    if scale == 0.0:
        fitted = 0.0
    else:
        slope = fit_log_slope(lags, medians, floor=1e-14 * scale)
        fitted = math.exp(slope) if slope is not None else 0.0
    report = state.conditioning()
    bound = report.rho if report.rho is not None else math.inf
    return DecayFit(lags=lags, magnitudes=medians, fitted_ratio=fitted,
                    bound_ratio=bound, report=report)


@dataclass
class TruncationComparison:
    """Per-frame deviation of a truncated run from the FULL reference."""

    buffer_B: int
    archived_frames: list
    archived_errors: list
    all_frames: list
    all_errors: list

    @property
    def max_archived_error(self) -> float:
        return max(self.archived_errors, default=0.0)

    @property
    def max_error(self) -> float:
        return max(self.all_errors, default=0.0)


def truncation_error(reference: LsStreamState,
                     truncated: LsStreamState) -> TruncationComparison:
    """Compare frozen estimates of a truncated run against the FULL run.

    Both states must have consumed the identical batch stream.  Errors are
    reported per archived frame and, separately, over every frame
    (archived plus live) against the reference's final estimates.
    """
    if reference.buffer_B is not FULL:
        raise ValueError("reference must be a FULL-buffer run")
    if truncated.stream_id() != reference.stream_id():
        raise ValueError("runs consumed different streams")
    ref = reference.final_estimates()
    arch_frames, arch_errors = [], []
    for frame, val in truncated.archive:
        arch_frames.append(frame)
        arch_errors.append(float(np.linalg.norm(ref[frame] - val)))
    all_frames, all_errors = [], []
    for frame, val in sorted(truncated.final_estimates().items()):
        all_frames.append(frame)
        all_errors.append(float(np.linalg.norm(ref[frame] - val)))
    b = truncated.buffer_B if truncated.buffer_B is not FULL \
        else reference.frames_total + 1
    return TruncationComparison(
        buffer_B=b, archived_frames=arch_frames, archived_errors=arch_errors,
        all_frames=all_frames, all_errors=all_errors)


@dataclass
class BufferSweep:
    """Max truncation error per buffer size plus the fitted log-linear slope."""

    buffers: list
    max_errors: list
    slope: float | None


def truncation_sweep(reference: LsStreamState, truncated_runs) -> BufferSweep:
    """Fit ``log(max truncation error)`` against the buffer size."""
    comps = [truncation_error(reference, s) for s in truncated_runs]
    comps.sort(key=lambda c: c.buffer_B)
    buffers = [c.buffer_B for c in comps]
    errors = [c.max_error for c in comps]
    scale = max(errors, default=0.0)
    slope = fit_log_slope(buffers, errors, floor=1e-13 * scale) \
        if scale > 0 else None
    return BufferSweep(buffers=buffers, max_errors=errors, slope=slope)


def settling_constant(report: ConditioningReport, M_y: float) -> float:
    """Explicit settling constant for a dominant stream.

    Composes the uniform forward/backward norm bounds into the constant
    ``C`` such that the distance from any frame estimate to its settled
    value is at most ``C * rho^(T - t)`` with ``rho = theta/(1 - eps*)``,
    given ``M_y`` bounding every stacked measurement pair.
    """
    if not report.dominant or report.eps_star is None:
        raise ValueError("constant is only defined for dominant streams")
    kappa, delta = report.kappa, report.delta
    eps, theta, rho = report.eps_star, report.theta, report.rho
    M = math.sqrt(kappa * (1.0 + delta)) * M_y
    M_v = M / (kappa * (1.0 - eps) * (1.0 - rho))
    M_xhat = M_v * (2.0 + rho)
    return M_xhat * (1.0 - eps) / (1.0 - eps - theta)


def truncation_bound(report: ConditioningReport, M_y: float, B: int) -> float:
    """Frozen-frame error bound ``C * rho^B`` for buffer size ``B``."""
    return settling_constant(report, M_y) * report.rho ** B


def _write_rows(sink, frame, value):
    for comp, v in enumerate(np.asarray(value).reshape(-1)):
        sink.write(f"{frame},{comp},{_FMT.format(v)}\n")


def write_archive_csv(state: LsStreamState, path, include_live=True):
    """Dump frozen (and optionally live) estimates as frame,component,value."""
    with open(path, "w") as fh:
        fh.write("frame,component,value\n")
        for frame, val in state.archive:
            _write_rows(fh, frame, val)
        if include_live:
            for k, val in enumerate(state.live):
                _write_rows(fh, state.live_start + k, val)


def write_decay_csv(state: LsStreamState, path):
    """Dump the per-append update magnitudes as append_T,lag,magnitude."""
    with open(path, "w") as fh:
        fh.write("append_T,lag,magnitude\n")
        for append_t, lag, mag in state.update_log:
            fh.write(f"{append_t},{lag},{_FMT.format(mag)}\n")
