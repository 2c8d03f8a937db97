"""Benchmark command line: scenario runs, lag tables, buffer sweeps,
conditioning reports and a quick selftest.

Scenarios come in three kinds: ``synthetic-ls`` (random weakly coupled
least-squares streams), ``lot-ls`` (level-crossing reconstruction) and
``nhpp-noa`` (Poisson intensity estimation with the online Newton solver).
Every run is deterministic given its seed: rerunning a scenario writes
byte-identical CSV artifacts.  The environment variable ``STREAMOPT_LOG``
selects the logging level.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .blocktridiag import FULL, conditioning_report, solve_dense
from .convex_frames import AggregateObjective, batch_minimize, rate_report
from .noa import NoaConfig, NoaState, TAIL_MIN, advance, write_trace_csv
from .stream_ls import (
    LsBatch,
    LsStreamState,
    ingest,
    normal_equations,
    truncation_bound,
    truncation_error,
    truncation_sweep,
    write_archive_csv,
    write_decay_csv,
)
from .testbeds import configio, lot, nhpp

log = logging.getLogger("streamopt.cli")

_FMT = "{:.17g}"
_LOG_FLOOR = -16.0

KINDS = ("synthetic-ls", "lot-ls", "nhpp-noa")

DEFAULTS = {
    "synthetic-ls": dict(n=4, m=8, frames=20, gamma=0.1, coupling=0.2,
                         jitter=0.1),
    "lot-ls": dict(n_basis=75, n_frames=16, eta=0.25, gamma=1e-6,
                   sinc_spacing=1.0 / 64.0, grid_step=1e-3),
    "nhpp-noa": dict(splines_per_frame=8, n_frames=40, frame_length=1.0,
                     rate_scale=2.0, rate_floor=30.0, barrier_weight=1.0,
                     eps0=1e-16),
}


def _setup_logging():
    level = os.environ.get("STREAMOPT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_buffer(text):
    if text is None:
        return None
    if str(text).lower() == "full":
        return FULL
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("buffer must be positive or 'full'")
    return value


def _load_params(kind, config_path):
    params = dict(DEFAULTS[kind])
    if config_path:
        loaded = configio.parse_kv(config_path)
        loaded.pop("kind", None)
        params.update(loaded)
    return params


def synthetic_ls_batches(n, m, T, coupling, jitter, seed):
    """Random stream with near-orthonormal designs and scaled coupling."""
    rng = np.random.default_rng(seed)
    batches = []
    for t in range(T + 1):
        q, _ = np.linalg.qr(rng.standard_normal((m, n)))
        A = q * (1.0 + jitter * rng.uniform(-1, 1))
        y = rng.standard_normal(m)
        if t == 0:
            batches.append(LsBatch(0, y=y, A=A))
        else:
            B = coupling * rng.standard_normal((m, n)) / math.sqrt(m)
            batches.append(LsBatch(t, y=y, A=A, B=B))
    return batches


def _lot_config(params, seed):
    kwargs = dict(signal_seed=seed,
                  n_basis=int(params["n_basis"]),
                  n_frames=int(params["n_frames"]),
                  eta=float(params["eta"]),
                  sinc_spacing=float(params["sinc_spacing"]),
                  grid_step=float(params["grid_step"]))
    for key in ("frame_length", "bisect_tol"):
        if key in params:
            kwargs[key] = float(params[key])
    if "levels" in params:
        kwargs["levels"] = np.asarray(params["levels"], dtype=float)
    for key in ("sinc_window", "sample_window"):
        if key in params:
            kwargs[key] = tuple(float(v) for v in params[key])
    return lot.LotConfig(**kwargs)


def _make_ls_batches(kind, params, seed):
    if kind == "synthetic-ls":
        T = int(params["frames"])
        if T < 0:
            raise ValueError("frames must be >= 0")
        if T == 0:
            return [], int(params["n"]), float(params["gamma"]), None
        batches = synthetic_ls_batches(
            int(params["n"]), int(params["m"]), T - 1,
            float(params["coupling"]), float(params["jitter"]), seed)
        return batches, int(params["n"]), float(params["gamma"]), None
    cfg = _lot_config(params, seed)
    stream = lot.generate_lot_stream(cfg)
    return stream.batches, cfg.n_basis, float(params["gamma"]), stream


def _run_ls(batches, n, gamma, buffer_B, keep_history=False):
    state = LsStreamState(n, gamma=gamma, buffer_B=buffer_B)
    history = [] if keep_history else None
    for b in batches:
        ingest(state, b)
        if keep_history:
            history.append({state.live_start + k: v.copy()
                            for k, v in enumerate(state.live)})
    return state, history


def _write_history_csv(history, path):
    with open(path, "w") as fh:
        fh.write("append,frame,component,value\n")
        for k, snap in enumerate(history):
            for frame in sorted(snap):
                for comp, v in enumerate(snap[frame]):
                    fh.write(f"{k},{frame},{comp},{_FMT.format(v)}\n")


def _summary_lines(entries):
    lines = []
    for key, value in entries:
        if isinstance(value, float):
            value = _FMT.format(value)
        lines.append(f"{key} = {value}")
    return lines


def _emit_summary(out_dir, entries):
    lines = _summary_lines(entries)
    text = "\n".join(lines) + "\n"
    (Path(out_dir) / "summary.txt").write_text(text)
    sys.stdout.write(text)


def _ls_oracle_error(state, batches, gamma):
    ref = solve_dense(normal_equations(batches, gamma))
    est = state.final_estimates()
    worst = 0.0
    for t, x in enumerate(ref):
        dev = np.linalg.norm(est[t] - x) / max(np.linalg.norm(x), 1e-300)
        worst = max(worst, dev)
    return worst


def _make_nhpp(params, seed):
    kwargs = dict(
        splines_per_frame=int(params["splines_per_frame"]),
        n_frames=int(params["n_frames"]),
        frame_length=float(params["frame_length"]),
        rate_scale=float(params["rate_scale"]),
        rate_floor=float(params["rate_floor"]),
        rate_seed=seed)
    if "spline_order" in params:
        kwargs["spline_order"] = int(params["spline_order"])
    if "n_bumps" in params:
        kwargs["n_bumps"] = tuple(int(v) for v in params["n_bumps"])
    for key in ("bump_amp", "bump_width"):
        if key in params:
            kwargs[key] = tuple(float(v) for v in params[key])
    cfg = nhpp.SplineNhppConfig(**kwargs)
    problem = nhpp.generate_problem(cfg)
    head, frames = nhpp.barriered_problem(
        problem, weight=float(params["barrier_weight"]))
    return cfg, problem, head, frames


def _run_noa(head, frames, buffer_B, eps0, n_frames):
    B = n_frames + 1 if buffer_B is FULL else int(buffer_B)
    cfg = NoaConfig(buffer_B=B, eps0=eps0, new_frame_init=TAIL_MIN,
                    max_newton_iters=200)
    state = NoaState(cfg, head=head)
    for f in frames:
        advance(state, f)
    return state


def _noa_vs_oracle(state, head, frames, n_frames, n, init_scale):
    obj = AggregateObjective(frames, head=head)
    xstar = batch_minimize(obj, np.full((n_frames, n), init_scale),
                           grad_tol=1e-11, max_iters=300)
    est = state.estimate_array()
    rel = np.linalg.norm(est - xstar, axis=1) \
        / np.maximum(np.linalg.norm(xstar, axis=1), 1e-300)
    return xstar, float(rel.max())


def _write_noa_outputs(out, state, problem):
    with open(Path(out) / "archive.csv", "w") as fh:
        fh.write("frame,component,value\n")
        for frame, vec in sorted(state.estimates().items()):
            for comp, v in enumerate(vec):
                fh.write(f"{frame},{comp},{_FMT.format(v)}\n")
    with open(Path(out) / "decay.csv", "w") as fh:
        fh.write("append_T,lag,magnitude\n")
        for ts, lag, mag in state.update_log:
            fh.write(f"{ts},{lag},{_FMT.format(mag)}\n")
    write_trace_csv(state, Path(out) / "trace.csv")
    configio.write_time_value_csv(Path(out) / "events.csv", problem.events,
                                  problem.intensity(problem.events))


def cmd_run(args):
    params = _load_params(args.kind, args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buffer_B = args.buffer if args.buffer is not None else FULL
    entries = [("kind", args.kind), ("seed", args.seed),
               ("buffer", "full" if buffer_B is FULL else buffer_B)]
    failed = []

    if args.kind in ("synthetic-ls", "lot-ls"):
        if args.frames is not None:
            params["frames"] = args.frames
        batches, n, gamma, stream = _make_ls_batches(args.kind, params,
                                                     args.seed)
        if not batches:
            (out / "archive.csv").write_text("frame,component,value\n")
            (out / "decay.csv").write_text("append_T,lag,magnitude\n")
            entries += [("frames", 0), ("assertions", "pass")]
            _emit_summary(out, entries)
            return 0
        state, history = _run_ls(batches, n, gamma, buffer_B,
                                 keep_history=buffer_B is FULL)
        write_archive_csv(state, out / "archive.csv")
        write_decay_csv(state, out / "decay.csv")
        if history is not None:
            _write_history_csv(history, out / "history.csv")
        if stream is not None:
            configio.write_time_value_csv(out / "crossings.csv",
                                          stream.crossing_times,
                                          stream.crossing_levels)
            entries.append(("crossings", int(stream.crossing_times.size)))
        entries.append(("frames", len(batches)))
        if buffer_B is FULL:
            err = _ls_oracle_error(state, batches, gamma)
            entries.append(("oracle_max_rel_err", err))
            if not err < float(params.get("oracle_tol", 1e-9)):
                failed.append("oracle_max_rel_err")
        else:
            reference, _ = _run_ls(batches, n, gamma, FULL)
            comp = truncation_error(reference, state)
            entries.append(("truncation_max_err", comp.max_error))
            report = reference.conditioning()
            entries.append(("dominant", report.dominant))
            if report.dominant:
                M_y = max(np.linalg.norm(
                    np.concatenate([batches[t].y, batches[t + 1].y]))
                    for t in range(len(batches) - 1))
                bound = truncation_bound(report, M_y, state.buffer_B)
                entries.append(("truncation_bound", bound))
                if comp.max_archived_error > bound:
                    failed.append("truncation_bound")
    else:
        cfg, problem, head, frames = _make_nhpp(params, args.seed)
        eps0 = float(params["eps0"])
        state = _run_noa(head, frames, buffer_B, eps0, cfg.n_frames)
        _write_noa_outputs(out, state, problem)
        est = state.estimate_array()
        positive = bool(np.all(est > 0.0))
        entries.append(("events", int(problem.events.size)))
        entries.append(("all_coefficients_positive", positive))
        if not positive:
            failed.append("nonnegativity")
        xstar, rel = _noa_vs_oracle(state, head, frames, cfg.n_frames,
                                    cfg.splines_per_frame, problem.init_scale)
        entries.append(("oracle_max_rel_err", rel))
        entries.append(("newton_iters_max",
                        int(max(state.newton_iters, default=0))))
        if args.buffer_sweep:
            rows = []
            for B in args.buffer_sweep:
                st = _run_noa(head, frames, B, eps0, cfg.n_frames)
                e = np.linalg.norm(st.estimate_array() - xstar, axis=1) \
                    / np.maximum(np.linalg.norm(xstar, axis=1), 1e-300)
                rows.append((B, float(e.max())))
            with open(out / "sweep.csv", "w") as fh:
                fh.write("buffer,max_rel_error\n")
                for B, e in rows:
                    fh.write(f"{B},{_FMT.format(e)}\n")
            from .stream_ls import fit_log_slope
            slope = fit_log_slope([r[0] for r in rows], [r[1] for r in rows],
                                  floor=1e-13 * max(r[1] for r in rows))
            entries.append(("sweep_slope",
                            slope if slope is not None else "nan"))

    entries.append(("assertions", "pass" if not failed else "fail"))
    if failed:
        entries.append(("failed_assertions", ";".join(failed)))
    _emit_summary(out, entries)
    return 0 if not failed else 1


def lag_table_matrix(history, final):
    """log10 relative deviation of every snapshot from the final estimate.

    Entry (k, j) compares frame j's estimate after append k with its final
    value; entries with j > k do not exist.  Values are floored at the
    double-precision noise level.
    """
    K = len(history)
    M = np.full((K, K), np.nan)
    for k, snap in enumerate(history):
        for j, val in snap.items():
            ref = max(np.linalg.norm(final[j]), 1e-300)
            rel = np.linalg.norm(val - final[j]) / ref
            M[k, j] = max(math.log10(rel) if rel > 0 else _LOG_FLOOR,
                          _LOG_FLOOR)
    return M


def format_lag_table(M):
    K = M.shape[0]
    header = "  k\\j " + "".join(f"{j:>8d}" for j in range(K))
    lines = [header]
    for k in range(K):
        cells = []
        for j in range(K):
            cells.append(f"{M[k, j]:8.2f}" if j <= k else "     ---")
        lines.append(f"{k:>5d} " + "".join(cells))
    return "\n".join(lines)


def cmd_lag_table(args):
    if args.kind == "nhpp-noa":
        log.error("lag tables are defined for the least-squares kinds")
        return 2
    params = _load_params(args.kind, args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    batches, n, gamma, _ = _make_ls_batches(args.kind, params, args.seed)
    if not batches:
        log.error("empty stream has no lag table")
        return 2
    state, history = _run_ls(batches, n, gamma, FULL, keep_history=True)
    M = lag_table_matrix(history, state.final_estimates())
    with open(out / "lag_table.csv", "w") as fh:
        fh.write("append,frame,log10_rel_err\n")
        for k in range(M.shape[0]):
            for j in range(k + 1):
                fh.write(f"{k},{j},{_FMT.format(M[k, j])}\n")
    text = format_lag_table(M)
    (out / "lag_table.txt").write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return 0


def cmd_buffer_sweep(args):
    params = _load_params(args.kind, args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buffers = args.buffers
    entries = [("kind", args.kind), ("seed", args.seed),
               ("buffers", buffers)]
    from .stream_ls import fit_log_slope
    if args.kind in ("synthetic-ls", "lot-ls"):
        batches, n, gamma, _ = _make_ls_batches(args.kind, params, args.seed)
        reference, _ = _run_ls(batches, n, gamma, FULL)
        runs = [_run_ls(batches, n, gamma, B)[0] for B in buffers]
        sweep = truncation_sweep(reference, runs)
        rows = list(zip(sweep.buffers, sweep.max_errors))
        slope = sweep.slope
    else:
        cfg, problem, head, frames = _make_nhpp(params, args.seed)
        eps0 = float(params["eps0"])
        obj = AggregateObjective(frames, head=head)
        xstar = batch_minimize(
            obj, np.full((cfg.n_frames, cfg.splines_per_frame),
                         problem.init_scale), grad_tol=1e-11, max_iters=300)
        rows = []
        for B in buffers:
            st = _run_noa(head, frames, B, eps0, cfg.n_frames)
            e = np.linalg.norm(st.estimate_array() - xstar, axis=1) \
                / np.maximum(np.linalg.norm(xstar, axis=1), 1e-300)
            rows.append((B, float(e.max())))
        vals = [r[1] for r in rows]
        slope = fit_log_slope([r[0] for r in rows], vals,
                              floor=1e-13 * max(vals)) if max(vals) > 0 else None
    with open(out / "sweep.csv", "w") as fh:
        fh.write("buffer,max_error\n")
        for B, e in rows:
            fh.write(f"{B},{_FMT.format(e)}\n")
    entries += [("sweep_slope", slope if slope is not None else "nan")]
    ok = all(b >= a - 1e-300 for (_, a), (_, b)
             in zip(rows[1:], rows[:-1]))
    entries.append(("errors_nonincreasing", ok))
    entries.append(("assertions", "pass" if ok else "fail"))
    _emit_summary(out, entries)
    return 0 if ok else 1


def _box_isolated(loss, lo, hi, iters=100):
    """Pair minimizer of a frame loss projected to the box [lo, hi]^2n.

    Frame losses whose coupling block carries no data have unbounded
    unconstrained pair minimizers; the box projection keeps the reported
    solution-size bound meaningful on the declared domain.
    """
    n = loss.n
    u, v = loss.feasible_point()
    z = np.clip(np.concatenate([u, v]).astype(float), lo, hi)
    fz = loss.eval(z[:n], z[n:])
    for _ in range(iters):
        g = loss.grad(z[:n], z[n:])
        G_pp, E, G_cc = loss.hess(z[:n], z[n:])
        H = np.block([[G_pp, E.T], [E, G_cc]])
        try:
            s = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            s = -g
        tau, moved = 1.0, False
        while tau > 1e-12:
            zn = np.clip(z + tau * s, lo, hi)
            fn = loss.eval(zn[:n], zn[n:])
            if math.isfinite(fn) and fn < fz - 1e-14 * abs(fz):
                z, fz, moved = zn, fn, True
                break
            tau *= 0.5
        if not moved:
            break
    return z[:n].copy(), z[n:].copy()


def cmd_conditioning(args):
    params = _load_params(args.kind, args.config)
    lines = [f"kind = {args.kind}", f"seed = {args.seed}"]
    if args.kind in ("synthetic-ls", "lot-ls"):
        batches, n, gamma, _ = _make_ls_batches(args.kind, params, args.seed)
        if not batches:
            log.error("empty stream has no conditioning report")
            return 2
        rep = conditioning_report(normal_equations(batches, gamma))
        lines += _conditioning_lines(rep)
        lines.append("rate_constants = undefined "
                     "(pair losses are not strongly convex)")
    else:
        cfg, problem, head, frames = _make_nhpp(params, args.seed)
        obj = AggregateObjective(frames, head=head)
        xstar = batch_minimize(
            obj, np.full((cfg.n_frames, cfg.splines_per_frame),
                         problem.init_scale), grad_tol=1e-11, max_iters=300)
        lo = max(float(xstar.min()) * 0.5, 1e-6)
        hi = float(xstar.max()) * 2.0
        for f in frames:
            f.declare_box(lo, hi)
        head.declare_box(lo, hi)
        from .convex_frames import aggregate_hessian
        rep = conditioning_report(aggregate_hessian(obj, xstar))
        lines += _conditioning_lines(rep)
        isolated = [_box_isolated(f, lo, hi) for f in frames]
        rrep = rate_report(obj, isolated=isolated, sample_points=[xstar])
        for key in ("a", "M_x", "M_g", "C0", "C1", "C_b", "mu_min", "L_max"):
            lines.append(f"{key} = {_FMT.format(getattr(rrep, key))}")
        lines.append(f"rate_dominant = {str(rrep.dominant).lower()}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "conditioning.txt").write_text(text)
    return 0


def _conditioning_lines(rep):
    def fmt(v):
        return "unset" if v is None else _FMT.format(v)

    return [f"kappa = {fmt(rep.kappa)}", f"delta = {fmt(rep.delta)}",
            f"theta = {fmt(rep.theta)}", f"eps_star = {fmt(rep.eps_star)}",
            f"rho = {fmt(rep.rho)}",
            f"dominant = {str(rep.dominant).lower()}"]


def cmd_selftest(args):
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # the point is a readable pass/fail list
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def scalar_elimination():
        from .blocktridiag import LuStreamCache, backward_sweep, forward_step, lu_append
        cache = LuStreamCache()
        lu_append(cache, [[2.0]])
        forward_step(cache, [1.0])
        lu_append(cache, [[2.0]], [[1.0]])
        forward_step(cache, [1.0], [[1.0]])
        x = backward_sweep(cache)
        assert abs(x[0][0] - 1.0 / 3.0) < 1e-14
        assert abs(x[1][0] - 1.0 / 3.0) < 1e-14

    def oracle_equivalence():
        rng = np.random.default_rng(7)
        for _ in range(5):
            batches = synthetic_ls_batches(3, 6, 12, 0.2, 0.1,
                                           int(rng.integers(1 << 30)))
            state, _ = _run_ls(batches, 3, 0.1, FULL)
            err = _ls_oracle_error(state, batches, 0.1)
            assert err < 1e-9, err

    def epsilon_grid():
        from .blocktridiag import epsilon_fixed_point
        for delta in (0.0, 0.1, 0.3):
            for frac in (0.2, 0.9):
                theta = frac * (1 - delta) / 2
                closed = (1 + delta) / 2 - math.sqrt(
                    (1 - delta) ** 2 / 4 - theta ** 2)
                assert abs(epsilon_fixed_point(delta, theta) - closed) < 1e-10

    def noa_reduces_to_ls():
        from .convex_frames import quadratic_stream
        batches = synthetic_ls_batches(2, 4, 8, 0.2, 0.1, 11)
        state, _ = _run_ls(batches, 2, 0.1, FULL)
        head, frames = quadratic_stream(batches, 0.1)
        noa_state = _run_noa(head, frames, FULL, 1e-16, len(batches))
        est = state.final_estimates()
        for t, v in noa_state.estimates().items():
            rel = np.linalg.norm(v - est[t]) / max(np.linalg.norm(est[t]), 1e-300)
            assert rel < 1e-9, rel

    def testbeds_smoke():
        cfg = lot.LotConfig(n_basis=10, n_frames=4, sinc_spacing=0.125,
                            sinc_window=(-2.0, 6.0), sample_window=(0.0, 4.0),
                            grid_step=2e-3, signal_seed=5)
        dev = lot_dev = lot.lot_basis_orthonormality(cfg, points_per_frame=3000)
        assert lot_dev < 1e-8, dev
        prob = nhpp.generate_problem(nhpp.SplineNhppConfig(
            n_frames=4, splines_per_frame=4, rate_seed=2))
        assert prob.events.size > 0

    check("scalar block elimination", scalar_elimination)
    check("streaming LS matches dense oracle", oracle_equivalence)
    check("pivot conditioning closed form", epsilon_grid)
    check("online Newton reduces to streaming LS", noa_reduces_to_ls)
    check("testbeds generate", testbeds_smoke)

    failed = [c for c in checks if not c[1]]
    for name, passed, msg in checks:
        sys.stdout.write(f"[{'PASS' if passed else 'FAIL'}] {name}"
                         + (f": {msg}" if msg else "") + "\n")
    sys.stdout.write(f"{len(checks) - len(failed)}/{len(checks)} checks passed\n")
    return 0 if not failed else 1


def _int_list(text):
    return [int(part) for part in str(text).split(",") if part]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="streamopt",
        description="streaming optimization benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_buffer=True):
        p.add_argument("kind", choices=KINDS)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=0)
        if with_buffer:
            p.add_argument("--buffer", type=_parse_buffer, default=None,
                           help="trailing frames to refresh (integer or "
                                "'full')")
        p.add_argument("--out", default="streamopt-out")

    run_p = sub.add_parser("run", help="execute a scenario")
    common(run_p)
    run_p.add_argument("--frames", type=int, default=None,
                       help="override the stream length (LS kinds)")
    run_p.add_argument("--buffer-sweep", type=_int_list, default=None,
                       help="comma-separated buffer sizes to sweep "
                            "(nhpp-noa)")
    run_p.set_defaults(func=cmd_run)

    lag_p = sub.add_parser("lag-table",
                           help="per-append settling table of a FULL run")
    common(lag_p, with_buffer=False)
    lag_p.set_defaults(func=cmd_lag_table)

    sweep_p = sub.add_parser("buffer-sweep",
                             help="truncation error versus buffer size")
    common(sweep_p, with_buffer=False)
    sweep_p.add_argument("--buffers", type=_int_list, default=[1, 2, 3, 4, 5, 6])
    sweep_p.set_defaults(func=cmd_buffer_sweep)

    cond_p = sub.add_parser("conditioning",
                            help="dominance and rate constants of a scenario")
    common(cond_p, with_buffer=False)
    cond_p.set_defaults(func=cmd_conditioning)

    self_p = sub.add_parser("selftest", help="quick internal consistency run")
    self_p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
