import math

import numpy as np
import pytest

from streamopt.convex_frames import (
    AggregateObjective,
    aggregate_grad,
    batch_minimize,
    fd_gradient,
    fd_hessian,
)
from streamopt.noa import NoaConfig, NoaState, TAIL_MIN, advance
from streamopt.testbeds.nhpp import (
    BumpIntensity,
    NhppFrameLoss,
    SplineNhppConfig,
    barriered_problem,
    bspline_integral,
    bspline_value,
    build_nhpp_losses,
    generate_problem,
    intensity_l2_error,
    simulate_nhpp,
)

SMALL = SplineNhppConfig(n_frames=8, splines_per_frame=5, rate_seed=3,
                         rate_scale=1.5)


class TestBsplines:
    @pytest.mark.parametrize("degree", [0, 1, 2, 3])
    def test_partition_of_unity(self, degree):
        ts = np.linspace(0.0, 1.0, 11)[:-1]
        total = sum(bspline_value(ts + i, degree) for i in range(degree + 1))
        assert np.allclose(total, 1.0)

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_unit_integral(self, degree):
        assert bspline_integral(degree + 1.0, degree) == pytest.approx(1.0)

    def test_cumulative_matches_quadrature(self):
        for u in (0.3, 1.0, 1.7, 2.9):
            ts = np.linspace(0.0, u, 40001)
            quad = np.trapezoid(bspline_value(ts, 2), ts)
            assert bspline_integral(u, 2) == pytest.approx(quad, abs=1e-8)

    def test_frame_integrals_match_quadrature(self):
        prob = generate_problem(SMALL)
        basis = prob.basis
        ell = SMALL.frame_length
        k = 3
        ts = np.linspace(k * ell, (k + 1) * ell, 20001)
        quad = np.trapezoid(basis.frame_values(k, ts), ts, axis=0)
        assert np.allclose(prob.batches[k].a, quad, atol=1e-8)

    def test_nonnegative_everywhere(self):
        ts = np.linspace(-1.0, 4.0, 500)
        assert np.all(bspline_value(ts, 2) >= 0.0)


class TestSimulate:
    def test_zero_rate_no_events(self):
        ev = simulate_nhpp(lambda t: np.zeros_like(t), 5.0, 10.0, seed=1)
        assert ev.size == 0

    def test_constant_rate_mean(self):
        lam, horizon, runs = 6.0, 20.0, 100
        counts = [simulate_nhpp(lambda t: np.full_like(t, lam), lam, horizon,
                                seed=s).size for s in range(runs)]
        mean = np.mean(counts)
        target = lam * horizon
        assert abs(mean - target) <= 3.0 * math.sqrt(target / runs)

    def test_doubling_rate_doubles_counts(self):
        lam, horizon = 4.0, 15.0
        ratios = []
        for s in range(100):
            base = simulate_nhpp(lambda t: np.full_like(t, lam), 2 * lam,
                                 horizon, seed=s).size
            dbl = simulate_nhpp(lambda t: np.full_like(t, 2 * lam), 2 * lam,
                                horizon, seed=s).size
            if base:
                ratios.append(dbl / base)
        assert 1.8 <= np.mean(ratios) <= 2.2

    def test_bound_violation_raises(self):
        with pytest.raises(ValueError):
            simulate_nhpp(lambda t: np.full_like(t, 3.0), 1.0, 5.0, seed=0)

    def test_deterministic(self):
        a = simulate_nhpp(lambda t: 2.0 + np.sin(t), 3.0, 30.0, seed=42)
        b = simulate_nhpp(lambda t: 2.0 + np.sin(t), 3.0, 30.0, seed=42)
        assert np.array_equal(a, b)

    def test_intensity_floor_positive(self):
        lam = BumpIntensity.random(SMALL)
        ts = np.linspace(0, SMALL.horizon, 1000)
        assert np.all(lam(ts) >= lam.lam_floor - 1e-12)
        assert np.all(lam(ts) <= lam.lam_max + 1e-12)


class TestBuildLosses:
    def test_event_outside_horizon_rejected(self):
        with pytest.raises(ValueError):
            build_nhpp_losses(SMALL, [SMALL.horizon + 0.1])
        with pytest.raises(ValueError):
            build_nhpp_losses(SMALL, [-0.5])

    def test_empty_frame_gives_linear_loss(self, rng):
        # only one event, early: later frames carry no log terms
        prob = build_nhpp_losses(SMALL, [0.4])
        loss = prob.frames[-1]
        assert loss.C.shape[0] == 0
        for _ in range(3):
            u = rng.random(loss.n) + 0.5
            v = rng.random(loss.n) + 0.5
            assert np.array_equal(loss.grad(u, v),
                                  np.concatenate([loss.b, loss.a]))

    def test_single_event_scalar_minimum(self):
        # <x, a> - log(x) is minimized at 1/a
        loss = NhppFrameLoss(a=[0.25], b=[0.0], C=[[1.0]], D=[[0.0]])
        v = np.array([4.0])
        assert np.allclose(loss.grad(np.ones(1), v)[1:], 0.0, atol=1e-12)

    def test_lambda_consistency_at_events(self, rng):
        prob = generate_problem(SMALL)
        coeffs = prob.init_scale * (1 + 0.2 * rng.random(
            (SMALL.n_frames, SMALL.splines_per_frame)))
        for bt in prob.batches[1:4]:
            if bt.events.size == 0:
                continue
            via_batch = bt.C @ coeffs[bt.k] + bt.D @ coeffs[bt.k - 1]
            via_model = prob.basis.intensity(coeffs, bt.events)
            assert np.allclose(via_batch, via_model, atol=1e-10)

    def test_derivatives_match_fd(self, rng):
        prob = generate_problem(SMALL)
        head_b, frames_b = barriered_problem(prob, weight=1.0)
        for loss in [prob.frames[1], frames_b[1]]:
            n = loss.n
            for _ in range(3):
                z = prob.init_scale * (0.7 + 0.6 * rng.random(2 * n))
                flat = lambda q: loss.eval(q[:n], q[n:])
                g = loss.grad(z[:n], z[n:])
                g_fd = fd_gradient(flat, z, step=1e-5 * prob.init_scale)
                assert np.linalg.norm(g - g_fd) <= 1e-5 * np.linalg.norm(g_fd)
                G_pp, E, G_cc = loss.hess(z[:n], z[n:])
                H = np.block([[G_pp, E.T], [E, G_cc]])
                H_fd = fd_hessian(flat, z, step=1e-3 * prob.init_scale)
                assert np.linalg.norm(H - H_fd) <= 1e-4 * np.linalg.norm(H_fd)

    def test_infeasible_point_is_inf(self):
        loss = NhppFrameLoss(a=[0.5, 0.5], b=[0.1, 0.1],
                             C=[[1.0, 0.0]], D=[[0.0, 0.0]])
        assert loss.eval(np.ones(2), np.array([-1.0, 1.0])) == math.inf

    def test_declared_box_brackets_spectrum(self, rng):
        prob = generate_problem(SMALL)
        loss = prob.frames[2]
        lo, hi = 0.5 * prob.init_scale, 3.0 * prob.init_scale
        loss.declare_box(lo, hi)
        for _ in range(5):
            z = lo + (hi - lo) * rng.random(2 * loss.n)
            G_pp, E, G_cc = loss.hess(z[:loss.n], z[loss.n:])
            w = np.linalg.eigvalsh(np.block([[G_pp, E.T], [E, G_cc]]))
            assert loss.mu <= w[0] + 1e-12
            assert w[-1] <= loss.L + 1e-12


class TestStreamingRecovery:
    def test_noa_matches_batch_and_stays_positive(self):
        cfg = SplineNhppConfig(n_frames=12, splines_per_frame=6,
                               rate_seed=9, rate_scale=2.0)
        prob = generate_problem(cfg)
        assert prob.events_per_frame().min() >= 20
        head_b, frames_b = barriered_problem(prob, weight=1.0)
        obj = AggregateObjective(frames_b, head=head_b)
        init = np.full((cfg.n_frames, cfg.splines_per_frame), prob.init_scale)
        xstar = batch_minimize(obj, init)
        assert np.all(xstar > 0.0)

        state = NoaState(NoaConfig(buffer_B=6, new_frame_init=TAIL_MIN,
                                   eps0=1e-20), head=head_b)
        for f in frames_b:
            advance(state, f)
        est = state.estimate_array()
        assert np.all(est > 0.0)
        rel = np.linalg.norm(est - xstar, axis=1) / np.linalg.norm(xstar, axis=1)
        assert rel.max() < 1e-6
        err = intensity_l2_error(prob.basis, est, xstar)
        assert err < 1e-6
        # once warm-started, each time step needs only a handful of steps
        assert max(state.newton_iters[6:]) <= 8

    def test_isolated_minimizer_positive_gradient_tolerance(self):
        prob = generate_problem(SMALL)
        head_b, frames_b = barriered_problem(prob, weight=1.0)
        from streamopt.convex_frames import isolated_minimizer
        u, v = isolated_minimizer(frames_b[2])
        g = frames_b[2].grad(u, v)
        assert np.linalg.norm(g) < 1e-10
        assert np.all(u > 0.0) and np.all(v > 0.0)
