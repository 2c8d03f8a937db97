import math

import numpy as np
import pytest

from streamopt.blocktridiag import (
    FULL,
    BlockTridiagSystem,
    FactorizationBreakdownError,
    LuStreamCache,
    assemble_dense,
    backward_sweep,
    conditioning_report,
    contractive_recursion_bound,
    epsilon_fixed_point,
    first_block_sensitivity,
    forward_step,
    lu_append,
    solve_dense,
    spectral_norm,
)

from conftest import random_dominant_system


def scalar(x):
    return np.array([[float(x)]])


def build_cache(diag, off, rhs):
    cache = LuStreamCache()
    lu_append(cache, diag[0])
    forward_step(cache, rhs[0])
    for t in range(1, len(diag)):
        lu_append(cache, diag[t], off[t - 1])
        forward_step(cache, rhs[t], off[t - 1])
    return cache


class TestLuAppend:
    def test_scalar_hand_elimination(self):
        # H = [2, 2], E = [1]: Q0 = 2, U0 = 0.5, Q1 = 1.5
        cache = LuStreamCache()
        lu_append(cache, scalar(2.0))
        lu_append(cache, scalar(2.0), scalar(1.0))
        assert cache.Q[0][0, 0] == 2.0
        assert cache.U[0][0, 0] == 0.5
        assert cache.Q[1][0, 0] == 1.5

    def test_zero_coupling_decouples(self, rng):
        H0 = np.eye(3) * 2.0
        H1 = np.eye(3) * 3.0
        cache = LuStreamCache()
        lu_append(cache, H0)
        lu_append(cache, H1, np.zeros((3, 3)))
        assert np.allclose(cache.Q[1], H1)
        assert np.allclose(cache.U[0], 0.0)

    def test_identity_system(self):
        cache = LuStreamCache()
        lu_append(cache, np.eye(2))
        for _ in range(5):
            lu_append(cache, np.eye(2), np.zeros((2, 2)))
        for Q in cache.Q:
            assert np.allclose(Q, np.eye(2))

    def test_recursion_invariant(self, rng):
        sys_ = random_dominant_system(rng, 3, 12)
        cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
        for t in range(1, sys_.n_frames):
            E = sys_.offdiag[t - 1]
            expect = sys_.diag[t] - E @ np.linalg.solve(cache.Q[t - 1], E.T)
            rel = np.linalg.norm(cache.Q[t] - expect) / np.linalg.norm(expect)
            assert rel < 1e-10
            rel_u = np.linalg.norm(
                cache.U[t - 1] - np.linalg.solve(cache.Q[t - 1], E.T))
            assert rel_u < 1e-10 * max(1.0, np.linalg.norm(cache.U[t - 1]))

    def test_seed_call_rejects_coupling(self):
        cache = LuStreamCache()
        with pytest.raises(ValueError):
            lu_append(cache, scalar(1.0), scalar(1.0))

    def test_breakdown_names_frame(self):
        cache = LuStreamCache()
        lu_append(cache, scalar(0.0))
        with pytest.raises(FactorizationBreakdownError) as err:
            lu_append(cache, scalar(1.0), scalar(1.0))
        assert err.value.frame == 0


class TestForwardBackward:
    def test_scalar_forward(self):
        cache = build_cache([scalar(2.0), scalar(2.0)], [scalar(1.0)],
                            [np.array([1.0]), np.array([1.0])])
        assert cache.v[0][0] == pytest.approx(0.5)
        assert cache.v[1][0] == pytest.approx(1.0 / 3.0)

    def test_scalar_backward_matches_dense(self):
        cache = build_cache([scalar(2.0), scalar(2.0)], [scalar(1.0)],
                            [np.array([1.0]), np.array([1.0])])
        x = backward_sweep(cache, FULL)
        assert x[0][0] == pytest.approx(1.0 / 3.0)
        assert x[1][0] == pytest.approx(1.0 / 3.0)

    def test_zero_coupling_forward(self, rng):
        diag = [np.eye(2) * 2.0, np.eye(2) * 4.0]
        off = [np.zeros((2, 2))]
        rhs = [rng.standard_normal(2) for _ in range(2)]
        cache = build_cache(diag, off, rhs)
        assert np.allclose(cache.v[0], rhs[0] / 2.0)
        assert np.allclose(cache.v[1], rhs[1] / 4.0)
        x = backward_sweep(cache, FULL)
        assert np.allclose(x[0], cache.v[0])
        assert np.allclose(x[1], cache.v[1])

    def test_zero_rhs(self, rng):
        sys_ = random_dominant_system(rng, 2, 5, rhs_scale=0.0)
        cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
        for v in cache.v:
            assert np.allclose(v, 0.0)

    def test_depth_one_returns_newest(self, rng):
        sys_ = random_dominant_system(rng, 2, 5)
        cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
        out = backward_sweep(cache, 1)
        assert len(out) == 1
        assert np.array_equal(out[0], cache.v[-1])

    def test_depth_out_of_range(self, rng):
        sys_ = random_dominant_system(rng, 2, 3)
        cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
        with pytest.raises(ValueError):
            backward_sweep(cache, 6)
        with pytest.raises(ValueError):
            backward_sweep(cache, 0)

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_oracle_equivalence(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(6):
            T = int(rng.integers(1, 31))
            sys_ = random_dominant_system(rng, n, T)
            cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
            x = np.concatenate(backward_sweep(cache, FULL))
            x_ref = np.concatenate(solve_dense(sys_))
            rel = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
            assert rel < 1e-9


class TestSolveDense:
    def test_residual_property(self, rng):
        sys_ = random_dominant_system(rng, 3, 8)
        x = np.concatenate(solve_dense(sys_))
        A = assemble_dense(sys_)
        g = np.concatenate(sys_.rhs)
        assert np.linalg.norm(A @ x - g) / np.linalg.norm(g) < 1e-10

    def test_identity(self, rng):
        rhs = [rng.standard_normal(2) for _ in range(4)]
        sys_ = BlockTridiagSystem([np.eye(2)] * 4, [np.zeros((2, 2))] * 3, rhs)
        x = solve_dense(sys_)
        for xi, gi in zip(x, rhs):
            assert np.allclose(xi, gi)

    def test_singular_raises(self):
        sys_ = BlockTridiagSystem([np.zeros((2, 2))], [], [np.ones(2)])
        with pytest.raises(np.linalg.LinAlgError):
            solve_dense(sys_)


class TestSystemValidation:
    def test_asymmetric_diag_rejected(self):
        H = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            BlockTridiagSystem([H], [], [np.zeros(2)])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            BlockTridiagSystem([np.eye(2)], [np.eye(2)], [np.zeros(2)])
        with pytest.raises(ValueError):
            BlockTridiagSystem([np.eye(2)] * 2, [np.eye(2)], [np.zeros(2)])


class TestConditioning:
    def test_identity_like(self):
        sys_ = BlockTridiagSystem([np.eye(3)] * 5, [np.zeros((3, 3))] * 4,
                                  [np.zeros(3)] * 5)
        rep = conditioning_report(sys_)
        assert rep.kappa == pytest.approx(1.0)
        assert rep.delta == pytest.approx(0.0, abs=1e-12)
        assert rep.theta == pytest.approx(0.0, abs=1e-12)
        assert rep.eps_star == pytest.approx(0.0, abs=1e-12)
        assert rep.rho == pytest.approx(0.0, abs=1e-12)
        assert rep.dominant

    def test_boundary_case(self):
        # delta = 0.2, theta = (1 - delta)/2 exactly: limit (1 + delta)/2
        H = np.diag([0.8, 1.2])
        E = 0.4 * np.eye(2)
        sys_ = BlockTridiagSystem([H, H], [E], [np.zeros(2)] * 2)
        rep = conditioning_report(sys_)
        assert rep.delta == pytest.approx(0.2, abs=1e-9)
        assert rep.theta == pytest.approx(0.4, abs=1e-9)
        assert rep.eps_star == pytest.approx(0.6, abs=1e-8)
        assert not rep.dominant

    def test_closed_form_matches_recursion(self):
        eps_iter = epsilon_fixed_point(0.1, 0.2, tol=1e-12)
        closed = 0.5 * 1.1 - math.sqrt(0.25 * 0.81 - 0.04)
        assert abs(eps_iter - closed) < 1e-10
        assert closed == pytest.approx(0.146887, abs=1e-6)
        rho = 0.2 / (1.0 - closed)
        assert rho == pytest.approx(0.2344, abs=1e-4)

    def test_recursion_monotone(self):
        delta, theta = 0.15, 0.25
        eps = delta
        prev = -1.0
        for _ in range(200):
            assert eps >= prev - 1e-15
            prev = eps
            eps = delta + theta ** 2 / (1.0 - eps)
        star = epsilon_fixed_point(delta, theta)
        assert eps <= star + 1e-9

    def test_pivot_conditioning_envelope(self, rng):
        for _ in range(5):
            sys_ = random_dominant_system(rng, 3, 15)
            rep = conditioning_report(sys_)
            assert rep.dominant
            cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
            for Q in cache.Q:
                dev = np.linalg.norm(Q / rep.kappa - np.eye(3), 2)
                assert dev <= rep.eps_star + 1e-9

    def test_solution_norm_bound(self, rng):
        # uniform rhs bound M implies the uniform frame-estimate bound
        for _ in range(5):
            sys_ = random_dominant_system(rng, 2, 20)
            rep = conditioning_report(sys_)
            assert rep.kappa >= 1.0
            M = max(np.linalg.norm(g) for g in sys_.rhs)
            cache = build_cache(sys_.diag, sys_.offdiag, sys_.rhs)
            bound = M / ((1.0 - rep.eps_star) * (1.0 - rep.rho) ** 2)
            for x in backward_sweep(cache, FULL):
                assert np.linalg.norm(x) <= bound + 1e-9

    def test_non_dominant_flagged(self):
        H = np.eye(2)
        E = 2.0 * np.eye(2)
        sys_ = BlockTridiagSystem([H, H], [E], [np.zeros(2)] * 2)
        rep = conditioning_report(sys_)
        assert not rep.dominant
        assert rep.eps_star is None


class TestSpectralNorm:
    def test_against_svd(self, rng):
        for shape in [(1, 1), (3, 3), (5, 2), (2, 7)]:
            M = rng.standard_normal(shape)
            assert spectral_norm(M) == pytest.approx(
                np.linalg.norm(M, 2), rel=1e-8, abs=1e-10)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0


class TestContractiveRecursion:
    def test_matches_direct_iteration(self):
        a, b = 0.6, 1.3
        z = b
        for t in range(25):
            assert contractive_recursion_bound(a, b, t) == pytest.approx(z)
            z = b + a * z

    def test_uniform_limit(self):
        assert contractive_recursion_bound(0.5, 1.0, 10 ** 6) \
            == pytest.approx(2.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            contractive_recursion_bound(-0.1, 1.0, 3)


class TestFirstBlockSensitivity:
    def test_zero_coupling_gives_zero_tail(self, rng):
        q0 = rng.standard_normal(3)
        sys_ = BlockTridiagSystem(
            [np.eye(3) * 2.0, np.eye(3) * 3.0], [np.zeros((3, 3))],
            [q0, np.zeros(3)])
        chk = first_block_sensitivity(sys_)
        assert chk.ratio == pytest.approx(0.0, abs=1e-14)

    def test_random_two_block(self, rng):
        sys_ = random_dominant_system(rng, 3, 1)
        sys_.rhs[1][:] = 0.0
        chk = first_block_sensitivity(sys_)
        assert chk.ratio <= chk.bound + 1e-12

    def test_closed_form_half(self, rng):
        q0 = rng.standard_normal(2)
        sys_ = BlockTridiagSystem(
            [np.eye(2), np.eye(2)], [0.5 * np.eye(2)], [q0, np.zeros(2)])
        chk = first_block_sensitivity(sys_)
        # y = -B^{-1} V h0 with B = I, V = 0.5 I
        x = solve_dense(sys_)
        assert np.allclose(x[1], -0.5 * x[0])
        assert chk.ratio == pytest.approx(0.5, abs=1e-12)

    def test_rejects_nonzero_tail_rhs(self, rng):
        sys_ = random_dominant_system(rng, 2, 2)
        with pytest.raises(ValueError):
            first_block_sensitivity(sys_)
