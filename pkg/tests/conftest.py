"""Shared generators for synthetic systems, streams and convex instances."""

import numpy as np
import pytest

from streamopt.blocktridiag import BlockTridiagSystem
from streamopt.convex_frames import FrameLoss
from streamopt.stream_ls import LsBatch


def random_dominant_system(rng, n, T, coupling=0.15, noise=0.05,
                           rhs_scale=1.0):
    """A random symmetric block-tridiagonal system with dominant diagonal.

    Diagonal blocks sit near a multiple of the identity (kappa >= 1 by
    construction) and coupling blocks are scaled to the requested operator
    norm, so the dominance condition holds with margin.
    """
    diag, off, rhs = [], [], []
    for _ in range(T + 1):
        M = rng.standard_normal((n, n))
        H = (1.5 + 0.3 * rng.uniform(-1, 1)) * np.eye(n) \
            + noise * 0.5 * (M + M.T)
        diag.append(H)
        rhs.append(rhs_scale * rng.standard_normal(n))
    for _ in range(T):
        E = rng.standard_normal((n, n))
        nrm = np.linalg.norm(E, 2)
        off.append(coupling * E / (nrm if nrm > 0 else 1.0))
    return BlockTridiagSystem(diag, off, rhs)


def random_ls_stream(rng, n, m, T, coupling=0.2):
    """Batches with near-orthonormal design blocks and weak coupling."""
    batches = []
    for t in range(T + 1):
        q, _ = np.linalg.qr(rng.standard_normal((m, n)))
        A = q * (1.0 + 0.1 * rng.uniform(-1, 1))
        y = rng.standard_normal(m)
        if t == 0:
            batches.append(LsBatch(0, y=y, A=A))
        else:
            B = coupling * rng.standard_normal((m, n)) / np.sqrt(m)
            batches.append(LsBatch(t, y=y, A=A, B=B))
    return batches


def dense_design(batches):
    """Stack the two-band design matrix of a batch stream (oracle)."""
    n = batches[0].A.shape[1]
    T1 = len(batches)
    rows = sum(b.A.shape[0] for b in batches)
    Phi = np.zeros((rows, n * T1))
    y = np.zeros(rows)
    r = 0
    for t, b in enumerate(batches):
        m = b.A.shape[0]
        Phi[r:r + m, t * n:(t + 1) * n] = b.A
        if t > 0:
            Phi[r:r + m, (t - 1) * n:t * n] = b.B
        y[r:r + m] = b.y
        r += m
    return Phi, y


class SymQuadPairLoss(FrameLoss):
    """Strongly convex quadratic pair loss with controllable coupling.

    f(u, v) = 0.5 [u; v]^T M [u; v] + b^T [u; v] with M positive definite.
    """

    def __init__(self, M, b):
        self.M = np.asarray(M, dtype=float)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.n = self.b.size // 2
        w = np.linalg.eigvalsh(self.M)
        self.mu = float(w[0])
        self.L = float(w[-1])

    @classmethod
    def random(cls, rng, n, coupling=0.1, shift_scale=1.0):
        S = rng.standard_normal((n, n))
        nrm = np.linalg.norm(S, 2)
        S = coupling * S / (nrm if nrm > 0 else 1.0)
        Du = np.eye(n) * (1.0 + 0.2 * rng.uniform(-1, 1))
        Dv = np.eye(n) * (1.0 + 0.2 * rng.uniform(-1, 1))
        M = np.block([[Du, S.T], [S, Dv]])
        b = shift_scale * rng.standard_normal(2 * n)
        return cls(M, b)

    def eval(self, x_prev, x_cur):
        z = np.concatenate([x_prev, x_cur])
        return float(0.5 * z @ self.M @ z + self.b @ z)

    def grad(self, x_prev, x_cur):
        z = np.concatenate([x_prev, x_cur])
        return self.M @ z + self.b

    def hess(self, x_prev, x_cur):
        n = self.n
        return self.M[:n, :n], self.M[n:, :n], self.M[n:, n:]


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
