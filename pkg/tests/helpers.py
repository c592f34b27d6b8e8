"""Test-only constructions and independent oracles."""

import numpy as np

from twrswipt.matcore import herm
from twrswipt.twria import TransceiverState, relay_gain


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def haar(rng, m, n):
    Q, R = np.linalg.qr(crandn(rng, m, n))
    return Q * (np.diagonal(R) / np.abs(np.diagonal(R)))[None, :]


def svd_basis(A):
    """Orthonormal basis of range(A) from the SVD (independent of QR)."""
    W, _, _ = np.linalg.svd(A, full_matrices=False)
    return W


def projector_cd(V, W):
    """Chordal distance from the projector form 0.5 ||V V^H - W W^H||_F^2."""
    return 0.5 * np.linalg.norm(V @ herm(V) - W @ herm(W)) ** 2


def aligned_state(cfg, ch):
    """Exact alignment by signal-space alignment at the relay.

    Both users of pair p steer into the relay subspace spanned by identity
    columns ``p*d .. (p+1)*d``; each receiver projects out the downlink images
    of the other pairs' subspaces. Needs ``R = M = K d``.
    """
    K, d, M, R = cfg.K, cfg.d, cfg.M, cfg.R
    assert R == M == K * d
    B = [np.eye(R)[:, p * d:(p + 1) * d] for p in range(K)]
    V, U = [], []
    for j in range(cfg.n_users):
        Q, _ = np.linalg.qr(np.linalg.solve(ch.H_up[j], B[j % K]))
        V.append(Q)
    for k in range(cfg.n_users):
        T = np.hstack([ch.H_down[k] @ B[q] for q in range(K) if q != k % K])
        W, _, _ = np.linalg.svd(T)
        U.append(W[:, T.shape[1]:])
    V = np.stack(V)
    return TransceiverState(V=V, U=np.stack(U), alpha=relay_gain(cfg, ch, V))
