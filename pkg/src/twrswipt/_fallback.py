"""Pure numpy implementations of the hot kernels.

Mirrors the compiled ``_kernels`` module function for function. Used when the
extension is not built or when ``TWRSWIPT_BACKEND=python`` is set.
"""

import numpy as np


def orthonormalize(A):
    """Thin QR factor of ``A`` (or a stack of matrices) with a positive real R diagonal."""
    Q, R = np.linalg.qr(A)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    phase = np.where(mag > 0, diag / np.where(mag > 0, mag, 1.0), 1.0)
    return Q * phase[..., None, :]


def eigh(A):
    """Eigenpairs of a Hermitian matrix, unsorted and without phase normalisation."""
    return np.linalg.eigh(A)


def twria_loop(F, Hu, HHd, P, V0, Pr, sigma2, rbar, rbar_sid2, K, max_iter, tol):
    """Run TWR-IA sweeps starting from precoders ``V0``.

    Parameters
    ----------
    F : ndarray, shape (2K, 2K, M, M)
        ``F[k, j] = H_down[k] @ H_up[j]``; the effective channel is ``alpha * F``.
    Hu : ndarray, shape (2K, R, M)
        Uplink channels.
    HHd : ndarray, shape (2K, M, M)
        ``H_down[k] @ H_down[k]^H``.
    P : ndarray, shape (2K,)
        Per-user transmit powers.
    V0 : ndarray, shape (2K, M, d)
        Initial orthonormal precoders.
    Pr, sigma2, rbar, rbar_sid2 : float
        Relay power, receiver noise, ``1 - rho`` and ``(1 - rho) * sigma_ID^2``.
    K : int
        Number of user pairs.
    max_iter : int
    tol : float
        Relative MSE change that stops the loop.

    Returns
    -------
    V, U : ndarray, shape (2K, M, d)
    trace : ndarray
        Total MSE after every sweep.
    """
    n, M, d = V0.shape
    R = Hu.shape[1]
    part = (np.arange(n) + K) % n
    idx = np.arange(n)
    eye = np.eye(M)
    off = ~np.eye(n, dtype=bool)
    trHHd = np.real(np.trace(HHd, axis1=1, axis2=2))
    w = rbar * P / d
    V = np.array(V0, dtype=complex)
    U = np.zeros_like(V)
    trace = []
    prev = np.inf
    for _ in range(max_iter):
        HV = Hu @ V
        sig = np.sum(P / d * np.sum(np.abs(HV) ** 2, axis=(1, 2)))
        a2 = Pr / (rbar * sig + rbar_sid2 * R)
        a = np.sqrt(a2)
        C = rbar_sid2 * a2 * HHd + sigma2 * eye

        FV = np.einsum("kjmn,jnd->kjmd", F, V)
        cov = np.einsum("j,kjmd,kjnd->kmn", w, FV, FV.conj())
        FVkk = FV[idx, idx]
        cov -= w[:, None, None] * (FVkk @ FVkk.conj().transpose(0, 2, 1))
        B = FV[idx, part] * (a * w[part])[:, None, None]
        U = orthonormalize(np.linalg.solve(a2 * cov + C, B))

        FhU = np.einsum("kjnm,knd->kjmd", F.conj(), U)
        S = np.einsum("kjmd,kjnd->jmn", FhU, FhU.conj())
        FhUjj = FhU[idx, idx]
        S -= FhUjj @ FhUjj.conj().transpose(0, 2, 1)
        eps = (d / P) * (rbar_sid2 * a2 * trHHd + sigma2 * M) / M
        Bv = a * FhU[part, idx]
        V = orthonormalize(np.linalg.solve(a2 * S + eps[:, None, None] * eye, Bv))

        G = a * np.einsum("kjmd,jme->kjde", FhU.conj(), V)
        nrm = np.sum(np.abs(G) ** 2, axis=(2, 3))
        lin = np.real(np.trace(G[idx, part], axis1=1, axis2=2))
        noise = rbar_sid2 * a2 * np.real(np.einsum("kmd,kmn,knd->", U.conj(), HHd, U)) + sigma2 * d * n
        mse = (
            np.sum(P)
            - np.sum(2.0 * rbar * P[part] / d * lin)
            + rbar * np.sum((P / d)[None, :] * nrm * off)
            + noise
        )
        trace.append(mse)
        rel = abs(mse - prev) / mse if mse > 0 else abs(mse - prev)
        prev = mse
        if not rel > tol:
            break
    return V, U, np.array(trace)
