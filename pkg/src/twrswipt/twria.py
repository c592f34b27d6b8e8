"""Iterative MMSE interference alignment for the two-way AF relay.

One sweep recomputes the relay gain from the current precoders, then every
combiner, then every precoder. The relay matrix is ``alpha * I``.
Precoders and combiners are stacked as arrays of shape ``(2K, M, d)``.

The sweep itself runs in the selected kernel backend; the single-step
functions here (:func:`update_combiner`, :func:`update_precoder`) are the
readable reference implementation and are checked against it in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .errors import InfeasibleConfig
from .matcore import herm, orthonormalize, qr_positive
from .sysmodel import (
    STREAM_INIT,
    ChannelSet,
    SystemConfig,
    crandn,
    partner,
    scaled_id_noise,
    substream,
)

DEFAULT_MAX_ITER = 2000
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TransceiverState:
    """Precoders ``V``, combiners ``U`` and the relay gain ``alpha``.

    ``mse`` is the total MSE of this state, ``trace`` the per-sweep MSE
    history that produced it.
    """

    V: np.ndarray
    U: np.ndarray
    alpha: float
    mse: float = float("nan")
    iterations: int = 0
    converged: bool = False
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def rotated(self, Q) -> "TransceiverState":
        """State with every precoder right-multiplied by ``Q[j]``."""
        return replace(self, V=np.einsum("jmd,jde->jme", self.V, Q))


def _stack(X):
    return np.asarray(X, dtype=np.complex128)


def relay_gain(cfg: SystemConfig, ch: ChannelSet, V) -> float:
    """Gain that puts the relay exactly at its power budget ``P_r``.

    ``alpha^2 = P_r / (rbar * sum_j (P_j/d) ||H_up[j] V_j||^2 + rbar sigma_ID^2 R)``
    """
    V = _stack(V)
    rs = scaled_id_noise(cfg)
    sig = np.sum(cfg.P / cfg.d * np.sum(np.abs(ch.H_up @ V) ** 2, axis=(1, 2)))
    den = cfg.rbar * sig + rs * cfg.R
    if den <= 0:
        return 0.0 if cfg.P_r == 0 else float("inf")
    return float(np.sqrt(cfg.P_r / den))


def relay_power(cfg: SystemConfig, ch: ChannelSet, V, alpha: float) -> float:
    """Average relay transmit power ``tr(G E{y y^H} G^H)`` for gain ``alpha``."""
    V = _stack(V)
    sig = np.sum(cfg.P / cfg.d * np.sum(np.abs(ch.H_up @ V) ** 2, axis=(1, 2)))
    return float(alpha**2 * (cfg.rbar * sig + scaled_id_noise(cfg) * cfg.R))


def noise_matrix(cfg: SystemConfig, ch: ChannelSet, alpha: float, k: int) -> np.ndarray:
    """Forwarded relay noise plus receiver noise at user ``k``."""
    Hd = ch.H_down[k]
    return scaled_id_noise(cfg) * alpha**2 * (Hd @ herm(Hd)) + cfg.sigma2 * np.eye(cfg.M)


def update_combiner(cfg: SystemConfig, ch: ChannelSet, V, alpha: float, k: int) -> np.ndarray:
    """MMSE combiner of user ``k`` for fixed precoders, orthonormalised."""
    V = _stack(V)
    kp = partner(k, cfg.K)
    rb, d = cfg.rbar, cfg.d
    A = noise_matrix(cfg, ch, alpha, k)
    for j in range(cfg.n_users):
        if j == k:
            continue
        T = alpha * ch.H_down[k] @ (ch.H_up[j] @ V[j])
        A = A + (rb * cfg.P[j] / d) * (T @ herm(T))
    B = alpha * ch.H_down[k] @ (ch.H_up[kp] @ V[kp]) * (rb * cfg.P[kp] / d)
    return orthonormalize(np.linalg.solve(A, B))


def precoder_regularizer(cfg: SystemConfig, ch: ChannelSet, alpha: float, j: int) -> float:
    """``(d / P_j) tr(C_j) / M``, the normalised noise power at receiver ``j``."""
    C = noise_matrix(cfg, ch, alpha, j)
    if cfg.P[j] <= 0:
        return float("inf")
    return float(cfg.d / cfg.P[j] * np.real(np.trace(C)) / cfg.M)


def update_precoder(cfg: SystemConfig, ch: ChannelSet, U, alpha: float, j: int) -> np.ndarray:
    """Regularised least-squares precoder of user ``j`` for fixed combiners.

    The desired term uses the combiner of ``j``'s partner, the receiver that
    actually decodes user ``j``'s streams.
    """
    U = _stack(U)
    jp = partner(j, cfg.K)
    eps = precoder_regularizer(cfg, ch, alpha, j)
    B = herm(alpha * ch.H_down[jp] @ ch.H_up[j]) @ U[jp]
    if not np.isfinite(eps):
        return orthonormalize(B)
    A = eps * np.eye(cfg.M, dtype=complex)
    for k in range(cfg.n_users):
        if k == j:
            continue
        T = herm(alpha * ch.H_down[k] @ ch.H_up[j]) @ U[k]
        A = A + T @ herm(T)
    return orthonormalize(np.linalg.solve(A, B))


def total_mse(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState) -> float:
    """Closed-form sum over receivers of ``E||U_k^H (y_k - self) - s_k'||^2``.

    The linear term carries the factor ``2 (1 - rho)`` exactly as in the
    original expansion; at ``rho = 0`` it is the true MSE.
    """
    V, U, a = _stack(state.V), _stack(state.U), state.alpha
    rb, d, n = cfg.rbar, cfg.d, cfg.n_users
    total = 0.0
    for k in range(n):
        kp = partner(k, cfg.K)
        total += cfg.P[kp]
        for j in range(n):
            if j == k:
                continue
            G = a * herm(U[k]) @ ch.H_down[k] @ ch.H_up[j] @ V[j]
            total += rb * cfg.P[j] / d * np.sum(np.abs(G) ** 2)
            if j == kp:
                total -= 2.0 * rb * cfg.P[kp] / d * np.real(np.trace(G))
        total += np.real(np.trace(herm(U[k]) @ noise_matrix(cfg, ch, a, k) @ U[k]))
    return float(total)


def leakage(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, F=None) -> float:
    """Interference power left after combining, normalised by the raw cross-channel power.

    Only genuine interferers ``j not in {k, k'}`` count; the gain cancels.
    ``F`` optionally supplies the precomputed ``ch.cascade()``.
    """
    V, U = _stack(state.V), _stack(state.U)
    F = ch.cascade() if F is None else F
    n = cfg.n_users
    mask = np.ones((n, n), dtype=bool)
    idx = np.arange(n)
    mask[idx, idx] = False
    mask[idx, (idx + cfg.K) % n] = False
    G = np.einsum("kmd,kjmn,jne->kjde", U.conj(), F, V)
    num = np.sum(np.sum(np.abs(G) ** 2, axis=(2, 3))[mask])
    den = np.sum(np.sum(np.abs(F) ** 2, axis=(2, 3))[mask])
    return float(num / den) if den > 0 else 0.0


def haar_precoders(cfg: SystemConfig, seed: int) -> np.ndarray:
    """Haar-distributed orthonormal ``M x d`` matrices, one substream per user."""
    return np.stack(
        [
            qr_positive(crandn(substream(seed, STREAM_INIT, j), (cfg.M, cfg.d)))[0]
            for j in range(cfg.n_users)
        ]
    )


def _kernel_args(cfg, ch):
    ch.check(cfg)
    F = np.ascontiguousarray(ch.cascade())
    HHd = np.ascontiguousarray(ch.H_down @ herm(ch.H_down))
    rs = scaled_id_noise(cfg)
    return F, np.ascontiguousarray(ch.H_up), HHd, np.ascontiguousarray(cfg.P), rs


def _finish(cfg, ch, V, U, trace, max_iter, tol):
    alpha = relay_gain(cfg, ch, V)
    st = TransceiverState(V=V, U=U, alpha=alpha, iterations=len(trace), trace=trace)
    if len(trace) >= 2:
        last = abs(trace[-1] - trace[-2]) / abs(trace[-1]) if trace[-1] else abs(trace[-1] - trace[-2])
        converged = not last > tol
    else:
        converged = not np.isfinite(tol) or max_iter > len(trace)
    return replace(st, mse=total_mse(cfg, ch, st), converged=bool(converged))


def run_twria(
    cfg: SystemConfig,
    ch: ChannelSet,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    V0=None,
    backend=None,
) -> TransceiverState:
    """Alternate combiner and precoder updates until the MSE settles.

    Parameters
    ----------
    cfg, ch : SystemConfig, ChannelSet
    seed : int
        Seed of the Haar initialisation (ignored when ``V0`` is given).
    max_iter : int
        Sweep cap, >= 1.
    tol : float
        Stop once ``|MSE_t - MSE_{t-1}| / MSE_t <= tol``; ``inf`` runs one sweep.
    V0 : array_like, optional
        Starting precoders, shape ``(2K, M, d)``.
    backend : {"cython", "python"}, optional
        Kernel override; defaults to the import-time selection.

    Returns
    -------
    TransceiverState
        ``alpha`` is recomputed from the final precoders; ``trace`` holds
        the MSE after every sweep. Hitting ``max_iter`` is not an error and is
        reported through ``converged``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if np.any(cfg.P <= 0) or cfg.P_r <= 0:
        raise InfeasibleConfig("alignment design needs every transmit power > 0")
    kern = _backend.kernels if backend is None else _backend.load(backend)
    V = haar_precoders(cfg, seed) if V0 is None else np.array(V0, dtype=np.complex128)
    F, Hu, HHd, P, rs = _kernel_args(cfg, ch)
    V, U, trace = kern.twria_loop(
        F, Hu, HHd, P, V, float(cfg.P_r), float(cfg.sigma2), float(cfg.rbar), float(rs),
        int(cfg.K), int(max_iter), float(tol),
    )
    return _finish(cfg, ch, V, U, np.asarray(trace), max_iter, tol)


def iterate_twria(cfg: SystemConfig, ch: ChannelSet, seed: int = 0,
                  max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL, V0=None):
    """Yield the state after every sweep of :func:`run_twria`.

    Produces the same iterates as ``run_twria``; each yielded state has
    ``alpha`` recomputed from its precoders and ``mse`` set to the sweep's
    tracked value.
    """
    kern = _backend.kernels
    V = haar_precoders(cfg, seed) if V0 is None else np.array(V0, dtype=np.complex128)
    F, Hu, HHd, P, rs = _kernel_args(cfg, ch)
    prev = np.inf
    for it in range(1, max_iter + 1):
        V, U, tr = kern.twria_loop(
            F, Hu, HHd, P, V, float(cfg.P_r), float(cfg.sigma2), float(cfg.rbar), float(rs),
            int(cfg.K), 1, 0.0,
        )
        mse = float(tr[-1])
        rel = abs(mse - prev) / mse if mse > 0 else abs(mse - prev)
        done = not rel > tol
        yield TransceiverState(V=V, U=U, alpha=relay_gain(cfg, ch, V), mse=mse,
                               iterations=it, converged=done)
        if done:
            return
        prev = mse


def recompute_combiners(cfg: SystemConfig, ch: ChannelSet, V, alpha=None) -> TransceiverState:
    """State for precoders ``V`` with the matching gain and MMSE combiners."""
    V = _stack(V)
    a = relay_gain(cfg, ch, V) if alpha is None else float(alpha)
    U = np.stack([update_combiner(cfg, ch, V, a, k) for k in range(cfg.n_users)])
    st = TransceiverState(V=V, U=U, alpha=a)
    return replace(st, mse=total_mse(cfg, ch, st))
