"""Symbol-level QPSK Monte Carlo through the two-phase relay chain."""

from __future__ import annotations

import numpy as np

from .errors import FullSplit
from .matcore import herm
from .sysmodel import ChannelSet, SystemConfig, crandn, partner, substream
from .twria import TransceiverState

STREAM_SER = 3
BATCH = 4096
RIDGE = 1e-9

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


def qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-energy QPSK symbols ``(+-1 +- i)/sqrt(2)``."""
    return _QPSK[rng.integers(0, 4, size=shape)]


def _slice(x):
    return (np.where(x.real >= 0, 1.0, -1.0) + 1j * np.where(x.imag >= 0, 1.0, -1.0)) / np.sqrt(2.0)


def _equalizers(cfg, ch, state):
    """Regularised zero-forcing filters ``(D^H D + r I)^{-1} D^H`` per receiver."""
    a, rb, d = state.alpha, cfg.rbar, cfg.d
    W = []
    for k in range(cfg.n_users):
        kp = partner(k, cfg.K)
        D = np.sqrt(rb) * a * herm(state.U[k]) @ ch.H_down[k] @ ch.H_up[kp] @ state.V[kp]
        D = D * np.sqrt(cfg.P[kp] / d)
        G = herm(D) @ D
        ridge = RIDGE * max(np.real(np.trace(G)) / d, np.finfo(float).tiny)
        W.append(np.linalg.solve(G + ridge * np.eye(d), herm(D)))
    return W


def _batch_errors(cfg, ch, state, W, n, rng):
    nu, d = cfg.n_users, cfg.d
    a, rb = state.alpha, cfg.rbar
    s = qpsk(rng, (nu, d, n))
    amp = np.sqrt(cfg.P / d)[:, None, None]
    HV = ch.H_up @ state.V
    yr = np.einsum("jrd,jdn->rn", HV, amp * s) + crandn(rng, (cfg.R, n), cfg.sigmaR2)
    x = a * (np.sqrt(rb) * yr + crandn(rng, (cfg.R, n), cfg.delta2))
    errors = 0
    for k in range(nu):
        kp = partner(k, cfg.K)
        yk = ch.H_down[k] @ x + crandn(rng, (cfg.M, n), cfg.sigma2)
        yk = yk - np.sqrt(rb) * a * ch.H_down[k] @ (HV[k] @ (amp[k] * s[k]))
        est = W[k] @ (herm(state.U[k]) @ yk)
        errors += int(np.count_nonzero(_slice(est) != s[kp]))
    return errors


def simulate_ser(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, n_symbols: int,
                 seed: int = 0, batch: int = BATCH) -> float:
    """Average QPSK symbol error rate over every stream of every user.

    Each receiver removes its own known signal, combines with ``U_k^H``,
    applies regularised zero forcing on the ``d x d`` desired channel and
    slices each stream to the nearest QPSK point. Batches draw from their own
    RNG substreams, so the result depends only on ``seed`` and the inputs.

    Parameters
    ----------
    n_symbols : int
        Symbol vectors per stream.
    seed : int
    batch : int
        Symbol vectors per batch.
    """
    if cfg.rho >= 1.0:
        raise FullSplit("rho = 1 leaves no power for information decoding")
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    W = _equalizers(cfg, ch, state)
    errors = 0
    for b, start in enumerate(range(0, n_symbols, batch)):
        n = min(batch, n_symbols - start)
        errors += _batch_errors(cfg, ch, state, W, n, substream(seed, STREAM_SER, b))
    return errors / (n_symbols * cfg.n_users * cfg.d)
