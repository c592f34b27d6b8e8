"""Rates, harvested energy and the closed-form rate-loss and energy bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadFactor, FullSplit, NonUniform
from .matcore import herm, hermitian_eig
from .sysmodel import ChannelSet, SystemConfig, partner, scaled_id_noise
from .twria import TransceiverState, noise_matrix, recompute_combiners

LN2 = np.log(2.0)


@dataclass(frozen=True)
class RateEnergyPoint:
    """One (sum rate, harvested energy) sample."""

    rho: float
    z: float
    sum_rate: float
    energy: float
    method: str


def _require_split(cfg):
    if cfg.rho >= 1.0:
        raise FullSplit("rho = 1 leaves no power for information decoding")


def noise_cov(cfg: SystemConfig, ch: ChannelSet, alpha: float, k: int) -> np.ndarray:
    """Effective noise covariance at user ``k``: forwarded relay noise plus receiver noise."""
    _require_split(cfg)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return noise_matrix(cfg, ch, alpha, k)


def _logdet(A):
    sign, val = np.linalg.slogdet(A)
    return val


def _rate_terms(cfg, ch, state, k, with_interference):
    _require_split(cfg)
    V, U, a = np.asarray(state.V), np.asarray(state.U), state.alpha
    kp = partner(k, cfg.K)
    rb, d = cfg.rbar, cfg.d
    Uh = herm(U[k])
    Q = Uh @ noise_matrix(cfg, ch, a, k) @ U[k]
    if with_interference:
        for j in range(cfg.n_users):
            if j in (k, kp):
                continue
            Hb = a * Uh @ ch.H_down[k] @ ch.H_up[j] @ V[j]
            Q = Q + (rb * cfg.P[j] / d) * (Hb @ herm(Hb))
    Hb = a * Uh @ ch.H_down[k] @ ch.H_up[kp] @ V[kp]
    S = (rb * cfg.P[kp] / d) * (Hb @ herm(Hb))
    return Q, S


def _rate(Q, S):
    if not np.any(S):
        return 0.0
    val = 0.5 * (_logdet(Q + S) - _logdet(Q)) / LN2
    return max(float(val), 0.0)


def user_rate(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, k: int) -> float:
    """Achievable rate of user ``k`` in bits/s/Hz, interference treated as noise.

    The factor 1/2 accounts for the two half-duplex phases.
    """
    return _rate(*_rate_terms(cfg, ch, state, k, True))


def perfect_rate(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, k: int) -> float:
    """Rate of user ``k`` with residual interference removed."""
    return _rate(*_rate_terms(cfg, ch, state, k, False))


def user_rates(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, F=None) -> np.ndarray:
    """Every user's :func:`user_rate`, batched over users.

    ``F`` optionally supplies the precomputed ``ch.cascade()``.
    """
    _require_split(cfg)
    V, U, a = np.asarray(state.V), np.asarray(state.U), state.alpha
    F = ch.cascade() if F is None else F
    n, d = cfg.n_users, cfg.d
    idx = np.arange(n)
    part = (idx + cfg.K) % n
    w = cfg.rbar * cfg.P / d
    G = a * np.einsum("kmd,kjmn,jne->kjde", U.conj(), F, V)
    GG = np.einsum("kjde,kjfe->kjdf", G, G.conj()) * w[None, :, None, None]
    UhD = herm(U) @ ch.H_down
    N = scaled_id_noise(cfg) * a**2 * (UhD @ herm(UhD)) + cfg.sigma2 * np.eye(d)
    S = GG[idx, part]
    Q = N + GG.sum(axis=1) - GG[idx, idx] - S
    Q = 0.5 * (Q + herm(Q))
    r = 0.5 * (np.linalg.slogdet(Q + S)[1] - np.linalg.slogdet(Q)[1]) / LN2
    r[cfg.P[part] == 0] = 0.0
    return np.maximum(r, 0.0)


def sum_rate(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, F=None) -> float:
    """Sum of :func:`user_rate` over all ``2K`` users."""
    return float(np.sum(user_rates(cfg, ch, state, F)))


def harvested_energy(cfg: SystemConfig, ch: ChannelSet, V) -> float:
    """Power harvested at the relay, ``zeta rho sum_j (P_j/d) ||H_up[j] V_j||_F^2``.

    The harvested relay noise ``zeta rho sigma_R^2 R`` is negligible and left out.
    """
    V = np.asarray(V, dtype=np.complex128)
    per_user = np.sum(np.abs(ch.H_up @ V) ** 2, axis=(1, 2))
    return float(cfg.zeta * cfg.rho * np.sum(cfg.P / cfg.d * per_user))


def _md(cfg):
    return cfg.M / (cfg.d * (cfg.M - cfg.d))


def _relay_terms(cfg, k):
    """Forwarded-noise term and noise inflation factor at receiver ``k``."""
    with np.errstate(divide="ignore"):
        inv = cfg.sigma2 / (cfg.beta_down[k] * cfg.P_r)
    fwd = float(np.sum(cfg.P * cfg.beta_up) * inv)
    return fwd, 1.0 + inv


def rate_loss_bound(cfg: SystemConfig, z, k: int) -> float:
    """Upper bound on the mean rate loss of user ``k`` when interferers move by ``z``.

    Parameters
    ----------
    z : array_like, shape (2K,)
        Chordal distance of every user's precoder from its alignment solution.
    k : int
        Receiving user (0-based).

    Returns
    -------
    float
        ``(d/2) log2(1 + M_d rbar sum_j P_j z_j beta_j / (rbar (F + s_R) + s_delta))``
        with the sum over interferers of ``k``, ``M_d = M / (d (M - d))``,
        ``F`` the forwarded noise term and ``s_R``, ``s_delta`` the relay and
        splitter noise inflated by ``1 + sigma^2 / (beta_k P_r)``.
    """
    _require_split(cfg)
    z = np.broadcast_to(np.asarray(z, dtype=float), (cfg.n_users,))
    if np.any(z < 0) or np.any(z > cfg.d):
        raise ValueError(f"distances must lie in [0, {cfg.d}]")
    kp = partner(k, cfg.K)
    mask = np.ones(cfg.n_users, dtype=bool)
    mask[[k, kp]] = False
    num = _md(cfg) * cfg.rbar * np.sum((cfg.P * z * cfg.beta_up)[mask])
    if num == 0:
        return 0.0
    fwd, infl = _relay_terms(cfg, k)
    den = cfg.rbar * (fwd + cfg.sigmaR2 * infl) + cfg.delta2 * infl
    if not np.isfinite(den):
        return 0.0
    return float(cfg.d / 2.0 * np.log2(1.0 + num / den))


def cd_budget(cfg: SystemConfig, c: float, j: int, k: int | None = None) -> float:
    """Largest distance for user ``j`` that keeps the rate-loss bound under ``(d/2) log2 c``.

    The budget is evaluated at receiver ``k``; by default the smallest value
    over every receiver that ``j`` interferes with is returned, so equal
    per-user budgets keep every receiver's bound within the target.
    """
    _require_split(cfg)
    if not c > 1:
        raise BadFactor(f"rate-loss factor must exceed 1, got {c}")
    if cfg.K < 2:
        return float("inf")
    jp = partner(j, cfg.K)
    victims = [k] if k is not None else [i for i in range(cfg.n_users) if i not in (j, jp)]
    scale = 2.0 * cfg.P[j] * cfg.beta_up[j] * _md(cfg) * (cfg.K - 1)
    if scale <= 0:
        return float("inf")
    vals = []
    for kk in victims:
        fwd, infl = _relay_terms(cfg, kk)
        vals.append((c - 1.0) / scale * (fwd + cfg.sigmaR2 * infl + cfg.delta2 * infl / cfg.rbar))
    return float(min(vals))


def energy_bounds(cfg: SystemConfig, ch: ChannelSet, V_ia, z, V_n):
    """Lower and upper bounds on the harvested energy of balanced precoders.

    Parameters
    ----------
    V_ia : array_like, shape (2K, M, d)
        Alignment precoders.
    z : array_like, shape (2K,)
        Distance budgets.
    V_n : array_like, shape (2K, M, d)
        Any ``d``-dimensional slice of each precoder's null space.

    Returns
    -------
    lower, upper : float
        ``zeta rho sum (P_j/d) [||H V_j||^2 (1 - z_j/d) + ||H V_n,j||^2 z_j/d]`` and
        ``zeta rho sum P_j lambda_1(H_j^H H_j)``.
    """
    z = np.broadcast_to(np.asarray(z, dtype=float), (cfg.n_users,))
    Hu = ch.H_up
    e_ia = np.sum(np.abs(Hu @ np.asarray(V_ia)) ** 2, axis=(1, 2))
    e_n = np.sum(np.abs(Hu @ np.asarray(V_n)) ** 2, axis=(1, 2))
    zr = cfg.zeta * cfg.rho
    lower = zr * np.sum(cfg.P / cfg.d * (e_ia * (1.0 - z / cfg.d) + e_n * z / cfg.d))
    lam1 = np.array([hermitian_eig(herm(H) @ H)[0][0] for H in Hu])
    upper = zr * np.sum(cfg.P * lam1)
    return float(lower), float(upper)


def expected_lambda1(R: int, d: int) -> float:
    """Approximate mean top eigenvalue, ``R d ((R + d) / (R d + 1))^(2/3)``."""
    return R * d * ((R + d) / (R * d + 1.0)) ** (2.0 / 3.0)


def expected_energy_bounds(cfg: SystemConfig):
    """Mean harvested energy estimate ``2K P zeta rho R`` and its upper bound.

    Requires equal powers and unit channel variances.
    """
    if not (np.allclose(cfg.P, cfg.P[0]) and np.allclose(cfg.beta_up, 1.0)):
        raise NonUniform("expected bounds need equal powers and unit variances")
    base = cfg.n_users * cfg.P[0] * cfg.zeta * cfg.rho
    return float(base * cfg.R), float(base * expected_lambda1(cfg.R, cfg.d))


def evaluate(cfg: SystemConfig, ch: ChannelSet, V):
    """Sum rate and harvested energy of precoders ``V`` with matching combiners."""
    state = recompute_combiners(cfg, ch, V)
    return sum_rate(cfg, ch, state), harvested_energy(cfg, ch, V), state


def rate_energy_region(cfg: SystemConfig, ch: ChannelSet, state: TransceiverState, z,
                       rho_grid=None, users="all", n_iter: int = 6):
    """Sum rate and harvested energy across splitting ratios.

    Precoders are balanced once (they do not depend on ``rho``); combiners and
    the relay gain are recomputed at every ``rho``.

    Returns
    -------
    list of RateEnergyPoint
    """
    from .precoders import balanced_set

    if rho_grid is None:
        rho_grid = np.round(np.arange(0.0, 1.0, 0.01), 10)
    z_arr = np.asarray(z, dtype=float)
    if np.all(z_arr == 0):
        V, method = np.asarray(state.V), "twria"
    else:
        V, res = balanced_set(ch.H_up, state.V, z, n_iter=n_iter, users=users)
        method = "eh_max" if all(r.used_eh for r in res) else "balanced"
    zlabel = float(np.max(z_arr))
    points = []
    for rho in rho_grid:
        if not 0.0 <= rho < 1.0:
            raise ValueError(f"rho grid must lie in [0, 1), got {rho}")
        c = cfg.replace(rho=float(rho))
        rate, energy, _ = evaluate(c, ch, V)
        points.append(RateEnergyPoint(float(rho), zlabel, rate, energy, method))
    return points
