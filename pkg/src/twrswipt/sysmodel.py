"""System parameters, user pairing and channel generation.

User indices in the Python API are 0-based: user ``k`` exchanges data with
``partner(k, K) = (k + K) mod 2K``. :func:`pair_index` gives the same map on
1-based labels.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FullSplit, InfeasibleConfig, OutOfRange

# RNG substream tags; one generator per (tag, user) so adding users leaves
# the matrices of existing users untouched.
STREAM_UP = 0
STREAM_DOWN = 1
STREAM_INIT = 2

_VECTOR_FIELDS = ("P", "beta_up", "beta_down")
_INT_FIELDS = ("M", "R", "d", "K")


def _vec(x, n, name):
    a = np.array(x, dtype=float).reshape(-1)
    if a.size == 1:
        a = np.full(n, float(a[0]))
    if a.size != n:
        raise InfeasibleConfig(f"{name} must have length 2K = {n}, got {a.size}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Scalar system parameters of the two-way relay network.

    Vector fields (``P``, ``beta_up``, ``beta_down``) accept a scalar, which is
    broadcast to all ``2K`` users. Instances are immutable and validated on
    construction.
    """

    M: int = 6
    R: int = 6
    d: int = 2
    K: int = 3
    P: np.ndarray = field(default=1.0)
    P_r: float = 1.0
    sigma2: float = 1.0
    sigmaR2: float = 1.0
    delta2: float = 0.1
    rho: float = 0.0
    zeta: float = 0.5
    beta_up: np.ndarray = field(default=1.0)
    beta_down: np.ndarray = field(default=1.0)

    def __post_init__(self):
        for name in _INT_FIELDS:
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InfeasibleConfig(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        n = 2 * self.K
        for name in _VECTOR_FIELDS:
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        for name in ("P_r", "sigma2", "sigmaR2", "delta2", "rho", "zeta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        self.validate()

    @property
    def n_users(self) -> int:
        return 2 * self.K

    @property
    def rbar(self) -> float:
        return 1.0 - self.rho

    def validate(self):
        M, R, d, K = self.M, self.R, self.d, self.K
        if M < 2 * d:
            raise InfeasibleConfig(f"need M >= 2d for the CD decomposition (M={M}, d={d})")
        if M < K * d:
            raise InfeasibleConfig(f"need M >= Kd for alignment (M={M}, K={K}, d={d})")
        if K * d > R:
            raise InfeasibleConfig(f"need Kd <= R (K={K}, d={d}, R={R})")
        if not 0.0 <= self.rho <= 1.0:
            raise InfeasibleConfig(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.zeta <= 1.0:
            raise InfeasibleConfig(f"zeta must lie in [0, 1], got {self.zeta}")
        for name in ("P_r", "sigma2", "sigmaR2", "delta2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InfeasibleConfig(f"{name} must be finite and >= 0, got {v}")
        for name in _VECTOR_FIELDS:
            v = getattr(self, name)
            if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
                raise InfeasibleConfig(f"{name} must be finite and >= 0")

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr(self, snr_db: float) -> "SystemConfig":
        """Copy with ``P_j = P_r = sigma2 * 10^(snr_db/10)`` for every user."""
        p = self.sigma2 * 10.0 ** (snr_db / 10.0)
        return self.replace(P=p, P_r=p)

    @classmethod
    def symmetric(cls, M=6, R=6, d=2, K=3, snr_db=None, **kw) -> "SystemConfig":
        """Configuration with uniform powers; ``snr_db`` sets ``P = P_r``."""
        if snr_db is not None:
            p = kw.get("sigma2", 1.0) * 10.0 ** (snr_db / 10.0)
            kw.setdefault("P", p)
            kw.setdefault("P_r", p)
        return cls(M=M, R=R, d=d, K=K, **kw)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in _VECTOR_FIELDS:
                s = ", ".join(repr(float(x)) for x in v)
            else:
                s = repr(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "SystemConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        known = {f.name for f in dataclasses.fields(cls)}
        vals = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in known:
                raise InfeasibleConfig(f"line {lineno}: cannot parse {raw.strip()!r}")
            if key in _VECTOR_FIELDS:
                vals[key] = [float(x) for x in value.split(",") if x.strip()]
            elif key in _INT_FIELDS:
                vals[key] = int(value)
            else:
                vals[key] = float(value)
        vals.update(overrides)
        return cls(**vals)

    @classmethod
    def from_file(cls, path, **overrides) -> "SystemConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config file {path}: {exc}") from exc
        return cls.from_text(text, **overrides)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One realization of every uplink (R x M) and downlink (M x R) channel.

    Arrays are stacked along the user axis and made read-only.
    """

    H_up: np.ndarray
    H_down: np.ndarray

    def __post_init__(self):
        up = np.array(self.H_up, dtype=np.complex128)
        down = np.array(self.H_down, dtype=np.complex128)
        if up.ndim != 3 or down.ndim != 3 or up.shape[0] != down.shape[0]:
            raise ValueError("H_up and H_down must be stacks over the same users")
        if up.shape[1:] != down.shape[:0:-1]:
            raise ValueError(f"shape mismatch: H_up {up.shape}, H_down {down.shape}")
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
            raise ValueError("channels must be finite")
        up.setflags(write=False)
        down.setflags(write=False)
        object.__setattr__(self, "H_up", up)
        object.__setattr__(self, "H_down", down)

    @property
    def n_users(self) -> int:
        return self.H_up.shape[0]

    def check(self, cfg: SystemConfig):
        if self.H_up.shape != (cfg.n_users, cfg.R, cfg.M):
            raise ValueError(
                f"channels have shape {self.H_up.shape}, config expects "
                f"{(cfg.n_users, cfg.R, cfg.M)}"
            )
        return self

    def cascade(self) -> np.ndarray:
        """``F[k, j] = H_down[k] @ H_up[j]``, shape (2K, 2K, M, M)."""
        return np.einsum("kmr,jrn->kjmn", self.H_down, self.H_up)


def partner(k: int, K: int) -> int:
    """0-based partner index of user ``k`` among ``2K`` users."""
    n = 2 * K
    if not 0 <= k < n:
        raise OutOfRange(f"user index {k} outside [0, {n})")
    return (k + K) % n


def pair_index(k: int, K: int) -> int:
    """1-based partner label: ``((k + K - 1) mod 2K) + 1``."""
    n = 2 * K
    if not 1 <= k <= n:
        raise OutOfRange(f"user label {k} outside [1, {n}]")
    return (k + K - 1) % n + 1


def substream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Independent generator for a named substream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def crandn(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples with total variance ``var``."""
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channels(cfg: SystemConfig, seed: int) -> ChannelSet:
    """Draw i.i.d. CN(0, beta) channel entries; one substream per matrix."""
    n = cfg.n_users
    up = np.stack(
        [crandn(substream(seed, STREAM_UP, j), (cfg.R, cfg.M), cfg.beta_up[j]) for j in range(n)]
    )
    down = np.stack(
        [
            crandn(substream(seed, STREAM_DOWN, k), (cfg.M, cfg.R), cfg.beta_down[k])
            for k in range(n)
        ]
    )
    return ChannelSet(up, down)


def effective_channel(ch: ChannelSet, alpha: float, k: int, j: int) -> np.ndarray:
    """End-to-end channel ``alpha * H_down[k] @ H_up[j]`` from user j to user k."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n = ch.n_users
    for i in (k, j):
        if not 0 <= i < n:
            raise OutOfRange(f"user index {i} outside [0, {n})")
    return alpha * (ch.H_down[k] @ ch.H_up[j])


def id_noise_variance(cfg: SystemConfig) -> float:
    """Relay noise seen by the decoding branch, ``sigma_R^2 + delta^2 / (1 - rho)``."""
    if cfg.rho >= 1.0:
        raise FullSplit("rho = 1 leaves no power for information decoding")
    return cfg.sigmaR2 + cfg.delta2 / cfg.rbar


def scaled_id_noise(cfg: SystemConfig) -> float:
    """``(1 - rho) * sigma_ID^2 = (1 - rho) sigma_R^2 + delta^2``."""
    if cfg.rho >= 1.0:
        raise FullSplit("rho = 1 leaves no power for information decoding")
    return cfg.rbar * cfg.sigmaR2 + cfg.delta2
