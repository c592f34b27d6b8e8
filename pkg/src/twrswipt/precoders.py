"""Energy-maximising precoders, chordal distance and balanced precoding.

A balanced precoder moves an alignment precoder ``V`` by a controlled
chordal distance toward the directions that carry the most power into the
relay::

    V_bal = V X Y + V_null S Z,     Y^2 + Z^2 = I,     tr(Z^2) <= z

``S`` picks the null-space directions, ``X`` rotates inside ``span(V)`` and
the diagonal ``Z`` spends the distance budget ``z``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetRange, DegenerateChannelWarning, EntryRange, RankDeficient
from .matcore import (
    RANK_RTOL,
    as_cmatrix,
    check_orthonormal,
    complete_basis,
    herm,
    hermitian_eig,
    null_basis,
    polar_factor,
    qr_positive,
)

DEFAULT_N_ITER = 6


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenvectors of ``H^H H`` split into the dominant ``d`` and the rest."""

    W1: np.ndarray
    W2: np.ndarray
    lam: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return np.hstack([self.W1, self.W2])


@dataclass(frozen=True, eq=False)
class CdFactors:
    """Factors of ``V = Vhat X Y + Vhat_null S Z``.

    From :func:`cd_decompose` ``Y`` and ``Z`` are upper triangular; from the
    balanced-precoder solver they are real diagonal. ``z_target`` is the
    distance budget (or, for an exact decomposition, the distance itself).
    """

    X: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    z_target: float

    def __iter__(self):
        return iter((self.X, self.Y, self.S, self.Z))

    def assemble(self, Vhat, Vnull) -> np.ndarray:
        return Vhat @ self.X @ self.Y + Vnull @ self.S @ self.Z


@dataclass(frozen=True, eq=False)
class BalancedResult:
    """Output of :func:`balanced_decomposition`.

    Attributes
    ----------
    V : ndarray, shape (M, d)
        The balanced precoder.
    factors : CdFactors or None
        ``None`` when the energy-maximising precoder was returned directly.
    Vnull : ndarray, shape (M, M - d)
    objective : ndarray
        ``Re tr(Y X^H C Z)`` after every alternation.
    z_eh : float
        Chordal distance between the alignment and the energy-maximising precoder.
    used_eh : bool
    degenerate : bool
        ``S`` had to be completed because the channel product lost rank.
    S : ndarray, shape (M - d, d)
        Null-space selection, available even when ``used_eh`` is set.
    """

    V: np.ndarray
    factors: CdFactors | None
    Vnull: np.ndarray
    S: np.ndarray
    objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z_eh: float = 0.0
    used_eh: bool = False
    degenerate: bool = False

    @property
    def null_slice(self) -> np.ndarray:
        """The ``d``-dimensional null-space directions ``V_null S``."""
        return self.Vnull @ self.S


def chordal_distance_sq(V, Vhat) -> float:
    """``d - ||V^H Vhat||_F^2`` for orthonormal ``M x d`` matrices."""
    V = check_orthonormal(as_cmatrix(V), tol=1e-9, name="V")
    Vhat = check_orthonormal(as_cmatrix(Vhat), tol=1e-9, name="Vhat")
    if V.shape != Vhat.shape:
        raise ValueError(f"shape mismatch {V.shape} vs {Vhat.shape}")
    d = V.shape[1]
    val = d - float(np.sum(np.abs(herm(V) @ Vhat) ** 2))
    return min(max(val, 0.0), float(d))


def cd_decompose(V, Vhat) -> CdFactors:
    """Exact decomposition of ``V`` relative to ``Vhat`` by two QR factorisations.

    ``X Y`` is the QR factorisation of ``Vhat^H V`` and ``S Z`` that of
    ``Vhat_null^H V``, both with a non-negative triangular diagonal.
    """
    V = check_orthonormal(as_cmatrix(V), tol=1e-9, name="V")
    Vhat = check_orthonormal(as_cmatrix(Vhat), tol=1e-9, name="Vhat")
    M, d = V.shape
    if M < 2 * d:
        raise ValueError(f"decomposition needs M >= 2d (M={M}, d={d})")
    Vn = null_basis(Vhat)
    X, Y = qr_positive(herm(Vhat) @ V)
    S, Z = qr_positive(herm(Vn) @ V)
    return CdFactors(X=X, Y=Y, S=S, Z=Z, z_target=float(np.sum(np.abs(Z) ** 2)))


def eigen_basis(H, d: int) -> EigenBasis:
    """Eigen-decomposition of ``H^H H`` split at ``d``."""
    H = as_cmatrix(H)
    lam, W = hermitian_eig(herm(H) @ H)
    return EigenBasis(W1=W[:, :d], W2=W[:, d:], lam=lam)


def eh_max_precoder(H, d: int) -> np.ndarray:
    """The ``d`` dominant right singular directions of ``H``.

    Maximises ``||H V||_F^2`` over orthonormal ``M x d`` matrices.
    """
    eb = eigen_basis(H, d)
    if eb.lam[0] <= 0 or eb.lam[d - 1] <= RANK_RTOL * eb.lam[0]:
        raise RankDeficient(f"channel has rank below d = {d}")
    return eb.W1


def z_eh(V_ia, V_eh) -> float:
    """Chordal distance from the alignment precoder to the energy-maximising one."""
    return chordal_distance_sq(V_ia, V_eh)


def _compute_S(H, V, Vnull, strict=False):
    H = as_cmatrix(H)
    A = herm(Vnull) @ (herm(H) @ (H @ V))
    d = V.shape[1]
    s = np.linalg.svd(A, compute_uv=False)
    scale = np.linalg.norm(H, 2) ** 2
    if scale > 0 and s[-1] > RANK_RTOL * scale:
        return polar_factor(A), False
    if strict:
        raise RankDeficient("null-space projection of the channel Gram matrix lost rank")
    warnings.warn(
        "channel product is rank deficient; completing S with an arbitrary orthonormal basis",
        DegenerateChannelWarning,
        stacklevel=3,
    )
    S, _ = complete_basis(A, d)
    return S, True


def compute_S(H, V, Vnull, strict=False) -> np.ndarray:
    """Null-space directions aligned with ``Vnull^H H^H H V``.

    Returns the orthonormal polar factor of that ``(M-d) x d`` matrix, which
    makes ``V^H H^H H Vnull S`` Hermitian positive semidefinite. When the
    product is rank deficient a completed basis is returned with a
    :class:`DegenerateChannelWarning`, or :class:`RankDeficient` is raised
    if ``strict`` is set.
    """
    return _compute_S(H, V, Vnull, strict)[0]


def solve_X(H, V, Vnull, S, Z, Y) -> np.ndarray:
    """Unitary ``X`` maximising ``Re tr(Y^H X^H V^H H^H H Vnull S Z)``.

    The maximiser is the polar factor of ``B = V^H H^H H Vnull S Z Y^H`` and the
    attained value is the nuclear norm of ``B``. Returns the identity when
    ``B`` vanishes.
    """
    H = as_cmatrix(H)
    C = herm(V) @ herm(H) @ H @ Vnull @ S
    B = C @ np.asarray(Z) @ herm(np.asarray(Y, dtype=complex))
    if not np.any(np.abs(B) > 0):
        return np.eye(B.shape[0], dtype=complex)
    return polar_factor(B)


def solve_Z(c, z_budget: float) -> np.ndarray:
    """Diagonal ``Z`` maximising ``sum c_i z_i`` with ``sum z_i^2 <= z``, ``0 <= z_i <= 1``.

    Unclipped entries are proportional to ``c``; entries that would exceed 1
    are fixed at 1 and the rest rescaled to the remaining budget, repeated
    until feasible. An all-zero ``c`` gets the equal split ``sqrt(z/d)``.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    d = c.size
    if not (0.0 <= z_budget <= d + 1e-12):
        raise BudgetRange(f"budget must lie in [0, {d}], got {z_budget}")
    if np.any(c < -1e-9 * max(1.0, np.max(np.abs(c)))):
        raise ValueError("direction weights must be non-negative")
    z_budget = min(float(z_budget), float(d))
    c = np.maximum(c, 0.0)
    if z_budget == 0.0:
        return np.zeros((d, d))
    if not np.any(c > 0):
        return np.diag(np.full(d, np.sqrt(z_budget / d)))
    clipped = np.zeros(d, dtype=bool)
    while True:
        rem = max(z_budget - clipped.sum(), 0.0)
        free = ~clipped
        norm = np.linalg.norm(c[free])
        z = np.ones(d)
        z[free] = c[free] * np.sqrt(rem) / norm if norm > 0 else 0.0
        over = free & (z > 1.0)
        if not over.any():
            return np.diag(np.clip(z, 0.0, 1.0))
        clipped |= over


def y_from_z(Z) -> np.ndarray:
    """Diagonal ``Y`` with ``y_i = sqrt(1 - z_i^2)``."""
    z = np.real(np.diagonal(np.asarray(Z)))
    if np.any(z < 0) or np.any(z > 1):
        raise EntryRange("Z entries must lie in [0, 1]")
    return np.diag(np.sqrt(1.0 - z**2))


def balanced_decomposition(H, V_ia, z_budget: float, n_iter: int = DEFAULT_N_ITER,
                           strict: bool = False) -> BalancedResult:
    """Balanced precoder with all intermediate quantities.

    Parameters
    ----------
    H : array_like, shape (R, M)
        Uplink channel of the user.
    V_ia : array_like, shape (M, d)
        Orthonormal alignment precoder.
    z_budget : float
        Chordal-distance budget in ``[0, d]``.
    n_iter : int
        Number of ``X`` / ``Z`` alternations.
    strict : bool
        Raise instead of warn when ``S`` is degenerate.
    """
    V = check_orthonormal(as_cmatrix(V_ia), tol=1e-9, name="V_ia")
    M, d = V.shape
    if M < 2 * d:
        raise ValueError(f"balanced precoding needs M >= 2d (M={M}, d={d})")
    if not (0.0 <= z_budget <= d):
        raise BudgetRange(f"budget must lie in [0, {d}], got {z_budget}")
    H = as_cmatrix(H)
    Vnull = null_basis(V)
    V_eh = eh_max_precoder(H, d)
    zeh = z_eh(V, V_eh)
    S, degenerate = _compute_S(H, V, Vnull, strict)
    if z_budget > zeh:
        return BalancedResult(V=V_eh, factors=None, Vnull=Vnull, S=S, z_eh=zeh,
                              used_eh=True, degenerate=degenerate)

    C = herm(V) @ herm(H) @ H @ Vnull @ S
    Z = np.diag(np.full(d, np.sqrt(z_budget / d)))
    Y = y_from_z(Z)
    X = np.eye(d, dtype=complex)
    objective = []
    for _ in range(n_iter):
        X = solve_X(H, V, Vnull, S, Z, Y)
        c = np.real(np.diagonal(Y @ herm(X) @ C))
        Z = solve_Z(np.maximum(c, 0.0), z_budget)
        Y = y_from_z(Z)
        objective.append(float(np.real(np.trace(Y @ herm(X) @ C @ Z))))
    factors = CdFactors(X=X, Y=Y, S=S, Z=Z, z_target=float(z_budget))
    return BalancedResult(
        V=factors.assemble(V, Vnull),
        factors=factors,
        Vnull=Vnull,
        S=S,
        objective=np.array(objective),
        z_eh=zeh,
        degenerate=degenerate,
    )


def balanced_precoder(H, V_ia, z_budget: float, n_iter: int = DEFAULT_N_ITER) -> np.ndarray:
    """Precoder at chordal distance at most ``z_budget`` from ``V_ia`` with more harvested power.

    Returns the energy-maximising precoder outright when the budget exceeds
    its distance from ``V_ia``.
    """
    return balanced_decomposition(H, V_ia, z_budget, n_iter).V


def user_budgets(z, n_users: int, users="all") -> np.ndarray:
    """Per-user budget vector from a scalar/vector ``z`` and a user selection.

    ``users`` is ``"all"``, ``"one"`` (only user 0 is displaced) or an
    iterable of 0-based user indices.
    """
    zv = np.broadcast_to(np.asarray(z, dtype=float), (n_users,)).copy()
    if isinstance(users, str):
        if users == "all":
            return zv
        if users == "one":
            users = [0]
        else:
            raise ValueError(f"users must be 'all', 'one' or indices, got {users!r}")
    mask = np.zeros(n_users, dtype=bool)
    mask[list(users)] = True
    zv[~mask] = 0.0
    return zv


def balanced_set(H_up, V, z, n_iter: int = DEFAULT_N_ITER, users="all"):
    """Balanced precoders for every user.

    Returns
    -------
    V_bal : ndarray, shape (2K, M, d)
    results : list of BalancedResult
    """
    V = np.asarray(V, dtype=np.complex128)
    zv = user_budgets(z, V.shape[0], users)
    results = [balanced_decomposition(H_up[j], V[j], zv[j], n_iter) for j in range(V.shape[0])]
    return np.stack([r.V for r in results]), results
