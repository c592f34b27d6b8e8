"""Dense complex matrix kernels shared by every other module.

Conventions
-----------
* Rank decisions use a tolerance relative to the largest singular value
  (``RANK_RTOL``).
* QR-based orthonormalisation returns the unique factor whose triangular
  part has a real, positive diagonal.
* Eigenvectors returned by :func:`hermitian_eig` are ordered by descending
  eigenvalue and each column is rotated so that its largest-magnitude entry
  is real and positive.
"""

import numpy as np

from . import _backend
from .errors import NotHermitian, NotOrthonormal, RankDeficient, Singular

RANK_RTOL = 1e-12
HERMITIAN_RTOL = 1e-10
ORTHO_TOL = 1e-10


def as_cmatrix(A):
    """Return ``A`` as a finite 2-D complex128 array."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def herm(A):
    """Conjugate transpose of the trailing two axes."""
    return np.conj(np.swapaxes(A, -1, -2))


def _check_rank(A, rtol):
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0 or s[-1] <= rtol * s[0]:
        raise RankDeficient(
            f"matrix of shape {A.shape} is rank deficient "
            f"(sigma_min/sigma_max = {s[-1] / s[0] if s[0] else 0.0:.3e})"
        )


def orthonormalize(A, rtol=RANK_RTOL):
    """Orthonormal basis for the column space of a tall full-rank matrix.

    Parameters
    ----------
    A : array_like, shape (m, n) with m >= n
    rtol : float
        Relative singular-value threshold below which ``A`` is rejected.

    Returns
    -------
    Q : ndarray, shape (m, n)
        ``Q^H Q = I`` and ``A = Q R`` with ``R`` upper triangular with a
        positive real diagonal.
    """
    A = as_cmatrix(A)
    m, n = A.shape
    if m < n:
        raise ValueError(f"orthonormalize needs a tall matrix, got {A.shape}")
    _check_rank(A, rtol)
    return _backend.kernels.orthonormalize(A)


def qr_positive(A):
    """Thin QR with a real non-negative R diagonal; tolerates rank deficiency."""
    A = np.asarray(A, dtype=np.complex128)
    Q, R = np.linalg.qr(A)
    diag = np.diagonal(R).copy()
    mag = np.abs(diag)
    phase = np.ones_like(diag)
    nz = mag > 0
    phase[nz] = diag[nz] / mag[nz]
    return Q * phase[None, :], R * np.conj(phase)[:, None]


def polar_factor(A):
    """Orthonormal polar factor ``A (A^H A)^{-1/2}``, computed from the SVD.

    For a square ``A`` this is the unitary ``X`` maximising ``Re tr(X^H A)``.
    """
    A = np.asarray(A, dtype=np.complex128)
    W, _, Zh = np.linalg.svd(A, full_matrices=False)
    return W @ Zh


def is_hermitian(A, rtol=HERMITIAN_RTOL):
    A = np.asarray(A)
    scale = np.linalg.norm(A)
    return np.linalg.norm(A - herm(A)) <= rtol * scale or scale == 0


def hermitian_eig(A):
    """Eigen-decomposition of a Hermitian matrix.

    Returns
    -------
    w : ndarray, shape (n,)
        Real eigenvalues in descending order.
    W : ndarray, shape (n, n)
        Unitary matrix of eigenvectors, ``A = W diag(w) W^H``.

    Raises
    ------
    NotHermitian
        If ``||A - A^H||_F >= 1e-10 ||A||_F``.
    """
    A = as_cmatrix(A)
    if A.shape[0] != A.shape[1]:
        raise NotHermitian(f"matrix is not square: {A.shape}")
    if not is_hermitian(A):
        raise NotHermitian("matrix is not Hermitian")
    A = 0.5 * (A + herm(A))
    w, W = _backend.kernels.eigh(A)
    order = np.argsort(-w, kind="stable")
    w = np.asarray(w)[order]
    W = np.asarray(W)[:, order]
    return w, _fix_phase(W)


def _fix_phase(W):
    pivot = np.argmax(np.abs(W), axis=0)
    lead = W[pivot, np.arange(W.shape[1])]
    return W * (np.abs(lead) / lead)[None, :]


def check_orthonormal(V, tol=ORTHO_TOL, name="V"):
    V = np.asarray(V, dtype=np.complex128)
    err = np.linalg.norm(herm(V) @ V - np.eye(V.shape[-1]))
    if not err < tol:
        raise NotOrthonormal(f"{name} is not orthonormal (||V^H V - I||_F = {err:.3e})")
    return V


def null_basis(V):
    """Orthonormal basis of the orthogonal complement of ``span(V)``.

    The completion is built by Gram-Schmidt over the canonical basis vectors,
    always taking the one with the largest residual next, so the result is
    deterministic and ``[V, N]`` is unitary.

    Parameters
    ----------
    V : array_like, shape (M, d)
        Orthonormal, ``M > d``.

    Returns
    -------
    N : ndarray, shape (M, M - d)
    """
    V = check_orthonormal(as_cmatrix(V))
    M, d = V.shape
    if M <= d:
        raise ValueError(f"null space of an {M}x{d} orthonormal matrix is empty")
    return _complete(V, M - d)


def _complete(Q, extra):
    M = Q.shape[0]
    cols = [Q[:, i] for i in range(Q.shape[1])]
    out = []
    eye = np.eye(M, dtype=np.complex128)
    for _ in range(extra):
        basis = np.column_stack(cols) if cols else np.zeros((M, 0), complex)
        resid = eye - basis @ (herm(basis) @ eye)
        i = int(np.argmax(np.sum(np.abs(resid) ** 2, axis=0)))
        q = resid[:, i]
        q = q - basis @ (herm(basis) @ q)
        q = q / np.linalg.norm(q)
        cols.append(q)
        out.append(q)
    return np.column_stack(out)


def complete_basis(A, n_cols, rtol=RANK_RTOL):
    """Orthonormal ``(m, n_cols)`` basis whose leading columns span ``A``'s range.

    Columns of ``A`` that add less than ``rtol`` (relative) to the span are
    dropped and replaced by a deterministic completion. Returns the basis and
    the number of columns that came from ``A``.
    """
    A = np.asarray(A, dtype=np.complex128)
    m = A.shape[0]
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    cols = []
    for i in range(A.shape[1]):
        q = A[:, i].copy()
        for _ in range(2):
            for c in cols:
                q = q - c * np.vdot(c, q)
        nrm = np.linalg.norm(q)
        if scale > 0 and nrm > 1e-8 * scale:
            cols.append(q / nrm)
        if len(cols) == n_cols:
            break
    kept = len(cols)
    Q = np.column_stack(cols) if cols else np.zeros((m, 0), complex)
    if kept < n_cols:
        Q = np.column_stack([Q, _complete(Q, n_cols - kept)])
    return Q, kept


def inv_sqrt_psd(A, rtol=RANK_RTOL, full=False):
    """Hermitian ``B`` with ``B A B = I`` on the support of a PSD matrix ``A``.

    Eigenvalues at or below ``rtol * max_eig`` are treated as zero and left
    out (pseudo-inverse square root) unless ``full`` is set, in which case a
    rank-deficient input raises :class:`Singular`.
    """
    w, W = hermitian_eig(A)
    top = max(w[0], 0.0)
    keep = w > rtol * top
    if full and not np.all(keep):
        raise Singular("matrix is singular; full inverse square root requested")
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (W * inv[None, :]) @ herm(W)


def nuclear_norm(B):
    """Sum of singular values of ``B``."""
    B = np.asarray(B, dtype=np.complex128)
    if B.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(B, compute_uv=False)))
