# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for small dense complex matrices.

Same surface as ``twrswipt._fallback``. All loops work on C-contiguous
complex128 buffers; matrices are at most a few dozen rows, so plain loops
beat BLAS call overhead.
"""

import numpy as np
from libc.math cimport sqrt, fabs, INFINITY

ctypedef double complex cplx


cdef inline double abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _gram_schmidt(cplx[:, ::1] Q, int m, int n) noexcept nogil:
    # In-place two-pass Gram-Schmidt on the columns of Q (positive R diagonal).
    cdef int i, j, p, it
    cdef cplx s
    cdef double nrm
    for j in range(n):
        for it in range(2):
            for p in range(j):
                s = 0
                for i in range(m):
                    s = s + Q[i, p].conjugate() * Q[i, j]
                for i in range(m):
                    Q[i, j] = Q[i, j] - s * Q[i, p]
        nrm = 0
        for i in range(m):
            nrm += abs2(Q[i, j])
        if nrm <= 0:
            return -1
        nrm = sqrt(nrm)
        for i in range(m):
            Q[i, j] = Q[i, j] / nrm
    return 0


cdef int _chol_solve(cplx[:, ::1] A, cplx[:, ::1] B, int n, int m) noexcept nogil:
    # Overwrites A with its Cholesky factor and B with A^{-1} B.
    cdef int i, j, p, c
    cdef double s
    cdef cplx t
    for j in range(n):
        s = A[j, j].real
        for p in range(j):
            s -= abs2(A[j, p])
        if s <= 0:
            return -1
        s = sqrt(s)
        A[j, j] = s
        for i in range(j + 1, n):
            t = A[i, j]
            for p in range(j):
                t = t - A[i, p] * A[j, p].conjugate()
            A[i, j] = t / s
    for c in range(m):
        for i in range(n):
            t = B[i, c]
            for p in range(i):
                t = t - A[i, p] * B[p, c]
            B[i, c] = t / A[i, i].real
        for i in range(n - 1, -1, -1):
            t = B[i, c]
            for p in range(i + 1, n):
                t = t - A[p, i].conjugate() * B[p, c]
            B[i, c] = t / A[i, i].real
    return 0


def orthonormalize(A):
    """Thin QR factor of ``A`` with a positive real R diagonal (Gram-Schmidt)."""
    arr = np.array(A, dtype=np.complex128, order="C", copy=True)
    if arr.ndim == 3:
        return np.stack([orthonormalize(a) for a in arr])
    cdef cplx[:, ::1] Q = arr
    if _gram_schmidt(Q, arr.shape[0], arr.shape[1]) != 0:
        raise np.linalg.LinAlgError("zero column encountered in orthonormalize")
    return arr


def eigh(A, int max_sweeps=100):
    """Cyclic Jacobi eigensolver for a Hermitian matrix.

    Returns unsorted eigenvalues and the matching unitary eigenvector matrix.
    """
    arr = np.array(A, dtype=np.complex128, order="C", copy=True)
    cdef int n = arr.shape[0]
    vec = np.eye(n, dtype=np.complex128)
    cdef cplx[:, ::1] a = arr
    cdef cplx[:, ::1] W = vec
    cdef int p, q, i, sweep
    cdef double off, scale, r, theta, t, c, s
    cdef cplx ph, jpp, jpq, jqp, jqq, x, y
    with nogil:
        scale = 0
        for i in range(n):
            for p in range(n):
                scale += abs2(a[i, p])
        for sweep in range(max_sweeps):
            off = 0
            for p in range(n):
                for q in range(p + 1, n):
                    off += abs2(a[p, q])
            if off <= 1e-34 * scale or off == 0:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    r = sqrt(abs2(a[p, q]))
                    if r <= 1e-300:
                        continue
                    ph = a[p, q] / r
                    theta = (a[q, q].real - a[p, p].real) / (2.0 * r)
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    # J = diag(1, conj(ph)) @ [[c, s], [-s, c]] on the (p, q) plane
                    jpp = c
                    jpq = s
                    jqp = -s * ph.conjugate()
                    jqq = c * ph.conjugate()
                    for i in range(n):
                        x = a[i, p]
                        y = a[i, q]
                        a[i, p] = x * jpp + y * jqp
                        a[i, q] = x * jpq + y * jqq
                    for i in range(n):
                        x = a[p, i]
                        y = a[q, i]
                        a[p, i] = jpp.conjugate() * x + jqp.conjugate() * y
                        a[q, i] = jpq.conjugate() * x + jqq.conjugate() * y
                    a[p, q] = 0
                    a[q, p] = 0
                    a[p, p] = a[p, p].real
                    a[q, q] = a[q, q].real
                    for i in range(n):
                        x = W[i, p]
                        y = W[i, q]
                        W[i, p] = x * jpp + y * jqp
                        W[i, q] = x * jpq + y * jqq
    w = np.real(np.diagonal(arr)).copy()
    return w, vec


def twria_loop(F, Hu, HHd, P, V0, double Pr, double sigma2, double rbar,
               double rbar_sid2, int K, int max_iter, double tol):
    """Run TWR-IA sweeps; see ``twrswipt._fallback.twria_loop`` for the contract."""
    Fa = np.ascontiguousarray(F, dtype=np.complex128)
    Hua = np.ascontiguousarray(Hu, dtype=np.complex128)
    HHa = np.ascontiguousarray(HHd, dtype=np.complex128)
    Pa = np.ascontiguousarray(P, dtype=np.float64)
    Va = np.array(V0, dtype=np.complex128, order="C", copy=True)
    cdef int n = Va.shape[0]
    cdef int M = Va.shape[1]
    cdef int d = Va.shape[2]
    cdef int R = Hua.shape[1]
    Ua = np.zeros((n, M, d), dtype=np.complex128)
    FVa = np.zeros((n, n, M, d), dtype=np.complex128)
    FhUa = np.zeros((n, n, M, d), dtype=np.complex128)
    Aa = np.zeros((M, M), dtype=np.complex128)
    Ba = np.zeros((M, d), dtype=np.complex128)
    tra = np.zeros(max(max_iter, 1), dtype=np.float64)
    trHa = np.real(np.trace(HHa, axis1=1, axis2=2)).copy()

    cdef const cplx[:, :, :, ::1] f = Fa
    cdef const cplx[:, :, ::1] hu = Hua
    cdef const cplx[:, :, ::1] hh = HHa
    cdef const double[::1] pw = Pa
    cdef double[::1] trh = trHa
    cdef cplx[:, :, ::1] v = Va
    cdef cplx[:, :, ::1] u = Ua
    cdef cplx[:, :, :, ::1] fv = FVa
    cdef cplx[:, :, :, ::1] fhu = FhUa
    cdef cplx[:, ::1] A = Aa
    cdef cplx[:, ::1] B = Ba
    cdef double[::1] trace = tra

    cdef int it, k, j, m, nn, r, c, e, pk, count = 0, status = 0
    cdef double sig, a2, a, wj, eps, mse, prev = INFINITY, rel, lin, nrm, noise
    cdef cplx acc, g

    with nogil:
        for it in range(max_iter):
            # relay gain from the current precoders
            sig = 0
            for j in range(n):
                nrm = 0
                for r in range(R):
                    for c in range(d):
                        acc = 0
                        for m in range(M):
                            acc = acc + hu[j, r, m] * v[j, m, c]
                        nrm += abs2(acc)
                sig += pw[j] / d * nrm
            a2 = Pr / (rbar * sig + rbar_sid2 * R)
            a = sqrt(a2)

            for k in range(n):
                for j in range(n):
                    for m in range(M):
                        for c in range(d):
                            acc = 0
                            for nn in range(M):
                                acc = acc + f[k, j, m, nn] * v[j, nn, c]
                            fv[k, j, m, c] = acc

            # combiners
            for k in range(n):
                pk = (k + K) % n
                for m in range(M):
                    for nn in range(M):
                        A[m, nn] = rbar_sid2 * a2 * hh[k, m, nn]
                    A[m, m] = A[m, m] + sigma2
                for j in range(n):
                    if j == k:
                        continue
                    wj = a2 * rbar * pw[j] / d
                    for m in range(M):
                        for nn in range(m + 1):
                            acc = 0
                            for c in range(d):
                                acc = acc + fv[k, j, m, c] * fv[k, j, nn, c].conjugate()
                            A[m, nn] = A[m, nn] + wj * acc
                for m in range(M):
                    for nn in range(m + 1, M):
                        A[m, nn] = A[nn, m].conjugate()
                wj = a * rbar * pw[pk] / d
                for m in range(M):
                    for c in range(d):
                        B[m, c] = wj * fv[k, pk, m, c]
                if _chol_solve(A, B, M, d) != 0:
                    status = -1
                    break
                if _gram_schmidt(B, M, d) != 0:
                    status = -2
                    break
                for m in range(M):
                    for c in range(d):
                        u[k, m, c] = B[m, c]
            if status != 0:
                break

            for k in range(n):
                for j in range(n):
                    for m in range(M):
                        for c in range(d):
                            acc = 0
                            for nn in range(M):
                                acc = acc + f[k, j, nn, m].conjugate() * u[k, nn, c]
                            fhu[k, j, m, c] = acc

            # precoders
            for j in range(n):
                pk = (j + K) % n
                eps = (d / pw[j]) * (rbar_sid2 * a2 * trh[j] + sigma2 * M) / M
                for m in range(M):
                    for nn in range(M):
                        A[m, nn] = 0
                    A[m, m] = eps
                for k in range(n):
                    if k == j:
                        continue
                    for m in range(M):
                        for nn in range(m + 1):
                            acc = 0
                            for c in range(d):
                                acc = acc + fhu[k, j, m, c] * fhu[k, j, nn, c].conjugate()
                            A[m, nn] = A[m, nn] + a2 * acc
                for m in range(M):
                    for nn in range(m + 1, M):
                        A[m, nn] = A[nn, m].conjugate()
                for m in range(M):
                    for c in range(d):
                        B[m, c] = a * fhu[pk, j, m, c]
                if _chol_solve(A, B, M, d) != 0:
                    status = -3
                    break
                if _gram_schmidt(B, M, d) != 0:
                    status = -4
                    break
                for m in range(M):
                    for c in range(d):
                        v[j, m, c] = B[m, c]
            if status != 0:
                break

            # total MSE with this sweep's gain
            mse = 0
            noise = 0
            for k in range(n):
                mse += pw[k]
                pk = (k + K) % n
                for j in range(n):
                    if j == k:
                        continue
                    nrm = 0
                    lin = 0
                    for e in range(d):
                        for c in range(d):
                            g = 0
                            for m in range(M):
                                g = g + fhu[k, j, m, e].conjugate() * v[j, m, c]
                            g = a * g
                            nrm += abs2(g)
                            if e == c:
                                lin += g.real
                    mse += rbar * pw[j] / d * nrm
                    if j == pk:
                        mse -= 2.0 * rbar * pw[pk] / d * lin
                for c in range(d):
                    for m in range(M):
                        acc = 0
                        for nn in range(M):
                            acc = acc + hh[k, m, nn] * u[k, nn, c]
                        noise += (u[k, m, c].conjugate() * acc).real
            mse += rbar_sid2 * a2 * noise + sigma2 * d * n
            trace[count] = mse
            count += 1
            if mse > 0:
                rel = fabs(mse - prev) / mse
            else:
                rel = fabs(mse - prev)
            prev = mse
            if not rel > tol:
                break

    if status != 0:
        raise np.linalg.LinAlgError(f"TWR-IA kernel failed (status {status})")
    return Va, Ua, tra[:count].copy()
