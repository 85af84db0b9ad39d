# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled folds of lifted CP maps.

Same contracts as :mod:`cpkern._pykernels`; see that module for the
reference semantics. Matrices are C-contiguous complex128. Hermitian
eigenvalues come from LAPACK ``zheev``; a row-major Hermitian matrix read
column-major is its conjugate, which has the same spectrum.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs, INFINITY
from scipy.linalg.cython_lapack cimport zheev

cnp.import_array()

ctypedef double complex cplx


cdef void _psi(const cplx[:, :, ::1] gam, Py_ssize_t count, const cplx[:, ::1] T,
               cplx[:, ::1] tmp, cplx[:, ::1] out) noexcept nogil:
    """out = herm(sum_r G_r^H T G_r) using tmp as scratch."""
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t r, i, j, k
    cdef cplx acc, g
    for i in range(m):
        for j in range(m):
            out[i, j] = 0
    for r in range(count):
        # tmp = T G_r
        for i in range(m):
            for j in range(m):
                acc = 0
                for k in range(m):
                    acc = acc + T[i, k] * gam[r, k, j]
                tmp[i, j] = acc
        # out += G_r^H tmp
        for i in range(m):
            for j in range(m):
                acc = 0
                for k in range(m):
                    g = gam[r, k, i]
                    acc = acc + (g.real - 1j * g.imag) * tmp[k, j]
                out[i, j] = out[i, j] + acc
    for i in range(m):
        out[i, i] = out[i, i].real
        for j in range(i + 1, m):
            acc = 0.5 * (out[i, j] + (out[j, i].real - 1j * out[j, i].imag))
            out[i, j] = acc
            out[j, i] = acc.real - 1j * acc.imag


cdef int _eigvalsh(const cplx[:, ::1] A, cplx[:, ::1] work_a, double[::1] w,
                   cplx[::1] work, double[::1] rwork) noexcept nogil:
    """Ascending eigenvalues of Hermitian A into w; returns LAPACK info."""
    cdef int n = <int>A.shape[0]
    cdef int lda = n if n > 0 else 1
    cdef int lwork = <int>work.shape[0]
    cdef int info = 0
    cdef Py_ssize_t i, j
    cdef char jobz = b'N'
    cdef char uplo = b'L'
    if n == 0:
        return 0
    for i in range(n):
        for j in range(n):
            work_a[i, j] = A[i, j]
    zheev(&jobz, &uplo, &n, &work_a[0, 0], &lda, &w[0], &work[0], &lwork, &rwork[0], &info)
    return info


cdef class _Workspace:
    cdef public object tmp, out, work_a, w, work, rwork

    def __init__(self, Py_ssize_t m):
        cdef Py_ssize_t mm = m if m > 0 else 1
        self.tmp = np.zeros((mm, mm), dtype=np.complex128)
        self.out = np.zeros((mm, mm), dtype=np.complex128)
        self.work_a = np.zeros((mm, mm), dtype=np.complex128)
        self.w = np.zeros(mm, dtype=np.float64)
        self.work = np.zeros(max(1, 4 * mm), dtype=np.complex128)
        self.rwork = np.zeros(max(1, 3 * mm - 2), dtype=np.float64)


def psi_apply(const cplx[:, :, ::1] gam, const cplx[:, ::1] T):
    cdef Py_ssize_t m = T.shape[0]
    tmp = np.empty((m, m), dtype=np.complex128)
    out = np.empty((m, m), dtype=np.complex128)
    cdef cplx[:, ::1] tmp_v = tmp
    cdef cplx[:, ::1] out_v = out
    with nogil:
        _psi(gam, gam.shape[0], T, tmp_v, out_v)
    return out


def eigvalsh(const cplx[:, ::1] A):
    ws = _Workspace(A.shape[0])
    cdef double[::1] w = ws.w
    cdef cplx[:, ::1] work_a = ws.work_a
    cdef cplx[::1] work = ws.work
    cdef double[::1] rwork = ws.rwork
    cdef int info
    with nogil:
        info = _eigvalsh(A, work_a, w, work, rwork)
    if info != 0:
        raise ArithmeticError(f"zheev failed with info={info}")
    return np.asarray(w)[:A.shape[0]].copy()


def fold_word(const cplx[:, :, :, ::1] gam_stack, const long[::1] counts,
              const long[::1] word, const cplx[:, ::1] seed):
    """Right fold Psi_{w0}(...Psi_{w_{n-1}}(seed)) with op-norm rescaling.

    Returns ``(B, log_scale)`` with the true result ``B * exp(log_scale)``;
    ``log_scale`` is ``-inf`` when the fold hits the zero matrix.
    """
    cdef Py_ssize_t m = seed.shape[0]
    cdef Py_ssize_t n = word.shape[0]
    cdef Py_ssize_t k, i, j
    cdef long lab
    cdef double c, log_scale = 0.0
    cdef int info = 0
    B = np.array(seed, dtype=np.complex128, copy=True)
    C = np.empty_like(B)
    ws = _Workspace(m)
    cdef cplx[:, ::1] Bv = B
    cdef cplx[:, ::1] Cv = C
    cdef cplx[:, ::1] tmp = ws.tmp
    cdef cplx[:, ::1] work_a = ws.work_a
    cdef double[::1] w = ws.w
    cdef cplx[::1] work = ws.work
    cdef double[::1] rwork = ws.rwork
    cdef cplx[:, ::1] swap
    with nogil:
        for k in range(n - 1, -1, -1):
            lab = word[k]
            _psi(gam_stack[lab], counts[lab], Bv, tmp, Cv)
            swap = Bv
            Bv = Cv
            Cv = swap
            info = _eigvalsh(Bv, work_a, w, work, rwork)
            if info != 0:
                break
            c = fabs(w[0]) if fabs(w[0]) > fabs(w[m - 1]) else fabs(w[m - 1])
            if c == 0.0:
                log_scale = -INFINITY
                break
            log_scale += log(c)
            for i in range(m):
                for j in range(m):
                    Bv[i, j] = Bv[i, j] / c
    if info != 0:
        raise ArithmeticError(f"zheev failed with info={info}")
    return np.asarray(Bv).copy(), log_scale


def reversed_log_norms(const cplx[:, :, :, ::1] gam_stack, const long[::1] counts,
                       const long[::1] path, bint renorm):
    """X_k = 0.5 log ||B_k|| for B_k = Psi_{z_k}(B_{k-1}), B_0 = I.

    Returns ``(X, status)``: status 0 ok, 1 exact zero reached (remaining X
    are -inf), 2 underflow/overflow without renormalization.
    """
    cdef Py_ssize_t m = gam_stack.shape[2]
    cdef Py_ssize_t n = path.shape[0]
    cdef Py_ssize_t k, i, j
    cdef long lab
    cdef double c, acc = 0.0
    cdef int info = 0, status = 0
    X = np.empty(n, dtype=np.float64)
    cdef double[::1] Xv = X
    B = np.eye(m, dtype=np.complex128)
    C = np.empty_like(B)
    ws = _Workspace(m)
    cdef cplx[:, ::1] Bv = B
    cdef cplx[:, ::1] Cv = C
    cdef cplx[:, ::1] tmp = ws.tmp
    cdef cplx[:, ::1] work_a = ws.work_a
    cdef double[::1] w = ws.w
    cdef cplx[::1] work = ws.work
    cdef double[::1] rwork = ws.rwork
    cdef cplx[:, ::1] swap
    with nogil:
        for k in range(n):
            lab = path[k]
            _psi(gam_stack[lab], counts[lab], Bv, tmp, Cv)
            swap = Bv
            Bv = Cv
            Cv = swap
            info = _eigvalsh(Bv, work_a, w, work, rwork)
            if info != 0:
                break
            c = fabs(w[0]) if fabs(w[0]) > fabs(w[m - 1]) else fabs(w[m - 1])
            if renorm:
                if c == 0.0:
                    status = 1
                    for j in range(k, n):
                        Xv[j] = -INFINITY
                    break
                Xv[k] = 0.5 * (log(c) + acc)
                acc += log(c)
                for i in range(m):
                    for j in range(m):
                        Bv[i, j] = Bv[i, j] / c
            else:
                if not (c > 2.2250738585072014e-308 and c < 1.7976931348623157e308):
                    status = 2
                    break
                Xv[k] = 0.5 * log(c)
    if info != 0:
        raise ArithmeticError(f"zheev failed with info={info}")
    return X, status


def fixed_point_iteration(const cplx[:, :, ::1] gam, long max_iter, double conv_tol):
    """Iterate D_{n+1} = Psi(D_n) from D_0 = I until ||D_{n+1} - D_n|| <= conv_tol.

    Returns ``(D, iterations, step_residual, op_norm, projection_defect,
    monotone_min_eig)``; the arrays hold one entry per iteration.
    """
    cdef Py_ssize_t m = gam.shape[1]
    cdef Py_ssize_t count = gam.shape[0]
    cdef long it = 0
    cdef Py_ssize_t i, j
    cdef double step, top, mu, pd
    cdef int info = 0
    D = np.eye(m, dtype=np.complex128)
    Dn = np.empty_like(D)
    diff = np.empty_like(D)
    ws = _Workspace(m)
    steps = np.empty(max_iter, dtype=np.float64)
    norms = np.empty(max_iter, dtype=np.float64)
    defects = np.empty(max_iter, dtype=np.float64)
    mono = np.empty(max_iter, dtype=np.float64)
    cdef double[::1] steps_v = steps
    cdef double[::1] norms_v = norms
    cdef double[::1] defects_v = defects
    cdef double[::1] mono_v = mono
    cdef cplx[:, ::1] Dv = D
    cdef cplx[:, ::1] Nv = Dn
    cdef cplx[:, ::1] diff_v = diff
    cdef cplx[:, ::1] tmp = ws.tmp
    cdef cplx[:, ::1] work_a = ws.work_a
    cdef double[::1] w = ws.w
    cdef cplx[::1] work = ws.work
    cdef double[::1] rwork = ws.rwork
    cdef cplx[:, ::1] swap
    with nogil:
        while it < max_iter:
            _psi(gam, count, Dv, tmp, Nv)
            for i in range(m):
                for j in range(m):
                    diff_v[i, j] = Dv[i, j] - Nv[i, j]
            info = _eigvalsh(diff_v, work_a, w, work, rwork)
            if info != 0:
                break
            if m > 0:
                step = fabs(w[0]) if fabs(w[0]) > fabs(w[m - 1]) else fabs(w[m - 1])
                mono_v[it] = w[0]
            else:
                step = 0.0
                mono_v[it] = 0.0
            info = _eigvalsh(Nv, work_a, w, work, rwork)
            if info != 0:
                break
            top = 0.0
            pd = 0.0
            for i in range(m):
                mu = w[i]
                if fabs(mu) > top:
                    top = fabs(mu)
                if fabs(mu * mu - mu) > pd:
                    pd = fabs(mu * mu - mu)
            steps_v[it] = step
            norms_v[it] = top
            defects_v[it] = pd
            it += 1
            swap = Dv
            Dv = Nv
            Nv = swap
            if step <= conv_tol:
                break
    if info != 0:
        raise ArithmeticError(f"zheev failed with info={info}")
    return (np.asarray(Dv).copy(), int(it), steps[:it].copy(), norms[:it].copy(),
            defects[:it].copy(), mono[:it].copy())
