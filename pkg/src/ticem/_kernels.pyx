# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: element scatter into CSR and complex-symmetric PCG."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef double complex cplx


def scatter_stiffness(const double[:, :, ::1] grads, const double[::1] vol,
                      const cplx[::1] zeta, const long long[:, ::1] pos, Py_ssize_t nnz):
    """Accumulate zeta*vol*g_i.g_j into CSR data, element by element in order."""
    cdef Py_ssize_t m = grads.shape[0]
    cdef Py_ssize_t e, i, j
    cdef double dot
    cdef cplx w
    out = np.zeros(nnz, dtype=np.complex128)
    cdef cplx[::1] data = out
    with nogil:
        for e in range(m):
            w = zeta[e] * vol[e]
            for i in range(4):
                for j in range(4):
                    dot = (grads[e, i, 0] * grads[e, j, 0] + grads[e, i, 1] * grads[e, j, 1]
                           + grads[e, i, 2] * grads[e, j, 2])
                    data[pos[e, 4 * i + j]] += w * dot
    return out


cdef inline cplx _matvec_dot(const int* indptr, const int* indices, const cplx* data,
                             const cplx* x, cplx* y, Py_ssize_t n) noexcept nogil:
    """y = A x and return x^T y in the same sweep."""
    cdef Py_ssize_t i, k
    cdef cplx s, dot = 0
    for i in range(n):
        s = 0
        for k in range(indptr[i], indptr[i + 1]):
            s = s + data[k] * x[indices[k]]
        y[i] = s
        dot = dot + x[i] * s
    return dot


def cocg(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
         const cplx[::1] b, const cplx[::1] minv, double rtol, Py_ssize_t max_iter):
    """Jacobi-preconditioned conjugate gradients with unconjugated inner products.

    Returns ``(x, iterations, relative_residual)``.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, it = 0
    x_arr = np.zeros(n, dtype=np.complex128)
    r_arr = np.array(b, dtype=np.complex128)
    z_arr = np.empty(n, dtype=np.complex128)
    p_arr = np.empty(n, dtype=np.complex128)
    q_arr = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] xv = x_arr, rv = r_arr, zv = z_arr, pv = p_arr, qv = q_arr
    cdef cplx* x = &xv[0]
    cdef cplx* r = &rv[0]
    cdef cplx* z = &zv[0]
    cdef cplx* p = &pv[0]
    cdef cplx* q = &qv[0]
    cdef const cplx* mi = &minv[0]
    cdef const int* ip = &indptr[0]
    cdef const int* ix = &indices[0]
    cdef const cplx* av = &data[0]
    cdef double bnorm = 0.0, rnorm = 0.0
    cdef cplx rho, rho_new, pq, alpha, beta
    with nogil:
        for i in range(n):
            bnorm += b[i].real * b[i].real + b[i].imag * b[i].imag
        bnorm = sqrt(bnorm)
        if bnorm > 0.0:
            rho = 0
            for i in range(n):
                z[i] = mi[i] * r[i]
                p[i] = z[i]
                rho = rho + r[i] * z[i]
            rnorm = 1.0
            while it < max_iter:
                pq = _matvec_dot(ip, ix, av, p, q, n)
                if pq == 0:
                    break
                alpha = rho / pq
                rnorm = 0.0
                rho_new = 0
                for i in range(n):
                    x[i] = x[i] + alpha * p[i]
                    r[i] = r[i] - alpha * q[i]
                    rnorm += r[i].real * r[i].real + r[i].imag * r[i].imag
                    z[i] = mi[i] * r[i]
                    rho_new = rho_new + r[i] * z[i]
                it += 1
                rnorm = sqrt(rnorm) / bnorm
                if rnorm <= rtol:
                    break
                beta = rho_new / rho
                rho = rho_new
                for i in range(n):
                    p[i] = z[i] + beta * p[i]
    return x_arr, it, rnorm
