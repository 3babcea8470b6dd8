"""Pure NumPy/SciPy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
import scipy.sparse as sp


def scatter_stiffness(grads, vol, zeta, pos, nnz):
    local = np.einsum("eik,ejk->eij", grads, grads) * (zeta * vol)[:, None, None]
    flat = pos.reshape(-1)
    vals = local.reshape(-1)
    # bincount adds in input order, i.e. element by element
    re = np.bincount(flat, weights=vals.real, minlength=nnz)
    im = np.bincount(flat, weights=vals.imag, minlength=nnz)
    return re + 1j * im


def cocg(indptr, indices, data, b, minv, rtol, max_iter):
    n = len(b)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros(n, dtype=complex)
    r = np.array(b, dtype=complex)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    z = minv * r
    p = z.copy()
    rho = r @ z
    rnorm = 1.0
    it = 0
    while it < max_iter:
        q = A @ p
        pq = p @ q
        if pq == 0:
            break
        alpha = rho / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        rnorm = np.linalg.norm(r) / bnorm
        if rnorm <= rtol:
            break
        z = minv * r
        rho_new = r @ z
        beta = rho_new / rho
        rho = rho_new
        p = z + beta * p
    return x, it, float(rnorm)
