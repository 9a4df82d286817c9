# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Jacobi kernels.

Line-by-line twin of ``_pykernels.py``: identical sweep order and rotation
arithmetic (explicit real/imaginary operations, no complex division, no
hypot), compiled with -ffp-contract=off, so results are bit-identical to
the pure-Python backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND = "compiled"


def jacobi_eigh(a, double tol=1e-12, int max_sweeps=100):
    """Cyclic complex Jacobi on a Hermitian matrix; see the Python twin."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] A = np.array(a, dtype=np.complex128, order="C")
    cdef int n = A.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] V = np.eye(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(n, dtype=np.float64)

    cdef double fro2 = 0.0, thresh2, off2
    cdef double re, im, mag2, mag, er, ei, tau, sgn, t, c, s, br, bi, b2r, b2i
    cdef double xr, xi, yr, yi, cr, ci
    cdef int i, j, p, q, sweep

    for i in range(n):
        for j in range(n):
            re = A[i, j].real
            im = A[i, j].imag
            fro2 += re * re + im * im
    thresh2 = (tol * tol) * fro2

    for sweep in range(max_sweeps):
        off2 = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                re = A[i, j].real
                im = A[i, j].imag
                off2 += 2.0 * (re * re + im * im)
        if off2 <= thresh2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                re = A[p, q].real
                im = A[p, q].imag
                mag2 = re * re + im * im
                if mag2 == 0.0:
                    continue
                mag = sqrt(mag2)
                er = re / mag
                ei = im / mag
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                sgn = 1.0 if tau >= 0.0 else -1.0
                t = sgn / (fabs(tau) + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                # columns: x' = c x - (s e^{-it}) y ; y' = (s e^{it}) x + c y
                br = s * er
                bi = s * (-ei)
                b2r = s * er
                b2i = s * ei
                for i in range(n):
                    xr = A[i, p].real
                    xi = A[i, p].imag
                    yr = A[i, q].real
                    yi = A[i, q].imag
                    cr = br * yr - bi * yi
                    ci = br * yi + bi * yr
                    A[i, p] = (c * xr - cr) + (c * xi - ci) * 1j
                    cr = b2r * xr - b2i * xi
                    ci = b2r * xi + b2i * xr
                    A[i, q] = (cr + c * yr) + (ci + c * yi) * 1j
                # rows: x' = c x - (s e^{it}) y ; y' = (s e^{-it}) x + c y
                for i in range(n):
                    xr = A[p, i].real
                    xi = A[p, i].imag
                    yr = A[q, i].real
                    yi = A[q, i].imag
                    cr = b2r * yr - b2i * yi
                    ci = b2r * yi + b2i * yr
                    A[p, i] = (c * xr - cr) + (c * xi - ci) * 1j
                    cr = br * xr - bi * xi
                    ci = br * xi + bi * xr
                    A[q, i] = (cr + c * yr) + (ci + c * yi) * 1j
                for i in range(n):
                    xr = V[i, p].real
                    xi = V[i, p].imag
                    yr = V[i, q].real
                    yi = V[i, q].imag
                    cr = br * yr - bi * yi
                    ci = br * yi + bi * yr
                    V[i, p] = (c * xr - cr) + (c * xi - ci) * 1j
                    cr = b2r * xr - b2i * xi
                    ci = b2r * xi + b2i * xr
                    V[i, q] = (cr + c * yr) + (ci + c * yi) * 1j

    for i in range(n):
        w[i] = A[i, i].real
    return w, V


def hestenes_svd(t, double tol=1e-12, int max_sweeps=100):
    """One-sided Jacobi on a tall matrix; see the Python twin."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] W = np.array(t, dtype=np.complex128, order="C")
    cdef int n = W.shape[0]
    cdef int m = W.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] V = np.eye(m, dtype=np.complex128)

    cdef double app, aqq, ar, ai, mag2, mag, er, ei, tau, sgn, tt, c, s
    cdef double br, bi, b2r, b2i, xr, xi, yr, yi, cr, ci
    cdef int i, p, q, sweep
    cdef bint rotated

    for sweep in range(max_sweeps):
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                app = 0.0
                aqq = 0.0
                ar = 0.0
                ai = 0.0
                for i in range(n):
                    xr = W[i, p].real
                    xi = W[i, p].imag
                    yr = W[i, q].real
                    yi = W[i, q].imag
                    app += xr * xr + xi * xi
                    aqq += yr * yr + yi * yi
                    ar += xr * yr + xi * yi
                    ai += xr * yi - xi * yr
                mag2 = ar * ar + ai * ai
                if mag2 <= (tol * tol) * app * aqq or mag2 == 0.0:
                    continue
                rotated = True
                mag = sqrt(mag2)
                er = ar / mag
                ei = ai / mag
                tau = (aqq - app) / (2.0 * mag)
                sgn = 1.0 if tau >= 0.0 else -1.0
                tt = sgn / (fabs(tau) + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + tt * tt)
                s = tt * c
                br = s * er
                bi = s * (-ei)
                b2r = s * er
                b2i = s * ei
                for i in range(n):
                    xr = W[i, p].real
                    xi = W[i, p].imag
                    yr = W[i, q].real
                    yi = W[i, q].imag
                    cr = br * yr - bi * yi
                    ci = br * yi + bi * yr
                    W[i, p] = (c * xr - cr) + (c * xi - ci) * 1j
                    cr = b2r * xr - b2i * xi
                    ci = b2r * xi + b2i * xr
                    W[i, q] = (cr + c * yr) + (ci + c * yi) * 1j
                for i in range(m):
                    xr = V[i, p].real
                    xi = V[i, p].imag
                    yr = V[i, q].real
                    yi = V[i, q].imag
                    cr = br * yr - bi * yi
                    ci = br * yi + bi * yr
                    V[i, p] = (c * xr - cr) + (c * xi - ci) * 1j
                    cr = b2r * xr - b2i * xi
                    ci = b2r * xi + b2i * xr
                    V[i, q] = (cr + c * yr) + (ci + c * yi) * 1j
        if not rotated:
            break

    return W, V
