"""Pure-Python twin of the compiled Jacobi kernels.

Kept line-by-line equivalent to ``_ckernels.pyx`` so that both backends
produce bit-identical results: same sweep order, same rotation formulas,
no complex division, no hypot, no fused multiply-add.  Matrices here are
tiny (n <= 12), so scalar Python loops are acceptable when the compiled
module is unavailable.
"""

import math

import numpy as np

BACKEND = "python"


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Cyclic complex Jacobi on a Hermitian matrix.

    Returns (eigenvalues, eigenvectors), unsorted, with ``a @ v = v @ diag(w)``.
    The caller owns sorting and phase conventions.
    """
    n = a.shape[0]
    A = [[complex(a[i, j]) for j in range(n)] for i in range(n)]
    V = [[1.0 + 0.0j if i == j else 0.0 + 0.0j for j in range(n)] for i in range(n)]

    fro2 = 0.0
    for i in range(n):
        for j in range(n):
            z = A[i][j]
            fro2 += z.real * z.real + z.imag * z.imag
    thresh2 = (tol * tol) * fro2

    for _ in range(max_sweeps):
        off2 = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                z = A[i][j]
                off2 += 2.0 * (z.real * z.real + z.imag * z.imag)
        if off2 <= thresh2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p][q]
                mag2 = apq.real * apq.real + apq.imag * apq.imag
                if mag2 == 0.0:
                    continue
                mag = math.sqrt(mag2)
                er = apq.real / mag
                ei = apq.imag / mag
                tau = (A[q][q].real - A[p][p].real) / (2.0 * mag)
                sgn = 1.0 if tau >= 0.0 else -1.0
                t = sgn / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                eip = complex(er, ei)    # e^{i theta}
                eim = complex(er, -ei)   # e^{-i theta}
                # A <- A R with R = [[c, s e^{i t}], [-s e^{-i t}, c]] on (p, q)
                for i in range(n):
                    aip = A[i][p]
                    aiq = A[i][q]
                    A[i][p] = c * aip - (s * eim) * aiq
                    A[i][q] = (s * eip) * aip + c * aiq
                # A <- R^H A
                for i in range(n):
                    api = A[p][i]
                    aqi = A[q][i]
                    A[p][i] = c * api - (s * eip) * aqi
                    A[q][i] = (s * eim) * api + c * aqi
                for i in range(n):
                    vip = V[i][p]
                    viq = V[i][q]
                    V[i][p] = c * vip - (s * eim) * viq
                    V[i][q] = (s * eip) * vip + c * viq

    w = np.array([A[i][i].real for i in range(n)], dtype=np.float64)
    v = np.array(V, dtype=np.complex128)
    return w, v


def hestenes_svd(t, tol=1e-12, max_sweeps=100):
    """One-sided (Hestenes) Jacobi on a tall matrix ``t`` (n x m, n >= m).

    Returns (w, v) with ``t @ v = w`` and the columns of ``w`` pairwise
    orthogonal; column norms are the singular values.  Unsorted.
    """
    n, m = t.shape
    W = [[complex(t[i, j]) for j in range(m)] for i in range(n)]
    V = [[1.0 + 0.0j if i == j else 0.0 + 0.0j for j in range(m)] for i in range(m)]

    for _ in range(max_sweeps):
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                app = 0.0
                aqq = 0.0
                ar = 0.0
                ai = 0.0
                for i in range(n):
                    wp = W[i][p]
                    wq = W[i][q]
                    app += wp.real * wp.real + wp.imag * wp.imag
                    aqq += wq.real * wq.real + wq.imag * wq.imag
                    ar += wp.real * wq.real + wp.imag * wq.imag
                    ai += wp.real * wq.imag - wp.imag * wq.real
                mag2 = ar * ar + ai * ai
                if mag2 <= (tol * tol) * app * aqq or mag2 == 0.0:
                    continue
                rotated = True
                mag = math.sqrt(mag2)
                er = ar / mag
                ei = ai / mag
                tau = (aqq - app) / (2.0 * mag)
                sgn = 1.0 if tau >= 0.0 else -1.0
                tt = sgn / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + tt * tt)
                s = tt * c
                eip = complex(er, ei)
                eim = complex(er, -ei)
                for i in range(n):
                    wp = W[i][p]
                    wq = W[i][q]
                    W[i][p] = c * wp - (s * eim) * wq
                    W[i][q] = (s * eip) * wp + c * wq
                for i in range(m):
                    vp = V[i][p]
                    vq = V[i][q]
                    V[i][p] = c * vp - (s * eim) * vq
                    V[i][q] = (s * eip) * vp + c * vq
        if not rotated:
            break

    return np.array(W, dtype=np.complex128), np.array(V, dtype=np.complex128)
