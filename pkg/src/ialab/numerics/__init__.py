"""Dense complex linear-algebra kernel for small matrices.

Hermitian eigendecomposition and SVD via cyclic Jacobi (adequate and robust
at the sizes this package uses, n <= 12), plus real Givens rotations.  All
conventions are deterministic so downstream codecs and golden vectors are
reproducible:

* eigenvalues ascending; each eigenvector's largest-magnitude component is
  made real and positive,
* singular values descending; each right singular vector's last entry is
  made real and non-negative,
* bit-identical results across runs on one platform.

The sweep kernels come from a compiled extension when available; a pure
Python twin is selected otherwise (or when IA_LAB_PURE is set to a
non-empty value).  Both produce identical numbers.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolationError
from . import _pykernels

if os.environ.get("IA_LAB_PURE"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND

__all__ = ["BACKEND", "SvdResult", "hermitian_eig", "svd", "givens_zero"]

_HERMITIAN_TOL = 1e-10


@dataclass
class SvdResult:
    """Compact SVD ``a = w @ diag(lam) @ f.conj().T``.

    ``w`` is rows x rank, ``f`` is cols x rank, ``lam`` is descending and
    non-negative, and both factors have orthonormal columns.
    """

    w: np.ndarray
    lam: np.ndarray
    f: np.ndarray


def _as_matrix(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ContractViolationError(f"expected a 2-D matrix, got shape {a.shape}")
    if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
        raise ContractViolationError("matrix has non-finite entries")
    return a


def _fix_column_phases_by_peak(v):
    """Rotate each column so its largest-magnitude component is real positive."""
    for i in range(v.shape[1]):
        col = v[:, i]
        j = int(np.argmax(np.abs(col)))
        z = col[j]
        r = abs(z)
        if r > 0.0:
            v[:, i] = col * (z.conjugate() / r)
    return v


def hermitian_eig(a):
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and orthonormal
    eigenvector columns ``v`` such that ``a @ v[:, i] = w[i] * v[:, i]``.
    Raises ContractViolationError for non-square or non-Hermitian input
    (tolerance 1e-10 in max norm).
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ContractViolationError(f"hermitian_eig needs a square matrix, got {n}x{m}")
    if np.max(np.abs(a - a.conj().T)) > _HERMITIAN_TOL:
        raise ContractViolationError("matrix is not Hermitian within 1e-10")
    w, v = _impl.jacobi_eigh(a)
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = np.ascontiguousarray(v[:, order])
    return w, _fix_column_phases_by_peak(v)


def _complete_orthonormal(u, start):
    """Fill columns ``start:`` of u with a deterministic orthonormal basis
    of the complement of the preceding columns."""
    n = u.shape[0]
    col = start
    for basis in range(n):
        if col >= u.shape[1]:
            break
        cand = np.zeros(n, dtype=np.complex128)
        cand[basis] = 1.0
        for j in range(col):
            cand -= u[:, j] * np.vdot(u[:, j], cand)
        norm = np.linalg.norm(cand)
        if norm > 0.5:
            u[:, col] = cand / norm
            col += 1
    return u


def svd(a):
    """Singular value decomposition via one-sided Jacobi.

    Phase convention: each column of ``f`` gets its last entry real and
    non-negative (zero entries are left alone).
    """
    a = _as_matrix(a)
    rows, cols = a.shape
    transposed = rows < cols
    t = a.conj().T if transposed else a
    w_cols, v = _impl.hestenes_svd(np.ascontiguousarray(t))

    norms = np.sqrt(np.sum(w_cols.real**2 + w_cols.imag**2, axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    w_cols = np.ascontiguousarray(w_cols[:, order])
    v = np.ascontiguousarray(v[:, order])

    rank = min(rows, cols)
    scale = norms[0] if norms.size else 0.0
    u = np.zeros((t.shape[0], rank), dtype=np.complex128)
    n_pos = 0
    for i in range(rank):
        if norms[i] > 1e-14 * max(scale, 1.0):
            u[:, i] = w_cols[:, i] / norms[i]
            n_pos += 1
        else:
            norms[i] = 0.0
    if n_pos < rank:
        u = _complete_orthonormal(u, n_pos)

    lam = norms[:rank].copy()
    if transposed:
        w, f = v, u
    else:
        w, f = u, v

    # last entry of each f column real and non-negative; w follows so the
    # product w diag(lam) f^* is unchanged
    for i in range(f.shape[1]):
        z = f[-1, i]
        r = abs(z)
        if r > 0.0:
            phase = z.conjugate() / r
            f[:, i] *= phase
            w[:, i] *= phase
    return SvdResult(w=w, lam=lam, f=f)


def givens_zero(a, b):
    """Real Givens pair (c, s, r): c a + s b = r >= 0 and -s a + c b = 0."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ContractViolationError("givens_zero needs finite inputs")
    if a == 0.0 and b == 0.0:
        return 1.0, 0.0, 0.0
    r = math.sqrt(a * a + b * b)
    return a / r, b / r, r
