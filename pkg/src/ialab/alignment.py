"""Iterative interference alignment on a K-user MIMO interference channel.

Two filter-update rules are implemented: leakage minimization (receive
filter spans the d weakest eigenvectors of the interference covariance)
and Max-SINR (per-stream MMSE filters).  Both alternate between forward
and reverse directions using TDD reciprocity: the reverse network has
channels H_lk^H, beamformers equal to the forward receive filters, and
its solutions become the next forward beamformers.

Per-stream transmit power is the equal split 2 P_k / M throughout.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .channel import NetworkConfig, reverse_table
from .errors import ContractViolationError

LEAKAGE_MIN = "leakage_min"
MAX_SINR = "max_sinr"


@dataclass
class TransceiverState:
    """Per-user beamformers v (M x d), receive filters u (M x d) and
    transmit powers p (linear)."""

    v: np.ndarray          # (K, M, d)
    u: np.ndarray          # (K, M, d)
    p: np.ndarray          # (K,)

    @property
    def k_users(self):
        return self.v.shape[0]

    @property
    def streams(self):
        return self.v.shape[2]


@dataclass
class AlignmentReport:
    iterations: int
    leakage_trace: list = field(default_factory=list)
    residual: float = math.inf
    converged: bool = False

    def to_json(self):
        return json.dumps({
            "iterations": self.iterations,
            "leakage_trace": self.leakage_trace,
            "residual": self.residual,
            "converged": self.converged,
        })


def random_orthonormal_columns(m, d, rng):
    """Seeded complex Gaussian matrix orthonormalized by Gram-Schmidt."""
    g = (rng.standard_normal((m, d)) + 1j * rng.standard_normal((m, d))) / math.sqrt(2.0)
    q = np.zeros((m, d), dtype=np.complex128)
    for i in range(d):
        col = g[:, i]
        for j in range(i):
            col = col - q[:, j] * np.vdot(q[:, j], col)
        q[:, i] = col / np.linalg.norm(col)
    return q


def initial_state(cfg: NetworkConfig, seed, powers=None) -> TransceiverState:
    rng = np.random.default_rng(seed)
    k, m, d = cfg.k_users, cfg.m_antennas, cfg.streams
    v = np.stack([random_orthonormal_columns(m, d, rng) for _ in range(k)])
    u = np.stack([random_orthonormal_columns(m, d, rng) for _ in range(k)])
    if powers is None:
        p = np.full(k, cfg.p_max, dtype=float)
    else:
        p = np.asarray(powers, dtype=float).copy()
    return TransceiverState(v=v, u=u, p=p)


def interference_covariance(state: TransceiverState, table, k, cfg: NetworkConfig):
    """Covariance of the interference received at destination k:
    sum over j != k of (2 P_j / M) H_kj V_j V_j^H H_kj^H."""
    m = cfg.m_antennas
    q = np.zeros((m, m), dtype=np.complex128)
    for j in range(cfg.k_users):
        if j == k:
            continue
        hv = table[k, j] @ state.v[j]
        q += (2.0 * state.p[j] / m) * (hv @ hv.conj().T)
    return q


def leakage(state: TransceiverState, table, k, cfg: NetworkConfig):
    """Interference power left in destination k's filtered signal space."""
    q = interference_covariance(state, table, k, cfg)
    val = np.trace(state.u[k].conj().T @ q @ state.u[k])
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ContractViolationError("leakage trace is not numerically real")
    return max(val.real, 0.0)


def leakage_filter_update(q, d):
    """Receive filter minimizing trace(U^H Q U): eigenvectors of the d
    smallest eigenvalues of Q."""
    w, v = numerics.hermitian_eig(q)
    del w
    return np.ascontiguousarray(v[:, :d])


def max_sinr_covariance(state: TransceiverState, table, k, d_index, cfg: NetworkConfig,
                        noise_power=None):
    """Signal-deflated covariance seen by stream d of destination k: the full
    per-stream transmit covariance sum, minus the own-stream term, plus
    N0 I_M (identity of the receive dimension)."""
    m = cfg.m_antennas
    n0 = cfg.noise_power if noise_power is None else noise_power
    q = np.zeros((m, m), dtype=np.complex128)
    for j in range(cfg.k_users):
        hv = table[k, j] @ state.v[j]
        q += (2.0 * state.p[j] / m) * (hv @ hv.conj().T)
    own = table[k, k] @ state.v[k][:, d_index:d_index + 1]
    q -= (2.0 * state.p[k] / m) * (own @ own.conj().T)
    q += n0 * np.eye(m)
    return q


def max_sinr_filter_update(state: TransceiverState, table, k, d_index, cfg: NetworkConfig,
                           noise_power=None):
    """Unit-norm MMSE filter for stream d of user k.

    A singular covariance (possible at zero noise) gets a relative ridge
    rather than failing, which keeps zero-noise diagnostics usable.
    """
    m = cfg.m_antennas
    q = max_sinr_covariance(state, table, k, d_index, cfg, noise_power)
    hv = table[k, k] @ state.v[k][:, d_index]
    try:
        u = np.linalg.solve(q, hv)
    except np.linalg.LinAlgError:
        u = None
    if u is None or not np.all(np.isfinite(u)):
        tr = np.trace(q).real
        ridge = 1e-12 * tr / m if tr > 0.0 else 1e-12
        u = np.linalg.solve(q + ridge * np.eye(m), hv)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        u = np.zeros(m, dtype=np.complex128)
        u[0] = 1.0
        return u
    return u / norm


def _updated_filters(state, table, cfg, variant, noise_power=None):
    """New receive-filter stack (K, M, d) for the given direction.

    Batched equivalent of the per-user reference ops
    (interference_covariance + leakage_filter_update, or
    max_sinr_filter_update): one einsum builds every user's covariance at
    once.  Also returns the per-user interference covariances so the
    caller can trace leakage without recomputing them.
    """
    k, m, d = cfg.k_users, cfg.m_antennas, cfg.streams
    w = 2.0 * state.p / m
    hv = np.matmul(table, state.v[None, :, :, :])              # (K, K, M, d)
    hv_h = hv.conj().swapaxes(2, 3)
    cov = np.matmul(hv * w[None, :, None, None], hv_h).sum(axis=1)
    own = hv[np.arange(k), np.arange(k)]                       # H_kk V_k, (K, M, d)
    own_h = own.conj().swapaxes(1, 2)
    q_int = cov - np.matmul(own * w[:, None, None], own_h)

    u = np.empty_like(state.u)
    if variant == LEAKAGE_MIN:
        for i in range(k):
            u[i] = leakage_filter_update(q_int[i], d)
        return u, q_int

    n0 = cfg.noise_power if noise_power is None else noise_power
    base = cov + n0 * _eye(m)[None, :, :]
    for di in range(d):
        o = own[:, :, di]                                      # (K, M)
        q = base - w[:, None, None] * (o[:, :, None] * o.conj()[:, None, :])
        sol = _batched_solve(q, o, k, m)
        if sol is None or not np.all(np.isfinite(sol)):
            sol = np.empty((k, m), dtype=np.complex128)
            for i in range(k):
                sol[i] = _ridge_solve(q[i], o[i], m)
        norms = np.sqrt(np.sum(sol.real**2 + sol.imag**2, axis=1))
        for i in range(k):
            if norms[i] == 0.0:
                sol[i] = 0.0
                sol[i, 0] = 1.0
                norms[i] = 1.0
        u[:, :, di] = sol / norms[:, None]
    return u, q_int


_EYES = {}


def _eye(m):
    if m not in _EYES:
        _EYES[m] = np.eye(m)
    return _EYES[m]


def _batched_solve(q, rhs, k, m):
    """Solve q[i] x = rhs[i] for all users; closed form at m == 2 (the hot
    case), LAPACK otherwise.  Returns None when near-singular."""
    if m == 2:
        a = q[:, 0, 0]
        b = q[:, 0, 1]
        c = q[:, 1, 0]
        d = q[:, 1, 1]
        det = a * d - b * c
        scale = np.abs(a) * np.abs(d) + np.abs(b) * np.abs(c)
        if np.any(np.abs(det) <= 1e-13 * scale):
            return None
        x = np.empty((k, 2), dtype=np.complex128)
        x[:, 0] = (d * rhs[:, 0] - b * rhs[:, 1]) / det
        x[:, 1] = (a * rhs[:, 1] - c * rhs[:, 0]) / det
        return x
    try:
        return np.linalg.solve(q, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return None


def _ridge_solve(q, rhs, m):
    tr = np.trace(q).real
    ridge = 1e-12 * tr / m if tr > 0.0 else 1e-12
    return np.linalg.solve(q + ridge * np.eye(m), rhs)


def _batched_leakage(u, q_int):
    """Per-user trace(U^H Q U) from the batched covariances."""
    return np.maximum(np.einsum("kmd,kmn,knd->k", u.conj(), q_int, u).real, 0.0)


def _max_phase_aligned_change(v_new, v_old):
    """max_k ||V_k(n) - V_k(n-1)||_F / sqrt(d) after per-column phase
    alignment.  For unit-norm columns the aligned distance per column is
    sqrt(2 - 2 |<v_old, v_new>|)."""
    d = v_new.shape[2]
    inner = np.abs(np.sum(v_old.conj() * v_new, axis=1))       # (K, d)
    diff2 = np.sum(np.maximum(2.0 - 2.0 * inner, 0.0), axis=1)
    return float(np.sqrt(np.max(diff2) / d))


def run_iterative_alignment(table, cfg: NetworkConfig, variant=LEAKAGE_MIN,
                            max_iters=500, tol=1e-6, seed=0, powers=None,
                            reverse_powers=None):
    """Alternating forward/reverse filter optimization until convergence.

    Per iteration: update all receive filters on the forward channels,
    then rerun the same update on the reverse network (beamformers set to
    the new receive filters, channels conjugate-transposed) and promote
    the reverse filters to forward beamformers.

    Convergence: leakage_min stops when max_k IF_k / P_k <= tol; max_sinr
    stops when the phase-aligned beamformer change drops below tol.
    Non-convergence is reported, never raised.
    """
    if max_iters < 1 or tol <= 0:
        raise ContractViolationError("max_iters must be >= 1 and tol > 0")
    if variant not in (LEAKAGE_MIN, MAX_SINR):
        raise ContractViolationError(f"unknown variant {variant!r}")
    state = initial_state(cfg, seed, powers)
    rev = reverse_table(table)
    rev_powers = state.p if reverse_powers is None else np.asarray(reverse_powers, float)
    report = AlignmentReport(iterations=0)

    for iteration in range(1, max_iters + 1):
        v_prev = state.v
        state.u, q_int = _updated_filters(state, table, cfg, variant)

        per_user = _batched_leakage(state.u, q_int)
        report.leakage_trace.append(float(per_user.sum()))
        report.residual = float(np.max(per_user / state.p))
        report.iterations = iteration
        if variant == LEAKAGE_MIN and report.residual <= tol:
            report.converged = True
            break

        # reverse direction: destinations beamform with their new filters,
        # and the reverse filters become the next forward beamformers
        rev_state = TransceiverState(v=state.u, u=state.v, p=rev_powers)
        state.v, _ = _updated_filters(rev_state, rev, cfg, variant)

        if variant == MAX_SINR:
            change = _max_phase_aligned_change(state.v, v_prev)
            if change <= tol:
                report.converged = True
                break
    return state, report


def alignment_residual(state: TransceiverState, table, cfg: NetworkConfig,
                       rank_tol=1e-6):
    """Direct check of the alignment conditions: the largest cross-term
    norm ||U_k^H H_kj V_j||_F over j != k, and whether every desired-link
    product U_k^H H_kk V_k has full rank (smallest singular value above
    rank_tol)."""
    cross = 0.0
    rank_ok = True
    for k in range(cfg.k_users):
        for j in range(cfg.k_users):
            prod = state.u[k].conj().T @ table[k, j] @ state.v[j]
            if j == k:
                smin = numerics.svd(prod).lam[-1]
                if smin <= rank_tol:
                    rank_ok = False
            else:
                cross = max(cross, np.linalg.norm(prod))
    return cross, rank_ok
