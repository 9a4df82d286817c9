"""SINR computation and distributed power control for single-stream links.

The power update P_k = min{gamma_k (IF_k + N0) / |u^H H v|^2, P_max} is a
standard interference function (positive, monotone, scalable), so the
fixed-power iteration converges to the unique fixed point whenever one
exists.  The joint loop alternates Max-SINR receive-filter updates, this
power update, and a reverse-direction beamformer update at probe power.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .alignment import TransceiverState, initial_state, leakage, \
    max_sinr_filter_update
from .channel import NetworkConfig, reverse_table
from .errors import ContractViolationError, InfeasibleLinkError


@dataclass
class PowerControlConfig:
    target_rates: np.ndarray        # per-user bits/symbol
    p_max: float
    gamma: np.ndarray = None        # per-user linear SINR targets, 2^R - 1
    p_forward_probe: float = None   # reverse-sweep probe power, default p_max
    max_iters: int = 200
    tol: float = 1e-8

    def __post_init__(self):
        self.target_rates = np.asarray(self.target_rates, dtype=float)
        if self.gamma is None:
            self.gamma = 2.0 ** self.target_rates - 1.0
        else:
            self.gamma = np.asarray(self.gamma, dtype=float)
        if np.any(self.gamma <= 0):
            raise ContractViolationError("SINR targets must be > 0")
        if self.p_max <= 0 or self.max_iters < 1:
            raise ContractViolationError("p_max must be > 0 and max_iters >= 1")
        if self.p_forward_probe is None:
            self.p_forward_probe = self.p_max

    @classmethod
    def from_gamma_db(cls, gamma_db, k_users, p_max, **kwargs):
        gamma = np.full(k_users, 10.0 ** (gamma_db / 10.0))
        rates = np.log2(1.0 + gamma)
        return cls(target_rates=rates, p_max=p_max, gamma=gamma, **kwargs)


@dataclass
class PowerControlTrace:
    powers: list = field(default_factory=list)    # per iteration, (K,)
    sinrs: list = field(default_factory=list)     # per iteration, (K,)
    iterations: int = 0
    converged: bool = False

    def to_json_rows(self):
        rows = []
        for it, (p_vec, s_vec) in enumerate(zip(self.powers, self.sinrs), start=1):
            for k, (p, s) in enumerate(zip(p_vec, s_vec)):
                rows.append({
                    "iter": it,
                    "user": k,
                    "power_dbm": 10.0 * math.log10(p) if p > 0 else -math.inf,
                    "sinr_db": 10.0 * math.log10(s) if s > 0 else -math.inf,
                })
        return rows

    def to_json(self):
        return json.dumps({
            "iterations": self.iterations,
            "converged": self.converged,
            "rows": self.to_json_rows(),
        })


def effective_gain(state: TransceiverState, table, k):
    """|u_k^H H_kk v_k|^2 for the single-stream link k."""
    u = state.u[k][:, 0]
    v = state.v[k][:, 0]
    return abs(np.vdot(u, table[k, k] @ v)) ** 2


def compute_sinr(state: TransceiverState, table, k, cfg: NetworkConfig,
                 noise_power=None):
    """Received SINR of the (single) stream at destination k."""
    if state.streams != 1:
        raise ContractViolationError("compute_sinr assumes single-stream links")
    n0 = cfg.noise_power if noise_power is None else noise_power
    signal = state.p[k] * effective_gain(state, table, k)
    if signal == 0.0:
        return 0.0
    return signal / (leakage(state, table, k, cfg) + n0)


def required_power(state: TransceiverState, table, k, gamma_k, cfg: NetworkConfig,
                   noise_power=None):
    """Minimum power keeping stream k at SINR gamma_k with everything else
    frozen: gamma_k (IF_k + N0) / |u^H H v|^2."""
    gain = effective_gain(state, table, k)
    if gain == 0.0:
        raise InfeasibleLinkError(f"link {k} has zero effective gain")
    n0 = cfg.noise_power if noise_power is None else noise_power
    return gamma_k * (leakage(state, table, k, cfg) + n0) / gain


def run_joint_ia_pc(table, cfg: NetworkConfig, pc: PowerControlConfig, seed=0):
    """Joint transceiver design and power control.

    Each iteration: (1) Max-SINR receive filters at the current powers,
    (2) capped power update per user, (3) reverse sweep at probe power
    P_F with the forward filters as reverse beamformers, (4) the reverse
    filters become the forward beamformers.  Runs max_iters iterations or
    stops early once both powers and beamformers are stationary.

    Infeasible targets saturate at p_max (converged stays False); that is
    an expected outcome, not an error.
    """
    if cfg.streams != 1:
        raise ContractViolationError("joint IA-PC assumes single-stream links")
    state = initial_state(cfg, seed)
    state.p = np.full(cfg.k_users, pc.p_max, dtype=float)
    rev = reverse_table(table)
    probe = np.full(cfg.k_users, pc.p_forward_probe, dtype=float)
    trace = PowerControlTrace()

    for iteration in range(1, pc.max_iters + 1):
        v_prev = state.v
        p_prev = state.p

        for k in range(cfg.k_users):
            state.u[k][:, 0] = max_sinr_filter_update(state, table, k, 0, cfg)

        new_p = np.empty(cfg.k_users)
        for k in range(cfg.k_users):
            try:
                beta = required_power(state, table, k, pc.gamma[k], cfg)
            except InfeasibleLinkError:
                beta = pc.p_max
            new_p[k] = min(beta, pc.p_max)
        state.p = new_p

        rev_state = TransceiverState(v=state.u, u=state.v, p=probe)
        new_v = np.empty_like(state.v)
        for k in range(cfg.k_users):
            new_v[k] = state.v[k]
            new_v[k][:, 0] = max_sinr_filter_update(rev_state, rev, k, 0, cfg)
        state.v = new_v

        sinrs = np.array([compute_sinr(state, table, k, cfg) for k in range(cfg.k_users)])
        trace.powers.append(state.p.copy())
        trace.sinrs.append(sinrs)
        trace.iterations = iteration

        power_change = np.max(np.abs(state.p - p_prev) / np.maximum(p_prev, 1e-300))
        v_change = 0.0
        for k in range(cfg.k_users):
            inner = np.vdot(v_prev[k][:, 0], state.v[k][:, 0])
            r = abs(inner)
            phase = inner.conjugate() / r if r > 0 else 1.0
            v_change = max(v_change, np.linalg.norm(state.v[k][:, 0] * phase - v_prev[k][:, 0]))
        if power_change < pc.tol and v_change < pc.tol:
            trace.converged = bool(np.all(sinrs >= pc.gamma * (1.0 - 1e-6)))
            break
    return state, trace


def fixed_power_iteration(state: TransceiverState, table, cfg: NetworkConfig,
                          gamma, p_max, iters=100, p0=None, tol=0.0):
    """Pure power iteration with frozen filters:
    P_k(n+1) = min{beta_k(P(n)), p_max}.  Returns the (iters+1, K) power
    trajectory starting from p0 (default p_max)."""
    gamma = np.asarray(gamma, dtype=float)
    k_users = cfg.k_users
    p = np.full(k_users, p_max, dtype=float) if p0 is None else np.asarray(p0, float).copy()
    traj = [p.copy()]
    work = TransceiverState(v=state.v, u=state.u, p=p)
    for _ in range(iters):
        new_p = np.empty(k_users)
        for k in range(k_users):
            new_p[k] = min(required_power(work, table, k, gamma[k], cfg), p_max)
        if tol > 0.0 and np.max(np.abs(new_p - work.p)) <= tol * np.max(np.abs(new_p)):
            work.p = new_p
            traj.append(new_p.copy())
            break
        work.p = new_p
        traj.append(new_p.copy())
    return np.array(traj)
