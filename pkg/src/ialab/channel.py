"""Block-fading MIMO interference channels, pilot-based MMSE estimation
with optimal pilot/data power allocation, and closed-form DoF helpers.

Channel convention: ``h[k, l]`` is the M x M forward channel from source l
to destination k.  The reverse channel (TDD reciprocity) is never stored;
it is derived as the conjugate transpose of the opposite forward link.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InfeasibleTrainingError


@dataclass
class NetworkConfig:
    k_users: int
    m_antennas: int
    streams: int
    noise_power: float
    p_max: float
    subcarriers: int = 1

    def __post_init__(self):
        if self.k_users < 1 or self.m_antennas < 1:
            raise ContractViolationError("k_users and m_antennas must be >= 1")
        if not 1 <= self.streams <= self.m_antennas:
            raise ContractViolationError("streams must satisfy 1 <= d <= M")
        # noise_power 0 is allowed for the zero-noise diagnostic limits
        if self.noise_power < 0 or self.p_max <= 0:
            raise ContractViolationError("noise_power must be >= 0 and p_max > 0")
        if self.subcarriers < 1:
            raise ContractViolationError("subcarriers must be >= 1")


@dataclass
class TrainingConfig:
    coherence_time: float       # symbols per fading block
    sharing_factor: float       # fraction of the block spent on pilots
    avg_power: float            # average transmit power over the block

    def __post_init__(self):
        if not 0.0 < self.sharing_factor <= 1.0:
            raise ContractViolationError("sharing_factor must be in (0, 1]")
        if self.coherence_time <= 0 or self.avg_power <= 0:
            raise ContractViolationError("coherence_time and avg_power must be > 0")

    @property
    def pilot_symbols(self):
        return self.sharing_factor * self.coherence_time

    @property
    def data_symbols(self):
        return (1.0 - self.sharing_factor) * self.coherence_time


class ChannelSet:
    """Per-(destination, source, subcarrier) channel matrices plus the seed
    that generated them."""

    def __init__(self, forward, seed):
        forward = np.asarray(forward, dtype=np.complex128)
        if (forward.ndim != 5 or forward.shape[1] != forward.shape[2]
                or forward.shape[3] != forward.shape[4]):
            raise ContractViolationError(
                f"forward must have shape (S, K, K, M, M), got {forward.shape}")
        self._h = forward
        self.seed = seed

    @property
    def subcarriers(self):
        return self._h.shape[0]

    @property
    def k_users(self):
        return self._h.shape[1]

    @property
    def m_antennas(self):
        return self._h.shape[3]

    def table(self, subcarrier=0):
        """(K, K, M, M) forward table for one subcarrier; table[k, l] = H_kl."""
        return self._h[subcarrier]

    def forward(self, k, l, subcarrier=0):
        return self._h[subcarrier, k, l]

    def reverse(self, k, l, subcarrier=0):
        """Reverse channel into terminal k from terminal l: (H_lk)^H."""
        return self._h[subcarrier, l, k].conj().T

    def to_json(self):
        """One entry of "h" per matrix, ordered (subcarrier, destination,
        source), holding the M*M row-major [re, im] pairs."""
        s, k, _, m, _ = self._h.shape
        mats = self._h.reshape(s * k * k, m * m)
        pairs = np.stack([mats.real, mats.imag], axis=-1)
        return json.dumps({
            "k": k,
            "m": m,
            "subcarriers": s,
            "seed": self.seed,
            "h": pairs.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        k, m, s = doc["k"], doc["m"], doc["subcarriers"]
        pairs = np.asarray(doc["h"], dtype=np.float64)
        flat = pairs[..., 0] + 1j * pairs[..., 1]
        return cls(flat.reshape(s, k, k, m, m), doc["seed"])


def reverse_table(table):
    """Reverse-direction channel table: out[k, l] = table[l, k]^H."""
    return np.conj(np.swapaxes(np.swapaxes(table, 0, 1), 2, 3))


def sample_channels(cfg: NetworkConfig, seed) -> ChannelSet:
    """i.i.d. CN(0, 1) block-fading draw, independent per subcarrier."""
    rng = np.random.default_rng(seed)
    shape = (cfg.subcarriers, cfg.k_users, cfg.k_users, cfg.m_antennas, cfg.m_antennas)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return ChannelSet(h, seed)


def estimate_channels(truth: ChannelSet, train: TrainingConfig, cfg: NetworkConfig,
                      seed, pilot_power=None):
    """Pilot-based MMSE estimation of every channel coefficient.

    The pilot window is split into K orthogonal slots, so each destination
    sees L = alpha*T/K unit-power pilots per source at power ``pilot_power``
    (derived from the optimal split when not supplied).  With the CN(0, 1)
    prior the per-coefficient MMSE estimate and error variance are

        h_hat = sqrt(Pt) * sum(x* y) / (Pt*L + N0),
        var   = N0 / (Pt*L + N0).
    """
    k = cfg.k_users
    l_pilots = train.pilot_symbols / k
    if l_pilots < 1.0:
        raise InfeasibleTrainingError(
            f"pilot window gives {l_pilots:.3f} symbols per source; need >= 1")
    if pilot_power is None:
        _, _, pilot_power = optimal_power_split(train, cfg)
    n0 = cfg.noise_power
    if n0 == 0.0:
        if pilot_power <= 0.0:
            raise ContractViolationError("pilot power and noise cannot both be zero")
        return ChannelSet(truth._h.copy(), seed), 0.0
    denom = pilot_power * l_pilots + n0
    rng = np.random.default_rng(seed)
    h = truth._h
    noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / math.sqrt(2.0)
    est = (pilot_power * l_pilots * h
           + math.sqrt(pilot_power * l_pilots * n0) * noise) / denom
    return ChannelSet(est, seed), n0 / denom


def optimal_power_split(train: TrainingConfig, cfg: NetworkConfig):
    """Optimal pilot/data power allocation (beta, P_data, P_pilot).

    Valid for sharing factors strictly inside (K/T, 1); the data power is
    beta*P and the pilot power K*(1 - (1-alpha)*beta)/alpha * P, which
    conserves the average energy (1-alpha)*P_d + (alpha/K)*P_tau = P.
    """
    alpha = train.sharing_factor
    k, t, p, n0 = cfg.k_users, train.coherence_time, train.avg_power, cfg.noise_power
    if alpha >= 1.0:
        raise ContractViolationError("sharing_factor = 1 leaves no data phase")
    if alpha <= k / t:
        raise ContractViolationError(
            f"sharing_factor must exceed K/T = {k / t:.4f} for the optimal split")
    if n0 == 0.0:
        beta = 1.0 / (1.0 - alpha)
    else:
        beta = (1.0 / (1.0 - alpha)) / (1.0 + math.sqrt(
            (1.0 + k * p / (1.0 - alpha)) / (1.0 + p * t / n0)))
    p_data = beta * p
    p_pilot = k * (1.0 - (1.0 - alpha) * beta) / alpha * p
    return beta, p_data, p_pilot


def approx_power_split(train: TrainingConfig, cfg: NetworkConfig):
    """High-power approximation of the optimal allocation factor."""
    alpha = train.sharing_factor
    k, t, n0 = cfg.k_users, train.coherence_time, cfg.noise_power
    return (1.0 / (1.0 - alpha)) / (1.0 + math.sqrt(k * n0 / (t * (1.0 - alpha))))


def dof_limits(k_users, coherence_time):
    """Sum DoF achievable with training/feedback overhead, and the active-user
    count that achieves it: min{K(1 - K/T)/2, T/8} and min{K, floor(T/2)}."""
    k, t = k_users, coherence_time
    if t < 2:
        raise ContractViolationError("coherence_time must be >= 2")
    d_sum = min(k * (1.0 - k / t) / 2.0, t / 8.0)
    k_opt = min(k, int(t // 2))
    return d_sum, k_opt
