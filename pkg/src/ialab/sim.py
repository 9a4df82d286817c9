"""Scheme-level evaluation harness.

Evaluates competing transmission schemes over simulated block-fading
drops: power-controlled IA (pc), fixed-power Max-SINR IA (nopc), IA
driven by compressed CSI feedback (ia_feedback), TDMA single-user MIMO,
full-reuse MIMO and full-reuse SIMO.  The resource grid
is abstract: channels act per subcarrier, no waveform is synthesized.
Rates come from probing an MCS ladder against a mutual-information proxy;
uncoded BER from the exact Gray square-QAM expression with interference
treated as Gaussian.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import csifb
from .alignment import MAX_SINR, run_iterative_alignment
from .channel import ChannelSet, NetworkConfig, TrainingConfig, estimate_channels
from .errors import ContractViolationError
from .numerics import svd
from .powerctl import PowerControlConfig, run_joint_ia_pc

SCHEMES = ("pc", "nopc", "ia_feedback", "tdma_mimo", "fullreuse_mimo", "fullreuse_simo")

PAYLOAD_SYMBOLS = 20
ALPHA_LATTICE_DB = 0.5


# ---------------------------------------------------------------------------
# frame construction

@dataclass
class FrameLayout:
    csi_rs_symbols: list            # one OFDM symbol index per tx antenna
    p_rs_symbol: int                # None outside the power-controlled scheme
    dm_rs_symbols: list             # one per stream, precoded
    payload_symbols: int
    alpha_scale: float              # quantized DM-RS amplitude boost
    alpha_scale_raw: float


def build_frame(cfg: NetworkConfig, powers, scheme="pc"):
    """Reference-signal layout for one frame.

    CSI-RS are orthogonal (one symbol per transmit antenna) and sent at
    full power; DM-RS are precoded and carry the power-control decision,
    so their amplitudes are boosted by alpha = sqrt(P_max / max P) and the
    boost is signalled via a repeated, scaled CSI-RS (P-RS) in the pc
    scheme.  alpha is quantized on a 0.5 dB lattice.
    """
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    if np.any(powers <= 0):
        raise ContractViolationError("powers must be > 0")
    p_top = float(np.max(powers))
    alpha_raw = math.sqrt(cfg.p_max / p_top)
    alpha_db = 20.0 * math.log10(alpha_raw)
    alpha = 10.0 ** (round(alpha_db / ALPHA_LATTICE_DB) * ALPHA_LATTICE_DB / 20.0)

    n_tx = cfg.k_users * cfg.m_antennas
    csi_rs = list(range(n_tx))
    cursor = n_tx
    p_rs = None
    if scheme == "pc":
        p_rs = cursor
        cursor += 1
    dm_rs = list(range(cursor, cursor + cfg.k_users * cfg.streams))
    return FrameLayout(csi_rs_symbols=csi_rs, p_rs_symbol=p_rs, dm_rs_symbols=dm_rs,
                       payload_symbols=PAYLOAD_SYMBOLS, alpha_scale=alpha,
                       alpha_scale_raw=alpha_raw)


# ---------------------------------------------------------------------------
# rate and error models

@dataclass
class McsTable:
    entries: list                   # (modulation order, code rate, bits/symbol/subcarrier)

    def __post_init__(self):
        se = [e[2] for e in self.entries]
        if not se or any(b <= a for a, b in zip(se, se[1:])):
            raise ContractViolationError("MCS entries must have strictly increasing rate")


def default_mcs_table() -> McsTable:
    """Ten-entry ladder: the toolbox orders {4,16,64,256} crossed with code
    rates {1/2, 5/8, 3/4}, tie at 3.0 bits resolved toward the lower order,
    truncated to the ten lowest spectral efficiencies."""
    combos = []
    for order in (4, 16, 64, 256):
        for rate in (0.5, 0.625, 0.75):
            combos.append((order, rate, math.log2(order) * rate))
    combos.sort(key=lambda e: (e[2], e[0]))
    dedup = []
    for e in combos:
        if dedup and abs(e[2] - dedup[-1][2]) < 1e-12:
            continue
        dedup.append(e)
    return McsTable(entries=dedup[:10])


def _q_function(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def ber_for_sinr(sinr_linear, modulation_order):
    """Bit error rate of Gray-coded square QAM at the given SINR, treating
    residual interference as Gaussian.  Exact for the AWGN channel (so for
    order 4 it reduces to Q(sqrt(sinr)))."""
    if sinr_linear < 0:
        raise ContractViolationError("sinr must be >= 0")
    if modulation_order not in (4, 16, 64, 256):
        raise ContractViolationError("modulation order must be one of 4, 16, 64, 256")
    sqm = int(round(math.sqrt(modulation_order)))
    bits_per_dim = int(round(math.log2(sqm)))
    arg = math.sqrt(3.0 * sinr_linear / (modulation_order - 1))
    total = 0.0
    for k in range(1, bits_per_dim + 1):
        pb = 0.0
        top = int((1 - 2.0 ** (-k)) * sqm)
        for i in range(top):
            sign = -1.0 if (i * 2 ** (k - 1)) // sqm % 2 else 1.0
            weight = 2 ** (k - 1) - math.floor(i * 2 ** (k - 1) / sqm + 0.5)
            pb += sign * weight * _q_function((2 * i + 1) * arg)
        total += (2.0 / sqm) * pb
    return total / bits_per_dim


def probe_throughput(per_stream_sinr, mcs: McsTable, margin=1.0):
    """Rate of the best MCS whose spectral efficiency fits under the
    mutual-information proxy log2(1 + sinr) * margin, summed over streams."""
    sinrs = np.atleast_1d(np.asarray(per_stream_sinr, dtype=float))
    total = 0.0
    for s in sinrs:
        proxy = math.log2(1.0 + max(s, 0.0)) * margin
        best = 0.0
        for _, _, se in mcs.entries:
            if se <= proxy:
                best = se
        total += best
    return total


def selected_modulation(sinr, mcs: McsTable, margin=1.0):
    """Modulation order of the probed MCS (None when no entry fits)."""
    proxy = math.log2(1.0 + max(sinr, 0.0)) * margin
    pick = None
    for order, _, se in mcs.entries:
        if se <= proxy:
            pick = order
    return pick


# ---------------------------------------------------------------------------
# per-drop evaluation

@dataclass
class SchemeResult:
    scheme: str
    sinr_db: np.ndarray             # (drops, K) mean over subcarriers
    rate: np.ndarray                # (drops, K) bits/symbol/subcarrier
    ber: np.ndarray                 # (drops, K)
    tx_power: np.ndarray            # (drops, K) linear, mean over subcarriers
    sum_throughput: np.ndarray      # (drops,)
    feedback_bits: np.ndarray       # (drops,)
    sinr_samples_db: np.ndarray     # (drops, K, S)
    traces: list = field(default_factory=list)

    @property
    def drops(self):
        return self.sinr_db.shape[0]


def concat_results(parts):
    if not parts:
        raise ContractViolationError("no results to concatenate")
    traces = []
    for drop, p in enumerate(parts):
        traces.extend({**t, "drop": drop} for t in p.traces)
    return SchemeResult(
        scheme=parts[0].scheme,
        sinr_db=np.concatenate([p.sinr_db for p in parts]),
        rate=np.concatenate([p.rate for p in parts]),
        ber=np.concatenate([p.ber for p in parts]),
        tx_power=np.concatenate([p.tx_power for p in parts]),
        sum_throughput=np.concatenate([p.sum_throughput for p in parts]),
        feedback_bits=np.concatenate([p.feedback_bits for p in parts]),
        sinr_samples_db=np.concatenate([p.sinr_samples_db for p in parts]),
        traces=traces,
    )


def _mmse_stream_sinrs(table, v_list, powers, streams, n0):
    """Per-user per-stream SINRs with per-stream MMSE receive filters
    computed on the given (true) channels.  Per-stream power is the equal
    split P_k / d_k."""
    k_users = len(v_list)
    m = table.shape[2]
    out = np.zeros((k_users, max(streams)))
    cov = np.zeros((k_users, m, m), dtype=np.complex128)
    for k in range(k_users):
        for j in range(k_users):
            hv = table[k, j] @ v_list[j]
            cov[k] += (powers[j] / streams[j]) * (hv @ hv.conj().T)
    for k in range(k_users):
        for d in range(streams[k]):
            hv = table[k, k] @ v_list[k][:, d]
            own = (powers[k] / streams[k]) * np.outer(hv, hv.conj())
            q = cov[k] - own + n0 * np.eye(m)
            try:
                u = np.linalg.solve(q, hv)
            except np.linalg.LinAlgError:
                u = None
            if u is None or not np.all(np.isfinite(u)):
                tr = np.trace(q).real
                ridge = 1e-12 * tr / m if tr > 0 else 1e-12
                u = np.linalg.solve(q + ridge * np.eye(m), hv)
            nrm = np.linalg.norm(u)
            if nrm == 0.0:
                continue
            u /= nrm
            sig = (powers[k] / streams[k]) * abs(np.vdot(u, hv)) ** 2
            den = np.real(np.vdot(u, q @ u))
            out[k, d] = sig / den if den > 0 else math.inf
    return out


def _sinr_to_db(x):
    return 10.0 * math.log10(x) if x > 0 else -300.0


def _package(scheme, per_sc_sinrs, per_sc_powers, streams, mcs, margin, fixed_order,
             feedback_bits=0, rate_scale=1.0):
    """Aggregate per-subcarrier stream SINRs into one SchemeResult drop."""
    s_count = len(per_sc_sinrs)
    k_users = per_sc_sinrs[0].shape[0]
    rate = np.zeros(k_users)
    ber = np.zeros(k_users)
    samples = np.zeros((k_users, s_count))
    for si, stream_sinr in enumerate(per_sc_sinrs):
        for k in range(k_users):
            sl = stream_sinr[k, :streams[k]]
            rate[k] += probe_throughput(sl, mcs, margin) * rate_scale
            errs = []
            for s in sl:
                order = fixed_order or selected_modulation(s, mcs, margin)
                errs.append(0.5 if order is None else ber_for_sinr(s, order))
            ber[k] += float(np.mean(errs))
            samples[k, si] = _sinr_to_db(float(np.mean(sl)))
    rate /= s_count
    ber /= s_count
    powers = np.mean(np.asarray(per_sc_powers, dtype=float), axis=0)
    sinr_db = samples.mean(axis=1)
    return SchemeResult(
        scheme=scheme,
        sinr_db=sinr_db[None, :],
        rate=rate[None, :],
        ber=ber[None, :],
        tx_power=powers[None, :],
        sum_throughput=np.array([rate.sum()]),
        feedback_bits=np.array([feedback_bits]),
        sinr_samples_db=samples[None, :, :],
    )


def _subcarrier_seed(seed, subcarrier):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, subcarrier])


def json_trace(report):
    return {"iterations": report.iterations, "converged": report.converged,
            "residual": report.residual, "leakage_trace": report.leakage_trace}


def simulate_scheme(scheme, channels: ChannelSet, cfg: NetworkConfig, knobs=None,
                    seed=0) -> SchemeResult:
    """Evaluate one scheme on one channel drop; see module docstring for
    the scheme definitions.  Returns a single-drop SchemeResult."""
    knobs = dict(knobs or {})
    mcs = knobs.get("mcs") or default_mcs_table()
    margin = knobs.get("margin", 1.0)
    n0 = cfg.noise_power
    k_users, m, s_count = cfg.k_users, cfg.m_antennas, channels.subcarriers
    fixed_power = float(knobs.get("fixed_power", cfg.p_max))

    collect = bool(knobs.get("collect_traces"))
    traces = []

    if scheme == "pc":
        pc: PowerControlConfig = knobs["power_control"]
        per_sc_sinrs, per_sc_powers = [], []
        for s in range(s_count):
            _, trace = run_joint_ia_pc(channels.table(s), cfg, pc,
                                       seed=_subcarrier_seed(seed, s))
            per_sc_sinrs.append(np.asarray(trace.sinrs[-1])[:, None])
            per_sc_powers.append(trace.powers[-1])
            if collect:
                traces.append({"subcarrier": s, "iterations": trace.iterations,
                               "converged": trace.converged,
                               "rows": trace.to_json_rows()})
        res = _package(scheme, per_sc_sinrs, per_sc_powers, [1] * k_users,
                       mcs, margin, fixed_order=16)
        res.traces = traces
        return res

    if scheme == "nopc":
        per_sc_sinrs = []
        for s in range(s_count):
            table = channels.table(s)
            state, report = run_iterative_alignment(
                table, cfg, variant=MAX_SINR,
                max_iters=int(knobs.get("ia_iters", 200)),
                tol=float(knobs.get("ia_tol", 1e-5)),
                seed=_subcarrier_seed(seed, s),
                powers=np.full(k_users, fixed_power))
            v_list = [state.v[k] for k in range(k_users)]
            per_sc_sinrs.append(_mmse_stream_sinrs(
                table, v_list, np.full(k_users, fixed_power),
                [cfg.streams] * k_users, n0))
            if collect:
                traces.append({"subcarrier": s, **json_trace(report)})
        res = _package(scheme, per_sc_sinrs, [[fixed_power] * k_users] * s_count,
                       [cfg.streams] * k_users, mcs, margin, fixed_order=16)
        res.traces = traces
        return res

    if scheme == "ia_feedback":
        return _simulate_ia_feedback(channels, cfg, knobs, seed, mcs, margin,
                                     fixed_power)

    if scheme == "tdma_mimo":
        per_sc_sinrs = []
        for s in range(s_count):
            table = channels.table(s)
            stream_sinr = np.zeros((k_users, m))
            for k in range(k_users):
                res = svd(table[k, k])
                lam2 = res.lam ** 2
                stream_sinr[k, :] = (fixed_power / m) * lam2 / n0
            per_sc_sinrs.append(stream_sinr)
        return _package(scheme, per_sc_sinrs, [[fixed_power] * k_users] * s_count,
                        [m] * k_users, mcs, margin, fixed_order=None,
                        rate_scale=1.0 / k_users)

    if scheme == "fullreuse_mimo":
        per_sc_sinrs = []
        for s in range(s_count):
            table = channels.table(s)
            v_list = [svd(table[k, k]).f[:, :m] for k in range(k_users)]
            per_sc_sinrs.append(_mmse_stream_sinrs(
                table, v_list, np.full(k_users, fixed_power), [m] * k_users, n0))
        return _package(scheme, per_sc_sinrs, [[fixed_power] * k_users] * s_count,
                        [m] * k_users, mcs, margin, fixed_order=None)

    if scheme == "fullreuse_simo":
        e1 = np.zeros((m, 1), dtype=np.complex128)
        e1[0, 0] = 1.0
        per_sc_sinrs = []
        for s in range(s_count):
            table = channels.table(s)
            per_sc_sinrs.append(_mmse_stream_sinrs(
                table, [e1] * k_users, np.full(k_users, fixed_power),
                [1] * k_users, n0))
        return _package(scheme, per_sc_sinrs, [[fixed_power] * k_users] * s_count,
                        [1] * k_users, mcs, margin, fixed_order=None)

    raise ContractViolationError(f"unknown scheme {scheme!r}")


def _simulate_ia_feedback(channels, cfg, knobs, seed, mcs, margin, fixed_power):
    """Feedback-driven IA: beamformers designed on the codec reconstruction,
    evaluated on the true channels with receiver-side MMSE filters."""
    fb: csifb.FeedbackConfig = knobs.get("feedback") or csifb.FeedbackConfig()
    quantize = bool(knobs.get("quantize", True))
    training: TrainingConfig = knobs.get("training")
    k_users, m, s_count = cfg.k_users, cfg.m_antennas, channels.subcarriers
    n0 = cfg.noise_power

    known = channels
    if training is not None:
        known, _ = estimate_channels(channels, training, cfg,
                                     seed=np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xE5]))

    codes = [csifb.encode_csi(known, k, cfg, fb, quantize=quantize)
             for k in range(k_users)]
    decoded = [csifb.decode_csi(c, cfg, fb) for c in codes]
    fb_bits = sum(len(csifb.to_bytes(c)) * 8 for c in codes) if quantize else 0
    reported = decoded[0].reported

    # beamformers per reported subcarrier, designed on the reconstruction
    collect = bool(knobs.get("collect_traces"))
    traces = []
    v_by_reported = []
    for r_idx, s in enumerate(reported):
        table_hat = np.empty((k_users, k_users, m, m), dtype=np.complex128)
        for k in range(k_users):
            for l in range(k_users):
                table_hat[k, l] = decoded[k].block(r_idx, l)
        state, report = run_iterative_alignment(
            table_hat, cfg, variant=MAX_SINR,
            max_iters=int(knobs.get("ia_iters", 200)),
            tol=float(knobs.get("ia_tol", 1e-5)),
            seed=_subcarrier_seed(seed, s),
            powers=np.full(k_users, fixed_power))
        v_by_reported.append([state.v[k] for k in range(k_users)])
        if collect:
            traces.append({"subcarrier": s, **json_trace(report)})

    per_sc_sinrs = []
    nearest = decoded[0].nearest_reported
    for s in range(s_count):
        v_list = v_by_reported[nearest(s)]
        per_sc_sinrs.append(_mmse_stream_sinrs(
            channels.table(s), v_list, np.full(k_users, fixed_power),
            [cfg.streams] * k_users, n0))
    res = _package("ia_feedback", per_sc_sinrs, [[fixed_power] * k_users] * s_count,
                   [cfg.streams] * k_users, mcs, margin, fixed_order=None,
                   feedback_bits=fb_bits)
    res.traces = traces
    return res


# ---------------------------------------------------------------------------
# aggregation

def compute_metrics(results_by_scheme, gain_pair=("nopc", "pc")):
    """Cross-scheme aggregates: per-scheme SINR CDF samples, BER and
    throughput summaries, and the per-drop power-saving gain CDF of the
    power-controlled scheme against the fixed-power baseline."""
    drops = {name: res.drops for name, res in results_by_scheme.items()}
    if len(set(drops.values())) > 1:
        raise ContractViolationError(f"mismatched drop counts: {drops}")

    out = {"schemes": {}}
    for name, res in results_by_scheme.items():
        samples = np.sort(res.sinr_samples_db.reshape(-1))
        out["schemes"][name] = {
            "drops": int(res.drops),
            "sum_throughput_mean": float(res.sum_throughput.mean()),
            "sum_throughput": res.sum_throughput.tolist(),
            "ber_mean": float(res.ber.mean()),
            "rate_mean": float(res.rate.mean()),
            "sinr_cdf_db": samples.tolist(),
            "feedback_bits_mean": float(res.feedback_bits.mean()),
        }

    base, ctrl = gain_pair
    if base in results_by_scheme and ctrl in results_by_scheme:
        p_base = results_by_scheme[base].tx_power.sum(axis=1)
        p_ctrl = results_by_scheme[ctrl].tx_power.sum(axis=1)
        gains = 10.0 * np.log10(p_base / p_ctrl)
        out["power_saving_gain_db"] = {
            "samples": np.sort(gains).tolist(),
            "mean": float(gains.mean()),
        }
    return out
