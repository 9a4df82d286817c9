"""Compressed CSI feedback codec, following the IEEE 802.11ac compressed
beamforming idea adapted to interference networks.

Per destination k and reported subcarrier, the M x KM concatenation
H = [H_k1, ..., H_kK] is split as H = W Lambda F^H; only Lambda (as
per-stream SNRs) and F (as Givens/phase angles) are fed back, W being
irrelevant to any receiver that is invariant to left-unitary transforms.

Angle pipeline for F (KM x M, orthonormal columns):

1. rotate each column so the last row is real and non-negative (free),
2. optionally rotate the first K-1 row blocks by one phasor each so the
   first column's block-leading phases vanish (saves (K-1) phi codes;
   harmless because a per-source common phase never affects beamformer
   quality),
3. per column i: record phases phi of rows i..KM-2, rotate them away,
   then record Givens angles psi in [0, pi/2] that zero rows i+1..KM-1
   against the diagonal pivot, top to bottom.

Quantizers are uniform lattices including the range endpoints (phi on
[0, 2pi) wraps; psi spans [0, pi/2] inclusive), encoded round-to-nearest.
Stream SNRs lambda_i^2 P_ref / N0 are reported in dB as an 8-bit per-stream
average on [10, 53.75] dB plus 4-bit per-subcarrier deltas on [-8, +7] dB;
if any average overflows the range, a common offset (0.25 dB lattice) is
subtracted and carried in the header.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, NetworkConfig
from .errors import ContractViolationError, DecodeError
from .numerics import givens_zero, svd

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

GRANULARITY_CHOICES = (1, 2, 4, 8, 16, 38)

SNR_AVG_BITS = 8
SNR_AVG_MIN_DB = 10.0
SNR_AVG_MAX_DB = 53.75
SNR_DELTA_BITS = 4
SNR_DELTA_MIN_DB = -8.0
SNR_DELTA_MAX_DB = 7.0
OFFSET_STEP_DB = 0.25

_HEADER_BITS = 4 + 3 + 6 + 4 + 4 + 8


@dataclass
class FeedbackConfig:
    b_phi: int = 7
    b_psi: int = 9
    n_g: int = 1
    snr_reference: float = 1.0      # power applied to the channel when
                                    # converting singular values to SNR

    def __post_init__(self):
        if self.b_phi < 1 or self.b_psi < 1:
            raise ContractViolationError("b_phi and b_psi must be >= 1")
        if self.n_g not in GRANULARITY_CHOICES:
            raise ContractViolationError(f"n_g must be one of {GRANULARITY_CHOICES}")
        if self.snr_reference <= 0:
            raise ContractViolationError("snr_reference must be > 0")


@dataclass
class CompressedCsi:
    k_users: int
    m_antennas: int
    n_g: int
    b_phi: int
    b_psi: int
    subcarrier_count: int
    reported_subcarriers: list
    quantized: bool
    reduced: bool
    # quantized: integer codes; float path: raw angle values
    phi: list = field(default_factory=list)    # per reported subcarrier
    psi: list = field(default_factory=list)    # per reported subcarrier
    snr_avg_codes: list = field(default_factory=list)        # per stream
    snr_delta_codes: list = field(default_factory=list)      # per subcarrier, per stream
    snr_db_float: list = field(default_factory=list)         # float path only
    snr_offset_db: float = 0.0

    def to_json(self):
        return json.dumps(self.__dict__)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def concat_channels(channels: ChannelSet, k, subcarrier=0):
    """Row of channels into destination k: [H_k1, ..., H_kK], M x KM."""
    return np.concatenate(
        [channels.forward(k, l, subcarrier) for l in range(channels.k_users)], axis=1)


def split_blocks(h_eff, m_antennas):
    """Inverse of concat_channels on an effective M x KM matrix."""
    k = h_eff.shape[1] // m_antennas
    return [h_eff[:, l * m_antennas:(l + 1) * m_antennas] for l in range(k)]


def feedback_bit_count(k_users, m_antennas, fb: FeedbackConfig):
    """Angle payload per reported subcarrier: full and phase-reduced."""
    if k_users < 1 or m_antennas < 1:
        raise ContractViolationError("k_users and m_antennas must be >= 1")
    k, m = k_users, m_antennas
    per_type = ((2 * k * m - 1) * m - m * m) // 2
    n_b = per_type * (fb.b_phi + fb.b_psi)
    return n_b, n_b - (k - 1) * fb.b_phi


def apply_granularity(subcarrier_count, n_g):
    """Reported subcarrier indices: every n_g-th plus the last one, so the
    nearest-precoder rule never extrapolates."""
    if subcarrier_count < 1:
        raise ContractViolationError("subcarrier_count must be >= 1")
    idx = list(range(0, subcarrier_count, n_g))
    if idx[-1] != subcarrier_count - 1:
        idx.append(subcarrier_count - 1)
    return idx


def _phi_positions(nr, nc, k_users, m_antennas, reduced):
    """(row, col) extraction order of transmitted phi angles."""
    skip = set()
    if reduced:
        skip = {l * m_antennas for l in range(k_users - 1)}
    pos = []
    for i in range(nc):
        for l in range(i, nr - 1):
            if i == 0 and l in skip:
                continue
            pos.append((l, i))
    return pos


def _psi_positions(nr, nc):
    return [(l, i) for i in range(nc) for l in range(i + 1, nr)]


def canonicalize_f(f, k_users, reduce_blocks):
    """Apply the transmit-side-invariant phase normalizations the encoder
    uses before angle extraction; the decoder reproduces exactly this
    matrix in the lossless limit."""
    f = np.array(f, dtype=np.complex128)
    nr = f.shape[0]
    m = nr // k_users
    for c in range(f.shape[1]):
        z = f[nr - 1, c]
        r = abs(z)
        if r > 0.0:
            f[:, c] *= z.conjugate() / r
    if reduce_blocks:
        for l in range(k_users - 1):
            z = f[l * m, 0]
            r = abs(z)
            if r > 0.0:
                f[l * m:(l + 1) * m, :] *= z.conjugate() / r
    return f


def extract_angles(f_canonical):
    """Full (phi, psi) angle maps of a canonicalized orthonormal-column
    matrix, as dicts keyed by (row, col)."""
    f = np.array(f_canonical, dtype=np.complex128)
    nr, nc = f.shape
    phi = {}
    psi = {}
    for i in range(nc):
        for l in range(i, nr - 1):
            ang = math.atan2(f[l, i].imag, f[l, i].real) % TWO_PI
            phi[(l, i)] = ang
            f[l, :] *= complex(math.cos(ang), -math.sin(ang))
        for l in range(i + 1, nr):
            a = f[i, i].real
            b = f[l, i].real
            c, s, _ = givens_zero(max(a, 0.0), max(b, 0.0))
            psi[(l, i)] = math.atan2(max(b, 0.0), max(a, 0.0))
            row_i = c * f[i, :] + s * f[l, :]
            row_l = -s * f[i, :] + c * f[l, :]
            f[i, :] = row_i
            f[l, :] = row_l
    return phi, psi


def rebuild_f(phi, psi, nr, nc):
    """Inverse of extract_angles: orthonormal-column KM x M matrix from the
    angle maps (missing phi entries are treated as zero)."""
    x = np.zeros((nr, nc), dtype=np.complex128)
    for i in range(nc):
        x[i, i] = 1.0
    for i in range(nc - 1, -1, -1):
        for l in range(nr - 1, i, -1):
            ang = psi[(l, i)]
            c = math.cos(ang)
            s = math.sin(ang)
            row_i = c * x[i, :] - s * x[l, :]
            row_l = s * x[i, :] + c * x[l, :]
            x[i, :] = row_i
            x[l, :] = row_l
        for l in range(i, nr - 1):
            ang = phi.get((l, i), 0.0)
            x[l, :] *= complex(math.cos(ang), math.sin(ang))
    return x


def _quantize_phi(ang, bits):
    step = TWO_PI / (1 << bits)
    return int(round(ang / step)) % (1 << bits)


def _dequantize_phi(code, bits):
    return code * (TWO_PI / (1 << bits))


def _quantize_psi(ang, bits):
    step = HALF_PI / ((1 << bits) - 1)
    return min(max(int(round(ang / step)), 0), (1 << bits) - 1)


def _dequantize_psi(code, bits):
    return code * (HALF_PI / ((1 << bits) - 1))


def quantize_snr_profile(snr_db):
    """Two-step SNR quantizer.

    ``snr_db`` is (n_reported, n_streams).  Per stream, the average over
    reported subcarriers gets 8 bits on [10, 53.75] dB and each subcarrier
    a 4-bit integer-dB delta on [-8, +7].  Whenever an average exceeds the
    range top, a global offset (max average - 53.75, on the 0.25 dB
    lattice) is subtracted first and returned alongside the codes.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    if not np.all(np.isfinite(snr_db)):
        raise ContractViolationError("SNR profile must be finite")
    avgs = snr_db.mean(axis=0)
    offset = 0.0
    top = float(np.max(avgs))
    if top > SNR_AVG_MAX_DB:
        offset = round((top - SNR_AVG_MAX_DB) / OFFSET_STEP_DB) * OFFSET_STEP_DB
    step = (SNR_AVG_MAX_DB - SNR_AVG_MIN_DB) / ((1 << SNR_AVG_BITS) - 1)
    avg_codes = []
    for a in avgs - offset:
        code = int(round((a - SNR_AVG_MIN_DB) / step))
        avg_codes.append(min(max(code, 0), (1 << SNR_AVG_BITS) - 1))
    delta_codes = []
    for row in snr_db:
        codes = []
        for a, stream_avg in zip(row, avgs):
            d = a - stream_avg
            code = int(round(d - SNR_DELTA_MIN_DB))
            codes.append(min(max(code, 0), (1 << SNR_DELTA_BITS) - 1))
        delta_codes.append(codes)
    return avg_codes, delta_codes, offset


def _snr_codes_to_db(avg_codes, delta_codes, offset):
    step = (SNR_AVG_MAX_DB - SNR_AVG_MIN_DB) / ((1 << SNR_AVG_BITS) - 1)
    avgs = np.array([SNR_AVG_MIN_DB + c * step + offset for c in avg_codes])
    out = np.empty((len(delta_codes), len(avg_codes)))
    for r, codes in enumerate(delta_codes):
        for i, c in enumerate(codes):
            out[r, i] = avgs[i] + (SNR_DELTA_MIN_DB + c)
    return out


def encode_csi(channels: ChannelSet, k, cfg: NetworkConfig, fb: FeedbackConfig,
               noise_power=None, quantize=True) -> CompressedCsi:
    """Compress destination k's row of channels.

    ``quantize=False`` is the lossless diagnostic path: raw float angles,
    no phase-budget reduction, exact dB SNRs.  Only the quantized form is
    serializable to the wire format.
    """
    n0 = cfg.noise_power if noise_power is None else noise_power
    if n0 <= 0:
        raise ContractViolationError("SNR feedback needs noise_power > 0")
    s_count = channels.subcarriers
    reported = apply_granularity(s_count, fb.n_g)
    ku, m = channels.k_users, channels.m_antennas
    nr, nc = ku * m, m

    phis = []
    psis = []
    snr_db = np.empty((len(reported), m))
    for r_idx, s in enumerate(reported):
        h = concat_channels(channels, k, s)
        res = svd(h)
        f = canonicalize_f(res.f, ku, reduce_blocks=quantize)
        phi_map, psi_map = extract_angles(f)
        phi_list = [phi_map[pos] for pos in _phi_positions(nr, nc, ku, m, reduced=quantize)]
        psi_list = [psi_map[pos] for pos in _psi_positions(nr, nc)]
        if quantize:
            phis.append([_quantize_phi(a, fb.b_phi) for a in phi_list])
            psis.append([_quantize_psi(a, fb.b_psi) for a in psi_list])
        else:
            phis.append(phi_list)
            psis.append(psi_list)
        lam = res.lam
        snr_lin = np.maximum(lam * lam * fb.snr_reference / n0, 1e-300)
        snr_db[r_idx] = 10.0 * np.log10(snr_lin)

    code = CompressedCsi(
        k_users=ku, m_antennas=m, n_g=fb.n_g, b_phi=fb.b_phi, b_psi=fb.b_psi,
        subcarrier_count=s_count, reported_subcarriers=reported,
        quantized=quantize, reduced=quantize, phi=phis, psi=psis)
    if quantize:
        code.snr_avg_codes, code.snr_delta_codes, code.snr_offset_db = \
            quantize_snr_profile(snr_db)
    else:
        code.snr_db_float = snr_db.tolist()
    return code


@dataclass
class DecodedCsi:
    reported: list
    h_effective: np.ndarray     # (n_reported, M, K*M)
    f_hat: np.ndarray           # (n_reported, K*M, M)
    lam_hat: np.ndarray         # (n_reported, M)
    snr_db: np.ndarray          # (S, M), linear-in-dB interpolation

    def block(self, r_idx, l):
        m = self.h_effective.shape[1]
        return self.h_effective[r_idx][:, l * m:(l + 1) * m]

    def nearest_reported(self, subcarrier):
        """Index into ``reported`` closest to the subcarrier (ties toward
        the lower index)."""
        best, best_d = 0, None
        for i, s in enumerate(self.reported):
            d = abs(s - subcarrier)
            if best_d is None or d < best_d:
                best, best_d = i, d
        return best


def decode_csi(code: CompressedCsi, cfg: NetworkConfig, fb: FeedbackConfig,
               noise_power=None) -> DecodedCsi:
    """Rebuild the effective channels Lambda F^H at every reported
    subcarrier, plus the dB-interpolated SNR profile for all subcarriers."""
    n0 = cfg.noise_power if noise_power is None else noise_power
    if n0 <= 0:
        raise ContractViolationError("SNR reconstruction needs noise_power > 0")
    ku, m = code.k_users, code.m_antennas
    nr, nc = ku * m, m
    n_rep = len(code.reported_subcarriers)
    phi_pos = _phi_positions(nr, nc, ku, m, code.reduced)
    psi_pos = _psi_positions(nr, nc)
    if len(code.phi) != n_rep or len(code.psi) != n_rep:
        raise DecodeError("angle payload does not match the reported set")

    f_hat = np.empty((n_rep, nr, nc), dtype=np.complex128)
    for r_idx in range(n_rep):
        phi_list, psi_list = code.phi[r_idx], code.psi[r_idx]
        if len(phi_list) != len(phi_pos) or len(psi_list) != len(psi_pos):
            raise DecodeError("angle count mismatch")
        if code.quantized:
            phi_vals = [_dequantize_phi(c, code.b_phi) for c in phi_list]
            psi_vals = [_dequantize_psi(c, code.b_psi) for c in psi_list]
        else:
            phi_vals, psi_vals = phi_list, psi_list
        phi_map = dict(zip(phi_pos, phi_vals))
        psi_map = dict(zip(psi_pos, psi_vals))
        f_hat[r_idx] = rebuild_f(phi_map, psi_map, nr, nc)

    if code.quantized:
        rep_snr_db = _snr_codes_to_db(code.snr_avg_codes, code.snr_delta_codes,
                                      code.snr_offset_db)
    else:
        rep_snr_db = np.asarray(code.snr_db_float, dtype=float)
    if rep_snr_db.shape != (n_rep, m):
        raise DecodeError("SNR payload does not match the reported set")

    grid = np.arange(code.subcarrier_count)
    snr_db = np.empty((code.subcarrier_count, m))
    for i in range(m):
        snr_db[:, i] = np.interp(grid, code.reported_subcarriers, rep_snr_db[:, i])

    ref = fb.snr_reference
    lam_hat = np.sqrt(10.0 ** (rep_snr_db / 10.0) * n0 / ref)
    h_eff = np.empty((n_rep, m, nr), dtype=np.complex128)
    for r_idx in range(n_rep):
        h_eff[r_idx] = (lam_hat[r_idx][:, None] * f_hat[r_idx].conj().T)
    return DecodedCsi(reported=list(code.reported_subcarriers), h_effective=h_eff,
                      f_hat=f_hat, lam_hat=lam_hat, snr_db=snr_db)


# ---------------------------------------------------------------------------
# wire format: MSB-first header + per-subcarrier angle codes + SNR section

class _BitWriter:
    def __init__(self):
        self.bits = []

    def put(self, value, width):
        if value < 0 or value >= (1 << width):
            raise ContractViolationError(f"value {value} does not fit {width} bits")
        for i in range(width - 1, -1, -1):
            self.bits.append((value >> i) & 1)

    def to_bytes(self):
        out = bytearray()
        acc, n = 0, 0
        for b in self.bits:
            acc = (acc << 1) | b
            n += 1
            if n == 8:
                out.append(acc)
                acc, n = 0, 0
        if n:
            out.append(acc << (8 - n))
        return bytes(out)

    def __len__(self):
        return len(self.bits)


class _BitReader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, width):
        end = self.pos + width
        if end > len(self.buf) * 8:
            raise DecodeError("bitstream truncated")
        val = 0
        for i in range(self.pos, end):
            val = (val << 1) | ((self.buf[i // 8] >> (7 - i % 8)) & 1)
        self.pos = end
        return val


def payload_bit_length(code: CompressedCsi):
    """Exact angle+SNR payload size (header excluded)."""
    fb_like = FeedbackConfig(b_phi=code.b_phi, b_psi=code.b_psi, n_g=code.n_g)
    _, n_b_reduced = feedback_bit_count(code.k_users, code.m_antennas, fb_like)
    n_rep = len(code.reported_subcarriers)
    m = code.m_antennas
    return n_b_reduced * n_rep + m * SNR_AVG_BITS + n_rep * m * SNR_DELTA_BITS


def to_bytes(code: CompressedCsi) -> bytes:
    """Serialize a quantized record; the float diagnostic path has no wire
    form (use the JSON mirror for it)."""
    if not (code.quantized and code.reduced):
        raise ContractViolationError("only quantized, phase-reduced records serialize")
    w = _BitWriter()
    w.put(code.k_users, 4)
    w.put(code.m_antennas, 3)
    w.put(code.n_g, 6)
    w.put(code.b_phi, 4)
    w.put(code.b_psi, 4)
    w.put(int(round(code.snr_offset_db / OFFSET_STEP_DB)), 8)
    for phi_list, psi_list in zip(code.phi, code.psi):
        for c in phi_list:
            w.put(c, code.b_phi)
        for c in psi_list:
            w.put(c, code.b_psi)
    for c in code.snr_avg_codes:
        w.put(c, SNR_AVG_BITS)
    for codes in code.snr_delta_codes:
        for c in codes:
            w.put(c, SNR_DELTA_BITS)
    expect = _HEADER_BITS + payload_bit_length(code)
    if len(w) != expect:
        raise ContractViolationError(
            f"payload accounting mismatch: wrote {len(w)}, expected {expect}")
    return w.to_bytes()


def from_bytes(buf: bytes, subcarrier_count) -> CompressedCsi:
    r = _BitReader(buf)
    ku = r.take(4)
    m = r.take(3)
    n_g = r.take(6)
    b_phi = r.take(4)
    b_psi = r.take(4)
    offset = r.take(8) * OFFSET_STEP_DB
    if ku < 1 or m < 1 or b_phi < 1 or b_psi < 1:
        raise DecodeError("malformed header")
    if n_g not in GRANULARITY_CHOICES:
        raise DecodeError(f"malformed header: n_g = {n_g}")
    reported = apply_granularity(subcarrier_count, n_g)
    nr, nc = ku * m, m
    n_phi = len(_phi_positions(nr, nc, ku, m, reduced=True))
    n_psi = len(_psi_positions(nr, nc))
    phis, psis = [], []
    for _ in reported:
        phis.append([r.take(b_phi) for _ in range(n_phi)])
        psis.append([r.take(b_psi) for _ in range(n_psi)])
    avg_codes = [r.take(SNR_AVG_BITS) for _ in range(m)]
    delta_codes = [[r.take(SNR_DELTA_BITS) for _ in range(m)] for _ in reported]
    return CompressedCsi(
        k_users=ku, m_antennas=m, n_g=n_g, b_phi=b_phi, b_psi=b_psi,
        subcarrier_count=subcarrier_count, reported_subcarriers=reported,
        quantized=True, reduced=True, phi=phis, psi=psis,
        snr_avg_codes=avg_codes, snr_delta_codes=delta_codes,
        snr_offset_db=offset)
