"""Command-line front end: experiment orchestration and codec access.

Subcommands:

    ialab run <config.json>        full experiment -> results.csv,
                                   summary.json, convergence_traces.json
    ialab codec encode <in> <out>  channel JSON -> feedback bitstream
    ialab codec decode <in> <out>  feedback bitstream -> reconstruction JSON
    ialab dof  --k K --t T         sum-DoF / active-user formulas
    ialab bits --k K --m M ...     feedback bit accounting

Exit codes: 0 success, 2 bad config or usage, 3 output write failure.
IA_LAB_THREADS sets the drop worker count (0 = all cores, default serial).
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import csifb, sim
from .channel import ChannelSet, NetworkConfig, TrainingConfig, dof_limits, sample_channels
from .errors import ConfigError
from .powerctl import PowerControlConfig


def _require(doc, field, typ, path):
    if field not in doc:
        raise ConfigError("missing required field", f"{path}{field}")
    val = doc[field]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise ConfigError(f"expected {typ.__name__}, got {type(val).__name__}",
                          f"{path}{field}")
    return val


def parse_experiment(doc):
    """Validate a config document into constructor-ready pieces; raises
    ConfigError naming the offending field."""
    net_doc = _require(doc, "network", dict, "")
    try:
        network = NetworkConfig(
            k_users=_require(net_doc, "k_users", int, "network."),
            m_antennas=_require(net_doc, "m_antennas", int, "network."),
            streams=_require(net_doc, "streams", int, "network."),
            noise_power=_require(net_doc, "noise_power", float, "network."),
            p_max=_require(net_doc, "p_max", float, "network."),
            subcarriers=net_doc.get("subcarriers", 1),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "network") from exc

    training = None
    if "training" in doc:
        tr = doc["training"]
        alpha = _require(tr, "sharing_factor", float, "training.")
        t_len = _require(tr, "coherence_time", float, "training.")
        if alpha >= 1.0:
            raise ConfigError("sharing_factor must be < 1 (no data phase left)",
                              "training.sharing_factor")
        if alpha <= network.k_users / t_len:
            raise ConfigError(
                f"sharing_factor must exceed K/T = {network.k_users / t_len:.4g}",
                "training.sharing_factor")
        try:
            training = TrainingConfig(
                coherence_time=t_len, sharing_factor=alpha,
                avg_power=_require(tr, "avg_power", float, "training."))
        except ValueError as exc:
            raise ConfigError(str(exc), "training") from exc

    power_control = None
    if "power_control" in doc:
        pcd = doc["power_control"]
        try:
            power_control = PowerControlConfig.from_gamma_db(
                gamma_db=_require(pcd, "gamma_db", float, "power_control."),
                k_users=network.k_users,
                p_max=pcd.get("p_max", network.p_max),
                max_iters=pcd.get("max_iters", 200),
                tol=pcd.get("tol", 1e-8),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), "power_control") from exc

    feedback = None
    if "feedback" in doc:
        fbd = doc["feedback"]
        try:
            feedback = csifb.FeedbackConfig(
                b_phi=fbd.get("b_phi", 7), b_psi=fbd.get("b_psi", 9),
                n_g=fbd.get("n_g", 1),
                snr_reference=fbd.get("snr_reference", 1.0))
        except ValueError as exc:
            raise ConfigError(str(exc), "feedback") from exc

    schemes = _require(doc, "schemes", list, "")
    if not schemes:
        raise ConfigError("must list at least one scheme", "schemes")
    for s in schemes:
        if s not in sim.SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; choose from {sim.SCHEMES}",
                              "schemes")
    if "pc" in schemes and power_control is None:
        raise ConfigError("scheme 'pc' needs a power_control section", "power_control")

    drops = _require(doc, "drops", int, "")
    if drops < 1:
        raise ConfigError("must be >= 1", "drops")
    seed = _require(doc, "seed", int, "")
    output_dir = _require(doc, "output_dir", str, "")
    knobs = doc.get("knobs", {})
    if not isinstance(knobs, dict):
        raise ConfigError("expected object", "knobs")
    return {
        "network": network, "training": training, "power_control": power_control,
        "feedback": feedback, "schemes": schemes, "drops": drops, "seed": seed,
        "output_dir": output_dir, "knobs": knobs,
    }


def _drop_seed(master_seed, drop):
    return int(np.random.SeedSequence([master_seed & 0xFFFFFFFF, drop]).generate_state(1, np.uint64)[0])


def _scheme_knobs(exp, scheme):
    knobs = dict(exp["knobs"])
    knobs["collect_traces"] = True
    if scheme == "pc":
        knobs["power_control"] = exp["power_control"]
    if scheme == "ia_feedback":
        if exp["feedback"] is not None:
            knobs["feedback"] = exp["feedback"]
        if exp["training"] is not None:
            knobs["training"] = exp["training"]
    return knobs


def run_one_drop(doc, drop):
    """Evaluate every configured scheme on a single seeded drop; used both
    serially and from the worker pool."""
    exp = parse_experiment(doc)
    ds = _drop_seed(exp["seed"], drop)
    channels = sample_channels(exp["network"], ds)
    out = {}
    for scheme in exp["schemes"]:
        out[scheme] = sim.simulate_scheme(scheme, channels, exp["network"],
                                          _scheme_knobs(exp, scheme), seed=ds)
    return drop, out


def _worker_count():
    raw = os.environ.get("IA_LAB_THREADS", "")
    if raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _fmt(x):
    return repr(float(x))


def run_experiment(config_path):
    """Execute a config file; returns the process exit status."""
    try:
        with open(config_path) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: {config_path}:{exc.lineno}:{exc.colno}: {exc.msg}",
              file=sys.stderr)
        return 2
    try:
        exp = parse_experiment(doc)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2

    workers = _worker_count()
    n_drops = exp["drops"]
    results = [None] * n_drops
    if workers > 1 and n_drops > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for drop, res in pool.map(run_one_drop, [doc] * n_drops, range(n_drops)):
                results[drop] = res
    else:
        for drop in range(n_drops):
            results[drop] = run_one_drop(doc, drop)[1]

    by_scheme = {
        scheme: sim.concat_results([results[d][scheme] for d in range(n_drops)])
        for scheme in exp["schemes"]
    }

    out_dir = exp["output_dir"]
    try:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "results.csv"), by_scheme)
        _write_summary(os.path.join(out_dir, "summary.json"), doc, by_scheme)
        _write_traces(os.path.join(out_dir, "convergence_traces.json"), by_scheme)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 3
    return 0


def _write_csv(path, by_scheme):
    lines = ["drop,scheme,user,sinr_db,rate,ber,power_dbm"]
    for scheme in by_scheme:
        res = by_scheme[scheme]
        for d in range(res.drops):
            for k in range(res.sinr_db.shape[1]):
                p = res.tx_power[d, k]
                p_dbm = 10.0 * np.log10(p) if p > 0 else float("-inf")
                lines.append(",".join([
                    str(d), scheme, str(k), _fmt(res.sinr_db[d, k]),
                    _fmt(res.rate[d, k]), _fmt(res.ber[d, k]), _fmt(p_dbm)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_summary(path, doc, by_scheme):
    summary = sim.compute_metrics(by_scheme)
    summary["config"] = doc
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_traces(path, by_scheme):
    traces = {scheme: res.traces for scheme, res in by_scheme.items()}
    with open(path, "w") as fh:
        json.dump(traces, fh, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# codec and formula subcommands

def _cmd_codec_encode(args):
    with open(args.input) as fh:
        channels = ChannelSet.from_json(fh.read())
    fb = csifb.FeedbackConfig(b_phi=args.bphi, b_psi=args.bpsi, n_g=args.ng,
                              snr_reference=args.pref)
    cfg = NetworkConfig(k_users=channels.k_users, m_antennas=channels.m_antennas,
                        streams=1, noise_power=args.noise, p_max=1.0,
                        subcarriers=channels.subcarriers)
    code = csifb.encode_csi(channels, args.user, cfg, fb)
    try:
        with open(args.output, "wb") as fh:
            fh.write(csifb.to_bytes(code))
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 3
    return 0


def _cmd_codec_decode(args):
    with open(args.input, "rb") as fh:
        code = csifb.from_bytes(fh.read(), args.subcarriers)
    fb = csifb.FeedbackConfig(b_phi=code.b_phi, b_psi=code.b_psi, n_g=code.n_g,
                              snr_reference=args.pref)
    cfg = NetworkConfig(k_users=code.k_users, m_antennas=code.m_antennas,
                        streams=1, noise_power=args.noise, p_max=1.0,
                        subcarriers=args.subcarriers)
    dec = csifb.decode_csi(code, cfg, fb)
    doc = {
        "reported_subcarriers": dec.reported,
        "snr_db": dec.snr_db.tolist(),
        "h_effective": [
            [[ [z.real, z.imag] for z in row ] for row in mat]
            for mat in dec.h_effective
        ],
    }
    try:
        with open(args.output, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ialab", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")

    p_codec = sub.add_parser("codec", help="compressed CSI feedback codec")
    codec_sub = p_codec.add_subparsers(dest="codec_command")
    p_enc = codec_sub.add_parser("encode")
    p_enc.add_argument("input")
    p_enc.add_argument("output")
    p_enc.add_argument("--user", type=int, default=0)
    p_enc.add_argument("--bphi", type=int, default=7)
    p_enc.add_argument("--bpsi", type=int, default=9)
    p_enc.add_argument("--ng", type=int, default=1)
    p_enc.add_argument("--noise", type=float, default=1.0)
    p_enc.add_argument("--pref", type=float, default=1.0)
    p_dec = codec_sub.add_parser("decode")
    p_dec.add_argument("input")
    p_dec.add_argument("output")
    p_dec.add_argument("--subcarriers", type=int, required=True)
    p_dec.add_argument("--noise", type=float, default=1.0)
    p_dec.add_argument("--pref", type=float, default=1.0)

    p_dof = sub.add_parser("dof", help="sum-DoF and active-user formulas")
    p_dof.add_argument("--k", type=int, required=True)
    p_dof.add_argument("--t", type=float, required=True)

    p_bits = sub.add_parser("bits", help="feedback bit accounting")
    p_bits.add_argument("--k", type=int, required=True)
    p_bits.add_argument("--m", type=int, required=True)
    p_bits.add_argument("--bphi", type=int, default=7)
    p_bits.add_argument("--bpsi", type=int, default=9)

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "codec":
        if args.codec_command == "encode":
            return _cmd_codec_encode(args)
        if args.codec_command == "decode":
            return _cmd_codec_decode(args)
        p_codec.print_usage(sys.stderr)
        return 2
    if args.command == "dof":
        d_sum, k_opt = dof_limits(args.k, args.t)
        print(f"d_sum={d_sum!r} k_opt={k_opt}")
        return 0
    if args.command == "bits":
        fb = csifb.FeedbackConfig(b_phi=args.bphi, b_psi=args.bpsi, n_g=1)
        n_b, n_b_red = csifb.feedback_bit_count(args.k, args.m, fb)
        print(f"n_b={n_b} reduced={n_b_red}")
        return 0
    parser.print_usage(sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
