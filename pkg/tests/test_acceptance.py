"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its runtime budget.  Run with

    pytest tests/test_acceptance.py -v -s
"""

import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ialab import alignment as al
from ialab import csifb, sim
from ialab import powerctl as pw
from ialab.channel import NetworkConfig, TrainingConfig, dof_limits, optimal_power_split, \
    sample_channels
from ialab.csifb import FeedbackConfig

KM_CFG = dict(k_users=3, m_antennas=2, streams=1, noise_power=1.0)


def report(number, name, ok, elapsed, budget):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number} [{name}]: {status} ({elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"criterion {number} ({name}) failed"
    assert elapsed < budget, f"criterion {number} exceeded budget: {elapsed:.1f}s"


def test_criterion_1_formula_exactness():
    t0 = time.time()
    fb = FeedbackConfig(b_phi=7, b_psi=9)
    ok = csifb.feedback_bit_count(3, 2, fb) == (144, 130)
    ok &= dof_limits(10, 8)[1] == 4

    rng = np.random.default_rng(404)
    for _ in range(1000):
        k = int(rng.integers(1, 8))
        t = float(rng.uniform(4 * k, 400))
        alpha = float(rng.uniform(k / t + 0.01, 0.99))
        p = float(10 ** rng.uniform(-3, 5))
        n0 = float(10 ** rng.uniform(-2, 2))
        cfg = NetworkConfig(k_users=k, m_antennas=2, streams=1, noise_power=n0,
                            p_max=1.0)
        train = TrainingConfig(coherence_time=t, sharing_factor=alpha, avg_power=p)
        _, p_data, p_pilot = optimal_power_split(train, cfg)
        ok &= abs((1 - alpha) * p_data + (alpha / k) * p_pilot - p) <= 1e-12 * p
    report(1, "formula exactness", bool(ok), time.time() - t0, 1.0)


# criteria 2 and 3 share one corpus run: channel seeds 7000..7099 with
# beamformer init seeds 0..99
_IA_CORPUS = None


def _ia_corpus():
    global _IA_CORPUS
    if _IA_CORPUS is None:
        cfg = NetworkConfig(p_max=10.0, **KM_CFG)
        runs = []
        for i in range(100):
            table = sample_channels(cfg, 7000 + i).table(0)
            state, rep = al.run_iterative_alignment(
                table, cfg, variant=al.LEAKAGE_MIN, max_iters=500, tol=1e-9, seed=i)
            runs.append((table, state, rep))
        _IA_CORPUS = (cfg, runs)
    return _IA_CORPUS


def test_criterion_2_ia_convergence():
    t0 = time.time()
    _, runs = _ia_corpus()
    reached = sum(1 for _, _, rep in runs
                  if rep.residual < 1e-6 and rep.iterations <= 500)
    monotone = sum(1 for _, _, rep in runs
                   if np.all(np.diff(rep.leakage_trace) <= 1e-9))
    ok = reached >= 99 and monotone == 100
    print(f"\n  converged <1e-6: {reached}/100, monotone traces: {monotone}/100")
    report(2, "IA convergence", ok, time.time() - t0, 30.0)


def test_criterion_3_ia_conditions():
    t0 = time.time()
    cfg, runs = _ia_corpus()
    ok = True
    checked = 0
    for table, state, rep in runs:
        if not rep.converged:
            continue
        checked += 1
        _, rank_ok = al.alignment_residual(state, table, cfg, rank_tol=1e-3)
        ok &= rank_ok
        for k in range(cfg.k_users):
            sig = np.linalg.norm(state.u[k].conj().T @ table[k, k] @ state.v[k])
            for j in range(cfg.k_users):
                if j == k:
                    continue
                cross = np.linalg.norm(state.u[k].conj().T @ table[k, j] @ state.v[j])
                ok &= cross < 1e-3 * sig
    print(f"\n  conditions checked on {checked} converged drops")
    report(3, "IA conditions", bool(ok and checked >= 99), time.time() - t0, 30.0)


def test_criterion_4_power_control():
    t0 = time.time()
    cfg = NetworkConfig(p_max=1e4, **KM_CFG)
    # a handful of drops need >1000 iterations before the beamformer
    # dynamics lock in; the power cap certificate below is unaffected
    pc = pw.PowerControlConfig.from_gamma_db(18.0, 3, p_max=1e4, max_iters=1500,
                                             tol=1e-9)
    # feasibility certified post hoc: a drop is feasible when no power is
    # pinned at the cap by the final iteration
    feasible = 0
    worst_dev = 0.0
    attempts = 0
    while feasible < 100 and attempts < 130:
        table = sample_channels(cfg, 81000 + attempts).table(0)
        _, trace = pw.run_joint_ia_pc(table, cfg, pc, seed=attempts)
        attempts += 1
        if np.all(trace.powers[-1] < 0.999 * pc.p_max):
            feasible += 1
            sinr_db = 10 * np.log10(np.asarray(trace.sinrs[-1]))
            worst_dev = max(worst_dev, float(np.max(np.abs(sinr_db - 18.0))))
    ok = feasible >= 100 and worst_dev <= 0.1

    # standard-interference-function properties on 1000 random instances
    rng = np.random.default_rng(17)
    gamma = np.array([3.0, 2.0, 4.0])
    sif_cfg = NetworkConfig(p_max=1e4, **KM_CFG)
    for trial in range(1000):
        table = sample_channels(sif_cfg, 90000 + trial).table(0)
        state = al.initial_state(sif_cfg, trial)
        p = rng.uniform(0.1, 10.0, size=3)
        work = al.TransceiverState(v=state.v, u=state.u, p=p)
        beta_p = np.array([pw.required_power(work, table, k, gamma[k], sif_cfg)
                           for k in range(3)])
        ok &= bool(np.all(beta_p > 0))
        work_hi = al.TransceiverState(v=state.v, u=state.u,
                                      p=p * rng.uniform(1.0, 3.0, size=3))
        beta_hi = np.array([pw.required_power(work_hi, table, k, gamma[k], sif_cfg)
                            for k in range(3)])
        ok &= bool(np.all(beta_hi >= beta_p - 1e-12))
        c = rng.uniform(1.5, 4.0)
        work_c = al.TransceiverState(v=state.v, u=state.u, p=c * p)
        beta_c = np.array([pw.required_power(work_c, table, k, gamma[k], sif_cfg)
                           for k in range(3)])
        ok &= bool(np.all(c * beta_p > beta_c))

    # two-user fixed point against the closed-form linear solve
    toy_cfg = NetworkConfig(k_users=2, m_antennas=2, streams=1, noise_power=1.0,
                            p_max=1e6)
    table = np.zeros((2, 2, 2, 2), dtype=complex)
    table[0, 0] = np.eye(2)
    table[1, 1] = np.eye(2)
    table[0, 1] = 0.15 * np.eye(2)
    table[1, 0] = 0.15 * np.eye(2)
    e1 = np.zeros((2, 1), dtype=complex)
    e1[0, 0] = 1.0
    state = al.TransceiverState(v=np.stack([e1, e1]), u=np.stack([e1, e1]),
                                p=np.array([1.0, 1.0]))
    gamma2 = np.array([4.0, 2.0])
    traj = pw.fixed_power_iteration(state, table, toy_cfg, gamma2, p_max=1e9,
                                    iters=300)
    a = np.array([[0.0, 0.15 ** 2], [0.15 ** 2, 0.0]])
    big_gamma = np.diag(gamma2)
    oracle = np.linalg.solve(np.eye(2) - big_gamma @ a, big_gamma @ np.ones(2))
    ok &= bool(np.max(np.abs(traj[-1] - oracle)) < 1e-8)

    print(f"\n  feasible drops: {feasible}/{attempts}, worst |SINR-18|: {worst_dev:.2e} dB")
    report(4, "power control", bool(ok), time.time() - t0, 60.0)


def test_criterion_5_pc_vs_nopc_ordering():
    t0 = time.time()
    cfg = NetworkConfig(p_max=1e4, **KM_CFG)
    pc = pw.PowerControlConfig.from_gamma_db(18.0, 3, p_max=1e4, max_iters=600,
                                             tol=1e-9)
    feasible = 0
    power_below = 0
    sinr_in = 0
    samples = 0
    for drop in range(200):
        ch = sample_channels(cfg, 50000 + drop)
        r_pc = sim.simulate_scheme("pc", ch, cfg, {"power_control": pc}, seed=drop)
        r_np = sim.simulate_scheme("nopc", ch, cfg, {}, seed=drop)
        if not np.all(r_pc.tx_power[0] < 0.999 * cfg.p_max):
            continue
        feasible += 1
        power_below += float(r_pc.tx_power[0].sum()) < float(r_np.tx_power[0].sum())
        devs = np.abs(r_pc.sinr_samples_db[0].reshape(-1) - 18.0)
        sinr_in += int(np.sum(devs <= 0.5))
        samples += devs.size
    ok = (feasible > 0 and power_below >= 0.95 * feasible
          and sinr_in >= 0.95 * samples)
    print(f"\n  feasible {feasible}/200, power-below {power_below}/{feasible}, "
          f"SINR within 0.5 dB {sinr_in}/{samples}")
    report(5, "PC vs noPC ordering", bool(ok), time.time() - t0, 120.0)


NG_SET = (1, 2, 4, 8, 16, 38)
_FB_PMAX = 100.0


def _feedback_drop(drop):
    cfg = NetworkConfig(subcarriers=38, p_max=_FB_PMAX, **KM_CFG)
    ch = sample_channels(cfg, 40000 + drop)
    quant, flt = [], []
    for ng in NG_SET:
        knobs = {"feedback": FeedbackConfig(n_g=ng, snr_reference=_FB_PMAX),
                 "ia_iters": 80, "ia_tol": 1e-3}
        quant.append(sim.simulate_scheme("ia_feedback", ch, cfg,
                                         {**knobs, "quantize": True},
                                         seed=drop).sum_throughput[0])
        flt.append(sim.simulate_scheme("ia_feedback", ch, cfg,
                                       {**knobs, "quantize": False},
                                       seed=drop).sum_throughput[0])
    return quant, flt


def test_criterion_6_codec_fidelity():
    t0 = time.time()
    # float-path Gram preservation on 1000 random channels
    cfg1 = NetworkConfig(subcarriers=1, p_max=100.0, **KM_CFG)
    fb = FeedbackConfig()
    gram_ok = True
    for seed in range(1000):
        ch = sample_channels(cfg1, seed)
        dec = csifb.decode_csi(csifb.encode_csi(ch, 0, cfg1, fb, quantize=False),
                               cfg1, fb)
        h = csifb.concat_channels(ch, 0, 0)
        g_true = h.conj().T @ h
        g_hat = dec.h_effective[0].conj().T @ dec.h_effective[0]
        gram_ok &= np.linalg.norm(g_hat - g_true) < 1e-9 * np.linalg.norm(g_true)

    # 200-drop throughput corpus, quantized vs lossless, across granularities
    workers = min(os.cpu_count() or 1, 4)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(_feedback_drop, range(200), chunksize=10))
    quant = np.array([r[0] for r in rows])    # (drops, len(NG_SET))
    flt = np.array([r[1] for r in rows])
    mean_q = quant.mean(axis=0)
    mean_f = flt.mean(axis=0)
    loss = (mean_f - mean_q) / mean_f
    small_loss = all(abs(loss[i]) < 0.02 for i, ng in enumerate(NG_SET) if ng <= 8)
    monotone = all(loss[i + 1] >= loss[i] - 0.01 for i in range(len(NG_SET) - 1))
    # coarser feedback never helps: absolute throughput nonincreasing in N_g
    tp_monotone = all(mean_q[i + 1] <= mean_q[i] * 1.01 for i in range(len(NG_SET) - 1))
    print("\n  quantization loss by N_g:",
          {ng: f"{loss[i] * 100:.2f}%" for i, ng in enumerate(NG_SET)})
    report(6, "codec fidelity", bool(gram_ok and small_loss and monotone
                                     and tp_monotone),
           time.time() - t0, 300.0)


def test_criterion_7_bit_exact_round_trip():
    t0 = time.time()
    from test_csifb import random_code
    rng = np.random.default_rng(321)
    ok = True
    for _ in range(10000):
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        n_g = int(rng.choice(NG_SET))
        s_count = int(rng.integers(1, 11))
        b_phi = int(rng.integers(1, 9))
        b_psi = int(rng.integers(1, 11))
        code = random_code(rng, k, m, n_g, s_count, b_phi, b_psi)
        ok &= csifb.from_bytes(csifb.to_bytes(code), s_count) == code
        fb = FeedbackConfig(b_phi=b_phi, b_psi=b_psi, n_g=n_g)
        _, n_b_reduced = csifb.feedback_bit_count(k, m, fb)
        n_rep = len(code.reported_subcarriers)
        ok &= csifb.payload_bit_length(code) == (n_b_reduced * n_rep + m * 8
                                                 + n_rep * m * 4)
    report(7, "bit-exact codec round trip", bool(ok), time.time() - t0, 10.0)


def test_criterion_8_scheme_ordering():
    t0 = time.time()
    cfg = NetworkConfig(subcarriers=2, p_max=100.0, **KM_CFG)
    wins_tdma = wins_fr = wins_simo = 0
    for drop in range(200):
        ch = sample_channels(cfg, 60000 + drop)
        knobs = {"feedback": FeedbackConfig(n_g=1, snr_reference=cfg.p_max),
                 "ia_iters": 80, "ia_tol": 1e-3}
        ia = sim.simulate_scheme("ia_feedback", ch, cfg, knobs, seed=drop).sum_throughput[0]
        td = sim.simulate_scheme("tdma_mimo", ch, cfg, {}, seed=drop).sum_throughput[0]
        fm = sim.simulate_scheme("fullreuse_mimo", ch, cfg, {}, seed=drop).sum_throughput[0]
        fs = sim.simulate_scheme("fullreuse_simo", ch, cfg, {}, seed=drop).sum_throughput[0]
        wins_tdma += ia > td
        wins_fr += td > fm
        wins_simo += ia > fs
    ok = wins_tdma >= 180 and wins_fr >= 180 and wins_simo >= 180
    print(f"\n  IA>TDMA {wins_tdma}/200, TDMA>full-reuse {wins_fr}/200, "
          f"IA>SIMO {wins_simo}/200")
    report(8, "scheme ordering", bool(ok), time.time() - t0, 120.0)


def test_criterion_9_determinism(tmp_path):
    t0 = time.time()
    config = {
        "network": {"k_users": 3, "m_antennas": 2, "streams": 1,
                    "noise_power": 1.0, "p_max": 10000.0, "subcarriers": 2},
        "power_control": {"gamma_db": 18.0, "p_max": 10000.0,
                          "max_iters": 300, "tol": 1e-9},
        "feedback": {"b_phi": 7, "b_psi": 9, "n_g": 2, "snr_reference": 10000.0},
        "schemes": ["nopc", "pc", "ia_feedback"],
        "drops": 3,
        "seed": 11,
        "output_dir": str(tmp_path / "out"),
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    def run(threads):
        env = dict(os.environ)
        env["IA_LAB_THREADS"] = threads
        r = subprocess.run([sys.executable, "-m", "ialab.cli", "run", str(cfg_path)],
                           capture_output=True, env=env)
        assert r.returncode == 0, r.stderr
        return ((tmp_path / "out" / "results.csv").read_bytes(),
                (tmp_path / "out" / "summary.json").read_bytes())

    first = run("1")
    again = run("1")
    parallel = run("2")
    ok = first == again == parallel
    report(9, "determinism", bool(ok), time.time() - t0, 60.0)
