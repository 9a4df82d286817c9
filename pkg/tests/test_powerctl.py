import math

import numpy as np
import pytest

from ialab import alignment as al
from ialab import powerctl as pw
from ialab.channel import NetworkConfig, sample_channels
from ialab.errors import InfeasibleLinkError


def cfg_for(k=3, m=2, n0=1.0, p_max=1e4):
    return NetworkConfig(k_users=k, m_antennas=m, streams=1, noise_power=n0,
                         p_max=p_max)


def unit(m, i):
    e = np.zeros((m, 1), dtype=complex)
    e[i, 0] = 1.0
    return e


def identity_table(k, m):
    t = np.zeros((k, k, m, m), dtype=complex)
    for i in range(k):
        t[i, i] = np.eye(m)
    return t


class TestComputeSinr:
    def test_clean_matched_link(self):
        cfg = cfg_for(k=1, m=2)
        state = al.TransceiverState(v=np.stack([unit(2, 0)]), u=np.stack([unit(2, 0)]),
                                    p=np.array([2.0]))
        assert pw.compute_sinr(state, identity_table(1, 2), 0, cfg) == pytest.approx(2.0)

    def test_orthogonal_filter_zero(self):
        cfg = cfg_for(k=1, m=2)
        state = al.TransceiverState(v=np.stack([unit(2, 0)]), u=np.stack([unit(2, 1)]),
                                    p=np.array([2.0]))
        assert pw.compute_sinr(state, identity_table(1, 2), 0, cfg) == 0.0

    def test_monte_carlo_symbol_oracle(self):
        """SINR formula vs 1e5 simulated symbol transmissions."""
        cfg = cfg_for(k=3, m=2)
        table = sample_channels(cfg, 5).table(0)
        state = al.initial_state(cfg, 6)
        state.p = np.array([3.0, 1.5, 2.2])
        k = 0
        formula = pw.compute_sinr(state, table, k, cfg)

        rng = np.random.default_rng(1717)
        n = 100000
        u = state.u[k][:, 0]
        sig_gain = np.vdot(u, table[k, k] @ state.v[k][:, 0])
        x = (rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))) / math.sqrt(2)
        noise = (rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))) / math.sqrt(2)
        y = math.sqrt(state.p[k]) * sig_gain * x[k]
        imp = u.conj() @ noise
        for j in range(3):
            if j == k:
                continue
            gain = np.vdot(u, table[k, j] @ state.v[j][:, 0])
            imp = imp + math.sqrt(state.p[j]) * gain * x[j]
        mc = np.mean(np.abs(y) ** 2) / np.mean(np.abs(imp) ** 2)
        assert formula == pytest.approx(mc, rel=0.02)


class TestRequiredPower:
    def test_direct_substitution(self):
        # gamma = 3, IF = 1, N0 = 1, |u^H H v|^2 = 1  ->  6
        cfg = cfg_for(k=2, m=2)
        table = identity_table(2, 2)
        table[0, 1] = np.eye(2)
        state = al.TransceiverState(v=np.stack([unit(2, 0), unit(2, 0)]),
                                    u=np.stack([unit(2, 0), unit(2, 0)]),
                                    p=np.array([1.0, 1.0]))
        assert pw.required_power(state, table, 0, 3.0, cfg) == pytest.approx(6.0)

    def test_interference_free(self):
        # IF = 0, N0 = 1, gain 4, gamma = 4  ->  1
        cfg = cfg_for(k=1, m=2)
        table = identity_table(1, 2) * 2.0
        state = al.TransceiverState(v=np.stack([unit(2, 0)]), u=np.stack([unit(2, 0)]),
                                    p=np.array([1.0]))
        assert pw.required_power(state, table, 0, 4.0, cfg) == pytest.approx(1.0)

    def test_round_trip_hits_target(self):
        cfg = cfg_for(k=3, m=2)
        table = sample_channels(cfg, 8).table(0)
        state = al.initial_state(cfg, 9)
        for k in range(3):
            gamma = 7.5
            p_req = pw.required_power(state, table, k, gamma, cfg)
            state2 = al.TransceiverState(v=state.v, u=state.u, p=state.p.copy())
            state2.p[k] = p_req
            # interference at k unchanged (depends only on other users)
            assert pw.compute_sinr(state2, table, k, cfg) == pytest.approx(gamma, rel=1e-10)

    def test_zero_gain_link_raises(self):
        cfg = cfg_for(k=1, m=2)
        state = al.TransceiverState(v=np.stack([unit(2, 0)]), u=np.stack([unit(2, 1)]),
                                    p=np.array([1.0]))
        with pytest.raises(InfeasibleLinkError):
            pw.required_power(state, identity_table(1, 2), 0, 1.0, cfg)


class TestJointIaPc:
    def test_interference_free_fixed_point(self):
        cfg = cfg_for(k=3, m=2, n0=1.0)
        pc = pw.PowerControlConfig.from_gamma_db(18.0, 3, p_max=1e4)
        _, trace = pw.run_joint_ia_pc(identity_table(3, 2), cfg, pc, seed=1)
        gamma = 10.0 ** 1.8
        assert trace.converged
        assert np.allclose(trace.powers[-1], gamma * cfg.noise_power, rtol=1e-9)

    def test_feasible_drop_hits_target(self):
        cfg = cfg_for()
        pc = pw.PowerControlConfig.from_gamma_db(18.0, 3, p_max=1e4, max_iters=400,
                                                 tol=1e-10)
        table = sample_channels(cfg, 33).table(0)
        _, trace = pw.run_joint_ia_pc(table, cfg, pc, seed=3)
        assert trace.converged
        sinr_db = 10 * np.log10(np.asarray(trace.sinrs[-1]))
        assert np.max(np.abs(sinr_db - 18.0)) < 0.1
        assert np.all(trace.powers[-1] < pc.p_max)

    def test_unreachable_target_saturates(self):
        cfg = cfg_for(p_max=10.0)
        pc = pw.PowerControlConfig.from_gamma_db(60.0, 3, p_max=10.0, max_iters=150)
        table = sample_channels(cfg, 12).table(0)
        _, trace = pw.run_joint_ia_pc(table, cfg, pc, seed=3)
        assert not trace.converged
        assert np.all(trace.powers[-1] == 10.0)
        assert np.all(np.asarray(trace.sinrs[-1]) < pc.gamma)

    def test_trace_rows_schema(self):
        cfg = cfg_for()
        pc = pw.PowerControlConfig.from_gamma_db(10.0, 3, p_max=1e4, max_iters=50)
        table = sample_channels(cfg, 2).table(0)
        _, trace = pw.run_joint_ia_pc(table, cfg, pc, seed=0)
        rows = trace.to_json_rows()
        assert rows[0].keys() == {"iter", "user", "power_dbm", "sinr_db"}
        assert len(rows) == trace.iterations * 3


def frozen_two_user_state(cross_gain=0.15):
    """2-user toy with identity direct links and weak known cross links."""
    cfg = cfg_for(k=2, m=2, n0=1.0, p_max=1e6)
    table = identity_table(2, 2)
    table[0, 1] = cross_gain * np.eye(2)
    table[1, 0] = cross_gain * np.eye(2)
    e1 = unit(2, 0)
    state = al.TransceiverState(v=np.stack([e1, e1]), u=np.stack([e1, e1]),
                                p=np.array([1.0, 1.0]))
    return cfg, table, state


class TestFixedPowerIteration:
    def test_no_interference_one_step(self):
        cfg = cfg_for(k=1, m=2)
        table = identity_table(1, 2) * 2.0
        state = al.TransceiverState(v=np.stack([unit(2, 0)]), u=np.stack([unit(2, 0)]),
                                    p=np.array([1.0]))
        traj = pw.fixed_power_iteration(state, table, cfg, gamma=[4.0], p_max=1e6,
                                        iters=1)
        assert traj[-1][0] == pytest.approx(4.0 * 1.0 / 4.0)

    def test_matches_linear_solve_oracle(self):
        """Fixed point == direct solve of (I - Gamma A) P = Gamma b."""
        cfg, table, state = frozen_two_user_state()
        gamma = np.array([4.0, 2.0])
        traj = pw.fixed_power_iteration(state, table, cfg, gamma, p_max=1e9, iters=300)

        m = cfg.m_antennas
        gains = np.zeros((2, 2))
        for k in range(2):
            for j in range(2):
                gains[k, j] = abs(np.vdot(state.u[k][:, 0],
                                          table[k, j] @ state.v[j][:, 0])) ** 2
        a = np.array([[0.0, (2 / m) * gains[0, 1]], [(2 / m) * gains[1, 0], 0.0]])
        big_gamma = np.diag(gamma / gains.diagonal())
        oracle = np.linalg.solve(np.eye(2) - big_gamma @ a,
                                 big_gamma @ np.full(2, cfg.noise_power))
        assert np.allclose(traj[-1], oracle, rtol=1e-10)

    def test_unique_fixed_point_from_random_starts(self):
        cfg, table, state = frozen_two_user_state()
        gamma = np.array([5.0, 3.0])
        rng = np.random.default_rng(3)
        finals = []
        for _ in range(10):
            p0 = rng.uniform(0.01, 100.0, size=2)
            traj = pw.fixed_power_iteration(state, table, cfg, gamma, p_max=1e9,
                                            iters=400, p0=p0)
            finals.append(traj[-1])
        finals = np.array(finals)
        assert np.max(np.abs(finals - finals[0])) < 1e-8


class TestStandardInterferenceFunction:
    def _beta(self, state, table, cfg, gamma, powers):
        work = al.TransceiverState(v=state.v, u=state.u, p=np.asarray(powers, float))
        return np.array([pw.required_power(work, table, k, gamma[k], cfg)
                         for k in range(cfg.k_users)])

    def test_properties_on_random_instances(self):
        rng = np.random.default_rng(99)
        cfg = cfg_for(k=3, m=2)
        gamma = np.array([3.0, 2.0, 4.0])
        for trial in range(1000):
            table = sample_channels(cfg, trial).table(0)
            state = al.initial_state(cfg, 10000 + trial)
            p = rng.uniform(0.1, 10.0, size=3)
            beta_p = self._beta(state, table, cfg, gamma, p)
            assert np.all(beta_p > 0)
            # monotonicity: componentwise larger powers -> larger beta
            p_hi = p * rng.uniform(1.0, 3.0, size=3)
            assert np.all(self._beta(state, table, cfg, gamma, p_hi) >= beta_p - 1e-12)
            # scalability: c * beta(P) > beta(c P) for c > 1
            c = rng.uniform(1.5, 4.0)
            assert np.all(c * beta_p > self._beta(state, table, cfg, gamma, c * p))
