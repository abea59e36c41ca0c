"""Rate and secrecy metrics against closed-form and det-lemma oracles."""

import math

import numpy as np
import pytest

from fdsec.channel import draw_drop
from fdsec.config import SystemConfig
from fdsec.hermops import random_psd
from fdsec.rates import (Policy, eve_cap_dl, eve_cap_ul, rate_dl, rate_ul,
                         secrecy_rates, weighted_throughput, xi_threshold)

NOISE = 1e-14


def e_vec(n, i=0):
    v = np.zeros(n, dtype=complex)
    v[i] = 1.0
    return v


class TestRateDl:
    def test_unit_sinr(self):
        h = e_vec(3)
        w = math.sqrt(NOISE) * e_vec(3)
        assert rate_dl(h, w, np.zeros((3, 3)), 0.0, 0.0, NOISE) == pytest.approx(1.0)

    def test_zero_signal(self):
        h = e_vec(3)
        assert rate_dl(h, np.zeros(3), np.zeros((3, 3)), 1.0, 0.3 + 0.1j, NOISE) == 0.0

    def test_interference_terms(self):
        # Z puts NOISE along h and the CCI adds another NOISE: SINR = 1/3.
        h = e_vec(3)
        w = math.sqrt(NOISE) * e_vec(3)
        z = NOISE * np.outer(e_vec(3), e_vec(3).conj())
        f = 1.0
        assert rate_dl(h, w, z, NOISE, f, NOISE) == pytest.approx(
            math.log2(1.0 + 1.0 / 3.0), abs=1e-12)

    def test_monotone_in_interference(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        base = rate_dl(h, w, np.zeros((4, 4)), 0.0, 0.5, NOISE)
        more_z = rate_dl(h, w, random_psd(rng, 4, NOISE), 0.0, 0.5, NOISE)
        more_p = rate_dl(h, w, np.zeros((4, 4)), 10 * NOISE, 0.5, NOISE)
        assert base >= more_z >= 0.0
        assert base >= more_p >= 0.0


class TestRateUl:
    def test_zero_power(self):
        assert rate_ul(1.0, 0.0, e_vec(3), np.zeros((3, 3)), e_vec(3), 0.1, NOISE) == 0.0

    def test_unit_sinr_no_si(self):
        # rho = 0 is outside the config range but fine for the pure formula.
        assert rate_ul(math.sqrt(NOISE), 1.0, e_vec(3), np.zeros((3, 3)),
                       e_vec(3), 0.0, NOISE) == pytest.approx(1.0)

    def test_residual_si(self):
        # rho |h_si^H w|^2 = NOISE alongside thermal noise: SINR = 1/2.
        rho = 1e-10
        w = math.sqrt(1e10 * NOISE) * e_vec(3)
        got = rate_ul(math.sqrt(NOISE), 1.0, w, np.zeros((3, 3)), e_vec(3), rho, NOISE)
        assert got == pytest.approx(math.log2(1.5), abs=1e-12)

    def test_monotone_in_rho(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        h_si = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        z = random_psd(rng, 4)
        rates = [rate_ul(0.9, 0.05, w, z, h_si, rho, NOISE)
                 for rho in (1e-12, 1e-10, 1e-8)]
        assert rates[0] >= rates[1] >= rates[2] >= 0.0


class TestEveCapacities:
    def test_orthogonal_beam_leaks_nothing(self):
        ll = np.zeros((4, 2), dtype=complex)
        ll[:2, 0] = [1.0, 1j]
        ll[:2, 1] = [1j, 1.0]
        w = e_vec(4, 3)
        assert eve_cap_dl(ll, w, np.zeros((4, 4)), NOISE) == pytest.approx(0.0, abs=1e-9)

    def test_single_antenna_closed_form(self):
        rng = np.random.default_rng(2)
        ll = (rng.standard_normal((4, 1)) + 1j * rng.standard_normal((4, 1)))
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        expected = math.log2(1.0 + abs(np.vdot(ll[:, 0], w)) ** 2 / NOISE)
        assert eve_cap_dl(ll, w, np.zeros((4, 4)), NOISE) == pytest.approx(expected, rel=1e-12)

    def test_det_lemma_equivalence_dl(self):
        # log2 det(I + X^-1 a a^H) == log2(1 + a^H X^-1 a) for a = L^H w.
        rng = np.random.default_rng(3)
        for _ in range(50):
            ll = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
            w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            z = random_psd(rng, 4, 2.0)
            x = ll.conj().T @ z @ ll + NOISE * np.eye(3)
            a = ll.conj().T @ w
            expected = math.log2(1.0 + np.real(a.conj() @ np.linalg.solve(x, a)))
            got = eve_cap_dl(ll, w, z, NOISE)
            assert abs(got - expected) <= 1e-10 * max(1.0, abs(expected))

    def test_det_lemma_equivalence_ul(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            ll = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
            e = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            z = random_psd(rng, 4, 0.5)
            p = float(rng.uniform(0.0, 2.0))
            x = ll.conj().T @ z @ ll + NOISE * np.eye(3)
            expected = math.log2(1.0 + p * np.real(e.conj() @ np.linalg.solve(x, e)))
            got = eve_cap_ul(e, p, z, ll, NOISE)
            assert abs(got - expected) <= 1e-10 * max(1.0, abs(expected))

    def test_ul_zero_power(self):
        rng = np.random.default_rng(5)
        ll = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        e = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        assert eve_cap_ul(e, 0.0, random_psd(rng, 4), ll, NOISE) == pytest.approx(0.0, abs=1e-9)


def test_xi_threshold():
    assert xi_threshold(0.3) == pytest.approx(0.231144, abs=1e-6)
    assert xi_threshold(1.0) == 1.0
    assert xi_threshold(0.0) == 0.0


def _random_policy(cfg, ch, rng, power_scale=1.0):
    n_f, k_users, j_users = cfg.n_subcarriers, cfg.n_dl_users, cfg.n_ul_users
    n_t = cfg.n_tx_antennas
    s = np.zeros((n_f, k_users, j_users), dtype=int)
    w = np.zeros((n_f, k_users, n_t), dtype=complex)
    pp = np.zeros((n_f, j_users))
    zz = np.zeros((n_f, n_t, n_t), dtype=complex)
    budget = power_scale * cfg.p_max_dl / (2 * n_f)
    for i in range(n_f):
        if rng.uniform() < 0.8:
            k = rng.integers(k_users)
            j = rng.integers(j_users)
            s[i, k, j] = 1
            v = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
            w[i, k] = math.sqrt(budget / 2) * v / np.linalg.norm(v)
            zz[i] = random_psd(rng, n_t, budget / (4 * n_t))
            pp[i, j] = rng.uniform(0, cfg.p_max_ul / n_f)
    return Policy(s=s, w=w, P=pp, Z=zz)


class TestThroughputAndSecrecy:
    def setup_method(self):
        self.cfg = SystemConfig(n_subcarriers=4, n_tx_antennas=3)
        self.ch = draw_drop(self.cfg, 11)
        self.rng = np.random.default_rng(6)

    def test_empty_policy(self):
        n_f, k, j, n_t = 4, 2, 2, 3
        pol = Policy(s=np.zeros((n_f, k, j), dtype=int),
                     w=np.zeros((n_f, k, n_t), dtype=complex),
                     P=np.zeros((n_f, j)), Z=np.zeros((n_f, n_t, n_t), dtype=complex))
        assert weighted_throughput(pol, self.ch, self.cfg) == 0.0

    def test_single_triple_sum(self):
        pol = _random_policy(self.cfg, self.ch, self.rng)
        pol.s[:] = 0
        pol.s[1, 0, 1] = 1
        got = weighted_throughput(pol, self.ch, self.cfg)
        expected = (rate_dl(self.ch.h[1, 0], pol.w[1, 0], pol.Z[1], pol.P[1, 1],
                            self.ch.f[1, 1, 0], self.cfg.noise_dl)
                    + rate_ul(self.ch.g[1, 1], pol.P[1, 1], pol.w[1, 0], pol.Z[1],
                              self.ch.h_si[1], self.cfg.rho, self.cfg.noise_ul))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_secrecy_clamped_and_bounded_by_throughput(self):
        for trial in range(10):
            pol = _random_policy(self.cfg, self.ch, self.rng)
            rep = secrecy_rates(pol, self.ch, self.cfg)
            assert np.all(rep.dl_secrecy >= 0.0)
            assert np.all(rep.ul_secrecy >= 0.0)
            total = weighted_throughput(pol, self.ch, self.cfg)
            assert rep.system_secrecy(self.cfg) <= total + 1e-9

    def test_secrecy_dominates_lower_bound_when_leakage_capped(self):
        # Policies whose eavesdropper capacities respect R_tol must have
        # per-user secrecy above the paper's lower bound. Random policies
        # leak far above R_tol, so rescale powers onto the cap first.
        from fdsec.rates import check_policy
        xi = xi_threshold(self.cfg.r_tol_dl) * 0.9
        for trial in range(10):
            pol = _random_policy(self.cfg, self.ch, self.rng)
            for i, k, j in pol.active_triples():
                x = (self.ch.L[i].conj().T @ pol.Z[i] @ self.ch.L[i]
                     + self.cfg.noise_eve * np.eye(self.cfg.n_eve_antennas))
                a = self.ch.L[i].conj().T @ pol.w[i, k]
                q = float(np.real(a.conj() @ np.linalg.solve(x, a)))
                if q > xi:
                    pol.w[i, k] *= math.sqrt(xi / q)
                e = self.ch.e[i, j]
                qe = float(np.real(e.conj() @ np.linalg.solve(x, e)))
                if pol.P[i, j] * qe > xi:
                    pol.P[i, j] = xi / qe
            slacks = check_policy(pol, self.ch, self.cfg)
            assert slacks["C4_dl_leakage"] >= -1e-9
            assert slacks["C5_ul_leakage"] >= -1e-9
            rep = secrecy_rates(pol, self.ch, self.cfg)
            assert np.all(rep.dl_secrecy >= rep.dl_lower_bound - 1e-9)
            assert np.all(rep.ul_secrecy >= rep.ul_lower_bound - 1e-9)

    def test_rejects_nonbinary_assignment(self):
        pol = _random_policy(self.cfg, self.ch, self.rng)
        pol.s = pol.s.astype(float)
        pol.s[0, 0, 0] = 0.5
        with pytest.raises(ValueError):
            weighted_throughput(pol, self.ch, self.cfg)
