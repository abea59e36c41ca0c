"""Lifted utility identities, gradients, tangent majorization, big-M forcing."""

import math

import numpy as np
import pytest

from fdsec.channel import draw_drop
from fdsec.config import LN2, SystemConfig
from fdsec.hermops import hvec, random_psd
from fdsec.lifting import (LiftedPoint, eval_F, eval_G, eval_H, eval_M,
                           grad_G, lift_policy, penalized_objective,
                           sandwich_slacks, surrogate_objective, tangent_G,
                           tangent_M, utility_lifted)
from fdsec.oracle import fd_gradient_check, random_interior_point
from fdsec.rates import Policy, weighted_throughput
from tests.test_rates import _random_policy

CFG = SystemConfig(n_subcarriers=3, n_tx_antennas=3, n_eve_antennas=2)
CH = draw_drop(CFG, 21)


class TestLiftPolicy:
    def test_inactive_triples_annihilated(self):
        rng = np.random.default_rng(0)
        pol = _random_policy(CFG, CH, rng)
        x = lift_policy(pol)
        for i in range(CFG.n_subcarriers):
            for k in range(CFG.n_dl_users):
                for j in range(CFG.n_ul_users):
                    if pol.s[i, k, j] == 0:
                        assert np.all(x.Wt[i, k, j] == 0)
                        assert np.all(x.Zt[i, k, j] == 0)
                        assert x.Pt[i, k, j] == 0.0

    def test_rank_one_lift(self):
        n_f, k, j, n_t = 1, 1, 1, 3
        pol = Policy(s=np.ones((n_f, k, j), dtype=int),
                     w=np.zeros((n_f, k, n_t), dtype=complex),
                     P=np.zeros((n_f, j)), Z=np.zeros((n_f, n_t, n_t), dtype=complex))
        pol.w[0, 0, 0] = 1.0
        x = lift_policy(pol)
        expected = np.zeros((n_t, n_t))
        expected[0, 0] = 1.0
        assert np.allclose(x.Wt[0, 0, 0], expected)
        assert np.linalg.matrix_rank(x.Wt[0, 0, 0]) == 1

    def test_sandwiches_hold_on_lifted_binary_policies(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            pol = _random_policy(CFG, CH, rng)
            slacks = sandwich_slacks(lift_policy(pol), CFG)
            worst = min(slacks.values())
            assert worst >= -1e-12, slacks

    def test_rejects_fractional_assignment(self):
        pol = _random_policy(CFG, CH, np.random.default_rng(2))
        pol.s = pol.s.astype(float)
        pol.s[0, 0, 0] = 0.4
        with pytest.raises(ValueError):
            lift_policy(pol)


class TestUtilityIdentities:
    def test_zero_point_zero_utility(self):
        x = LiftedPoint.zeros(3, 2, 2, 3)
        assert utility_lifted(x, CH, CFG) == 0.0
        assert eval_F(x, CH, CFG) == pytest.approx(eval_G(x, CH, CFG), abs=1e-12)

    def test_matches_physical_throughput_at_binary_points(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pol = _random_policy(CFG, CH, rng)
            lifted = utility_lifted(lift_policy(pol), CH, CFG)
            physical = weighted_throughput(pol, CH, CFG)
            assert lifted == pytest.approx(physical, rel=1e-10, abs=1e-12)

    def test_ul_only_fractional_point(self):
        # Wt = Zt = 0 with Pt > 0: only the UL log term contributes.
        x = LiftedPoint.zeros(1, 1, 1, 3)
        x.s[0, 0, 0] = 0.37
        x.Pt[0, 0, 0] = 0.004
        expected = math.log2(1.0 + 0.004 * abs(CH.g[0, 0]) ** 2 / CFG.noise_ul)
        cfg = CFG.replace(n_subcarriers=1, n_dl_users=1, n_ul_users=1)
        ch1 = draw_drop(cfg, 21)
        x_expected = math.log2(1.0 + 0.004 * abs(ch1.g[0, 0]) ** 2 / cfg.noise_ul)
        assert utility_lifted(x, ch1, cfg) == pytest.approx(x_expected, rel=1e-12)

    def test_identity_u_equals_f_minus_g(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = random_interior_point(rng, CFG)
            u = utility_lifted(x, CH, CFG)
            fg = eval_F(x, CH, CFG) - eval_G(x, CH, CFG)
            assert abs(u - fg) <= 1e-10 * max(1.0, abs(u))

    def test_h_m_binary_point(self):
        s = np.zeros((3, 2, 2))
        s[0, 1, 1] = 1.0
        assert eval_H(s) == 1.0
        assert eval_M(s) == 1.0


class TestGradients:
    def test_checker_self_test(self):
        x = random_interior_point(np.random.default_rng(5), CFG)
        assert fd_gradient_check(x, "quadratic", None, CFG) <= 1e-9

    def test_grad_g_zero_point_closed_form(self):
        # At the origin the Zt partial of the DL term is (w_k/ln2) H_k / sigma^2.
        x = LiftedPoint.zeros(3, 2, 2, 3)
        g = grad_G(x, CH, CFG)
        hk = np.einsum("ika,ikb->ikab", CH.h, CH.h.conj())
        for i, k, j in [(0, 0, 0), (2, 1, 0)]:
            expected = (1.0 / LN2) * hk[i, k] / CFG.noise_dl \
                + (1.0 / LN2) * CFG.rho * np.outer(CH.h_si[i], CH.h_si[i].conj()) / CFG.noise_ul
            assert np.allclose(g.dZt[i, k, j], expected, rtol=1e-12)

    def test_dl_term_has_no_wt_dependence(self):
        # The Wt partial comes only from the UL log (scaled by rho); with the
        # SI term removed it is exactly zero.
        x = random_interior_point(np.random.default_rng(6), CFG)
        ch0 = draw_drop(CFG, 22)
        ch0 = type(ch0)(h=ch0.h, g=ch0.g, f=ch0.f, h_si=np.zeros_like(ch0.h_si),
                        L=ch0.L, e=ch0.e, dl_pos=ch0.dl_pos, ul_pos=ch0.ul_pos,
                        eve_pos=ch0.eve_pos, seed=ch0.seed)
        g = grad_G(x, ch0, CFG)
        assert np.all(g.dWt == 0.0)

    def test_grad_g_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        errs = [fd_gradient_check(random_interior_point(rng, CFG), "G", CH, CFG)
                for _ in range(20)]
        assert max(errs) <= 1e-5

    def test_grad_m_exact(self):
        rng = np.random.default_rng(8)
        errs = [fd_gradient_check(random_interior_point(rng, CFG), "M", None, CFG)
                for _ in range(5)]
        assert max(errs) <= 1e-10


class TestTangents:
    def test_exact_at_anchor(self):
        rng = np.random.default_rng(9)
        x = random_interior_point(rng, CFG)
        assert tangent_G(x, x, CH, CFG) == pytest.approx(eval_G(x, CH, CFG), rel=1e-12)
        assert tangent_M(x.s, x.s) == pytest.approx(eval_M(x.s), rel=1e-12)

    def test_tangent_g_overestimates(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            x = random_interior_point(rng, CFG)
            anchor = random_interior_point(rng, CFG)
            assert tangent_G(x, anchor, CH, CFG) >= eval_G(x, CH, CFG) - 1e-9

    def test_tangent_m_underestimates_with_equality_iff_anchor(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            s = rng.uniform(0, 1, size=(3, 2, 2))
            anchor = rng.uniform(0, 1, size=(3, 2, 2))
            assert tangent_M(s, anchor) <= eval_M(s) + 1e-12
        s = rng.uniform(0, 1, size=(3, 2, 2))
        assert tangent_M(s, s) == pytest.approx(eval_M(s), abs=1e-14)

    def test_surrogate_majorizes_penalized_objective(self):
        rng = np.random.default_rng(12)
        eta = CFG.eta()
        anchor = random_interior_point(rng, CFG)
        j_anchor = penalized_objective(anchor, CH, CFG, eta)
        assert surrogate_objective(anchor, anchor, CH, CFG, eta) == pytest.approx(
            j_anchor, rel=1e-10, abs=1e-8)
        for _ in range(100):
            x = random_interior_point(rng, CFG)
            assert surrogate_objective(x, anchor, CH, CFG, eta) >= \
                penalized_objective(x, CH, CFG, eta) - 1e-8


class TestBigMForcing:
    def test_binary_s_forces_products(self):
        # With binary s the sandwich constraints force Wt = s W exactly:
        # s = 1 pins Wt to W, s = 0 pins Wt to zero. Any feasible point must
        # therefore satisfy the product identities to rounding error.
        rng = np.random.default_rng(13)
        for _ in range(20):
            pol = _random_policy(CFG, CH, rng)
            x = lift_policy(pol)
            slacks = sandwich_slacks(x, CFG)
            assert min(slacks.values()) >= -1e-12
            s4 = x.s[..., None, None]
            assert np.max(np.abs(x.Wt - s4 * x.W[:, :, None])) <= 1e-9
            assert np.max(np.abs(x.Zt - s4 * x.Z[:, None, None])) <= 1e-9
            assert np.max(np.abs(x.Pt - x.s * x.p[:, None, :])) <= 1e-9
            # Perturbing Wt on an active triple violates C10 or C11.
            i, k, j = pol.active_triples()[0] if pol.active_triples() else (0, 0, 0)
            if x.s[i, k, j] > 0.5:
                y = x.copy()
                y.Wt[i, k, j] += 1e-3 * np.eye(CFG.n_tx_antennas)
                assert min(sandwich_slacks(y, CFG)[c] for c in ("C10", "C11")) < -1e-6
