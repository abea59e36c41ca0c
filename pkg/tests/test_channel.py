"""Channel generator: determinism, path loss, fading moments."""

import numpy as np
import pytest

from fdsec.channel import draw_drop, path_gain, sample_rician
from fdsec.config import SystemConfig, dbm_to_watts, drop_rng


def test_dbm_to_watts_reference_points():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(0.0) == pytest.approx(1.0e-3)
    # The simulation noise floor of -110 dBm.
    assert dbm_to_watts(-110.0) == pytest.approx(1.0e-14)


def test_draw_drop_deterministic():
    cfg = SystemConfig(n_subcarriers=4)
    a = draw_drop(cfg, 123)
    b = draw_drop(cfg, 123)
    for name in ("h", "g", "f", "h_si", "L", "e"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = draw_drop(cfg, 124)
    assert not np.array_equal(a.h, c.h)


def test_positions_shared_across_antenna_counts():
    cfg4 = SystemConfig(n_subcarriers=4, n_tx_antennas=4)
    cfg6 = cfg4.replace(n_tx_antennas=6)
    a, b = draw_drop(cfg4, 5), draw_drop(cfg6, 5)
    assert np.array_equal(a.dl_pos, b.dl_pos)
    assert np.array_equal(a.ul_pos, b.ul_pos)
    assert np.array_equal(a.eve_pos, b.eve_pos)


def test_path_gain_reference_value():
    cfg = SystemConfig()
    # (150 / 15)^(-3.6) = 10^(-3.6), before antenna gain.
    assert path_gain(150.0, cfg) == pytest.approx(10.0 ** -3.6, rel=1e-12)


def test_path_gain_distance_doubling():
    cfg = SystemConfig()
    for d in (30.0, 77.0, 240.0):
        assert path_gain(2 * d, cfg) / path_gain(d, cfg) == pytest.approx(
            2.0 ** -cfg.path_loss_exponent, rel=1e-12)


def test_fading_second_moment_matches_path_gain():
    # 1e5 i.i.d. samples of one DL entry at a fixed distance: the empirical
    # mean square must land within 2% of path_gain * antenna_gain.
    cfg = SystemConfig(n_subcarriers=50_000, n_dl_users=1, n_ul_users=1,
                       n_eve_antennas=1, n_tx_antennas=2)
    ch = draw_drop(cfg, 42)
    d = float(np.linalg.norm(ch.dl_pos[0]))
    expected = path_gain(d, cfg) * cfg.bs_gain_linear()
    measured = float(np.mean(np.abs(ch.h[:, 0, :]) ** 2))
    assert measured == pytest.approx(expected, rel=0.02)


def test_rician_limits_and_moments():
    rng = np.random.default_rng(1)
    # k -> +inf: constant unit-modulus LOS term.
    hi = sample_rician(300.0, 1000, rng)
    assert np.max(np.abs(hi - 1.0)) < 1e-6
    # k -> -inf: unit Rayleigh statistics.
    lo = sample_rician(-300.0, 200_000, rng)
    assert np.mean(np.abs(lo) ** 2) == pytest.approx(1.0, rel=0.02)
    assert abs(np.mean(lo)) < 0.01
    # k = 5 dB: unit mean square, moment-based K-factor near 10^0.5.
    r = sample_rician(5.0, 100_000, rng)
    assert np.mean(np.abs(r) ** 2) == pytest.approx(1.0, rel=0.02)
    k_hat = np.abs(np.mean(r)) ** 2 / np.var(r)
    assert k_hat == pytest.approx(10.0 ** 0.5, rel=0.10)


def test_self_interference_channel_unit_power():
    cfg = SystemConfig(n_subcarriers=20_000, n_tx_antennas=2)
    ch = draw_drop(cfg, 9)
    assert np.mean(np.abs(ch.h_si) ** 2) == pytest.approx(1.0, rel=0.02)


def test_rejects_degenerate_geometry():
    with pytest.raises(ValueError):
        SystemConfig(max_distance_m=10.0)  # below the 15 m reference distance


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(rho=1.5)
    with pytest.raises(ValueError):
        SystemConfig(p_max_dl=0.0)
    with pytest.raises(ValueError):
        SystemConfig(weights_dl=(0.5, 1.2))
    with pytest.raises(ValueError):
        SystemConfig(r_tol_dl=0.0)


def test_eta_default_matches_table_formula():
    cfg = SystemConfig()
    assert cfg.eta() == pytest.approx(10.0 * np.log2(1.0 + cfg.p_max_dl / cfg.noise_ul))
    assert cfg.replace(penalty_eta=7.0).eta() == 7.0


def test_drop_rng_streams_independent():
    a = drop_rng(0, 0).standard_normal(4)
    b = drop_rng(0, 1).standard_normal(4)
    c = drop_rng(0, 0).standard_normal(4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)
