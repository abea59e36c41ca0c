"""Stochastic channel generation for one drop.

One "drop" places the DL users, UL users and idle users (potential
eavesdroppers) uniformly in the service annulus around the BS and draws
independent small-scale fading per subcarrier. Channels carry the joint
effect of path loss and fading; the self-interference channel is
normalized to unit average power since all SI attenuation is modeled by
the cancellation factor rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization. Immutable; safe to share across workers.

    Shapes (N_F subcarriers, K DL users, J UL users, M idle users,
    N_T BS antennas):
      h:    (N_F, K, N_T)   BS -> DL user k
      g:    (N_F, J)        UL user j -> BS
      f:    (N_F, J, K)     UL user j -> DL user k (co-channel interference)
      h_si: (N_F, N_T)      BS self-interference channel (unit power)
      L:    (N_F, N_T, M)   BS -> equivalent eavesdropper
      e:    (N_F, J, M)     UL user j -> equivalent eavesdropper
    """

    h: np.ndarray
    g: np.ndarray
    f: np.ndarray
    h_si: np.ndarray
    L: np.ndarray
    e: np.ndarray
    dl_pos: np.ndarray    # (K, 2) meters relative to BS
    ul_pos: np.ndarray    # (J, 2)
    eve_pos: np.ndarray   # (M, 2)
    seed: int

    def __post_init__(self):
        for name in ("h", "g", "f", "h_si", "L", "e"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise ValueError(f"channel array {name} contains non-finite entries")

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        n_f, k, n_t = self.h.shape
        j = self.g.shape[1]
        m = self.L.shape[2]
        return n_f, k, j, n_t, m


def path_gain(distance_m: np.ndarray | float, cfg: SystemConfig) -> np.ndarray | float:
    """Distance-based power gain (d / d_ref)^(-alpha), no antenna gain."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("distances must be positive")
    return (d / cfg.ref_distance_m) ** (-cfg.path_loss_exponent)


def _annulus_positions(rng: np.random.Generator, n: int, cfg: SystemConfig) -> np.ndarray:
    # Area-uniform in the annulus [d_ref, d_max]: d^2 uniform, angle uniform.
    r2 = rng.uniform(cfg.ref_distance_m**2, cfg.max_distance_m**2, size=n)
    r = np.sqrt(r2)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _cn01(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # Circularly-symmetric complex Gaussian with unit variance per entry.
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_rician(k_factor_db: float, n: int, rng: np.random.Generator | int) -> np.ndarray:
    """Unit-mean-square Rician fading samples.

    Deterministic LOS component sqrt(kappa/(1+kappa)) plus a scattered
    CN(0, 1/(1+kappa)) part, so E|x|^2 = 1 and the LOS/scatter power
    ratio is kappa = 10^(k_db/10).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    kappa = 10.0 ** (k_factor_db / 10.0)
    los = np.sqrt(kappa / (1.0 + kappa))
    return los + np.sqrt(1.0 / (1.0 + kappa)) * _cn01(rng, (n,))


def draw_drop(cfg: SystemConfig, seed: int) -> ChannelSet:
    """Generate one channel drop as a pure function of (cfg, seed).

    Positions, then fading, are drawn from dedicated child streams of
    SeedSequence([seed]), so geometry is shared between configurations
    that differ only in antenna counts.
    """
    if cfg.max_distance_m <= cfg.ref_distance_m:
        raise ValueError("max_distance_m must exceed ref_distance_m")
    n_f, k, j, n_t, m = (cfg.n_subcarriers, cfg.n_dl_users, cfg.n_ul_users,
                         cfg.n_tx_antennas, cfg.n_eve_antennas)
    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence([int(seed)]).spawn(7)]
    rng_pos, rng_h, rng_g, rng_f, rng_si, rng_l, rng_e = streams

    dl_pos = _annulus_positions(rng_pos, k, cfg)
    ul_pos = _annulus_positions(rng_pos, j, cfg)
    if cfg.eve_colocated:
        eve_pos = np.repeat(_annulus_positions(rng_pos, 1, cfg), m, axis=0)
    else:
        eve_pos = _annulus_positions(rng_pos, m, cfg)

    g_bs = cfg.bs_gain_linear()
    amp_dl = np.sqrt(path_gain(np.linalg.norm(dl_pos, axis=1), cfg) * g_bs)      # (K,)
    amp_ul = np.sqrt(path_gain(np.linalg.norm(ul_pos, axis=1), cfg) * g_bs)      # (J,)
    amp_eve = np.sqrt(path_gain(np.linalg.norm(eve_pos, axis=1), cfg) * g_bs)    # (M,)
    d_ul_dl = np.linalg.norm(ul_pos[:, None, :] - dl_pos[None, :, :], axis=2)    # (J, K)
    # Co-scheduled users may land arbitrarily close; keep the model in its
    # validity region by flooring at the reference distance.
    amp_cci = np.sqrt(path_gain(np.maximum(d_ul_dl, cfg.ref_distance_m), cfg))
    d_ul_eve = np.linalg.norm(ul_pos[:, None, :] - eve_pos[None, :, :], axis=2)  # (J, M)
    amp_ue = np.sqrt(path_gain(np.maximum(d_ul_eve, cfg.ref_distance_m), cfg))

    h = _cn01(rng_h, (n_f, k, n_t)) * amp_dl[None, :, None]
    g = _cn01(rng_g, (n_f, j)) * amp_ul[None, :]
    f = _cn01(rng_f, (n_f, j, k)) * amp_cci[None, :, :]
    h_si = sample_rician(cfg.rician_k_db, n_f * n_t, rng_si).reshape(n_f, n_t)
    L = _cn01(rng_l, (n_f, n_t, m)) * amp_eve[None, None, :]
    e = _cn01(rng_e, (n_f, j, m)) * amp_ue[None, :, :]

    return ChannelSet(h=h, g=g, f=f, h_si=h_si, L=L, e=e,
                      dl_pos=dl_pos, ul_pos=ul_pos, eve_pos=eve_pos, seed=int(seed))
