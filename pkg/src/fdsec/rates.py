"""Physical-domain performance metrics.

Achievable DL/UL rates, eavesdropper capacities, secrecy rates and the
leakage threshold. Everything here operates on a physical Policy
(binary assignment, beamformers, UL powers, AN covariances) and a
ChannelSet; all functions are pure.

The eavesdropper's interference-plus-noise covariance X is never
inverted explicitly: capacities are evaluated as log-det differences of
Hermitian factorizations, which stays stable for condition numbers up
to ~1e12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import ChannelSet
from .config import SystemConfig


@dataclass
class Policy:
    """Physical resource allocation decision.

    s: (N_F, K, J) binary subcarrier assignment, at most one active
       (k, j) pair per subcarrier.
    w: (N_F, K, N_T) complex beamformers, meaningful where the user is
       scheduled.
    P: (N_F, J) UL transmit powers [W].
    Z: (N_F, N_T, N_T) Hermitian PSD AN covariances.
    """

    s: np.ndarray
    w: np.ndarray
    P: np.ndarray
    Z: np.ndarray

    def active_triples(self) -> list[tuple[int, int, int]]:
        idx = np.argwhere(self.s > 0.5)
        return [tuple(map(int, t)) for t in idx]


@dataclass(frozen=True)
class EveState:
    """Cholesky factor of X = L^H Z L + sigma_E^2 I for one subcarrier."""

    chol: np.ndarray

    @staticmethod
    def build(L: np.ndarray, Z: np.ndarray, noise_eve: float) -> "EveState":
        m = L.shape[1]
        x = L.conj().T @ Z @ L + noise_eve * np.eye(m)
        return EveState(chol=np.linalg.cholesky(0.5 * (x + x.conj().T)))

    def logdet2(self) -> float:
        return 2.0 * float(np.sum(np.log2(np.real(np.diag(self.chol)))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = sla.solve_triangular(self.chol, b, lower=True)
        return sla.solve_triangular(self.chol.conj().T, y, lower=False)


def xi_threshold(r_tol: float) -> float:
    """Leakage SINR threshold 2^R_tol - 1."""
    if r_tol < 0.0:
        raise ValueError("r_tol must be non-negative")
    return 2.0 ** r_tol - 1.0


def rate_dl(h: np.ndarray, w: np.ndarray, Z: np.ndarray, p_ul: float,
            f: complex, noise: float) -> float:
    """DL spectral efficiency log2(1 + |h^H w|^2 / (Tr(hh^H Z) + P|f|^2 + sigma^2))."""
    sig = abs(np.vdot(h, w)) ** 2
    interference = float(np.real(h.conj() @ Z @ h)) + p_ul * abs(f) ** 2
    return math.log2(1.0 + sig / (interference + noise))


def rate_ul(g: complex, p_ul: float, w: np.ndarray, Z: np.ndarray,
            h_si: np.ndarray, rho: float, noise: float) -> float:
    """UL spectral efficiency with residual self-interference.

    The SI term is the quadratic form rho * Tr(H_SI (w w^H + Z)) =
    rho * (|h_SI^H w|^2 + Tr(H_SI Z)).
    """
    sig = p_ul * abs(g) ** 2
    si = abs(np.vdot(h_si, w)) ** 2 + float(np.real(h_si.conj() @ Z @ h_si))
    return math.log2(1.0 + sig / (rho * si + noise))


def eve_cap_dl(L: np.ndarray, w: np.ndarray, Z: np.ndarray, noise_eve: float) -> float:
    """Eavesdropper capacity for the DL signal: log2 det(I + X^-1 L^H w w^H L)."""
    m = L.shape[1]
    eve = EveState.build(L, Z, noise_eve)
    a = L.conj().T @ w
    x_plus = eve.chol @ eve.chol.conj().T + np.outer(a, a.conj())
    chol_plus = np.linalg.cholesky(0.5 * (x_plus + x_plus.conj().T))
    return 2.0 * float(np.sum(np.log2(np.real(np.diag(chol_plus))))) - eve.logdet2()


def eve_cap_ul(e: np.ndarray, p_ul: float, Z: np.ndarray, L: np.ndarray,
               noise_eve: float) -> float:
    """Eavesdropper capacity for the UL signal: log2 det(I + P X^-1 e e^H)."""
    eve = EveState.build(L, Z, noise_eve)
    x_plus = eve.chol @ eve.chol.conj().T + p_ul * np.outer(e, e.conj())
    chol_plus = np.linalg.cholesky(0.5 * (x_plus + x_plus.conj().T))
    return 2.0 * float(np.sum(np.log2(np.real(np.diag(chol_plus))))) - eve.logdet2()


def _check_assignment(s: np.ndarray):
    vals = np.unique(s)
    if not np.all(np.isin(vals, [0, 1])):
        raise ValueError("assignment s must be binary")
    if np.any(s.sum(axis=(1, 2)) > 1):
        raise ValueError("each subcarrier may carry at most one (DL, UL) pair")


def weighted_throughput(policy: Policy, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Weighted system throughput sum_i sum_k sum_j s (w_k R_DL + mu_j R_UL)."""
    _check_assignment(policy.s)
    wk = cfg.dl_weights()
    mj = cfg.ul_weights()
    total = 0.0
    for i, k, j in policy.active_triples():
        rdl = rate_dl(ch.h[i, k], policy.w[i, k], policy.Z[i], policy.P[i, j],
                      ch.f[i, j, k], cfg.noise_dl)
        rul = rate_ul(ch.g[i, j], policy.P[i, j], policy.w[i, k], policy.Z[i],
                      ch.h_si[i], cfg.rho, cfg.noise_ul)
        total += wk[k] * rdl + mj[j] * rul
    return total


@dataclass(frozen=True)
class SecrecyReport:
    dl_secrecy: np.ndarray        # (K,) per DL user, sum of clamped per-subcarrier rates
    ul_secrecy: np.ndarray        # (J,)
    dl_lower_bound: np.ndarray    # (K,) sum of s * (R - R_tol)
    ul_lower_bound: np.ndarray    # (J,)

    def system_secrecy(self, cfg: SystemConfig) -> float:
        wk = np.asarray(cfg.dl_weights())
        mj = np.asarray(cfg.ul_weights())
        return float(wk @ self.dl_secrecy + mj @ self.ul_secrecy)


def secrecy_rates(policy: Policy, ch: ChannelSet, cfg: SystemConfig) -> SecrecyReport:
    """Per-user secrecy rates [R - C_E]^+ and their leakage-cap lower bounds."""
    _check_assignment(policy.s)
    k_users, j_users = cfg.n_dl_users, cfg.n_ul_users
    dl_sec = np.zeros(k_users)
    ul_sec = np.zeros(j_users)
    dl_lb = np.zeros(k_users)
    ul_lb = np.zeros(j_users)
    for i, k, j in policy.active_triples():
        rdl = rate_dl(ch.h[i, k], policy.w[i, k], policy.Z[i], policy.P[i, j],
                      ch.f[i, j, k], cfg.noise_dl)
        rul = rate_ul(ch.g[i, j], policy.P[i, j], policy.w[i, k], policy.Z[i],
                      ch.h_si[i], cfg.rho, cfg.noise_ul)
        cdl = eve_cap_dl(ch.L[i], policy.w[i, k], policy.Z[i], cfg.noise_eve)
        cul = eve_cap_ul(ch.e[i, j], policy.P[i, j], policy.Z[i], ch.L[i], cfg.noise_eve)
        dl_sec[k] += max(0.0, rdl - cdl)
        ul_sec[j] += max(0.0, rul - cul)
        dl_lb[k] += rdl - cfg.r_tol_dl
        ul_lb[j] += rul - cfg.r_tol_ul
    return SecrecyReport(dl_secrecy=dl_sec, ul_secrecy=ul_sec,
                         dl_lower_bound=dl_lb, ul_lower_bound=ul_lb)


def check_policy(policy: Policy, ch: ChannelSet, cfg: SystemConfig,
                 tol: float = 1e-6) -> dict[str, float]:
    """Constraint slacks of problem constraints C1-C8 plus leakage caps.

    Returns a dict of worst-case slacks (negative = violated beyond tol);
    callers decide whether to raise.
    """
    _check_assignment(policy.s)
    p_dl_used = 0.0
    for i, k, j in policy.active_triples():
        p_dl_used += float(np.real(np.vdot(policy.w[i, k], policy.w[i, k])))
        p_dl_used += float(np.real(np.trace(policy.Z[i])))
    slacks = {"C1_dl_power": cfg.p_max_dl - p_dl_used}

    ul_used = np.zeros(cfg.n_ul_users)
    for i, k, j in policy.active_triples():
        ul_used[j] += policy.P[i, j]
    slacks["C2_ul_power"] = float(np.min(cfg.p_max_ul - ul_used))
    slacks["C3_p_nonneg"] = float(policy.P.min())

    z_eigs = [float(np.linalg.eigvalsh(0.5 * (z + z.conj().T))[0]) for z in policy.Z]
    slacks["C8_Z_psd"] = min(z_eigs)

    leak_dl = 0.0
    leak_ul = 0.0
    for i, k, j in policy.active_triples():
        leak_dl = max(leak_dl, eve_cap_dl(ch.L[i], policy.w[i, k], policy.Z[i],
                                          cfg.noise_eve) - cfg.r_tol_dl)
        leak_ul = max(leak_ul, eve_cap_ul(ch.e[i, j], policy.P[i, j], policy.Z[i],
                                          ch.L[i], cfg.noise_eve) - cfg.r_tol_ul)
    slacks["C4_dl_leakage"] = -leak_dl
    slacks["C5_ul_leakage"] = -leak_ul
    return slacks
