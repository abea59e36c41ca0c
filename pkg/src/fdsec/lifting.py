"""Big-M lifted decision variables and the penalized d.c. objective.

The lifted point carries, per (subcarrier, DL user, UL user) triple, the
products Wt = s*W, Zt = s*Z, Pt = s*P together with the un-lifted W, Z,
p and the relaxed assignment s in [0, 1]. The weighted throughput in
lifted variables decomposes as U = F - G with F and G sums of logs of
affine forms (both concave). The minimized penalized objective is

    J = -U + eta * (H(s) - M(s)),   H = sum s,  M = sum s^2.

Convex surrogates replace the concave G by its tangent (a global
overestimator) and the convex M by its tangent (a global
underestimator), giving a convex majorizer of J that is exact at the
anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .config import LN2, SystemConfig
from .rates import Policy

_EIG_TOL = 1e-12


class DomainError(ValueError):
    """A log argument was non-positive at the evaluation point."""


@dataclass
class LiftedPoint:
    """Optimization-domain decision variables (all arrays writable copies).

    Wt, Zt: (N_F, K, J, N_T, N_T) Hermitian PSD
    Pt, s:  (N_F, K, J)
    W:      (N_F, K, N_T, N_T) Hermitian
    Z:      (N_F, N_T, N_T) Hermitian PSD
    p:      (N_F, J)
    """

    Wt: np.ndarray
    Zt: np.ndarray
    Pt: np.ndarray
    s: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    p: np.ndarray

    @staticmethod
    def zeros(n_f: int, k: int, j: int, n_t: int) -> "LiftedPoint":
        return LiftedPoint(
            Wt=np.zeros((n_f, k, j, n_t, n_t), dtype=complex),
            Zt=np.zeros((n_f, k, j, n_t, n_t), dtype=complex),
            Pt=np.zeros((n_f, k, j)),
            s=np.zeros((n_f, k, j)),
            W=np.zeros((n_f, k, n_t, n_t), dtype=complex),
            Z=np.zeros((n_f, n_t, n_t), dtype=complex),
            p=np.zeros((n_f, j)),
        )

    def copy(self) -> "LiftedPoint":
        return LiftedPoint(*(getattr(self, f).copy()
                             for f in ("Wt", "Zt", "Pt", "s", "W", "Z", "p")))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n_f, k, j, n_t, _ = self.Wt.shape
        return n_f, k, j, n_t


def lift_policy(policy: Policy) -> LiftedPoint:
    """Lift a binary physical policy: Wt = s ww^H, Zt = s Z, Pt = s P."""
    s = np.asarray(policy.s, dtype=float)
    if not np.all(np.isin(np.unique(s), [0.0, 1.0])):
        raise ValueError("lift_policy requires a binary assignment")
    n_f, k_users, n_t = policy.w.shape
    j_users = policy.P.shape[1]
    x = LiftedPoint.zeros(n_f, k_users, j_users, n_t)
    x.s = s.copy()
    x.Z = policy.Z.astype(complex).copy()
    x.p = policy.P.astype(float).copy()
    for k in range(k_users):
        for i in range(n_f):
            x.W[i, k] = np.outer(policy.w[i, k], policy.w[i, k].conj())
    for i in range(n_f):
        for k in range(k_users):
            for j in range(j_users):
                if s[i, k, j] > 0.5:
                    x.Wt[i, k, j] = x.W[i, k]
                    x.Zt[i, k, j] = x.Z[i]
                    x.Pt[i, k, j] = x.p[i, j]
    return x


def _per_triple_coeffs(ch: ChannelSet, cfg: SystemConfig):
    """Channel-derived constants of the per-triple log arguments.

    Returns (H_k, H_si, f2, g2) with H_k (N_F,K,N_T,N_T), H_si
    (N_F,N_T,N_T), f2 (N_F,J,K), g2 (N_F,J).
    """
    hk = np.einsum("ika,ikb->ikab", ch.h, ch.h.conj())
    hsi = np.einsum("ia,ib->iab", ch.h_si, ch.h_si.conj())
    return hk, hsi, np.abs(ch.f) ** 2, np.abs(ch.g) ** 2


def _log_args(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig):
    """Affine log arguments of F and G for every (i, k, j).

    F terms: u_dl_tot = Tr(H_k (Wt+Zt)) + Pt |f|^2 + sigma_nk^2
             u_ul_tot = rho Tr(H_si (Wt+Zt)) + Pt |g|^2 + sigma_UL^2
    G terms: u_dl_int = Tr(H_k Zt) + Pt |f|^2 + sigma_nk^2
             u_ul_int = rho Tr(H_si (Wt+Zt)) + sigma_UL^2
    """
    hk, hsi, f2, g2 = _per_triple_coeffs(ch, cfg)
    tr_hk_wt = np.einsum("ikab,ikjba->ikj", hk, x.Wt).real
    tr_hk_zt = np.einsum("ikab,ikjba->ikj", hk, x.Zt).real
    tr_si = np.einsum("iab,ikjba->ikj", hsi, x.Wt + x.Zt).real
    cci = x.Pt * np.transpose(f2, (0, 2, 1))          # (N_F, K, J)
    u_dl_int = tr_hk_zt + cci + cfg.noise_dl
    u_dl_tot = u_dl_int + tr_hk_wt
    u_ul_int = cfg.rho * tr_si + cfg.noise_ul
    u_ul_tot = u_ul_int + x.Pt * g2[:, None, :]
    return u_dl_tot, u_ul_tot, u_dl_int, u_ul_int


def _weights(cfg: SystemConfig):
    wk = np.asarray(cfg.dl_weights())[None, :, None]
    mj = np.asarray(cfg.ul_weights())[None, None, :]
    return wk, mj


def eval_F(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> float:
    u_dl, u_ul, _, _ = _log_args(x, ch, cfg)
    if np.any(u_dl <= 0.0) or np.any(u_ul <= 0.0):
        raise DomainError("non-positive log argument in F")
    wk, mj = _weights(cfg)
    return float(np.sum(wk * np.log2(u_dl)) + np.sum(mj * np.log2(u_ul)))


def eval_G(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> float:
    _, _, u_dl, u_ul = _log_args(x, ch, cfg)
    if np.any(u_dl <= 0.0) or np.any(u_ul <= 0.0):
        raise DomainError("non-positive log argument in G")
    wk, mj = _weights(cfg)
    return float(np.sum(wk * np.log2(u_dl)) + np.sum(mj * np.log2(u_ul)))


def eval_H(s: np.ndarray) -> float:
    return float(np.sum(s))


def eval_M(s: np.ndarray) -> float:
    return float(np.sum(s * s))


def utility_lifted(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Weighted throughput in lifted variables (equals F - G identically)."""
    u_dl_tot, u_ul_tot, u_dl_int, u_ul_int = _log_args(x, ch, cfg)
    if min(u_dl_int.min(), u_ul_int.min()) <= 0.0:
        raise DomainError("non-positive log argument in lifted utility")
    wk, mj = _weights(cfg)
    dl = np.log2(u_dl_tot) - np.log2(u_dl_int)
    ul = np.log2(u_ul_tot) - np.log2(u_ul_int)
    return float(np.sum(wk * dl) + np.sum(mj * ul))


def penalized_objective(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig,
                        eta: float) -> float:
    """J = -U + eta (H - M), the quantity Algorithm-style iterations descend."""
    return -utility_lifted(x, ch, cfg) + eta * (eval_H(x.s) - eval_M(x.s))


@dataclass
class GradG:
    """Partials of G; matrix blocks are Hermitian, Pt is scalar per triple.

    G's DL term carries no Wt dependence, so dWt stems from the UL term
    alone (rho * H_si / u_ul); that block is exactly zero when rho = 0.
    """

    dWt: np.ndarray   # (N_F, K, J, N_T, N_T)
    dZt: np.ndarray
    dPt: np.ndarray   # (N_F, K, J)


def grad_G(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> GradG:
    hk, hsi, f2, _ = _per_triple_coeffs(ch, cfg)
    _, _, u_dl, u_ul = _log_args(x, ch, cfg)
    if np.any(u_dl <= 0.0) or np.any(u_ul <= 0.0):
        raise DomainError("gradient of G requested outside the log domain")
    wk, mj = _weights(cfg)
    c_dl = wk / (LN2 * u_dl)        # (N_F, K, J)
    c_ul = mj / (LN2 * u_ul)
    d_ul = cfg.rho * np.einsum("ikj,iab->ikjab", c_ul, hsi)
    d_dl = np.einsum("ikj,ikab->ikjab", c_dl, hk)
    return GradG(dWt=d_ul.copy(), dZt=d_dl + d_ul,
                 dPt=c_dl * np.transpose(f2, (0, 2, 1)))


def _inner(grad: GradG, x: LiftedPoint) -> float:
    # Real trace inner product over the Hermitian blocks plus the scalars.
    tw = np.einsum("ikjab,ikjba->", grad.dWt, x.Wt).real
    tz = np.einsum("ikjab,ikjba->", grad.dZt, x.Zt).real
    return float(tw + tz + np.sum(grad.dPt * x.Pt))


def tangent_G(x: LiftedPoint, anchor: LiftedPoint, ch: ChannelSet,
              cfg: SystemConfig) -> float:
    """First-order expansion of G at the anchor, evaluated at x.

    G is concave, so this tangent globally overestimates G.
    """
    g0 = eval_G(anchor, ch, cfg)
    grad = grad_G(anchor, ch, cfg)
    return g0 + _inner(grad, x) - _inner(grad, anchor)


def tangent_M(s: np.ndarray, anchor_s: np.ndarray) -> float:
    """Tangent of the convex M(s) = sum s^2: a global underestimator."""
    return float(np.sum(anchor_s * anchor_s) + 2.0 * np.sum(anchor_s * (s - anchor_s)))


def surrogate_objective(x: LiftedPoint, anchor: LiftedPoint, ch: ChannelSet,
                        cfg: SystemConfig, eta: float) -> float:
    """Convex majorizer -F + tangent_G + eta (H - tangent_M), exact at the anchor."""
    return (-eval_F(x, ch, cfg) + tangent_G(x, anchor, ch, cfg)
            + eta * (eval_H(x.s) - tangent_M(x.s, anchor.s)))


def sandwich_slacks(x: LiftedPoint, cfg: SystemConfig) -> dict[str, float]:
    """Worst-case slacks of the big-M linking constraints C9-C20 and the
    box/simplex constraints C6b/C7 (non-negative means satisfied)."""
    pmax, pul = cfg.p_max_dl, cfg.p_max_ul
    n_f, k_users, j_users, n_t = x.dims
    eye = np.eye(n_t)

    def eig_min(m):
        return float(np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m.conj(), -1, -2))).min())

    s4 = x.s[..., None, None]
    w_full = np.broadcast_to(x.W[:, :, None], x.Wt.shape)
    z_full = np.broadcast_to(x.Z[:, None, None], x.Zt.shape)
    p_full = np.broadcast_to(x.p[:, None, :], x.Pt.shape)
    slacks = {
        "C9": eig_min(pmax * eye * s4 - x.Wt),
        "C10": eig_min(w_full - x.Wt),
        "C11": eig_min(x.Wt - w_full + (1.0 - s4) * pmax * eye),
        "C12": eig_min(x.Wt),
        "C13": eig_min(pmax * eye * s4 - x.Zt),
        "C14": eig_min(z_full - x.Zt),
        "C15": eig_min(x.Zt - z_full + (1.0 - s4) * pmax * eye),
        "C16": eig_min(x.Zt),
        "C17": float((pul * x.s - x.Pt).min()),
        "C18": float((p_full - x.Pt).min()),
        "C19": float((x.Pt - p_full + (1.0 - x.s) * pul).min()),
        "C20": float(x.Pt.min()),
        "C6b": float(min(x.s.min(), (1.0 - x.s).min())),
        "C7": float((1.0 - x.s.sum(axis=(1, 2))).min()),
    }
    return slacks
