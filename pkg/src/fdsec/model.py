"""Convex surrogate construction.

Turns a strictly feasible lifted anchor into one convex subproblem
instance: minimize

    -F(x) + tangent_G(x; anchor) + eta * (H(s) - tangent_M(s; anchor))

subject to the lifted constraint set (power budgets, big-M sandwiches,
LMI leakage caps, boxes and the per-subcarrier simplex). -F is a sum of
-c*log2(affine) terms with strictly positive constant offsets; all other
objective pieces are affine, so the model is convex by construction.

Variables live in a real parametrization (see hermops); the layout
groups them per subcarrier as [triple segments | border segment] so the
solver can exploit the block-arrow KKT structure. Structural variants:

  dl_structure = "mrt": beamforming covariances restricted to the
      maximum-ratio direction h h^H / ||h||^2, one scalar per (i, k)
      replacing each N_T x N_T block (sandwiches become scalar rows).
  an_structure = "iso": AN covariances restricted to (q / N_T) I.
  assignment: freezing a binary subcarrier -> (k, j) map removes s, the
      un-lifted variables and all vanished triples from the problem.

The constraint set is independent of the anchor, so a ProblemStructure
is built once per (cfg, channels, mode) and reused across iterations.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .config import LN2, SystemConfig
from .hermops import herm_basis, hunvec, hvec
from .lifting import (GradG, LiftedPoint, eval_G, grad_G)
from .rates import xi_threshold


@dataclass(frozen=True)
class ModeSpec:
    dl_structure: str = "full"      # "full" | "mrt"
    an_structure: str = "full"      # "full" | "iso"
    assignment: tuple[int, ...] | None = None   # per-subcarrier flat triple id, -1 free

    def __post_init__(self):
        if self.dl_structure not in ("full", "mrt"):
            raise ValueError("dl_structure must be 'full' or 'mrt'")
        if self.an_structure not in ("full", "iso"):
            raise ValueError("an_structure must be 'full' or 'iso'")

    @property
    def frozen(self) -> bool:
        return self.assignment is not None


PROPOSED = ModeSpec()
MRT_BF = ModeSpec(dl_structure="mrt")
ISOTROPIC_AN = ModeSpec(an_structure="iso")


@dataclass
class PSDFamily:
    """Batch of same-shaped LMI blocks S_b(x) = const_b + sum_j maps_bj x[idx_bj] >= 0.

    kind "basis" marks blocks whose maps are signed Hermitian-basis
    stacks plus multiples of the identity (the big-M sandwiches and PSD
    cones); the solver evaluates those through closed-form symmetric
    Kronecker kernels instead of matrix products. Column order of
    var_idx is then [group 0 coords | group 1 coords | ... | scalars].
    """

    name: str
    dim: int
    var_idx: np.ndarray     # (B, J) int
    maps: np.ndarray        # (B, J, dim, dim) complex Hermitian
    const: np.ndarray       # (B, dim, dim) complex Hermitian
    kind: str = "generic"
    group_sign: tuple = ()
    group_kind: tuple = ()  # per group: "wt" | "zt" | "w" | "z" slot identity
    scal_coef: tuple = ()

    @property
    def n_blocks(self) -> int:
        return self.var_idx.shape[0]


@dataclass
class ScalarFamily:
    """Rows coeffs_r . x[idx_r] <= bound_r; slack = bound - coeffs . x."""

    name: str
    var_idx: np.ndarray     # (R, J) int
    coeffs: np.ndarray      # (R, J) float
    bound: np.ndarray       # (R,) float
    coupling: bool = False  # True: row spans several subcarrier blocks

    @property
    def n_rows(self) -> int:
        return self.var_idx.shape[0]


@dataclass
class LogFamily:
    """Objective terms -coef_t * log2(const_t + coeffs_t . x[idx_t])."""

    coef: np.ndarray        # (T,) float, > 0
    var_idx: np.ndarray     # (T, J) int
    coeffs: np.ndarray      # (T, J) float
    const: np.ndarray       # (T,) float, > 0


class Layout:
    """Real-variable layout: per subcarrier block, triple segments then border.

    Free mode border: [s (KJ) | W (K * nw) | Z (nz) | p (J)]; frozen mode
    blocks (assigned subcarriers only) have a single triple and no border.
    """

    def __init__(self, cfg: SystemConfig, mode: ModeSpec):
        self.cfg = cfg
        self.mode = mode
        n_t = cfg.n_tx_antennas
        self.n_t = n_t
        self.k = cfg.n_dl_users
        self.j = cfg.n_ul_users
        self.nw = 1 if mode.dl_structure == "mrt" else n_t * n_t
        self.nz = 1 if mode.an_structure == "iso" else n_t * n_t
        self.wt = self.nw + self.nz + 1
        if mode.frozen:
            asg = mode.assignment
            if len(asg) != cfg.n_subcarriers:
                raise ValueError("assignment length must equal n_subcarriers")
            self.blocks = [i for i, a in enumerate(asg) if a >= 0]
            self.kj = 1
            self.wb = 0
        else:
            self.blocks = list(range(cfg.n_subcarriers))
            self.kj = self.k * self.j
            self.wb = self.kj + self.k * self.nw + self.nz + self.j
        self.block_width = self.kj * self.wt + self.wb
        self.n = len(self.blocks) * self.block_width
        self._block_of_sub = {sub: b for b, sub in enumerate(self.blocks)}

    # Offsets -------------------------------------------------------------
    def block_of(self, sub: int) -> int:
        return self._block_of_sub[sub]

    def triple_base(self, b: int, tau: int) -> int:
        return b * self.block_width + tau * self.wt

    def wt_idx(self, b: int, tau: int) -> np.ndarray:
        base = self.triple_base(b, tau)
        return np.arange(base, base + self.nw)

    def zt_idx(self, b: int, tau: int) -> np.ndarray:
        base = self.triple_base(b, tau) + self.nw
        return np.arange(base, base + self.nz)

    def pt_idx(self, b: int, tau: int) -> int:
        return self.triple_base(b, tau) + self.nw + self.nz

    def border_base(self, b: int) -> int:
        return b * self.block_width + self.kj * self.wt

    def s_idx(self, b: int, tau: int) -> int:
        return self.border_base(b) + tau

    def w_idx(self, b: int, k: int) -> np.ndarray:
        base = self.border_base(b) + self.kj + k * self.nw
        return np.arange(base, base + self.nw)

    def z_idx(self, b: int) -> np.ndarray:
        base = self.border_base(b) + self.kj + self.k * self.nw
        return np.arange(base, base + self.nz)

    def p_idx(self, b: int, j: int) -> int:
        return self.border_base(b) + self.kj + self.k * self.nw + self.nz + j

    def classify(self):
        """Arrays (trip_id, seg_offset, is_triple) per variable index."""
        n_blocks = len(self.blocks)
        trip_id = np.full(self.n, -1, dtype=np.int64)
        seg_off = np.zeros(self.n, dtype=np.int64)
        is_triple = np.zeros(self.n, dtype=bool)
        block_id = np.repeat(np.arange(n_blocks), self.block_width)
        local = np.tile(np.arange(self.block_width), n_blocks)
        tmask = local < self.kj * self.wt
        is_triple[:] = tmask
        trip_id[tmask] = block_id[tmask] * self.kj + local[tmask] // self.wt
        seg_off[tmask] = local[tmask] % self.wt
        trip_id[~tmask] = block_id[~tmask]          # border rows carry the block id
        seg_off[~tmask] = local[~tmask] - self.kj * self.wt
        return trip_id, seg_off, is_triple

    # LiftedPoint <-> vector ------------------------------------------------
    def triple_users(self, tau: int, sub: int | None = None) -> tuple[int, int]:
        if self.mode.frozen:
            flat = self.mode.assignment[sub]
            return flat // self.j, flat % self.j
        return tau // self.j, tau % self.j

    def _dl_dirs(self, ch: ChannelSet) -> np.ndarray:
        """MRT direction matrices h h^H / ||h||^2 per (i, k)."""
        nrm = np.einsum("ika,ika->ik", ch.h.conj(), ch.h).real
        return np.einsum("ika,ikb->ikab", ch.h, ch.h.conj()) / nrm[..., None, None]

    def inject(self, lp: LiftedPoint, ch: ChannelSet) -> np.ndarray:
        """Project a mode-consistent LiftedPoint onto the coordinate vector."""
        x = np.zeros(self.n)
        n_t = self.n_t
        dirs = self._dl_dirs(ch) if self.mode.dl_structure == "mrt" else None
        for b, sub in enumerate(self.blocks):
            for tau in range(self.kj):
                k, j = self.triple_users(tau, sub)
                if self.mode.dl_structure == "mrt":
                    x[self.wt_idx(b, tau)] = np.real(
                        np.trace(lp.Wt[sub, k, j] @ dirs[sub, k]))
                else:
                    x[self.wt_idx(b, tau)] = hvec(lp.Wt[sub, k, j])
                if self.mode.an_structure == "iso":
                    x[self.zt_idx(b, tau)] = np.real(np.trace(lp.Zt[sub, k, j]))
                else:
                    x[self.zt_idx(b, tau)] = hvec(lp.Zt[sub, k, j])
                x[self.pt_idx(b, tau)] = lp.Pt[sub, k, j]
            if self.wb:
                for tau in range(self.kj):
                    k, j = self.triple_users(tau, sub)
                    x[self.s_idx(b, tau)] = lp.s[sub, k, j]
                for k in range(self.k):
                    if self.mode.dl_structure == "mrt":
                        x[self.w_idx(b, k)] = np.real(np.trace(lp.W[sub, k] @ dirs[sub, k]))
                    else:
                        x[self.w_idx(b, k)] = hvec(lp.W[sub, k])
                if self.mode.an_structure == "iso":
                    x[self.z_idx(b)] = np.real(np.trace(lp.Z[sub]))
                else:
                    x[self.z_idx(b)] = hvec(lp.Z[sub])
                for j in range(self.j):
                    x[self.p_idx(b, j)] = lp.p[sub, j]
        return x

    def extract(self, x: np.ndarray, ch: ChannelSet) -> LiftedPoint:
        """Expand the coordinate vector into full-matrix lifted variables."""
        cfg = self.cfg
        n_t = self.n_t
        lp = LiftedPoint.zeros(cfg.n_subcarriers, self.k, self.j, n_t)
        dirs = self._dl_dirs(ch) if self.mode.dl_structure == "mrt" else None
        eye = np.eye(n_t)
        for b, sub in enumerate(self.blocks):
            for tau in range(self.kj):
                k, j = self.triple_users(tau, sub)
                if self.mode.dl_structure == "mrt":
                    lp.Wt[sub, k, j] = x[self.wt_idx(b, tau)][0] * dirs[sub, k]
                else:
                    lp.Wt[sub, k, j] = hunvec(x[self.wt_idx(b, tau)], n_t)
                if self.mode.an_structure == "iso":
                    lp.Zt[sub, k, j] = x[self.zt_idx(b, tau)][0] / n_t * eye
                else:
                    lp.Zt[sub, k, j] = hunvec(x[self.zt_idx(b, tau)], n_t)
                lp.Pt[sub, k, j] = x[self.pt_idx(b, tau)]
            if self.wb:
                for tau in range(self.kj):
                    k, j = self.triple_users(tau, sub)
                    lp.s[sub, k, j] = x[self.s_idx(b, tau)]
                for k in range(self.k):
                    if self.mode.dl_structure == "mrt":
                        lp.W[sub, k] = x[self.w_idx(b, k)][0] * dirs[sub, k]
                    else:
                        lp.W[sub, k] = hunvec(x[self.w_idx(b, k)], n_t)
                if self.mode.an_structure == "iso":
                    lp.Z[sub] = x[self.z_idx(b)][0] / n_t * eye
                else:
                    lp.Z[sub] = hunvec(x[self.z_idx(b)], n_t)
                for j in range(self.j):
                    lp.p[sub, j] = x[self.p_idx(b, j)]
            else:
                # Frozen binary point: the un-lifted variables coincide with
                # the lifted ones on the active triple.
                k, j = self.triple_users(0, sub)
                lp.s[sub, k, j] = 1.0
                lp.W[sub, k] = lp.Wt[sub, k, j]
                lp.Z[sub] = lp.Zt[sub, k, j]
                lp.p[sub, j] = lp.Pt[sub, k, j]
        return lp


@dataclass
class ProblemStructure:
    """Anchor-independent part of the subproblem: layout + constraint set."""

    cfg: SystemConfig
    ch: ChannelSet
    mode: ModeSpec
    layout: Layout
    psd_families: list[PSDFamily]
    scalar_families: list[ScalarFamily]
    log_family: LogFamily
    m_total: int
    plan: object | None = None       # solver-owned assembly cache


@dataclass
class SubproblemModel:
    """One convex surrogate instance: structure + affine objective part."""

    structure: ProblemStructure
    q: np.ndarray            # linear objective coefficients
    r: float                 # objective constant (tangent + penalty offsets)
    eta: float
    anchor: LiftedPoint

    @property
    def layout(self) -> Layout:
        return self.structure.layout

    @property
    def n(self) -> int:
        return self.structure.layout.n


def _psd(name, dim, idx_rows, map_rows, const_rows) -> PSDFamily:
    fam = PSDFamily(name=name, dim=dim,
                    var_idx=np.asarray(idx_rows, dtype=np.int64),
                    maps=np.asarray(map_rows, dtype=complex),
                    const=np.asarray(const_rows, dtype=complex))
    if fam.maps.shape[-2:] != (dim, dim) or fam.const.shape[-2:] != (dim, dim):
        raise ValueError(f"inconsistent block shapes in family {name}")
    return fam


def _scalar(name, idx_rows, coef_rows, bounds, coupling=False) -> ScalarFamily:
    return ScalarFamily(name=name,
                        var_idx=np.asarray(idx_rows, dtype=np.int64),
                        coeffs=np.asarray(coef_rows, dtype=float),
                        bound=np.asarray(bounds, dtype=float), coupling=coupling)


def build_structure(cfg: SystemConfig, ch: ChannelSet,
                    mode: ModeSpec = PROPOSED) -> ProblemStructure:
    """Emit the constraint families and objective log terms for one mode.

    The rank constraint on the lifted beamforming covariances is
    deliberately absent (semidefinite relaxation); its tightness is
    checked post hoc on solutions.
    """
    lay = Layout(cfg, mode)
    n_t, m = cfg.n_tx_antennas, cfg.n_eve_antennas
    basis = herm_basis(n_t)
    eye = np.eye(n_t)
    pmax, pul = cfg.p_max_dl, cfg.p_max_ul
    xi_dl, xi_ul = xi_threshold(cfg.r_tol_dl), xi_threshold(cfg.r_tol_ul)
    wk, mj = cfg.dl_weights(), cfg.ul_weights()
    mrt = mode.dl_structure == "mrt"
    iso = mode.an_structure == "iso"
    dirs = lay._dl_dirs(ch) if mrt else None

    hk = np.einsum("ika,ikb->ikab", ch.h, ch.h.conj())
    hsi = np.einsum("ia,ib->iab", ch.h_si, ch.h_si.conj())

    # Per-triple coefficient vectors of the log arguments, mode-projected.
    def wt_coeffs(mat, sub, k):
        if mrt:
            return np.array([np.real(np.trace(mat @ dirs[sub, k]))])
        return hvec(mat)

    def zt_coeffs(mat):
        if iso:
            return np.array([np.real(np.trace(mat)) / n_t])
        return hvec(mat)

    # Congruence maps L^H B_a L for the leakage LMIs.
    def congr_wt(sub, k):
        ll = ch.L[sub]
        if mrt:
            return np.einsum("dm,dk,kn->mn", ll.conj(), dirs[sub, k], ll)[None]
        return np.einsum("dm,adk,kn->amn", ll.conj(), basis, ll)

    def congr_zt(sub):
        ll = ch.L[sub]
        if iso:
            return (ll.conj().T @ ll / n_t)[None]
        return np.einsum("dm,adk,kn->amn", ll.conj(), basis, ll)

    psd: dict[str, list] = {}
    sca: dict[str, list] = {}
    # Basis structure of each family name: (group signs, identity-column
    # coefficient factory). Scalar-column coefficients may depend on mode
    # but are uniform within a family.
    basis_meta: dict[str, tuple] = {}

    def add_psd(name, dim, idx, maps, const, groups=None, kinds=(), scal=()):
        psd.setdefault(name, []).append((idx, maps, const))
        if groups is not None:
            basis_meta[name] = (tuple(groups), tuple(kinds), tuple(scal))

    def add_row(name, idx, coeffs, bound):
        sca.setdefault(name, []).append((idx, coeffs, bound))

    log_coef, log_idx, log_coeffs, log_const = [], [], [], []
    c1_idx, c1_coef = [], []
    c2_idx = [[] for _ in range(cfg.n_ul_users)]

    for b, sub in enumerate(lay.blocks):
        zero_nt = np.zeros((n_t, n_t))
        congr_z_cache = congr_zt(sub)
        for tau in range(lay.kj):
            k, j = lay.triple_users(tau, sub)
            iw = lay.wt_idx(b, tau)
            iz = lay.zt_idx(b, tau)
            ip = lay.pt_idx(b, tau)
            bw = np.array([dirs[sub, k]]) if mrt else basis
            bz = np.array([eye / n_t]) if iso else basis

            # Leakage LMIs (M x M): xi*Xt - leakage >= 0, Xt = L^H Zt L + s_E^2 I.
            cw = congr_wt(sub, k)
            cz = congr_z_cache
            add_psd("C4t", m, np.concatenate([iw, iz]),
                    np.concatenate([-cw, xi_dl * cz]), xi_dl * cfg.noise_eve * np.eye(m))
            add_psd("C5t", m, np.concatenate([iz, [ip]]),
                    np.concatenate([xi_ul * cz,
                                    [-np.outer(ch.e[sub, j], ch.e[sub, j].conj())]]),
                    xi_ul * cfg.noise_eve * np.eye(m))

            if mode.frozen:
                # Active triple at s = 1: sandwiches collapse onto caps.
                if mrt:
                    add_row("C12s", [iw[0]], [-1.0], 0.0)
                    add_row("C9s", [iw[0]], [1.0], pmax)
                else:
                    add_psd("C12", n_t, iw, basis, zero_nt, groups=(1.0,), kinds=("wt",))
                    add_psd("C9", n_t, iw, -basis, pmax * eye, groups=(-1.0,), kinds=("wt",))
                if iso:
                    add_row("C16s", [iz[0]], [-1.0], 0.0)
                    add_row("C13s", [iz[0]], [1.0], n_t * pmax)
                else:
                    add_psd("C16", n_t, iz, basis, zero_nt, groups=(1.0,), kinds=("zt",))
                    add_psd("C13", n_t, iz, -basis, pmax * eye, groups=(-1.0,), kinds=("zt",))
                add_row("C20", [ip], [-1.0], 0.0)
                add_row("C17", [ip], [1.0], pul)
            else:
                i_s = lay.s_idx(b, tau)
                i_wk = lay.w_idx(b, k)
                i_zz = lay.z_idx(b)
                i_pj = lay.p_idx(b, j)
                if mrt:
                    add_row("C12s", [iw[0]], [-1.0], 0.0)
                    add_row("C9s", [iw[0], i_s], [1.0, -pmax], 0.0)
                    add_row("C10s", [iw[0], i_wk[0]], [1.0, -1.0], 0.0)
                    add_row("C11s", [i_wk[0], iw[0], i_s], [1.0, -1.0, pmax], pmax)
                else:
                    add_psd("C12", n_t, iw, basis, np.zeros((n_t, n_t)),
                            groups=(1.0,), kinds=("wt",))
                    add_psd("C9", n_t, np.concatenate([iw, [i_s]]),
                            np.concatenate([-basis, [pmax * eye]]), np.zeros((n_t, n_t)),
                            groups=(-1.0,), kinds=("wt",), scal=(pmax,))
                    add_psd("C10", n_t, np.concatenate([iw, i_wk]),
                            np.concatenate([-basis, basis]), np.zeros((n_t, n_t)),
                            groups=(-1.0, 1.0), kinds=("wt", "w"))
                    add_psd("C11", n_t, np.concatenate([iw, i_wk, [i_s]]),
                            np.concatenate([basis, -basis, [-pmax * eye]]), pmax * eye,
                            groups=(1.0, -1.0), kinds=("wt", "w"), scal=(-pmax,))
                if iso:
                    add_row("C16s", [iz[0]], [-1.0], 0.0)
                    add_row("C13s", [iz[0], i_s], [1.0, -n_t * pmax], 0.0)
                    add_row("C14s", [iz[0], i_zz[0]], [1.0, -1.0], 0.0)
                    add_row("C15s", [i_zz[0], iz[0], i_s], [1.0, -1.0, n_t * pmax], n_t * pmax)
                else:
                    add_psd("C16", n_t, iz, basis, np.zeros((n_t, n_t)),
                            groups=(1.0,), kinds=("zt",))
                    add_psd("C13", n_t, np.concatenate([iz, [i_s]]),
                            np.concatenate([-basis, [pmax * eye]]), np.zeros((n_t, n_t)),
                            groups=(-1.0,), kinds=("zt",), scal=(pmax,))
                    add_psd("C14", n_t, np.concatenate([iz, i_zz]),
                            np.concatenate([-basis, basis]), np.zeros((n_t, n_t)),
                            groups=(-1.0, 1.0), kinds=("zt", "z"))
                    add_psd("C15", n_t, np.concatenate([iz, i_zz, [i_s]]),
                            np.concatenate([basis, -basis, [-pmax * eye]]), pmax * eye,
                            groups=(1.0, -1.0), kinds=("zt", "z"), scal=(-pmax,))
                add_row("C20", [ip], [-1.0], 0.0)
                add_row("C17", [ip, i_s], [1.0, -pul], 0.0)
                add_row("C18", [ip, i_pj], [1.0, -1.0], 0.0)
                add_row("C19", [i_pj, ip, i_s], [1.0, -1.0, pul], pul)
                add_row("C6lo", [i_s], [-1.0], 0.0)
                add_row("C6hi", [i_s], [1.0], 1.0)

            # Objective log terms of F for this triple.
            cw_dl = wt_coeffs(hk[sub, k], sub, k)
            cz_dl = zt_coeffs(hk[sub, k])
            f2 = abs(ch.f[sub, j, k]) ** 2
            log_coef.append(wk[k])
            log_idx.append(np.concatenate([iw, iz, [ip]]))
            log_coeffs.append(np.concatenate([cw_dl, cz_dl, [f2]]))
            log_const.append(cfg.noise_dl)
            cw_ul = wt_coeffs(hsi[sub], sub, k) * cfg.rho
            cz_ul = zt_coeffs(hsi[sub]) * cfg.rho
            g2 = abs(ch.g[sub, j]) ** 2
            log_coef.append(mj[j])
            log_idx.append(np.concatenate([iw, iz, [ip]]))
            log_coeffs.append(np.concatenate([cw_ul, cz_ul, [g2]]))
            log_const.append(cfg.noise_ul)

            c1_idx.extend(iw if mrt else iw[:n_t])
            c1_coef.extend([1.0] * (1 if mrt else n_t))
            c1_idx.extend(iz if iso else iz[:n_t])
            c1_coef.extend([1.0] * (1 if iso else n_t))
            c2_idx[j].append(ip)

        if not mode.frozen:
            # Border-only constraints: AN covariance cone, UL power signs,
            # and the per-subcarrier scheduling simplex.
            if iso:
                add_row("C8s", [lay.z_idx(b)[0]], [-1.0], 0.0)
            else:
                add_psd("C8", n_t, lay.z_idx(b), basis, np.zeros((n_t, n_t)),
                        groups=(1.0,), kinds=("z",))
            for j in range(lay.j):
                add_row("C3", [lay.p_idx(b, j)], [-1.0], 0.0)
            add_row("C7", [lay.s_idx(b, tau) for tau in range(lay.kj)],
                    [1.0] * lay.kj, 1.0)

    psd_families = []
    for name, rows in psd.items():
        idx = [r[0] for r in rows]
        maps = [r[1] for r in rows]
        const = [r[2] for r in rows]
        fam = _psd(name, np.asarray(maps[0]).shape[-1], idx, maps, const)
        if name in basis_meta:
            fam.kind = "basis"
            fam.group_sign, fam.group_kind, fam.scal_coef = basis_meta[name]
        psd_families.append(fam)

    scalar_families = []
    for name, rows in sca.items():
        width = max(len(r[0]) for r in rows)
        idx = np.zeros((len(rows), width), dtype=np.int64)
        coeffs = np.zeros((len(rows), width))
        bounds = np.zeros(len(rows))
        for r, (ii, cc, bb) in enumerate(rows):
            idx[r, :len(ii)] = ii
            coeffs[r, :len(cc)] = cc
            bounds[r] = bb
        scalar_families.append(ScalarFamily(name=name, var_idx=idx, coeffs=coeffs,
                                            bound=bounds))

    if c1_idx:
        scalar_families.append(_scalar("C1", [c1_idx], [c1_coef], [pmax], coupling=True))
    c2_rows = [(idx, [1.0] * len(idx), pul) for idx in c2_idx if idx]
    if c2_rows:
        width = max(len(r[0]) for r in c2_rows)
        idx = np.zeros((len(c2_rows), width), dtype=np.int64)
        coeffs = np.zeros((len(c2_rows), width))
        bounds = np.zeros(len(c2_rows))
        for r, (ii, cc, bb) in enumerate(c2_rows):
            idx[r, :len(ii)] = ii
            coeffs[r, :len(cc)] = cc
            bounds[r] = bb
        scalar_families.append(ScalarFamily(name="C2", var_idx=idx, coeffs=coeffs,
                                            bound=bounds, coupling=True))

    if log_coef:
        width = max(len(i) for i in log_idx)
        t = len(log_coef)
        lidx = np.zeros((t, width), dtype=np.int64)
        lco = np.zeros((t, width))
        for r in range(t):
            lidx[r, :len(log_idx[r])] = log_idx[r]
            lco[r, :len(log_coeffs[r])] = log_coeffs[r]
        log_family = LogFamily(coef=np.asarray(log_coef), var_idx=lidx, coeffs=lco,
                               const=np.asarray(log_const))
    else:
        log_family = LogFamily(coef=np.zeros(0), var_idx=np.zeros((0, 1), dtype=np.int64),
                               coeffs=np.zeros((0, 1)), const=np.zeros(0))

    m_total = sum(f.n_blocks * f.dim for f in psd_families)
    m_total += sum(f.n_rows for f in scalar_families)
    return ProblemStructure(cfg=cfg, ch=ch, mode=mode, layout=lay,
                            psd_families=psd_families, scalar_families=scalar_families,
                            log_family=log_family, m_total=m_total)


def build_constraints(cfg: SystemConfig, ch: ChannelSet,
                      mode: ModeSpec = PROPOSED) -> ProblemStructure:
    """Constraint set of the lifted problem (rank constraint dropped)."""
    return build_structure(cfg, ch, mode)


def build_subproblem(anchor: LiftedPoint, cfg: SystemConfig, ch: ChannelSet,
                     eta: float, mode: ModeSpec = PROPOSED,
                     structure: ProblemStructure | None = None) -> SubproblemModel:
    """Assemble the convex surrogate anchored at a strictly feasible point."""
    st = structure if structure is not None else build_structure(cfg, ch, mode)
    mode = st.mode
    lay = st.layout
    q = np.zeros(lay.n)
    grad = grad_G(anchor, ch, cfg)
    dirs = lay._dl_dirs(ch) if mode.dl_structure == "mrt" else None

    inner = 0.0
    for b, sub in enumerate(lay.blocks):
        for tau in range(lay.kj):
            k, j = lay.triple_users(tau, sub)
            gw, gz = grad.dWt[sub, k, j], grad.dZt[sub, k, j]
            if mode.dl_structure == "mrt":
                q[lay.wt_idx(b, tau)] = np.real(np.trace(gw @ dirs[sub, k]))
            else:
                q[lay.wt_idx(b, tau)] = hvec(gw)
            if mode.an_structure == "iso":
                q[lay.zt_idx(b, tau)] = np.real(np.trace(gz)) / lay.n_t
            else:
                q[lay.zt_idx(b, tau)] = hvec(gz)
            q[lay.pt_idx(b, tau)] = grad.dPt[sub, k, j]
            inner += float(np.real(np.trace(gw @ anchor.Wt[sub, k, j]))
                           + np.real(np.trace(gz @ anchor.Zt[sub, k, j]))
                           + grad.dPt[sub, k, j] * anchor.Pt[sub, k, j])
    r = eval_G(anchor, ch, cfg) - inner

    if not st.mode.frozen:
        for b, sub in enumerate(lay.blocks):
            for tau in range(lay.kj):
                k, j = lay.triple_users(tau, sub)
                q[lay.s_idx(b, tau)] += eta * (1.0 - 2.0 * anchor.s[sub, k, j])
        r += eta * float(np.sum(anchor.s * anchor.s))
    else:
        # Binary s: the penalty vanishes identically; G-terms of vanished
        # triples are constants that cancel against their F-terms.
        pass
    return SubproblemModel(structure=st, q=q, r=float(r), eta=eta, anchor=anchor)


def dump_model(model: SubproblemModel, fh=None) -> str:
    """Human-readable dump: layout, objective terms, constraint blocks."""
    st = model.structure
    lay = st.layout
    out = io.StringIO()
    out.write("# subproblem dump\n")
    out.write(f"variables: {lay.n} (blocks={len(lay.blocks)} kj={lay.kj} "
              f"wt={lay.wt} wb={lay.wb})\n")
    out.write(f"mode: dl={st.mode.dl_structure} an={st.mode.an_structure} "
              f"frozen={st.mode.frozen}\n")
    out.write(f"barrier parameter total m = {st.m_total}\n")
    out.write(f"objective constant r = {model.r:.12g}, eta = {model.eta:.12g}\n")
    lf = st.log_family
    out.write(f"\n[log terms] count={lf.coef.size}\n")
    for t in range(lf.coef.size):
        nz = lf.coeffs[t] != 0.0
        out.write(f"  -{lf.coef[t]:.6g}*log2({lf.const[t]:.6g}")
        for i, c in zip(lf.var_idx[t][nz], lf.coeffs[t][nz]):
            out.write(f" + {c:.6g}*x[{i}]")
        out.write(")\n")
    nzq = np.nonzero(model.q)[0]
    out.write(f"\n[linear term] nonzeros={nzq.size}\n")
    for i in nzq:
        out.write(f"  {model.q[i]:+.6g}*x[{i}]\n")
    for fam in st.scalar_families:
        out.write(f"\n[scalar {fam.name}] rows={fam.n_rows} coupling={fam.coupling}\n")
        for rr in range(fam.n_rows):
            nz = fam.coeffs[rr] != 0.0
            terms = " + ".join(f"{c:.6g}*x[{i}]"
                               for i, c in zip(fam.var_idx[rr][nz], fam.coeffs[rr][nz]))
            out.write(f"  {terms} <= {fam.bound[rr]:.6g}\n")
    for fam in st.psd_families:
        out.write(f"\n[psd {fam.name}] blocks={fam.n_blocks} dim={fam.dim}\n")
        for bb in range(fam.n_blocks):
            out.write(f"  block {bb}: const norm {np.linalg.norm(fam.const[bb]):.6g}, "
                      f"vars {fam.var_idx[bb].tolist()}\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text
