"""Log-barrier path-following solver for SubproblemModel instances.

Primal barrier method: for increasing t, minimize the scaled potential

    psi_t(x) = f0(x) + phi(x) / t,
    phi(x)   = -sum log(scalar slacks) - sum log det(PSD blocks),

by damped Newton steps with Armijo backtracking; every iterate stays
strictly feasible (fraction-to-boundary caps on scalar slacks, Cholesky
feasibility tests on the PSD blocks). t grows by a factor mu per outer
iteration until the self-concordance gap bound m/t meets the tolerance.
The 1/t scaling keeps the Newton direction identical to the classical
t*f0 + phi form while making the gradient the perturbed-KKT stationarity
residual grad f0 + sum(dual_i * grad c_i) directly, which avoids float
cancellation between O(t) terms at large t.

Newton systems exploit the problem structure: all constraints except
the two power budgets couple variables of a single subcarrier, and
inside one subcarrier the Hessian is block-arrow (dense per-triple
blocks bordered by the shared s/W/Z/p coordinates). The cross-subcarrier
budget rows contribute rank-one terms handled by a Woodbury correction.
Assembly scatters every family's local Hessian through one precomputed
index map and a single bincount per step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import LN2, SolverParams, SystemConfig
from .hermops import hunvec, hvec, sym_kron_batch
from .lifting import LiftedPoint
from .model import Layout, ProblemStructure, SubproblemModel


class InfeasibleModelError(RuntimeError):
    """No strictly interior point could be constructed."""


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SolveReport:
    status: str                    # optimal | max_iter | infeasible | numerical_failure
    x_opt: LiftedPoint | None
    objective: float
    barrier_outer_iters: int
    newton_steps: int
    kkt_residual: float
    duality_gap_bound: float
    t_final: float = 0.0
    x_vec: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Assembly plan: precomputed scatter targets shared by all solves on one
# ProblemStructure.
# ---------------------------------------------------------------------------

@dataclass
class _FamilyPlan:
    grad_tgt: np.ndarray        # (B*J,) targets into the gradient vector
    hess_tgt: np.ndarray        # (B*J*J,) targets into the composite Hessian pool
    maps_rows: np.ndarray | None = None   # (B, J, d*d) row-major vec of maps
    maps_cols: np.ndarray | None = None   # (B, d, J*d) maps stacked column-wise


@dataclass
class AssemblyPlan:
    n: int
    n_trip: int                 # total triple segments
    n_blocks: int
    wt: int
    wb: int
    tt_size: int
    tb_size: int
    bb_size: int
    pool_size: int              # tt + tb + bb + 1 dump slot
    fams: list[_FamilyPlan]
    log_plan: _FamilyPlan
    coupling: list               # list of (ScalarFamily,) kept aside for Woodbury
    x_split: tuple               # (trip_id, seg_off, is_triple) per variable
    fast: bool = False          # structured fast assembly available
    nw: int = 0                 # triple-segment slot widths and border offsets
    nz: int = 0
    kj: int = 0
    k_users: int = 0
    j_users: int = 0
    off_w: int = 0              # border offset of the first W slot
    off_z: int = 0
    log_local: np.ndarray | None = None   # (n_trip, terms, wt) fixed coefficients


def _quadrant_targets(plan_dims, idx: np.ndarray, trip_id, seg_off, is_triple) -> np.ndarray:
    """Composite-pool Hessian targets for all index pairs of one family."""
    n_trip, n_blocks, wt, wb, tt_size, tb_size, bb_size = plan_dims
    dump = tt_size + tb_size + bb_size
    b, j = idx.shape
    t1 = trip_id[idx][:, :, None]
    t2 = trip_id[idx][:, None, :]
    o1 = seg_off[idx][:, :, None]
    o2 = seg_off[idx][:, None, :]
    m1 = is_triple[idx][:, :, None]
    m2 = is_triple[idx][:, None, :]

    tgt = np.full((b, j, j), dump, dtype=np.int64)
    tt = m1 & m2 & (t1 == t2)
    np.copyto(tgt, (t1 * wt + o1) * wt + o2, where=tt)
    if wb > 0:
        # Block id of a triple coordinate is trip_id // kj; border
        # coordinates carry the block id in trip_id directly.
        kj = n_trip // max(1, n_blocks)
        blk1 = np.where(m1, t1 // kj, t1)
        blk2 = np.where(m2, t2 // kj, t2)
        tb = m1 & ~m2 & (blk1 == blk2)
        np.copyto(tgt, tt_size + (t1 * wt + o1) * wb + o2, where=tb)
        bb = ~m1 & ~m2 & (blk1 == blk2)
        np.copyto(tgt, tt_size + tb_size + (blk1 * wb + o1) * wb + o2, where=bb)
    return tgt.ravel()


def build_plan(st: ProblemStructure) -> AssemblyPlan:
    lay = st.layout
    trip_id, seg_off, is_triple = lay.classify()
    n_blocks = len(lay.blocks)
    n_trip = n_blocks * lay.kj
    wt, wb = lay.wt, lay.wb
    tt_size = n_trip * wt * wt
    tb_size = n_trip * wt * wb
    bb_size = n_blocks * wb * wb
    dims = (n_trip, n_blocks, wt, wb, tt_size, tb_size, bb_size)

    fams = []
    for fam in st.psd_families:
        b, j = fam.var_idx.shape
        d = fam.dim
        fp = _FamilyPlan(
            grad_tgt=fam.var_idx.ravel(),
            hess_tgt=_quadrant_targets(dims, fam.var_idx, trip_id, seg_off, is_triple))
        if fam.kind != "basis":
            fp.maps_rows = np.ascontiguousarray(fam.maps.reshape(b, j, d * d))
            fp.maps_cols = np.ascontiguousarray(
                fam.maps.transpose(0, 2, 1, 3).reshape(b, d, j * d))
        fams.append(fp)
    for fam in st.scalar_families:
        if fam.coupling:
            continue
        fams.append(_FamilyPlan(
            grad_tgt=fam.var_idx.ravel(),
            hess_tgt=_quadrant_targets(dims, fam.var_idx, trip_id, seg_off, is_triple)))
    lf = st.log_family
    log_plan = _FamilyPlan(
        grad_tgt=lf.var_idx.ravel(),
        hess_tgt=_quadrant_targets(dims, lf.var_idx, trip_id, seg_off, is_triple))
    coupling = [fam for fam in st.scalar_families if fam.coupling]
    plan = AssemblyPlan(n=lay.n, n_trip=n_trip, n_blocks=n_blocks, wt=wt, wb=wb,
                        tt_size=tt_size, tb_size=tb_size, bb_size=bb_size,
                        pool_size=tt_size + tb_size + bb_size + 1,
                        fams=fams, log_plan=log_plan, coupling=coupling,
                        x_split=(trip_id, seg_off, is_triple))
    _prepare_fast(st, plan, trip_id, seg_off, is_triple)
    return plan


def _prepare_fast(st: ProblemStructure, plan: AssemblyPlan, trip_id, seg_off,
                  is_triple):
    """Validate the structured layout assumptions of the fast assembly.

    Every heavy Hessian contribution touches either a contiguous run of
    one triple segment or a known border slot; if any family deviates
    the solver falls back to the generic scatter path.
    """
    lay = st.layout
    plan.nw, plan.nz, plan.kj = lay.nw, lay.nz, lay.kj
    plan.k_users, plan.j_users = lay.k, lay.j
    plan.off_w = lay.kj
    plan.off_z = lay.kj + lay.k * lay.nw
    n_trip = plan.n_trip
    try:
        for fam in st.psd_families:
            b, j = fam.var_idx.shape
            if fam.kind == "basis":
                d2 = fam.dim * fam.dim
                if b not in (n_trip, plan.n_blocks):
                    raise ValueError(fam.name)
                for g, kind in enumerate(fam.group_kind):
                    col = fam.var_idx[:, g * d2:(g + 1) * d2]
                    off = seg_off[col]
                    if not np.all(off == off[:, :1] + np.arange(d2)):
                        raise ValueError(fam.name)
                    expect_triple = kind in ("wt", "zt")
                    if not np.all(is_triple[col] == expect_triple):
                        raise ValueError(fam.name)
                    start = {"wt": 0, "zt": lay.nw, "z": plan.off_z}.get(kind)
                    if kind == "w":
                        # per-block offset off_w + k * nw, k from the triple
                        k_of = (np.arange(n_trip) % lay.kj) // lay.j
                        exp = plan.off_w + k_of * lay.nw
                        if not np.all(off[:, 0] == exp):
                            raise ValueError(fam.name)
                    elif not np.all(off[:, 0] == start):
                        raise ValueError(fam.name)
                if fam.scal_coef:
                    scol = fam.var_idx[:, len(fam.group_kind) * d2:]
                    if scol.shape[1] != 1 or np.any(is_triple[scol]):
                        raise ValueError(fam.name)
                    if not np.all(seg_off[scol[:, 0]] == np.arange(n_trip) % lay.kj):
                        raise ValueError(fam.name)
            else:
                # Generic LMI block: one contiguous run of a triple segment.
                if b != n_trip:
                    raise ValueError(fam.name)
                off = seg_off[fam.var_idx]
                if not (np.all(is_triple[fam.var_idx])
                        and np.all(np.diff(off, axis=1) == 1)
                        and np.all(off[:, 0] == off[0, 0])
                        and np.all(trip_id[fam.var_idx]
                                   == np.arange(n_trip)[:, None])):
                    raise ValueError(fam.name)
        lf = st.log_family
        if lf.coef.size:
            terms = lf.coef.size // max(1, n_trip)
            if terms * n_trip != lf.coef.size:
                raise ValueError("log")
            off = seg_off[lf.var_idx]
            if not (np.all(is_triple[lf.var_idx])
                    and np.all(off == np.arange(plan.wt)[None, :])
                    and np.all(trip_id[lf.var_idx]
                               == np.repeat(np.arange(n_trip), terms)[:, None])):
                raise ValueError("log")
            plan.log_local = np.ascontiguousarray(
                lf.coeffs.reshape(n_trip, terms, plan.wt))
        plan.fast = True
    except ValueError:
        plan.fast = False


def _plan_of(st: ProblemStructure) -> AssemblyPlan:
    if st.plan is None:
        st.plan = build_plan(st)
    return st.plan


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

@dataclass
class PointEval:
    x: np.ndarray
    feasible: bool
    f0: float = math.inf
    phi: float = math.inf
    psd_inv: list = field(default_factory=list)       # S^-1 per family (B, d, d)
    scal_slack: list = field(default_factory=list)    # per non-coupling family (R,)
    coup_slack: list = field(default_factory=list)    # per coupling family (R,)
    log_u: np.ndarray | None = None

    def psi(self, t: float) -> float:
        return self.f0 + self.phi / t


def _basis_block(fam, xg: np.ndarray) -> np.ndarray:
    """S(x) for basis-kind families: signed hunvec groups plus identity columns."""
    d = fam.dim
    ng = len(fam.group_sign)
    s = np.array(np.broadcast_to(fam.const, (xg.shape[0], d, d)), dtype=complex)
    for g, sign in enumerate(fam.group_sign):
        s += sign * hunvec(xg[:, g * d * d:(g + 1) * d * d], d)
    if fam.scal_coef:
        coefs = np.asarray(fam.scal_coef)
        shift = xg[:, ng * d * d:] @ coefs
        s[:, np.arange(d), np.arange(d)] += shift[:, None]
    return s


def _basis_kernel(fam, sinv: np.ndarray, d: int):
    """Barrier gradient and Hessian of basis-kind families in closed form.

    For maps sigma_g B_a and c_k I: grad entries are -sigma_g hvec(S^-1)
    and -c_k Tr(S^-1); the Hessian tiles the symmetric Kronecker matrix
    of S^-1 with sign products, bordered by hvec(S^-2) columns.
    """
    b = sinv.shape[0]
    ng = len(fam.group_sign)
    ns = len(fam.scal_coef)
    j = ng * d * d + ns
    hv = hvec(sinv)
    gv = np.empty((b, j))
    for g, sign in enumerate(fam.group_sign):
        gv[:, g * d * d:(g + 1) * d * d] = -sign * hv
    if ns:
        tr = np.trace(sinv, axis1=-2, axis2=-1).real
        for k, coef in enumerate(fam.scal_coef):
            gv[:, ng * d * d + k] = -coef * tr
    kmat = sym_kron_batch(sinv)
    hloc = np.empty((b, j, j))
    for g1, s1 in enumerate(fam.group_sign):
        r = slice(g1 * d * d, (g1 + 1) * d * d)
        for g2, s2 in enumerate(fam.group_sign):
            c = slice(g2 * d * d, (g2 + 1) * d * d)
            hloc[:, r, c] = (s1 * s2) * kmat
    if ns:
        c2 = hvec(sinv @ sinv)
        tr2 = np.einsum("bij,bji->b", sinv, sinv).real
        for k, coef in enumerate(fam.scal_coef):
            col = ng * d * d + k
            for g, sign in enumerate(fam.group_sign):
                r = slice(g * d * d, (g + 1) * d * d)
                hloc[:, r, col] = sign * coef * c2
                hloc[:, col, r] = sign * coef * c2
            for k2, coef2 in enumerate(fam.scal_coef):
                hloc[:, col, ng * d * d + k2] = coef * coef2 * tr2
    return gv, hloc


def evaluate(model: SubproblemModel, x: np.ndarray, need_inverse: bool = False) -> PointEval:
    st = model.structure
    plan = _plan_of(st)
    ev = PointEval(x=x, feasible=False)
    phi = 0.0
    for fam, fp in zip(st.psd_families, plan.fams):
        d = fam.dim
        xg = x[fam.var_idx]
        if fam.kind == "basis":
            s = _basis_block(fam, xg)
        else:
            s = fam.const + (xg[:, None, :] @ fp.maps_rows).reshape(-1, d, d)
        try:
            chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            return ev
        d = np.diagonal(chol, axis1=-2, axis2=-1).real
        # Factor entries at the underflow scale are boundary contact.
        if np.any(d <= 1e-25) or not np.all(np.isfinite(d)):
            return ev
        phi -= 2.0 * float(np.sum(np.log(d)))
        if need_inverse:
            try:
                ev.psd_inv.append(np.linalg.solve(s, np.broadcast_to(
                    np.eye(fam.dim), s.shape).copy()))
            except np.linalg.LinAlgError:
                return ev
    for fam in st.scalar_families:
        u = fam.bound - np.einsum("rj,rj->r", fam.coeffs, x[fam.var_idx])
        # Slacks at the underflow scale are boundary contact numerically.
        if np.any(u <= 1e-60):
            return ev
        phi -= float(np.sum(np.log(u)))
        (ev.coup_slack if fam.coupling else ev.scal_slack).append(u)
    lf = st.log_family
    u = lf.const + np.einsum("tj,tj->t", lf.coeffs, x[lf.var_idx])
    if np.any(u <= 0.0):
        return ev
    ev.log_u = u
    ev.f0 = float(-np.sum(lf.coef * np.log2(u)) + model.q @ x + model.r)
    ev.phi = phi
    ev.feasible = True
    return ev


def _assemble_pool(model: SubproblemModel, ev: PointEval, t: float):
    """Reference assembly through one generic scatter pool (slow path)."""
    st = model.structure
    plan = _plan_of(st)
    grad_idx_parts, grad_val_parts = [], []
    hess_idx_parts, hess_val_parts = [], []

    inv_t = 1.0 / t
    fam_iter = iter(plan.fams)
    scal_iter = iter(ev.scal_slack)
    for fam, sinv in zip(st.psd_families, ev.psd_inv):
        fp = next(fam_iter)
        b, j = fam.var_idx.shape
        d = fam.dim
        if fam.kind == "basis":
            gv, hloc = _basis_kernel(fam, sinv, d)
            gv = inv_t * gv
            hloc = inv_t * hloc
        else:
            # grad_j = -Tr(S^-1 A_j): row-major vec(S^-T) dotted with vec(A_j).
            sinv_vec = sinv.transpose(0, 2, 1).reshape(b, d * d, 1)
            gv = -inv_t * (fp.maps_rows @ sinv_vec)[:, :, 0].real
            # Q_j = S^-1 A_j, then H_jk = Re Tr(Q_j Q_k) as a batched GEMM.
            q = (sinv @ fp.maps_cols).reshape(b, d, j, d).transpose(0, 2, 1, 3)
            qr = q.reshape(b, j, d * d)
            qc = np.ascontiguousarray(q.transpose(0, 1, 3, 2)).reshape(b, j, d * d)
            hloc = inv_t * (qr @ qc.transpose(0, 2, 1)).real
        grad_idx_parts.append(fp.grad_tgt)
        grad_val_parts.append(gv.ravel())
        hess_idx_parts.append(fp.hess_tgt)
        hess_val_parts.append(hloc.ravel())
    for fam in st.scalar_families:
        if fam.coupling:
            continue
        fp = next(fam_iter)
        u = next(scal_iter)
        w = fam.coeffs / u[:, None]
        grad_idx_parts.append(fp.grad_tgt)
        grad_val_parts.append(inv_t * w.ravel())
        hloc = inv_t * (w[:, :, None] * w[:, None, :])
        hess_idx_parts.append(fp.hess_tgt)
        hess_val_parts.append(hloc.ravel())

    lf = st.log_family
    c = lf.coef / (LN2 * ev.log_u)
    grad_idx_parts.append(plan.log_plan.grad_tgt)
    grad_val_parts.append((-c[:, None] * lf.coeffs).ravel())
    wl = lf.coeffs * np.sqrt(c / ev.log_u)[:, None]
    hess_idx_parts.append(plan.log_plan.hess_tgt)
    hess_val_parts.append((wl[:, :, None] * wl[:, None, :]).ravel())

    grad = np.bincount(np.concatenate(grad_idx_parts),
                       weights=np.concatenate(grad_val_parts),
                       minlength=plan.n)
    grad += model.q

    # Cross-subcarrier budget rows: gradient now, Hessian via Woodbury.
    u_cols = []
    sqrt_inv_t = math.sqrt(inv_t)
    for fam, u in zip(plan.coupling, ev.coup_slack):
        w = fam.coeffs / u[:, None]
        np.add.at(grad, fam.var_idx.ravel(), inv_t * w.ravel())
        for r in range(fam.n_rows):
            col = np.zeros(plan.n)
            col[fam.var_idx[r]] += sqrt_inv_t * w[r]
            u_cols.append(col)
    u_mat = np.stack(u_cols, axis=1) if u_cols else np.zeros((plan.n, 0))

    pool = np.bincount(np.concatenate(hess_idx_parts),
                       weights=np.concatenate(hess_val_parts),
                       minlength=plan.pool_size)
    h_t = pool[:plan.tt_size].reshape(plan.n_trip, plan.wt, plan.wt)
    if plan.wb:
        h_tb = pool[plan.tt_size:plan.tt_size + plan.tb_size].reshape(
            plan.n_trip, plan.wt, plan.wb)
        h_b = pool[plan.tt_size + plan.tb_size:-1].reshape(
            plan.n_blocks, plan.wb, plan.wb)
    else:
        h_tb = np.zeros((plan.n_trip, plan.wt, 0))
        h_b = np.zeros((plan.n_blocks, 0, 0))
    return grad, h_t, h_tb, h_b, u_mat


def _fast_basis_tiles(plan: AssemblyPlan, fam, kmat, c2, tr2, h_t, h_tb, h_b):
    """Scatter one basis family's Hessian through structured views."""
    d2 = fam.dim * fam.dim
    nb, kj = plan.n_blocks, plan.kj
    ku, ju, nw = plan.k_users, plan.j_users, plan.nw
    seg = {"wt": 0, "zt": plan.nw}
    n_trip = plan.n_trip
    groups = list(zip(fam.group_kind, fam.group_sign))
    for g1, (k1, s1) in enumerate(groups):
        for g2, (k2, s2) in enumerate(groups):
            val = (s1 * s2) * kmat
            if k1 in seg and k2 in seg:
                h_t[:, seg[k1]:seg[k1] + d2, seg[k2]:seg[k2] + d2] += val
            elif k1 in seg:                       # triple x border
                r = seg[k1]
                if k2 == "z":
                    h_tb.reshape(nb, kj, plan.wt, plan.wb)[
                        :, :, r:r + d2, plan.off_z:plan.off_z + d2] +=                         val.reshape(nb, kj, d2, d2)
                else:                             # k2 == "w"
                    v5 = val.reshape(nb, ku, ju, d2, d2)
                    htb5 = h_tb.reshape(nb, ku, ju, plan.wt, plan.wb)
                    for k in range(ku):
                        o = plan.off_w + k * nw
                        htb5[:, k, :, r:r + d2, o:o + d2] += v5[:, k]
            elif k2 in seg:
                continue                          # mirror handled above
            else:                                 # border x border
                if k1 == "z" and k2 == "z":
                    h_b[:, plan.off_z:plan.off_z + d2,
                        plan.off_z:plan.off_z + d2] +=                         val.reshape(nb, kj, d2, d2).sum(axis=1) if fam.var_idx.shape[0] == n_trip                         else val
                elif k1 == "w" and k2 == "w":
                    v5 = val.reshape(nb, ku, ju, d2, d2).sum(axis=2)
                    for k in range(ku):
                        o = plan.off_w + k * nw
                        h_b[:, o:o + d2, o:o + d2] += v5[:, k]
                else:                             # w x z or z x w
                    v5 = val.reshape(nb, ku, ju, d2, d2).sum(axis=2)
                    for k in range(ku):
                        o = plan.off_w + k * nw
                        if k1 == "w":
                            h_b[:, o:o + d2, plan.off_z:plan.off_z + d2] += v5[:, k]
                        else:
                            h_b[:, plan.off_z:plan.off_z + d2, o:o + d2] += v5[:, k]
    if fam.scal_coef:
        coef = fam.scal_coef[0]
        tau = np.arange(n_trip) % kj
        trips = np.arange(n_trip)
        rows = np.arange(d2)
        for g, (kind, sign) in enumerate(groups):
            vec = (sign * coef) * c2
            if kind in seg:
                r = seg[kind]
                h_tb[trips[:, None], r + rows[None, :], tau[:, None]] += vec
            elif kind == "z":
                blk = trips // kj
                h_b[blk[:, None], plan.off_z + rows[None, :], tau[:, None]] += vec
                h_b[blk[:, None], tau[:, None], plan.off_z + rows[None, :]] += vec
            else:                                 # "w"
                blk = trips // kj
                k_of = tau // ju
                o = plan.off_w + k_of * nw
                h_b[blk[:, None], o[:, None] + rows[None, :], tau[:, None]] += vec
                h_b[blk[:, None], tau[:, None], o[:, None] + rows[None, :]] += vec
        blk = trips // kj
        h_b[blk, tau, tau] += (coef * coef) * tr2


def _assemble(model: SubproblemModel, ev: PointEval, t: float):
    """Gradient of psi_t plus structured Hessian blocks and Woodbury columns.

    All heavy contributions (symmetric-Kronecker tiles of the sandwich
    families, the leakage LMI blocks and the objective outer products)
    land in the block-arrow arrays through direct batched view writes;
    only the light scalar rows go through the generic scatter pool.
    """
    st = model.structure
    plan = _plan_of(st)
    if not plan.fast:
        return _assemble_pool(model, ev, t)
    inv_t = 1.0 / t
    n_trip, wt, wb, nb = plan.n_trip, plan.wt, plan.wb, plan.n_blocks
    h_t = np.zeros((n_trip, wt, wt))
    h_tb = np.zeros((n_trip, wt, wb))
    h_b = np.zeros((nb, wb, wb))

    grad_idx_parts, grad_val_parts = [], []
    hess_idx_parts, hess_val_parts = [], []
    fam_iter = iter(plan.fams)
    scal_iter = iter(ev.scal_slack)
    for fam, sinv in zip(st.psd_families, ev.psd_inv):
        fp = next(fam_iter)
        b, j = fam.var_idx.shape
        d = fam.dim
        if fam.kind == "basis":
            hv = hvec(sinv)
            gv = np.empty((b, j))
            d2 = d * d
            for g, sign in enumerate(fam.group_sign):
                gv[:, g * d2:(g + 1) * d2] = (-sign * inv_t) * hv
            if fam.scal_coef:
                tr = np.trace(sinv, axis1=-2, axis2=-1).real
                gv[:, len(fam.group_sign) * d2] =                     (-fam.scal_coef[0] * inv_t) * tr
                c2 = inv_t * hvec(sinv @ sinv)
                tr2 = inv_t * np.einsum("bij,bji->b", sinv, sinv).real
            else:
                c2 = tr2 = None
            kmat = inv_t * sym_kron_batch(sinv)
            _fast_basis_tiles(plan, fam, kmat, c2, tr2, h_t, h_tb, h_b)
        else:
            sinv_vec = sinv.transpose(0, 2, 1).reshape(b, d * d, 1)
            gv = -inv_t * (fp.maps_rows @ sinv_vec)[:, :, 0].real
            q = (sinv @ fp.maps_cols).reshape(b, d, j, d).transpose(0, 2, 1, 3)
            qr = q.reshape(b, j, d * d)
            qc = np.ascontiguousarray(q.transpose(0, 1, 3, 2)).reshape(b, j, d * d)
            hloc = inv_t * (qr @ qc.transpose(0, 2, 1)).real
            a0 = int(plan.x_split[1][fam.var_idx[0, 0]])
            h_t[:, a0:a0 + j, a0:a0 + j] += hloc
        grad_idx_parts.append(fp.grad_tgt)
        grad_val_parts.append(gv.ravel())
    for fam in st.scalar_families:
        if fam.coupling:
            continue
        fp = next(fam_iter)
        u = next(scal_iter)
        w = fam.coeffs / u[:, None]
        grad_idx_parts.append(fp.grad_tgt)
        grad_val_parts.append(inv_t * w.ravel())
        hloc = inv_t * (w[:, :, None] * w[:, None, :])
        hess_idx_parts.append(fp.hess_tgt)
        hess_val_parts.append(hloc.ravel())

    # Objective log terms: outer products over whole triple segments.
    lf = st.log_family
    c = lf.coef / (LN2 * ev.log_u)
    grad_idx_parts.append(plan.log_plan.grad_tgt)
    grad_val_parts.append((-c[:, None] * lf.coeffs).ravel())
    if plan.log_local is not None:
        terms = plan.log_local.shape[1]
        wloc = plan.log_local * np.sqrt(c / ev.log_u).reshape(n_trip, terms, 1)
        h_t += wloc.transpose(0, 2, 1) @ wloc

    grad = np.bincount(np.concatenate(grad_idx_parts),
                       weights=np.concatenate(grad_val_parts),
                       minlength=plan.n)
    grad += model.q

    u_cols = []
    sqrt_inv_t = math.sqrt(inv_t)
    for fam, u in zip(plan.coupling, ev.coup_slack):
        w = fam.coeffs / u[:, None]
        np.add.at(grad, fam.var_idx.ravel(), inv_t * w.ravel())
        for r in range(fam.n_rows):
            col = np.zeros(plan.n)
            col[fam.var_idx[r]] += sqrt_inv_t * w[r]
            u_cols.append(col)
    u_mat = np.stack(u_cols, axis=1) if u_cols else np.zeros((plan.n, 0))

    if hess_idx_parts:
        pool = np.bincount(np.concatenate(hess_idx_parts),
                           weights=np.concatenate(hess_val_parts),
                           minlength=plan.pool_size)
        h_t += pool[:plan.tt_size].reshape(n_trip, wt, wt)
        if wb:
            h_tb += pool[plan.tt_size:plan.tt_size + plan.tb_size].reshape(
                n_trip, wt, wb)
            h_b += pool[plan.tt_size + plan.tb_size:-1].reshape(nb, wb, wb)
    return grad, h_t, h_tb, h_b, u_mat


class _ArrowFactor:
    """Factorization of the block-arrow Hessian.

    Blocks are Jacobi-equilibrated before factorization: curvatures of
    the barrier span many decades (physical powers in watts against
    noise-scale slacks), and the raw blocks exceed float64's Cholesky
    conditioning range near the path end. A vanishing-scale jitter is
    retried once before declaring the convexity invariant broken.
    """

    def __init__(self, plan: AssemblyPlan, h_t, h_tb, h_b):
        self.plan = plan
        kj = plan.n_trip // max(1, plan.n_blocks)
        self.kj = kj
        self.d_t = np.sqrt(np.maximum(
            np.diagonal(h_t, axis1=-2, axis2=-1), 1e-300))
        with np.errstate(over="ignore", invalid="ignore"):
            ht_scaled = h_t / (self.d_t[:, :, None] * self.d_t[:, None, :])
        if not np.all(np.isfinite(ht_scaled)):
            raise np.linalg.LinAlgError("non-finite Hessian block")
        self.h_t = self._pd(ht_scaled)
        if plan.wb:
            self.d_b = np.sqrt(np.maximum(
                np.diagonal(h_b, axis1=-2, axis2=-1), 1e-300))
            htb = h_tb / (self.d_t[:, :, None]
                          * self.d_b.repeat(kj, axis=0)[:, None, :])
            self.y = np.linalg.solve(self.h_t, htb)          # A^-1 B, scaled
            htb_r = htb.reshape(plan.n_blocks, kj * plan.wt, plan.wb)
            y_r = self.y.reshape(plan.n_blocks, kj * plan.wt, plan.wb)
            schur = (h_b / (self.d_b[:, :, None] * self.d_b[:, None, :])
                     - htb_r.transpose(0, 2, 1) @ y_r)
            self.schur = self._pd(schur)
        else:
            self.d_b = None
            self.y = None
            self.schur = None

    @staticmethod
    def _pd(a: np.ndarray) -> np.ndarray:
        """PD guard on the equilibrated (unit-diagonal) blocks.

        Every Hessian contribution is PSD by construction, so negative
        eigenvalues can only be float cancellation noise (the rank-one
        endgame spreads block eigenvalues over ~1e16). Failing blocks
        are repaired by clipping their spectrum at a relative floor,
        which keeps the Newton direction a descent direction.
        """
        eye = np.eye(a.shape[-1])
        for jitter in (0.0, 1e-12, 1e-9, 1e-6, 1e-3):
            b = a if jitter == 0.0 else a + jitter * eye
            try:
                np.linalg.cholesky(b)
                return b
            except np.linalg.LinAlgError:
                continue
        w = np.linalg.eigvalsh(a)
        shift = np.maximum(-w[..., 0], 0.0) + 1e-8 * np.maximum(w[..., -1], 1.0)
        a = a + shift[..., None, None] * eye
        np.linalg.cholesky(a)
        return a

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve H z = rhs for one or many right-hand sides (n,) or (n, k)."""
        plan = self.plan
        single = rhs.ndim == 1
        r = rhs[:, None] if single else rhs
        k = r.shape[1]
        nb, kj, wt, wb = plan.n_blocks, self.kj, plan.wt, plan.wb
        blockw = kj * wt + wb
        rb = r.reshape(nb, blockw, k)
        rt = rb[:, :kj * wt].reshape(nb * kj, wt, k) / self.d_t[:, :, None]
        zt = np.linalg.solve(self.h_t, rt)
        if wb:
            rbo = rb[:, kj * wt:] / self.d_b[:, :, None]
            y_r = self.y.reshape(nb, kj * wt, wb)
            corr = y_r.transpose(0, 2, 1) @ rt.reshape(nb, kj * wt, k)
            zb = np.linalg.solve(self.schur, rbo - corr)
            zt = zt - (y_r @ zb).reshape(nb * kj, wt, k)
            zb = zb / self.d_b[:, :, None]
            zt = zt / self.d_t[:, :, None]
            out = np.concatenate([zt.reshape(nb, kj * wt, k), zb], axis=1)
        else:
            out = (zt / self.d_t[:, :, None]).reshape(nb, kj * wt, k)
        z = out.reshape(plan.n, k)
        return z[:, 0] if single else z


def _apply_arrow(plan: AssemblyPlan, h_t, h_tb, h_b, v: np.ndarray) -> np.ndarray:
    """Multiply the block-arrow Hessian (excluding Woodbury) by a vector."""
    nb = plan.n_blocks
    kj = plan.n_trip // max(1, nb)
    wt, wb = plan.wt, plan.wb
    blockw = kj * wt + wb
    vb = v.reshape(nb, blockw)
    vt = vb[:, :kj * wt].reshape(nb * kj, wt)
    out_t = np.einsum("Tij,Tj->Ti", h_t, vt, optimize=True)
    if wb:
        vbo = vb[:, kj * wt:]
        out_t += np.einsum("Tij,Tj->Ti",
                           h_tb, np.repeat(vbo, kj, axis=0), optimize=True)
        out_b = np.einsum("bij,bj->bi", h_b, vbo, optimize=True)
        out_b += np.einsum("bTij,bTi->bj",
                           h_tb.reshape(nb, kj, wt, wb),
                           vt.reshape(nb, kj, wt), optimize=True)
        out = np.concatenate([out_t.reshape(nb, kj * wt), out_b], axis=1)
    else:
        out = out_t.reshape(nb, kj * wt)
    return out.reshape(plan.n)


def _newton_direction(model, ev, t):
    grad, h_t, h_tb, h_b, u_mat = _assemble(model, ev, t)
    plan = _plan_of(model.structure)
    try:
        factor = _ArrowFactor(plan, h_t, h_tb, h_b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Hessian factorization failed: {exc}") from exc
    r_cols = u_mat.shape[1]

    def solve_h(rhs_vec: np.ndarray) -> np.ndarray:
        rhs = np.concatenate([rhs_vec[:, None], u_mat], axis=1)
        sol = factor.solve(rhs)
        z = sol[:, 0]
        if r_cols:
            du = sol[:, 1:]
            cap = np.eye(r_cols) + u_mat.T @ du
            z = z - du @ np.linalg.solve(cap, u_mat.T @ z)
        return z

    delta = solve_h(-grad)
    # One round of iterative refinement: the endgame Hessians exceed the
    # conditioning range where a single factorization solve is reliable.
    resid = -grad - (_apply_arrow(plan, h_t, h_tb, h_b, delta)
                     + (u_mat @ (u_mat.T @ delta) if r_cols else 0.0))
    nrm_g = float(np.linalg.norm(grad))
    if np.linalg.norm(resid) > 1e-9 * max(nrm_g, 1e-300):
        delta = delta + solve_h(resid)
    lam2 = float(-grad @ delta)
    return delta, grad, lam2


def _max_scalar_step(model: SubproblemModel, ev: PointEval, delta: np.ndarray) -> float:
    """Largest step keeping scalar slacks and log arguments positive."""
    st = model.structure
    alpha = np.inf
    slack_iter = iter(ev.scal_slack)
    coup_iter = iter(ev.coup_slack)
    for fam in st.scalar_families:
        u = next(coup_iter) if fam.coupling else next(slack_iter)
        du = np.einsum("rj,rj->r", fam.coeffs, delta[fam.var_idx])
        bad = du > 0.0
        if np.any(bad):
            alpha = min(alpha, float(np.min(u[bad] / du[bad])))
    lf = st.log_family
    du = np.einsum("tj,tj->t", lf.coeffs, delta[lf.var_idx])
    bad = du < 0.0
    if np.any(bad):
        alpha = min(alpha, float(np.min(ev.log_u[bad] / -du[bad])))
    return alpha


def _center(model: SubproblemModel, ev: PointEval, t: float, params: SolverParams,
            tol: float, trace=None):
    """Newton centering at fixed t; returns (ev, steps, converged, lam2)."""
    steps = 0
    lam2 = math.inf
    stall = 0
    # Centering cannot resolve psi below its own floating-point noise.
    noise = 16.0 * np.finfo(float).eps * (1.0 + abs(ev.psi(t)))
    tol_eff = max(tol, noise)
    for _ in range(params.newton_max):
        prev_lam2 = lam2
        delta, grad, lam2 = _newton_direction(model, ev, t)
        if lam2 < 0.0:
            if lam2 > -1e-6 * (1.0 + abs(ev.psi(t))) and steps == 0:
                return ev, steps, True, 0.0
            if lam2 > -1e-9 * (1.0 + abs(ev.psi(t))):
                return ev, steps, True, 0.0
            raise NumericalFailure(f"negative Newton decrement {lam2:.3e}")
        if lam2 / 2.0 <= tol_eff:
            return ev, steps, True, lam2
        # Stop once the decrement stagnates at its floating-point floor.
        stall = stall + 1 if lam2 > 0.9 * prev_lam2 else 0
        if stall >= 3 and lam2 / 2.0 <= 1e4 * tol_eff:
            return ev, steps, True, lam2
        alpha = min(1.0, 0.99 * _max_scalar_step(model, ev, delta))
        psi0 = ev.psi(t)
        accepted = None
        while alpha > 1e-14:
            trial = evaluate(model, ev.x + alpha * delta, need_inverse=True)
            if trial.feasible and trial.psi(t) <= psi0 - params.armijo_alpha * alpha * lam2:
                accepted = trial
                break
            alpha *= params.backtrack_beta
        if accepted is None:
            # Stalled line search: fine near the central point, fatal away.
            if lam2 / 2.0 <= 1e4 * tol_eff:
                return ev, steps, True, lam2
            raise NumericalFailure("line search stalled")
        ev = accepted
        steps += 1
        if trace is not None:
            trace.append((t, ev.f0, lam2, alpha, steps))
    return ev, steps, False, lam2


def solve(model: SubproblemModel, start: LiftedPoint | np.ndarray,
          params: SolverParams | None = None) -> SolveReport:
    """Barrier path-following on one convex surrogate.

    `start` must be strictly feasible. Returns a point whose objective
    is within the gap bound m/t of the model optimum.
    """
    st = model.structure
    params = params or st.cfg.solver
    lay = st.layout
    if lay.n == 0:
        return SolveReport(status="optimal", x_opt=lay.extract(np.zeros(0), st.ch),
                           objective=model.r, barrier_outer_iters=0, newton_steps=0,
                           kkt_residual=0.0, duality_gap_bound=0.0,
                           x_vec=np.zeros(0))
    x0 = start if isinstance(start, np.ndarray) else lay.inject(start, st.ch)
    ev = evaluate(model, x0, need_inverse=True)
    if not ev.feasible:
        raise InfeasibleModelError("solver start point is not strictly feasible")

    m = float(st.m_total)
    if params.t0 == "auto":
        t = max(_auto_t0(model, ev, m) * params.t0_scale, 1e-6)
    elif params.t0:
        t = float(params.t0) * params.t0_scale
    else:
        t = m / max(1.0, abs(ev.f0))
    trace = [] if params.trace_path else None
    total_steps = 0
    outer = 0
    status = "optimal"
    converged = True
    backoffs = 2 if params.t0 is not None else 0
    try:
        while True:
            outer += 1
            if outer > params.max_outer:
                status = "max_iter"
                break
            tol_gap = params.tol_gap_rel * (1.0 + abs(ev.f0))
            last = m / t <= tol_gap
            tol_newton = params.newton_tol_final if last else params.newton_tol
            try:
                ev, steps, ok, lam2 = _center(model, ev, t, params, tol_newton, trace)
            except NumericalFailure:
                # An over-resumed warm start can exceed the factorization's
                # conditioning range; back off along the path and rebuild.
                if backoffs > 0 and t > 1e-3:
                    backoffs -= 1
                    t /= 100.0
                    continue
                raise
            total_steps += steps
            if last:
                # Only the terminal centering feeds the exit certificate;
                # truncated early centerings are corrected as t grows.
                converged = ok
                break
            t *= params.mu
    except NumericalFailure:
        return SolveReport(status="numerical_failure", x_opt=lay.extract(ev.x, st.ch),
                           objective=ev.f0, barrier_outer_iters=outer,
                           newton_steps=total_steps, kkt_residual=math.inf,
                           duality_gap_bound=m / t, t_final=t, x_vec=ev.x)

    kkt = math.sqrt(max(lam2, 0.0)) / (1.0 + abs(ev.f0))
    gap = m / t
    if status == "optimal" and (not converged or kkt > params.tol_kkt):
        status = "max_iter"
    if trace is not None:
        with open(params.trace_path, "w") as fh:
            fh.write("t,f0,lambda2,alpha,step\n")
            for row in trace:
                fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    return SolveReport(status=status, x_opt=lay.extract(ev.x, st.ch), objective=ev.f0,
                       barrier_outer_iters=outer, newton_steps=total_steps,
                       kkt_residual=kkt, duality_gap_bound=gap, t_final=t, x_vec=ev.x)


def _auto_t0(model: SubproblemModel, ev: PointEval, m: float) -> float:
    """Barrier weight at which the start point is closest to central.

    The centrality residual grad f0 + grad phi / t is least-squares
    minimized over 1/t, so warm starts near the previous solution resume
    the path near its end while strongly perturbed anchors restart low.
    """
    g_f, g_phi = _objective_and_barrier_grads(model, ev)
    denom = float(g_phi @ g_phi)
    u = -float(g_f @ g_phi) / denom if denom > 0.0 else 0.0
    if u <= 0.0:
        return m / max(1.0, abs(ev.f0))
    t = 1.0 / u
    lo = m / (1e3 * (1.0 + abs(ev.f0)))
    return float(min(max(t, lo, 1e-6), 1e11))


def _objective_and_barrier_grads(model: SubproblemModel, ev: PointEval):
    """Gradients of f0 and phi separately (assembly at t = 1 re-split)."""
    g_tot, *_ = _assemble(model, ev, 1.0)
    # At t = 1 the assembled gradient is grad f0 + grad phi; a second
    # assembly at t = 2 isolates the barrier part.
    g_half, *_ = _assemble(model, ev, 2.0)
    g_phi = 2.0 * (g_tot - g_half)
    g_f = g_tot - g_phi
    return g_f, g_phi


def kkt_residual(model: SubproblemModel, x: np.ndarray, t: float) -> float:
    """Stationarity residual of the barrier KKT system at (x, t).

    psi_t's gradient is exactly grad f0 + sum(dual_i grad c_i) with the
    barrier duals at weight t; the affine-invariant Newton decrement of
    that residual, normalized by the objective scale, is returned. Zero
    exactly on the central-path point for this t.
    """
    ev = evaluate(model, x, need_inverse=True)
    if not ev.feasible:
        raise InfeasibleModelError("kkt_residual needs a strictly feasible point")
    _, _, lam2 = _newton_direction(model, ev, t)
    return math.sqrt(max(lam2, 0.0)) / (1.0 + abs(ev.f0))


# ---------------------------------------------------------------------------
# Strictly feasible analytic start
# ---------------------------------------------------------------------------

def find_strictly_feasible(st: ProblemStructure, margin: float = 1e-6):
    """Analytic interior point of the lifted constraint set.

    Uniform s = 1/(2 KJ), epsilon-scaled isotropic covariance blocks and
    tiny UL powers, with epsilon sized so the leakage LMIs keep their
    sigma_E^2-scale slack. Shrinks epsilon tenfold on strictness failure
    before declaring the model without interior.
    """
    cfg, ch, lay = st.cfg, st.ch, st.layout
    from .rates import xi_threshold

    n_t = lay.n_t
    n_triples = len(lay.blocks) * lay.kj
    if n_triples == 0:
        return np.zeros(0)
    xi_dl = xi_threshold(cfg.r_tol_dl)
    xi_ul = xi_threshold(cfg.r_tol_ul)
    s0 = 1.0 if st.mode.frozen else 1.0 / (2.0 * lay.kj)

    eps_z = cfg.p_max_dl / (8.0 * n_triples * n_t)
    eps_w = min(0.5 * xi_dl * eps_z, 0.25 * s0 * cfg.p_max_dl, eps_z)
    # Size the UL powers from the actual leakage slack available once the
    # isotropic eps_z AN is in place: Pt e e^H <= xi (L^H (eps_z I) L + s^2 I)
    # allows Pt up to xi / (e^H Xt^-1 e); starting near the noise scale
    # instead would put 1/u^2 barrier curvature beyond float range.
    pt_cap = math.inf
    for sub in lay.blocks:
        xt = eps_z * (ch.L[sub].conj().T @ ch.L[sub]) \
            + cfg.noise_eve * np.eye(ch.L[sub].shape[1])
        for j in range(cfg.n_ul_users):
            e = ch.e[sub, j]
            quad = float(np.real(e.conj() @ np.linalg.solve(xt, e)))
            if quad > 0.0:
                pt_cap = min(pt_cap, xi_ul / quad)
    eps_p = min(0.5 * pt_cap, 0.25 * s0 * cfg.p_max_ul,
                cfg.p_max_ul / (4.0 * cfg.n_subcarriers * max(1, lay.k)))

    for _ in range(40):
        x = np.zeros(lay.n)
        for b, sub in enumerate(lay.blocks):
            for tau in range(lay.kj):
                iw, iz = lay.wt_idx(b, tau), lay.zt_idx(b, tau)
                if st.mode.dl_structure == "mrt":
                    x[iw] = eps_w
                else:
                    x[iw[:n_t]] = eps_w
                if st.mode.an_structure == "iso":
                    x[iz] = n_t * eps_z
                else:
                    x[iz[:n_t]] = eps_z
                x[lay.pt_idx(b, tau)] = eps_p
            if lay.wb:
                eps_wp = min(eps_w, 0.25 * (1.0 - s0) * cfg.p_max_dl)
                eps_zp = min(eps_z, 0.25 * (1.0 - s0) * cfg.p_max_dl)
                for tau in range(lay.kj):
                    x[lay.s_idx(b, tau)] = s0
                for k in range(lay.k):
                    ik = lay.w_idx(b, k)
                    if st.mode.dl_structure == "mrt":
                        x[ik] = eps_w + eps_wp
                    else:
                        x[ik[:n_t]] = eps_w + eps_wp
                iz = lay.z_idx(b)
                if st.mode.an_structure == "iso":
                    x[iz] = n_t * (eps_z + eps_zp)
                else:
                    x[iz[:n_t]] = eps_z + eps_zp
                for j in range(lay.j):
                    x[lay.p_idx(b, j)] = 2.0 * eps_p
        ok, worst_name, worst = check_strict(st, x, margin)
        if ok:
            return x
        eps_z *= 0.1
        eps_w *= 0.1
        eps_p *= 0.1
    raise InfeasibleModelError(
        f"no strict interior found; worst constraint {worst_name} at relative slack {worst:.3e}")


def check_strict(st: ProblemStructure, x: np.ndarray, margin: float = 1e-9):
    """Scale-relative strictness of every constraint at x."""
    worst = math.inf
    worst_name = "none"
    for fam in st.psd_families:
        s = fam.const + np.einsum("bjmn,bj->bmn", fam.maps, x[fam.var_idx], optimize=True)
        eigs = np.linalg.eigvalsh(s)
        scale = np.maximum(np.abs(eigs).max(axis=1), 1e-300)
        rel = float((eigs[:, 0] / scale).min())
        if rel < worst:
            worst, worst_name = rel, fam.name
    for fam in st.scalar_families:
        u = fam.bound - np.einsum("rj,rj->r", fam.coeffs, x[fam.var_idx])
        scale = np.maximum(np.abs(fam.bound),
                           np.abs(fam.coeffs * x[fam.var_idx]).sum(axis=1))
        rel = float((u / np.maximum(scale, 1e-300)).min())
        if rel < worst:
            worst, worst_name = rel, fam.name
    return worst >= margin, worst_name, worst
