"""Successive convex approximation driver.

Outer loop: minimize the penalized objective J = -U + eta (H - M) by
repeatedly solving the convex surrogate anchored at the current iterate
(majorize-minimize, monotone in J), then recover a physical policy.

The penalty tangent makes the very first anchor decisive: anchored at a
uniform fractional assignment, the Table-sized eta drives every
scheduling variable toward the tiny-fractional fixed point s* ~
1/(eta ln 2) (the marginal log-utility 1/(s ln 2) balances the tangent
slope), wasting the power budget. The driver therefore prepares the
Algorithm start in two phases: a penalty-free relaxation solve picks the
per-subcarrier winners, and a winner-locked blend of that point with a
seeded analytic interior point anchors the constant-eta iterations on
the intended binary pattern. The main loop then descends J monotonically
(within solver tolerance), doubles eta once if binarity stalls, and
finishes with a tightened solve so the rank-one structure of the
beamforming covariances is numerically sharp.

Rounding freezes the per-subcarrier argmax assignment (a subcarrier is
assigned only when its winning fraction exceeds 1/2) and re-polishes
powers, beams and AN on the frozen pattern with the same machinery.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .config import SolverParams, SystemConfig
from .lifting import LiftedPoint, penalized_objective, utility_lifted
from .model import (PROPOSED, ModeSpec, ProblemStructure, build_structure,
                    build_subproblem)
from .rates import Policy, check_policy
from .solver import (InfeasibleModelError, SolveReport, find_strictly_feasible,
                     solve)


@dataclass
class ScaIteration:
    index: int
    j_true: float            # penalized objective at the accepted iterate
    surrogate: float         # optimum value of the convex surrogate
    binarity: float          # max |s - round(s)|
    s_defect: float          # max |s - s^2|
    rank_ratio: float        # worst second/first eigenvalue ratio, active blocks
    newton_steps: int
    gap_bound: float
    eta: float
    solver_status: str


@dataclass
class ScaTrace:
    eta: float
    i_max: int
    iterations: list[ScaIteration] = field(default_factory=list)
    relax_value: float = math.nan
    eta_doubled: bool = False
    converged: bool = False
    converged_at: int = 0
    binarity_free: float = math.nan   # floor reached by the free-s phases
    binarity_final: float = math.nan  # exit iterate (after assignment pinning)
    rank_ratio_final: float = math.nan
    polish_utility: float = math.nan
    policy_slacks: dict = field(default_factory=dict)
    status: str = "ok"
    wall_s: float = 0.0

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def objectives(self) -> list[float]:
        return [it.j_true for it in self.iterations]

    def to_csv(self, path: str):
        cols = ("index", "j_true", "surrogate", "binarity", "s_defect",
                "rank_ratio", "newton_steps", "gap_bound", "eta", "solver_status")
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for it in self.iterations:
                fh.write(",".join(
                    f"{getattr(it, c):.12g}" if not isinstance(getattr(it, c), str)
                    else getattr(it, c) for c in cols) + "\n")


def purify_covariance(wt: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Rank-one point of the optimal face containing wt.

    What_hat = wt h h^H wt / (h^H wt h) satisfies What_hat <= wt in the PSD
    order (Schur complement of [[wt, wt h], [h^H wt, h^H wt h]]), so every
    power, self-interference and leakage constraint keeps its slack, while
    the beamforming gain h^H What_hat h equals h^H wt h exactly. Utility
    can therefore only improve; preservation of the optimal value is the
    constructive tightness witness for the semidefinite relaxation.
    """
    q = wt @ h
    denom = float(np.real(h.conj() @ q))
    if denom <= 0.0:
        return np.zeros_like(wt)
    return np.outer(q, q.conj()) / denom


def extract_beamformer(wt: np.ndarray) -> tuple[np.ndarray, float]:
    """Principal component of a PSD beamforming covariance.

    Returns (w, rank_ratio) with w = sqrt(lambda_1) u_1, phase fixed so
    the largest-magnitude entry is real positive, and rank_ratio =
    lambda_2 / lambda_1 (zero for the zero matrix).
    """
    vals, vecs = np.linalg.eigh(0.5 * (wt + wt.conj().T))
    lam1 = float(vals[-1])
    if lam1 <= 0.0:
        return np.zeros(wt.shape[0], dtype=complex), 0.0
    u = vecs[:, -1]
    pivot = int(np.argmax(np.abs(u)))
    phase = u[pivot] / abs(u[pivot])
    w = math.sqrt(lam1) * u / phase
    lam2 = float(max(vals[-2], 0.0)) if vals.size > 1 else 0.0
    return w, lam2 / lam1


def _active_rank_stats(x: LiftedPoint) -> float:
    worst = 0.0
    n_f, k, j, _ = x.dims
    for i in range(n_f):
        for kk in range(k):
            for jj in range(j):
                if x.s[i, kk, jj] > 0.5:
                    _, rr = extract_beamformer(x.Wt[i, kk, jj])
                    worst = max(worst, rr)
    return worst


def _binarity(s: np.ndarray) -> float:
    return float(np.abs(s - np.round(s)).max()) if s.size else 0.0


def _triple_utilities(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> np.ndarray:
    """Per-triple weighted utility contributions of a lifted point."""
    from .lifting import _log_args, _weights
    u_dl_tot, u_ul_tot, u_dl_int, u_ul_int = _log_args(x, ch, cfg)
    wk, mj = _weights(cfg)
    return (wk * (np.log2(u_dl_tot) - np.log2(u_dl_int))
            + mj * (np.log2(u_ul_tot) - np.log2(u_ul_int)))


def _winner_score(x: LiftedPoint, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Summed utility of the per-subcarrier winning triples only.

    The lifted utility also counts vanishing triples (their log terms see
    private copies of the channel), so ranking anchors for rounding has
    to ignore them.
    """
    util = _triple_utilities(x, ch, cfg)
    n_f = util.shape[0]
    total = 0.0
    for i in range(n_f):
        flat = int(np.argmax(x.s[i].ravel()))
        if x.s[i].ravel()[flat] > 0.5:
            total += float(util[i].ravel()[flat])
    return total


def seeded_interior_point(st: ProblemStructure, s_pattern: np.ndarray) -> np.ndarray:
    """Analytic strictly feasible point with a prescribed assignment pattern.

    Same epsilon-scaled construction as find_strictly_feasible, but the
    scheduling variables take the given fractional values (each row must
    keep the per-subcarrier simplex strictly slack).
    """
    cfg, ch, lay = st.cfg, st.ch, st.layout
    if st.mode.frozen:
        raise ValueError("seeded points are for the free-assignment layout")
    x = find_strictly_feasible(st)
    s_min = float(s_pattern.min())
    s_max = float(s_pattern.max())
    if s_min <= 0.0 or s_max >= 1.0:
        raise ValueError("s pattern must lie strictly inside (0, 1)")
    if np.any(s_pattern.sum(axis=(1, 2)) >= 1.0):
        raise ValueError("s pattern violates the scheduling simplex")
    # Re-derive the epsilon caps that involve s: C9/C13/C17 scale with the
    # smallest s, C11/C15/C19 with the largest.
    lp = lay.extract(x, ch)
    scale = min(1.0, 0.5 * s_min / lp.s.max()) if lp.s.max() > 0 else 1.0
    for b, sub in enumerate(lay.blocks):
        for tau in range(lay.kj):
            k, j = lay.triple_users(tau, sub)
            x[lay.wt_idx(b, tau)] *= scale
            x[lay.zt_idx(b, tau)] *= scale
            pt_i = lay.pt_idx(b, tau)
            x[pt_i] *= scale
            x[lay.s_idx(b, tau)] = s_pattern[sub, k, j]
        for k in range(lay.k):
            x[lay.w_idx(b, k)] *= scale
        x[lay.z_idx(b)] *= scale
        for j in range(lay.j):
            x[lay.p_idx(b, j)] *= scale
    return x


def initialize(cfg: SystemConfig, ch: ChannelSet, st: ProblemStructure,
               variant: str = "relaxation",
               params: SolverParams | None = None):
    """Algorithm starting point.

    "analytic": the uniform strictly feasible point. "mrt": the same with
    beamforming mass seeded along the maximum-ratio directions.
    "relaxation" (default): one penalty-free surrogate solve from the
    analytic point followed by a winner-locked blend, so the constant-
    penalty iterations anchor on the relaxation's preferred assignment.

    Returns (x_vector, info dict).
    """
    lay = st.layout
    x0 = find_strictly_feasible(st)
    info: dict = {"variant": variant}
    if variant == "analytic":
        return x0, info
    if variant == "mrt":
        lp = lay.extract(x0, ch)
        nrm = np.einsum("ika,ika->ik", ch.h.conj(), ch.h).real
        dirs = np.einsum("ika,ikb->ikab", ch.h, ch.h.conj()) / nrm[..., None, None]
        n_f, k_users, j_users, n_t = lp.dims
        eye = np.eye(n_t)
        for i in range(n_f):
            for k in range(k_users):
                scale = float(np.real(np.trace(lp.W[i, k]))) / n_t
                lp.W[i, k] = float(np.real(np.trace(lp.Wt[i, k, 0]))) / n_t * dirs[i, k] \
                    + scale * eye
                for j in range(j_users):
                    # Mass along the maximum-ratio direction with a small
                    # isotropic floor keeping the covariance strictly PD;
                    # scaled so the top eigenvalue stays at the analytic
                    # point's level (the leakage LMI slack was sized for it).
                    tr = float(np.real(np.trace(lp.Wt[i, k, j])))
                    lp.Wt[i, k, j] = (tr / n_t) * (0.9 * dirs[i, k] + 0.1 * eye / n_t)
        return lay.inject(lp, ch), info
    if variant != "relaxation":
        raise ValueError(f"unknown initialization variant {variant!r}")

    anchor0 = lay.extract(x0, ch)
    relax = build_subproblem(anchor0, cfg, ch, eta=0.0, structure=st)
    loose = dataclasses.replace(params or cfg.solver, tol_gap_rel=1e-5)
    rep = solve(relax, x0, loose)
    info["relax_status"] = rep.status
    info["relax_value"] = rep.objective
    if rep.status == "numerical_failure":
        return x0, info
    x_r = rep.x_vec
    lp_r = rep.x_opt
    info["relax_point"] = lp_r

    util = _triple_utilities(lp_r, ch, cfg)          # (N_F, K, J)
    kj = lay.kj
    n_f = cfg.n_subcarriers
    s_pattern = np.full(util.shape, min(0.02, 0.15 / max(1, kj - 1)))
    for i in range(n_f):
        flat = int(np.argmax(util[i].ravel()))
        s_pattern[i].ravel()[flat] = 0.80
    x_safe = seeded_interior_point(st, s_pattern)
    x1 = 0.75 * x_safe + 0.25 * x_r
    info["winners"] = [int(np.argmax(util[i].ravel())) for i in range(n_f)]
    return x1, info


def _an_seeded_start(st_f: ProblemStructure) -> np.ndarray:
    """Interior point of the frozen problem with developed artificial noise.

    Puts ~30% of the power budget into isotropic AN so the first
    interference tangent prices AN at its operating scale instead of the
    noise floor; shrinks back toward the plain analytic point if any
    constraint objects.
    """
    from .solver import check_strict

    cfg, lay = st_f.cfg, st_f.layout
    x0 = find_strictly_feasible(st_f)
    n_assigned = max(1, len(lay.blocks))
    share = 0.3 * cfg.p_max_dl / n_assigned
    for scale in (1.0, 0.1, 0.01):
        x = x0.copy()
        for b in range(len(lay.blocks)):
            iz = lay.zt_idx(b, 0)
            if st_f.mode.an_structure == "iso":
                x[iz] = scale * share
            else:
                x[iz[:lay.n_t]] = scale * share / lay.n_t
        ok, _, _ = check_strict(st_f, x, margin=1e-12)
        if ok:
            return x
    return x0


@dataclass
class PolishReport:
    utility: float
    iterations: int
    rank_ratio: float            # after rank-one purification (exit object)
    rank_ratio_raw: float        # barrier output before purification
    purification_drift: float    # |U_purified - U_raw| / (1 + |U_raw|)
    solver_status: str
    assignment: tuple[int, ...]
    lifted: LiftedPoint | None = None   # final frozen-mode iterate (binary s)


def round_and_polish(x: LiftedPoint, cfg: SystemConfig, ch: ChannelSet,
                     mode: ModeSpec = PROPOSED,
                     params: SolverParams | None = None,
                     max_polish_iter: int = 4) -> tuple[Policy, PolishReport]:
    """Freeze the rounded assignment and re-optimize the continuous variables.

    Per subcarrier the largest fractional s wins when above 1/2 (ties to
    the lowest flat index); the continuous polish is a short frozen-mode
    MM loop warm-started from the active blocks of x.
    """
    n_f = x.dims[0]
    assignment = []
    for i in range(n_f):
        flat = int(np.argmax(x.s[i].ravel()))
        assignment.append(flat if x.s[i].ravel()[flat] > 0.5 else -1)
    return solve_assignment(cfg, ch, tuple(assignment), mode=mode, warm=x,
                            params=params, max_polish_iter=max_polish_iter)


def solve_assignment(cfg: SystemConfig, ch: ChannelSet, assignment,
                     mode: ModeSpec = PROPOSED, warm: LiftedPoint | None = None,
                     params: SolverParams | None = None,
                     max_polish_iter: int = 4) -> tuple[Policy, PolishReport]:
    """Optimize powers, beams and AN for a frozen subcarrier assignment.

    The continuous problem is still a d.c. program; the MM chain starts
    from the warm blocks when given (nudged strictly inside), otherwise
    from the analytic interior point, with an AN-seeded restart on
    failure.
    """
    assignment = tuple(int(a) for a in assignment)
    n_f, k_users, j_users, n_t = (cfg.n_subcarriers, cfg.n_dl_users,
                                  cfg.n_ul_users, cfg.n_tx_antennas)
    x = warm
    frozen = ModeSpec(dl_structure=mode.dl_structure, an_structure=mode.an_structure,
                      assignment=assignment)
    st_f = build_structure(cfg, ch, frozen)
    lay_f = st_f.layout

    policy = Policy(s=np.zeros((n_f, k_users, j_users), dtype=int),
                    w=np.zeros((n_f, k_users, n_t), dtype=complex),
                    P=np.zeros((n_f, j_users)),
                    Z=np.zeros((n_f, n_t, n_t), dtype=complex))
    if not lay_f.blocks:
        empty = LiftedPoint.zeros(n_f, k_users, j_users, n_t)
        return policy, PolishReport(utility=0.0, iterations=0, rank_ratio=0.0,
                                    rank_ratio_raw=0.0, purification_drift=0.0,
                                    solver_status="optimal", assignment=assignment,
                                    lifted=empty)

    from .solver import check_strict

    def mm_chain(x_start: np.ndarray):
        x_cur = x_start
        anc = lay_f.extract(x_cur, ch)
        best = -utility_lifted(anc, ch, cfg)
        stat = "optimal"
        count = 0
        p = dataclasses.replace(params or cfg.solver, t0="auto", tol_gap_rel=1e-6)
        for _ in range(max_polish_iter):
            model = build_subproblem(anc, cfg, ch, eta=0.0, structure=st_f)
            rep = solve(model, x_cur, p)
            count += 1
            stat = rep.status
            if rep.status == "numerical_failure":
                break
            x_cur, anc = rep.x_vec, rep.x_opt
            cur = -utility_lifted(anc, ch, cfg)
            if abs(best - cur) <= 1e-6 * (1.0 + abs(cur)):
                best = cur
                break
            best = cur
        # Tightened last pass: drives the active covariances to numerical
        # rank one before the beamformers are read off. Resume a couple of
        # decades below the fitted barrier weight so every centering stays
        # within its step budget; step the gap target down until a clean
        # optimum survives the float64 path end.
        if stat != "numerical_failure":
            for tol in (1e-9, 1e-8, 1e-7):
                tight = dataclasses.replace(
                    params or cfg.solver, t0="auto", t0_scale=1e-2,
                    tol_gap_rel=tol, newton_max=80,
                    max_outer=(params or cfg.solver).max_outer + 16)
                model = build_subproblem(anc, cfg, ch, eta=0.0, structure=st_f)
                rep = solve(model, x_cur, tight)
                if rep.status == "optimal":
                    x_cur, anc = rep.x_vec, rep.x_opt
                    best = -utility_lifted(anc, ch, cfg)
                    stat = rep.status
                    break
        return x_cur, anc, best, stat, count

    # The frozen problem is still a d.c. program with recurring basins
    # (AN-enabled uplink vs AN-starved downlink-only), and the warm
    # blocks of x hug the boundary (near-singular covariances). Nudging
    # the warm point strictly inward by a small blend with the analytic
    # interior point keeps its basin while restoring solver margins; MM
    # monotonicity then guarantees the chain never falls below the warm
    # utility. An AN-seeded restart covers warm-chain failures.
    def chain_rank(anc) -> float:
        worst = 0.0
        for sub in lay_f.blocks:
            k, j = lay_f.triple_users(0, sub)
            worst = max(worst, extract_beamformer(anc.Wt[sub, k, j])[1])
        return worst

    x_interior = find_strictly_feasible(st_f)
    if x is not None:
        x_vec = lay_f.inject(x.copy(), ch)
        ok, _, _ = check_strict(st_f, x_vec, margin=1e-14)
        x_vec = 0.95 * x_vec + 0.05 * x_interior if ok else x_interior
    else:
        x_vec = _an_seeded_start(st_f)
    x_vec, anchor, prev, status, iters = mm_chain(x_vec)
    # Impure covariances mark the AN-starved basin (the beam then carries
    # the leakage nulling alone and genuinely splits rank); restart from
    # a developed-AN interior point and keep the better endpoint.
    if status == "numerical_failure" or not math.isfinite(prev):
        x2, anc2, prev2, stat2, n2 = mm_chain(_an_seeded_start(st_f))
        iters += n2
        if stat2 != "numerical_failure" and (prev2 < prev
                                             or not math.isfinite(prev)):
            x_vec, anchor, prev, status = x2, anc2, prev2, stat2

    # Interior-point iterates approach the analytic center of the optimal
    # face, which need not be an extreme (rank-one) point when the face is
    # flat. Purify each active covariance onto its rank-one face point;
    # the utility drift doubles as the numerical tightness witness.
    u_raw = -prev
    rank_raw = 0.0
    for sub in lay_f.blocks:
        k, j = lay_f.triple_users(0, sub)
        _, rr = extract_beamformer(anchor.Wt[sub, k, j])
        rank_raw = max(rank_raw, rr)
        pure = purify_covariance(anchor.Wt[sub, k, j], ch.h[sub, k])
        anchor.Wt[sub, k, j] = pure
        anchor.W[sub, k] = pure
    u_pure = utility_lifted(anchor, ch, cfg)
    drift = abs(u_pure - u_raw) / (1.0 + abs(u_raw))

    rank_worst = 0.0
    for b, sub in enumerate(lay_f.blocks):
        k, j = lay_f.triple_users(0, sub)
        w, rr = extract_beamformer(anchor.Wt[sub, k, j])
        rank_worst = max(rank_worst, rr)
        policy.s[sub, k, j] = 1
        policy.w[sub, k] = w
        policy.P[sub, j] = anchor.Pt[sub, k, j]
        policy.Z[sub] = 0.5 * (anchor.Zt[sub, k, j] + anchor.Zt[sub, k, j].conj().T)
    return policy, PolishReport(utility=u_pure, iterations=iters,
                                rank_ratio=rank_worst, rank_ratio_raw=rank_raw,
                                purification_drift=drift,
                                solver_status=status,
                                assignment=assignment, lifted=anchor)


def _refine_assignment(cfg: SystemConfig, ch: ChannelSet, mode: ModeSpec,
                       assignment, warm: LiftedPoint | None,
                       params: SolverParams | None = None):
    """Greedy per-subcarrier improvement of a frozen assignment.

    Every candidate, including the incumbent, is scored by the canonical
    relaxation-warm frozen solve; sweeps stop when no subcarrier swap
    improves the utility.
    """
    from .rates import weighted_throughput

    kj = cfg.n_dl_users * cfg.n_ul_users
    n_f = cfg.n_subcarriers
    cache: dict = {}

    def canon(asg):
        asg = tuple(asg)
        if asg not in cache:
            if all(a == -1 for a in asg):
                n_t = cfg.n_tx_antennas
                empty_pol = Policy(
                    s=np.zeros((n_f, cfg.n_dl_users, cfg.n_ul_users), dtype=int),
                    w=np.zeros((n_f, cfg.n_dl_users, n_t), dtype=complex),
                    P=np.zeros((n_f, cfg.n_ul_users)),
                    Z=np.zeros((n_f, n_t, n_t), dtype=complex))
                empty_rep = PolishReport(
                    utility=0.0, iterations=0, rank_ratio=0.0, rank_ratio_raw=0.0,
                    purification_drift=0.0, solver_status="optimal",
                    assignment=asg,
                    lifted=LiftedPoint.zeros(n_f, cfg.n_dl_users, cfg.n_ul_users, n_t))
                cache[asg] = (0.0, empty_pol, empty_rep)
            else:
                pol, rep = solve_assignment(cfg, ch, asg, mode=mode, warm=warm,
                                            params=params)
                cache[asg] = (weighted_throughput(pol, ch, cfg), pol, rep)
        return cache[asg]

    best = tuple(assignment)
    best_u = canon(best)[0]
    for _ in range(3):
        improved = False
        for i in range(n_f):
            for cand in range(-1, kj):
                if cand == best[i]:
                    continue
                trial = best[:i] + (cand,) + best[i + 1:]
                if canon(trial)[0] > best_u + 1e-12:
                    best, best_u = trial, canon(trial)[0]
                    improved = True
        if not improved:
            break
    _, pol, rep = canon(best)
    return pol, rep


def run_sca(cfg: SystemConfig, ch: ChannelSet, mode: ModeSpec = PROPOSED,
            init_variant: str = "relaxation",
            params: SolverParams | None = None,
            trace_path: str | None = None) -> tuple[Policy, ScaTrace]:
    """Full pipeline: initialize, iterate the surrogate, round and polish."""
    t_start = time.perf_counter()
    base_params = params or cfg.solver
    eta = cfg.eta()
    i_max = cfg.max_iter()
    trace = ScaTrace(eta=eta, i_max=i_max)
    st = build_structure(cfg, ch, mode)

    x_vec, info = initialize(cfg, ch, st, variant=init_variant, params=base_params)
    trace.relax_value = info.get("relax_value", math.nan)
    relax_point = info.get("relax_point")
    anchor = st.layout.extract(x_vec, ch)
    j_prev = penalized_objective(anchor, ch, cfg, eta)

    doubled = False
    iteration = 0
    budget = i_max
    stall_anchor = None        # snapshot at the first J-stall (pre-doubling)
    warm_params = dataclasses.replace(base_params, t0="auto", tol_gap_rel=1e-6)
    while iteration < budget:
        iteration += 1
        model = build_subproblem(anchor, cfg, ch, eta=eta, structure=st)
        rep = solve(model, x_vec, warm_params)
        if rep.status == "numerical_failure" and iteration == 1:
            rep = solve(model, x_vec, base_params)      # cold retry
            if rep.status == "numerical_failure":
                # Last resort: restart from the analytic interior point
                # (always solvable when the model is).
                try:
                    rep = solve(model, find_strictly_feasible(st), base_params)
                except InfeasibleModelError:
                    pass
        if rep.status == "numerical_failure":
            if iteration == 1:
                trace.status = "solver_failure"
            else:
                # Keep the incumbent anchor; the pinning continuation
                # finishes the run from here.
                trace.converged = True
                trace.converged_at = iteration - 1
            break
        j_new = penalized_objective(rep.x_opt, ch, cfg, eta)
        if j_new > j_prev + 10.0 * base_params.tol_gap_rel * (1.0 + abs(j_prev)) \
                and iteration > 1:
            # A truncated solve pushed J backwards; keep the incumbent
            # (exact subproblem optima cannot increase the majorized J).
            trace.converged = True
            trace.converged_at = iteration - 1
            break
        x_vec, anchor = rep.x_vec, rep.x_opt
        j_cur = j_new
        binarity = _binarity(anchor.s)
        trace.iterations.append(ScaIteration(
            index=iteration, j_true=j_cur, surrogate=rep.objective,
            binarity=binarity,
            s_defect=float(np.abs(anchor.s - anchor.s ** 2).max()),
            rank_ratio=_active_rank_stats(anchor),
            newton_steps=rep.newton_steps, gap_bound=rep.duality_gap_bound,
            eta=eta, solver_status=rep.status))
        j_stalled = abs(j_cur - j_prev) <= cfg.sca_rel_tol * (1.0 + abs(j_cur))
        j_prev = j_cur
        if j_stalled and binarity <= cfg.binarity_tol:
            trace.converged = True
            trace.converged_at = iteration
            break
        if (j_stalled or iteration == budget) and binarity > cfg.binarity_tol:
            winners_decided = bool(np.all(anchor.s.reshape(
                cfg.n_subcarriers, -1).max(axis=1) > 0.9))
            if j_stalled and winners_decided:
                # The scheduling floor (see module docstring) keeps s
                # fractional at ~c/eta, but every subcarrier's winner is
                # decided; a doubling can only halve the floor, never
                # reach the tolerance, so hand over to the pinning
                # continuation directly.
                trace.converged = True
                trace.converged_at = iteration
                break
            if not doubled:
                # One penalty escalation on binarity failure, then hard flag.
                doubled = True
                trace.eta_doubled = True
                stall_anchor = anchor
                eta *= 2.0
                budget = min(iteration + i_max, 2 * i_max)
                # J is redefined under the new penalty weight; re-baseline
                # the descent and stall tests.
                j_prev = penalized_objective(anchor, ch, cfg, eta)
            elif j_stalled:
                # Stalled at the penalty floor after the single retry.
                trace.converged = True
                trace.converged_at = iteration
                break

    trace.binarity_free = _binarity(anchor.s)
    if trace.status == "ok" and trace.binarity_free > 0.1:
        # The penalty never decided the assignment; pinning would guess.
        trace.status = "binarity_failure"

    # Exit through the assignment-pinning continuation: freeze the rounded
    # pattern and re-run the same MM machinery on the frozen problem. The
    # continuation's lifted iterate (exactly binary s) is the driver's
    # exit point; its tight final solve also sharpens the rank-one
    # structure of the active beamforming covariances. The doubling phase
    # only exists to shrink the scheduling floor; if it degraded the
    # continuous blocks, polish from the pre-doubling snapshot instead.
    polish_src = anchor
    if stall_anchor is not None and \
            _winner_score(stall_anchor, ch, cfg) > _winner_score(anchor, ch, cfg):
        polish_src = stall_anchor
    policy, polish = round_and_polish(polish_src, cfg, ch, mode, params=base_params)

    # Small instances: coordinate descent over the assignment with the
    # canonical (relaxation-warm) evaluator, the same one the exhaustive
    # oracle uses; its endpoint then replaces the polish result so the
    # enumeration dominance holds exactly.
    kj_total = cfg.n_dl_users * cfg.n_ul_users
    if (kj_total + 1) ** cfg.n_subcarriers <= cfg.refine_assignment_limit \
            and trace.status in ("ok", "binarity_failure"):
        policy, polish = _refine_assignment(
            cfg, ch, mode, polish.assignment, relax_point, params=base_params)
    trace.polish_utility = polish.utility
    trace.binarity_final = _binarity(polish.lifted.s) if polish.lifted is not None \
        else trace.binarity_free
    trace.rank_ratio_final = polish.rank_ratio
    trace.policy_slacks = check_policy(policy, ch, cfg)
    worst = min(trace.policy_slacks.values())
    if worst < -1e-6:
        trace.status = "policy_violation"
    trace.wall_s = time.perf_counter() - t_start
    if trace_path:
        trace.to_csv(trace_path)
    return policy, trace
