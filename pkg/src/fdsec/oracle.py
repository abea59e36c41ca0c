"""Independent cross-checks for the optimization pipeline.

Brute-force and analytic oracles that validate the main machinery on
small instances: finite-difference gradient checks, sampling of both
directions of the leakage-constraint implications, and exhaustive
assignment enumeration. These run in the test suite, not on the
runtime path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig
from .hermops import hvec, random_psd
from .lifting import LiftedPoint, eval_G, eval_M, grad_G
from .rates import eve_cap_dl, eve_cap_ul, xi_threshold


@dataclass
class EnumerationResult:
    best_assignment: tuple[int, ...]
    best_utility: float
    n_enumerated: int
    utilities: dict   # assignment tuple -> utility


def enumerate_assignments(cfg: SystemConfig, ch: ChannelSet,
                          guard: int = 10_000) -> EnumerationResult:
    """Exhaustive search over binary subcarrier assignments.

    Every map subcarrier -> {unassigned} u {(k, j) pairs} is evaluated by
    the frozen-assignment continuous solver; the count (KJ+1)^N_F must
    stay under the guard. The continuous problems are d.c. programs whose
    local optima depend on the chain start (a full-power basin hides a
    better low-self-interference one), so every chain is warm-started
    from one shared penalty-free relaxation of the free problem, exactly
    like the main pipeline. Validates the combinatorial layer: the best
    enumerated utility should not fall below the pipeline's beyond local-
    solver variance.
    """
    from .model import build_structure, build_subproblem
    from .rates import weighted_throughput
    from .sca import solve_assignment
    from .solver import find_strictly_feasible, solve

    kj = cfg.n_dl_users * cfg.n_ul_users
    n_f = cfg.n_subcarriers
    total = (kj + 1) ** n_f
    if total > guard:
        raise ValueError(f"{total} assignments exceed the enumeration guard {guard}")

    import dataclasses

    st = build_structure(cfg, ch)
    x0 = find_strictly_feasible(st)
    relax = build_subproblem(st.layout.extract(x0, ch), cfg, ch, eta=0.0,
                             structure=st)
    # Same relaxation solve the pipeline's initializer performs, so the
    # shared warm point (and hence each chain endpoint) matches exactly.
    loose = dataclasses.replace(cfg.solver, tol_gap_rel=1e-5)
    rep = solve(relax, x0, loose)
    warm = rep.x_opt if rep.status != "numerical_failure" else None

    best_u = 0.0
    best_asg = (-1,) * n_f
    utilities = {}
    for combo in itertools.product(range(-1, kj), repeat=n_f):
        if all(c == -1 for c in combo):
            utilities[combo] = 0.0
            continue
        policy, prep = solve_assignment(cfg, ch, combo, warm=warm)
        u = weighted_throughput(policy, ch, cfg)
        utilities[combo] = u
        if u > best_u:
            best_u, best_asg = u, combo
    return EnumerationResult(best_assignment=best_asg, best_utility=best_u,
                             n_enumerated=total, utilities=utilities)


def random_interior_point(rng: np.random.Generator, cfg: SystemConfig,
                          power_scale: float = 1.0) -> LiftedPoint:
    """Random lifted point in the interior of the box/PSD domain.

    Satisfies the PSD blocks, boxes and simplex rows strictly (the
    domain of the d.c. functions); the big-M sandwiches are not forced.
    """
    n_f, k, j, n_t = cfg.n_subcarriers, cfg.n_dl_users, cfg.n_ul_users, cfg.n_tx_antennas
    x = LiftedPoint.zeros(n_f, k, j, n_t)
    scale = power_scale * cfg.p_max_dl / (n_f * k * j * n_t)
    for i in range(n_f):
        x.Z[i] = random_psd(rng, n_t, scale)
        for kk in range(k):
            x.W[i, kk] = random_psd(rng, n_t, scale)
            for jj in range(j):
                x.Wt[i, kk, jj] = random_psd(rng, n_t, scale)
                x.Zt[i, kk, jj] = random_psd(rng, n_t, scale)
    x.Pt = rng.uniform(0.05, 0.9, size=(n_f, k, j)) * cfg.p_max_ul / (n_f * k)
    x.p = rng.uniform(0.05, 0.9, size=(n_f, j)) * cfg.p_max_ul / n_f
    raw = rng.uniform(0.05, 0.95, size=(n_f, k, j))
    cap = raw.sum(axis=(1, 2), keepdims=True)
    x.s = raw * np.minimum(1.0, 0.95 / cap)
    return x


def _pack_for(term: str, x: LiftedPoint) -> np.ndarray:
    if term == "G":
        return np.concatenate([hvec(x.Wt).ravel(), hvec(x.Zt).ravel(), x.Pt.ravel()])
    if term == "M":
        return x.s.ravel()
    raise ValueError(f"unknown term selector {term!r}")


def _unpack_into(term: str, x: LiftedPoint, v: np.ndarray) -> LiftedPoint:
    from .hermops import hunvec

    y = x.copy()
    if term == "G":
        n_f, k, j, n_t = x.dims
        nh = n_f * k * j * n_t * n_t
        y.Wt = hunvec(v[:nh].reshape(n_f, k, j, n_t * n_t), n_t)
        y.Zt = hunvec(v[nh:2 * nh].reshape(n_f, k, j, n_t * n_t), n_t)
        y.Pt = v[2 * nh:].reshape(n_f, k, j).copy()
    else:
        y.s = v.reshape(x.s.shape).copy()
    return y


def fd_gradient_check(point: LiftedPoint, term_selector: str, ch: ChannelSet | None,
                      cfg: SystemConfig, step: float = 1e-6) -> float:
    """Central finite differences vs the analytic gradient.

    Differences run over the real parametrization; returns
    ||g_fd - g_analytic||_2 / max(1, ||g_analytic||_2).
    """
    if term_selector == "G":
        def fun(v):
            return eval_G(_unpack_into("G", point, v), ch, cfg)
        grad = grad_G(point, ch, cfg)
        analytic = np.concatenate([hvec(grad.dWt).ravel(), hvec(grad.dZt).ravel(),
                                   grad.dPt.ravel()])
    elif term_selector == "M":
        def fun(v):
            return eval_M(v)
        analytic = 2.0 * point.s.ravel()
    elif term_selector == "quadratic":
        # Self-test of the checker on 0.5 * ||v||^2 with known gradient v.
        def fun(v):
            return 0.5 * float(v @ v)
        analytic = _pack_for("M", point)
    else:
        raise ValueError(f"unknown term selector {term_selector!r}")

    v0 = _pack_for("M" if term_selector == "quadratic" else term_selector, point)
    fd = np.empty_like(v0)
    for i in range(v0.size):
        h = step * max(1.0, abs(v0[i]))
        vp, vm = v0.copy(), v0.copy()
        vp[i] += h
        vm[i] -= h
        fd[i] = (fun(vp) - fun(vm)) / (2.0 * h)
    return float(np.linalg.norm(fd - analytic) / max(1.0, np.linalg.norm(analytic)))


@dataclass
class Prop1Report:
    n_checked: int
    forward_violations: int      # lifted DL constraint held (rank-one) but capacity cap failed
    reverse_violations: int      # capacity cap held but lifted DL constraint failed
    ul_violations: int           # any mismatch between the two UL constraint forms


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def prop1_sampler(n_samples: int, cfg: SystemConfig, seed: int = 0,
                  margin: float = 1e-7) -> Prop1Report:
    """Sample both directions of the leakage-constraint implications.

    Rank-one DL covariances: the LMI form and the capacity cap must
    agree; UL: always equivalent. Samples inside the numerical margin
    of the boundary are skipped (the boundary itself is exercised by
    boundary_case_dl below).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n_t, m = cfg.n_tx_antennas, cfg.n_eve_antennas
    xi_dl = xi_threshold(cfg.r_tol_dl)
    xi_ul = xi_threshold(cfg.r_tol_ul)
    fwd = rev = ul_bad = checked = 0
    for _ in range(n_samples):
        ll = (rng.standard_normal((n_t, m)) + 1j * rng.standard_normal((n_t, m)))
        zt = random_psd(rng, n_t, 10.0 ** rng.uniform(-14, 0))
        if rng.uniform() < 0.3:
            zt[:] = 0.0
        xt = ll.conj().T @ zt @ ll + cfg.noise_eve * np.eye(m)
        w = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
        a = ll.conj().T @ w
        q = float(np.real(a.conj() @ np.linalg.solve(xt, a)))
        if q > 0:
            # Spread sample leakage across the boundary at xi.
            w *= math.sqrt(xi_dl * 10.0 ** rng.uniform(-2, 2) / q)
        wt = np.outer(w, w.conj())

        lmi = _min_eig(xi_dl * xt - ll.conj().T @ wt @ ll)
        cap = eve_cap_dl(ll, w, zt, cfg.noise_eve) - cfg.r_tol_dl
        if abs(lmi) > margin * max(1.0, abs(xi_dl * np.trace(xt).real)) and abs(cap) > margin:
            checked += 1
            if lmi > 0 and cap > 0:
                fwd += 1
            if cap < 0 and lmi < 0:
                rev += 1

        e = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        qe = float(np.real(e.conj() @ np.linalg.solve(xt, e)))
        pt = xi_ul * 10.0 ** rng.uniform(-2, 2) / max(qe, 1e-300)
        lmi_ul = _min_eig(xi_ul * xt - pt * np.outer(e, e.conj()))
        cap_ul = eve_cap_ul(e, pt, zt, ll, cfg.noise_eve) - cfg.r_tol_ul
        if abs(lmi_ul) > margin * max(1.0, abs(xi_ul * np.trace(xt).real)) and abs(cap_ul) > margin:
            if (lmi_ul > 0) != (cap_ul < 0):
                ul_bad += 1
    return Prop1Report(n_checked=checked, forward_violations=fwd,
                       reverse_violations=rev, ul_violations=ul_bad)


def boundary_case_dl(cfg: SystemConfig, seed: int = 0):
    """Rank-one instance with capacity exactly at R_tol.

    Returns (min LMI eigenvalue, matrices); the eigenvalue must sit at
    zero up to scaled rounding error.
    """
    rng = np.random.default_rng(seed)
    n_t, m = cfg.n_tx_antennas, cfg.n_eve_antennas
    ll = rng.standard_normal((n_t, m)) + 1j * rng.standard_normal((n_t, m))
    zt = random_psd(rng, n_t, 1e-13)
    xt = ll.conj().T @ zt @ ll + cfg.noise_eve * np.eye(m)
    w = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
    a = ll.conj().T @ w
    q = float(np.real(a.conj() @ np.linalg.solve(xt, a)))
    w *= math.sqrt(xi_threshold(cfg.r_tol_dl) / q)
    wt = np.outer(w, w.conj())
    slack = xi_threshold(cfg.r_tol_dl) * xt - ll.conj().T @ wt @ ll
    return _min_eig(slack) / float(np.linalg.norm(slack, 2)), (ll, zt, w)


def rank2_counterexample(cfg: SystemConfig, seed: int = 0):
    """Rank-two DL covariance for which the LMI holds but the cap fails.

    Demonstrates that the LMI relaxation of the DL leakage cap is
    one-way without the rank-one property. Requires M >= 2.
    """
    if cfg.n_eve_antennas < 2:
        raise ValueError("needs at least two eavesdropper antennas")
    rng = np.random.default_rng(seed)
    n_t, m = cfg.n_tx_antennas, cfg.n_eve_antennas
    if n_t < m:
        raise ValueError("needs n_tx_antennas >= n_eve_antennas")
    xi = xi_threshold(cfg.r_tol_dl)
    ll = rng.standard_normal((n_t, m)) + 1j * rng.standard_normal((n_t, m))
    zt = np.zeros((n_t, n_t), dtype=complex)
    xt = cfg.noise_eve * np.eye(m)
    # Target leakage matrix with two generalized eigenvalues just under xi.
    d = np.zeros((m, m))
    d[0, 0] = d[1, 1] = 0.99 * xi * cfg.noise_eve
    gram_inv = np.linalg.inv(ll.conj().T @ ll)
    wt = ll @ gram_inv @ d @ gram_inv @ ll.conj().T
    wt = 0.5 * (wt + wt.conj().T)
    lmi = _min_eig(xi * xt - ll.conj().T @ wt @ ll)
    # Capacity through the det form, no rank assumption.
    b = np.linalg.solve(xt, ll.conj().T @ wt @ ll)
    cap = float(np.log2(np.real(np.linalg.det(np.eye(m) + b))))
    return lmi, cap - cfg.r_tol_dl, wt
