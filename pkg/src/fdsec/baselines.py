"""Comparison schemes: structural restrictions of the proposed design.

Baseline 1 (MRT-BF) fixes each beamformer direction to the user's
channel and optimizes only its power, jointly with the AN covariances,
UL powers and scheduling. Baseline 2 radiates isotropic AN, optimizing
full beamformers and powers. Both run through the same penalized SCA
machinery under the same leakage caps, so any baseline-feasible policy
is feasible for the proposed formulation.
"""

from __future__ import annotations

import numpy as np

import math

from .channel import ChannelSet
from .config import SolverParams, SystemConfig
from .model import ISOTROPIC_AN, MRT_BF, ModeSpec
from .rates import Policy
from .sca import ScaTrace, run_sca, solve_assignment


def _fixed_assignment_run(cfg, ch, mode, assignment, params):
    policy, rep = solve_assignment(cfg, ch, assignment, mode=mode, params=params)
    trace = ScaTrace(eta=cfg.eta(), i_max=cfg.max_iter())
    trace.polish_utility = rep.utility
    trace.rank_ratio_final = rep.rank_ratio
    trace.binarity_final = 0.0
    trace.binarity_free = 0.0
    trace.converged = rep.solver_status != "numerical_failure"
    from .rates import check_policy
    trace.policy_slacks = check_policy(policy, ch, cfg)
    return policy, trace


def solve_baseline_mrt(cfg: SystemConfig, ch: ChannelSet,
                       assignment=None,
                       params: SolverParams | None = None) -> tuple[Policy, ScaTrace]:
    """Maximum-ratio-transmission beamforming with jointly optimized powers.

    `assignment` optionally freezes the subcarrier map (per subcarrier a
    flat k*J+j index or -1) instead of re-optimizing the scheduling.
    """
    if assignment is not None:
        return _fixed_assignment_run(cfg, ch, MRT_BF, assignment, params)
    return run_sca(cfg, ch, mode=MRT_BF, params=params)


def solve_baseline_isotropic(cfg: SystemConfig, ch: ChannelSet,
                             assignment=None,
                             params: SolverParams | None = None) -> tuple[Policy, ScaTrace]:
    """Isotropic artificial noise with fully optimized beamforming."""
    if assignment is not None:
        return _fixed_assignment_run(cfg, ch, ISOTROPIC_AN, assignment, params)
    return run_sca(cfg, ch, mode=ISOTROPIC_AN, params=params)


def mrt_direction_error(policy: Policy, ch: ChannelSet) -> float:
    """Largest angle (radians) between active beamformers and their channels.

    Computed from the orthogonal residual (the sine), which stays exact
    for vanishing angles where arccos loses all precision.
    """
    worst = 0.0
    for i, k, j in policy.active_triples():
        w = policy.w[i, k]
        h = ch.h[i, k]
        nw = np.linalg.norm(w)
        if nw <= 0.0:
            continue
        resid = w - h * (np.vdot(h, w) / np.vdot(h, h))
        worst = max(worst, float(np.arcsin(min(1.0, np.linalg.norm(resid) / nw))))
    return worst


def an_isotropy_error(policy: Policy) -> float:
    """Largest relative deviation of active AN covariances from q/N_T * I."""
    worst = 0.0
    n_t = policy.Z.shape[-1]
    for i in range(policy.Z.shape[0]):
        z = policy.Z[i]
        q = float(np.real(np.trace(z)))
        if q <= 0.0:
            continue
        dev = np.linalg.norm(z - (q / n_t) * np.eye(n_t)) / q
        worst = max(worst, float(dev))
    return worst
