"""Monte-Carlo experiment runner.

Sweeps one axis (DL power budget, user count, transmit antennas or
eavesdropper antennas) over seeded channel drops for a subset of
schemes, collecting throughput/secrecy metrics into a CSV of raw rows
plus per-point aggregates. Runs are deterministic given the master seed:
drop channels derive from (master_seed, sweep_index, drop) and results
merge in a fixed key order regardless of worker completion order.

Timing lives in the wall_ms column (inherently non-reproducible) and in
the sidecar metadata file; every model-derived column is byte-stable.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import draw_drop
from .config import SystemConfig, dbm_to_watts
from .rates import check_policy, secrecy_rates, weighted_throughput

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("schema_version", "row_kind", "sweep_axis", "sweep_value", "scheme",
               "drop", "seed", "utility_bps_hz", "secrecy_bps_hz", "iters",
               "rank_ratio_max", "binarity_gap", "status", "wall_ms")
SCHEMES = ("proposed", "baseline_mrt", "baseline_isotropic")
AXES = ("p_max_dbm", "user_count", "n_tx", "m_eve")


@dataclass(frozen=True)
class ExperimentSpec:
    axis: str
    values: tuple
    drops: int = 50
    schemes: tuple = SCHEMES
    base: SystemConfig = field(default_factory=SystemConfig)
    out_path: str = "experiment.csv"
    master_seed: int = 1
    workers: int | None = None       # None: one per CPU, capped at 8

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"sweep axis must be one of {AXES}")
        if not self.values:
            raise ValueError("need at least one sweep value")
        if self.drops < 1:
            raise ValueError("need at least one drop per point")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ValueError(f"schemes must be a non-empty subset of {SCHEMES}")

    def config_at(self, value) -> SystemConfig:
        if self.axis == "p_max_dbm":
            return self.base.replace(p_max_dl=dbm_to_watts(float(value)))
        if self.axis == "user_count":
            return self.base.replace(n_dl_users=int(value), n_ul_users=int(value))
        if self.axis == "n_tx":
            return self.base.replace(n_tx_antennas=int(value))
        return self.base.replace(n_eve_antennas=int(value))


def _drop_seed(master_seed: int, sweep_index: int, drop: int) -> int:
    # Positions pair across sweep points that share the drop index only
    # when the axis does not alter the geometry; a stable integer hash
    # keeps every (master, drop) combination reproducible.
    return int(np.random.SeedSequence([master_seed, drop]).generate_state(1)[0])


def _run_one(task):
    spec, sweep_index, value, scheme, drop = task
    from .baselines import solve_baseline_isotropic, solve_baseline_mrt
    from .sca import run_sca

    cfg = spec.config_at(value)
    seed = _drop_seed(spec.master_seed, sweep_index, drop)
    row = {"schema_version": CSV_SCHEMA_VERSION, "row_kind": "raw",
           "sweep_axis": spec.axis, "sweep_value": value, "scheme": scheme,
           "drop": drop, "seed": seed}
    t0 = time.perf_counter()
    try:
        ch = draw_drop(cfg, seed)
        if scheme == "proposed":
            policy, trace = run_sca(cfg, ch)
        elif scheme == "baseline_mrt":
            policy, trace = solve_baseline_mrt(cfg, ch)
        else:
            policy, trace = solve_baseline_isotropic(cfg, ch)
        sec = secrecy_rates(policy, ch, cfg)
        row.update(
            utility_bps_hz=weighted_throughput(policy, ch, cfg),
            secrecy_bps_hz=sec.system_secrecy(cfg),
            iters=trace.n_iterations,
            rank_ratio_max=trace.rank_ratio_final,
            binarity_gap=trace.binarity_final,
            status=trace.status)
    except Exception as exc:   # noqa: BLE001 - sweep must not abort
        row.update(utility_bps_hz=math.nan, secrecy_bps_hz=math.nan, iters=0,
                   rank_ratio_max=math.nan, binarity_gap=math.nan,
                   status=f"error:{type(exc).__name__}")
    row["wall_ms"] = (time.perf_counter() - t0) * 1e3
    return row


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    return str(v)


def _aggregate(rows, spec):
    out = []
    for value in spec.values:
        for scheme in spec.schemes:
            sel = [r for r in rows
                   if r["sweep_value"] == value and r["scheme"] == scheme
                   and r["status"] == "ok" and not math.isnan(r["utility_bps_hz"])]
            base = {"schema_version": CSV_SCHEMA_VERSION, "sweep_axis": spec.axis,
                    "sweep_value": value, "scheme": scheme, "drop": len(sel),
                    "seed": spec.master_seed, "iters": 0, "rank_ratio_max":
                    max((r["rank_ratio_max"] for r in sel), default=math.nan),
                    "binarity_gap":
                    max((r["binarity_gap"] for r in sel), default=math.nan),
                    "status": "ok" if sel else "empty", "wall_ms": 0.0}
            n = len(sel)
            for kind in ("mean", "stderr"):
                row = dict(base)
                row["row_kind"] = kind
                for col in ("utility_bps_hz", "secrecy_bps_hz"):
                    vals = np.array([r[col] for r in sel], dtype=float)
                    if n == 0:
                        row[col] = math.nan
                    elif kind == "mean":
                        row[col] = float(vals.mean())
                    else:
                        row[col] = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
                out.append(row)
    return out


def run_experiment(spec: ExperimentSpec):
    """Execute the sweep and write CSV + metadata sidecar.

    Returns (raw_rows, aggregate_rows). Worker processes run with
    single-threaded BLAS so results do not depend on the executor.
    """
    tasks = [(spec, si, value, scheme, drop)
             for si, value in enumerate(spec.values)
             for scheme in spec.schemes
             for drop in range(spec.drops)]
    workers = spec.workers or min(os.cpu_count() or 1, 8)
    t_start = time.time()
    if workers > 1 and len(tasks) > 1:
        import multiprocessing as mp
        ctx = mp.get_context("spawn")
        # Spawned children must see single-threaded BLAS before their numpy
        # loads, so the setting goes through the inherited environment.
        saved = {v: os.environ.get(v) for v in _BLAS_VARS}
        os.environ.update({v: "1" for v in _BLAS_VARS})
        try:
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                rows = list(pool.map(_run_one, tasks, chunksize=1))
        finally:
            for var, old in saved.items():
                if old is None:
                    os.environ.pop(var, None)
                else:
                    os.environ[var] = old
    else:
        rows = [_run_one(t) for t in tasks]
    # Deterministic order regardless of scheduling.
    key = {(t[2], t[3], t[4]): i for i, t in enumerate(tasks)}
    rows.sort(key=lambda r: key[(r["sweep_value"], r["scheme"], r["drop"])])
    aggregates = _aggregate(rows, spec)

    with open(spec.out_path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows + aggregates:
            fh.write(",".join(_fmt(r[c]) for c in CSV_COLUMNS) + "\n")
    meta = {
        "spec": {
            "axis": spec.axis, "values": list(spec.values), "drops": spec.drops,
            "schemes": list(spec.schemes), "master_seed": spec.master_seed,
            "base_config": {f.name: getattr(spec.base, f.name)
                            for f in dataclasses.fields(SystemConfig)
                            if f.name != "solver"},
        },
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t_start)),
        "wall_s": time.time() - t_start,
        "git_rev": _git_rev(),
        "schema_version": CSV_SCHEMA_VERSION,
    }
    with open(spec.out_path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
    return rows, aggregates


_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _git_rev():
    try:
        import subprocess
        return subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                              text=True, timeout=5,
                              cwd=os.path.dirname(__file__)).stdout.strip() or None
    except Exception:   # noqa: BLE001
        return None


def read_rows(path: str):
    """Parse a harness CSV back into typed row dicts."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            row = dict(zip(CSV_COLUMNS, parts))
            for col in ("utility_bps_hz", "secrecy_bps_hz", "rank_ratio_max",
                        "binarity_gap", "wall_ms", "sweep_value"):
                row[col] = float(row[col])
            for col in ("schema_version", "drop", "seed", "iters"):
                row[col] = int(row[col])
            rows.append(row)
    return rows
