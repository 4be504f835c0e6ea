"""Multi-seed batches, parameter sweeps and tidy result tables.

Runs that differ only in policy or ``V`` share the placement, the scenario
and the fading stream of each seed, so policy comparisons are paired.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig, config_from_dict
from .engine import MetricsReport, Simulator, prepare_placement, run_together
from .placement import solve_placement

__all__ = ["RunKey", "Aggregate", "run_batch", "aggregate", "policy_runs",
           "simulation_sweep", "placement_sweep", "METRICS"]

METRICS = {
    "quality": lambda r: r.average_quality,
    "delay": lambda r: r.average_delay,
    "backlog": lambda r: r.average_backlog,
}

_PLACEMENT_CACHE: dict[str, tuple] = {}


@dataclass(frozen=True, order=True)
class RunKey:
    policy: str
    quality_weight: float


@dataclass(frozen=True)
class Aggregate:
    mean: float
    stderr: float
    n: int


def _placement_for(config: RunConfig):
    raw = config.raw
    key = json.dumps([raw["catalog"], raw["quality"], raw["radio"], raw["placement"]],
                     sort_keys=True, default=str)
    if key not in _PLACEMENT_CACHE:
        _PLACEMENT_CACHE[key] = prepare_placement(config)
    return _PLACEMENT_CACHE[key]


def _run_key(args) -> list[MetricsReport]:
    raw, seeds, policy, weight, slots = args
    config = config_from_dict(raw)
    if weight != config.control.quality_weight:
        config = config.with_param("quality_weight", weight)
    placement = _placement_for(config)
    sims = [Simulator(config, s, policy, placement=placement) for s in seeds]
    return run_together(sims, slots)


def policy_runs(config: RunConfig, policies: Sequence[str] | None = None,
                weights: Sequence[float] | None = None) -> list[RunKey]:
    """Every baseline once plus the proposed rule at each ``V`` in ``weights``."""
    policies = policies or config.sweep.policies
    weights = weights or (config.control.quality_weight,)
    keys = []
    for p in policies:
        if p == "proposed":
            keys.extend(RunKey(p, float(w)) for w in weights)
        else:
            keys.append(RunKey(p, config.control.quality_weight))
    return keys


def run_batch(config: RunConfig, keys: Iterable[RunKey], seeds: Sequence[int] | None = None,
              slots: int | None = None, jobs: int = 1) -> dict[RunKey, list[MetricsReport]]:
    """Run each key on every seed; results keep seed order regardless of ``jobs``.

    The seeds of one key run in lockstep; ``jobs > 1`` spreads keys over
    worker processes.
    """
    keys = list(keys)
    seeds = list(config.simulation.seeds if seeds is None else seeds)
    tasks = [(config.raw, seeds, k.policy, k.quality_weight, slots) for k in keys]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_key, tasks))
    else:
        reports = [_run_key(t) for t in tasks]
    return dict(zip(keys, reports))


def aggregate(reports: Sequence[MetricsReport], metric: str) -> Aggregate:
    values = np.array([METRICS[metric](r) for r in reports], dtype=float)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return Aggregate(math.nan, math.nan, 0)
    se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else math.nan
    return Aggregate(float(values.mean()), se, int(values.size))


def simulation_sweep(config: RunConfig, axis: str, values: Sequence[float] | None = None,
                     seeds: Sequence[int] | None = None, slots: int | None = None,
                     jobs: int = 1) -> list[tuple]:
    """Tidy rows ``(x, policy, V, metric, mean, stderr)`` for one swept axis.

    On the ``quality_weight`` axis only the proposed rule is run, since the
    baselines ignore ``V``.
    """
    values = values if values is not None else getattr(config.sweep, axis)
    if not values:
        raise ValueError(f"sweep axis {axis!r} has no values")
    rows = []
    for x in values:
        cfg = config.with_param(axis, float(x))
        if axis == "quality_weight":
            keys = [RunKey("proposed", float(x))]
        else:
            keys = policy_runs(cfg, cfg.sweep.policies,
                               cfg.sweep.proposed_weights or None)
        results = run_batch(cfg, keys, seeds, slots, jobs)
        for key in keys:
            for metric in METRICS:
                agg = aggregate(results[key], metric)
                rows.append((float(x), key.policy, key.quality_weight, metric,
                             agg.mean, agg.stderr))
    return rows


def placement_sweep(config: RunConfig, axis: str,
                    values: Sequence[float] | None = None) -> list[tuple]:
    """Rows ``(x, file, quality, p)`` of the optimal caching matrix per axis value.

    Files and quality levels are numbered from 1.
    """
    values = values if values is not None else getattr(config.sweep, axis)
    if not values:
        raise ValueError(f"sweep axis {axis!r} has no values")
    rows = []
    for x in values:
        cfg = config.with_param(axis, float(x))
        plc = cfg.placement
        sol = solve_placement(cfg.catalog, cfg.profile, cfg.radio, plc.storage, plc.tolerance,
                              plc.max_iter, quality_scale=plc.quality_scale,
                              log_base=plc.log_base)
        for (i, q), p in np.ndenumerate(sol.p):
            rows.append((float(x), i + 1, q + 1, float(p)))
    return rows
