"""Time-slotted streaming simulation.

Each slot the channels are redrawn, every user picks a device (proposed
drift-plus-penalty rule or a baseline), request collisions are resolved and
the chunk queues advance::

    Q[t+1] = max(Q[t] - m, 0) + a[t]
    Z[t+1] = min(Z[t] + m, Q_target) - a[t]

``Z`` is tracked through its own recursion and checked against
``Q_target - Q`` every slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .association import (BS, Candidate, Choice, Mode, SlotContext, detect_collisions,
                          resolve_collisions, resolve_collisions_baseline)
from .config import POLICIES, RunConfig
from .geometry import Scenario, candidate_table, sample_scenario
from .placement import CacheLayout, PlacementSolution, pack_layout, solve_placement

__all__ = [
    "MODE_NAMES",
    "UserQueueState",
    "SlotRecord",
    "MetricsReport",
    "Simulator",
    "prepare_placement",
    "advance_slot",
    "run_simulation",
    "run_together",
    "compute_metrics",
]

MODE_NAMES = tuple(m.value for m in Mode)
_MODE_CODE = {m: k for k, m in enumerate(Mode)}
_SOLO, _BS = _MODE_CODE[Mode.SOLO], _MODE_CODE[Mode.BS]


@dataclass(frozen=True)
class UserQueueState:
    backlog: np.ndarray
    virtual: np.ndarray
    target: float

    @classmethod
    def initial(cls, users: int, target: float) -> "UserQueueState":
        return cls(np.zeros(users, dtype=np.int64), np.full(users, float(target)), float(target))

    def advance(self, arrivals, departures: int) -> "UserQueueState":
        arrivals = np.asarray(arrivals, dtype=np.int64)
        backlog = np.maximum(self.backlog - departures, 0) + arrivals
        virtual = np.minimum(self.virtual + departures, self.target) - arrivals
        return UserQueueState(backlog, virtual, self.target)

    def consistent(self) -> bool:
        return bool(self.backlog.min(initial=0) >= 0
                    and (self.virtual + self.backlog == self.target).all())


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    device: np.ndarray
    quality: np.ndarray  # -1 where a strict-mode fallback has no quality
    arrivals: np.ndarray
    mode: np.ndarray  # index into MODE_NAMES
    delayed: np.ndarray
    backlog: np.ndarray  # after the update
    consistent: bool
    groups: tuple[tuple[int, str], ...] = ()  # (group size, "noma" | "schedule")


@dataclass
class MetricsReport:
    policy: str
    seed: int
    slots: int
    quality_weight: float
    mean_quality: np.ndarray
    delay_incidence: np.ndarray
    mean_backlog: np.ndarray
    steady_backlog: np.ndarray
    max_backlog: int
    max_arrivals: int
    mode_counts: dict[str, int]
    noma_groups: int
    scheduled_groups: int
    invariant_violations: int
    trace_slots: np.ndarray = field(repr=False)
    backlog_trace: np.ndarray = field(repr=False)
    quality_trace: np.ndarray = field(repr=False)
    mode_trace: np.ndarray = field(repr=False)
    delayed_trace: np.ndarray = field(repr=False)

    @property
    def quality_sum(self) -> float:
        return float(np.nansum(self.mean_quality))

    @property
    def average_quality(self) -> float:
        return float(np.nanmean(self.mean_quality)) if np.any(~np.isnan(self.mean_quality)) \
            else float("nan")

    @property
    def average_delay(self) -> float:
        return float(self.delay_incidence.mean())

    @property
    def average_backlog(self) -> float:
        return float(self.steady_backlog.mean())

    def summary(self) -> dict:
        def clean(a):
            return [None if np.isnan(x) else float(x) for x in np.asarray(a, dtype=float)]
        return {
            "policy": self.policy,
            "seed": self.seed,
            "slots": self.slots,
            "quality_weight": self.quality_weight,
            "quality_per_user": clean(self.mean_quality),
            "quality_sum": self.quality_sum,
            "quality_mean": None if np.isnan(self.average_quality) else self.average_quality,
            "delay_incidence_per_user": clean(self.delay_incidence),
            "delay_incidence_mean": self.average_delay,
            "backlog_mean_per_user": clean(self.mean_backlog),
            "backlog_steady_per_user": clean(self.steady_backlog),
            "backlog_steady_mean": self.average_backlog,
            "max_backlog": self.max_backlog,
            "max_arrivals": self.max_arrivals,
            "mode_counts": dict(self.mode_counts),
            "noma_groups": self.noma_groups,
            "scheduled_groups": self.scheduled_groups,
            "invariant_violations": self.invariant_violations,
        }

    def trace_rows(self):
        """Rows ``(slot, user, backlog, quality_dB, mode, delayed)`` at the trace stride."""
        for k, t in enumerate(self.trace_slots):
            for n in range(self.backlog_trace.shape[1]):
                q = self.quality_trace[k, n]
                yield (int(t), n + 1, int(self.backlog_trace[k, n]),
                       "" if np.isnan(q) else f"{q:.2f}",
                       MODE_NAMES[self.mode_trace[k, n]], int(self.delayed_trace[k, n]))


def prepare_placement(config: RunConfig) -> tuple[PlacementSolution, CacheLayout]:
    plc = config.placement
    solution = solve_placement(config.catalog, config.profile, config.radio, plc.storage,
                               plc.tolerance, plc.max_iter, quality_scale=plc.quality_scale,
                               log_base=plc.log_base)
    return solution, pack_layout(solution)


class Simulator:
    """One policy on one scenario; channels come from a seed-owned stream.

    Two simulators built with the same config and seed see the same devices,
    caches, requests and fading draws, whatever their policies.
    """

    def __init__(self, config: RunConfig, seed: int, policy: str | None = None, *,
                 placement: tuple[PlacementSolution, CacheLayout] | None = None,
                 scenario: Scenario | None = None):
        self.config = config
        self.seed = int(seed)
        self.policy = policy or config.simulation.policy
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        self.solution, self.layout = placement or prepare_placement(config)
        self.scenario = scenario or sample_scenario(
            config.scenario_spec, self.layout, config.catalog.popularity, self.seed)
        self._chan_rng = np.random.default_rng([self.seed, 1])
        self._req_rng = np.random.default_rng([self.seed, 2])

        radio, prof = config.radio, config.profile
        self.measure = np.asarray(prof.measure_db, dtype=float)
        self.chunk_bits = np.asarray(prof.chunk_bits, dtype=float)
        self.departures = int(radio.chunks_per_slot)
        strict = config.simulation.bs_mode == "strict"
        self.bs_arrivals = 0 if strict else self.departures
        self.bs_quality = None if strict else 0
        self.state = UserQueueState.initial(self.scenario.user_count,
                                            config.control.queue_target)
        self.slot = 0
        self._redrawn_at = 0
        self._build_table()

    # -- per-scenario precomputation -------------------------------------------------
    #
    # Options are stored padded as a (users, width) grid so one argmin along
    # axis 1 picks every user's option. Padding cells score +inf. Row entries
    # keep the table's (device, quality) order, so argmin's first-index rule
    # gives the lowest device, then the lowest quality, on ties. A user with
    # no options lands on its first padding cell, which encodes the
    # base-station fallback.

    def _build_table(self):
        radio = self.config.radio
        tab = candidate_table(self.scenario, radio.coverage_radius)
        N = self.scenario.user_count
        W = max(int(tab.counts.max(initial=0)), 1)
        self.table = tab
        self._width = W
        self._has = np.flatnonzero(tab.counts > 0)
        self._row = np.arange(N) * W
        self._cell = tab.user * W + (np.arange(tab.size) - tab.starts[tab.user])
        pad = np.ones(N * W, dtype=bool)
        pad[self._cell] = False
        # padding cells read a dummy all-zero link column
        self._pad_pair = np.full(N * W, tab.pair_dist2.size)
        self._pad_pair[self._cell] = tab.pair
        self._pad_scale = np.zeros(N * W)
        self._pad_scale[self._cell] = (radio.bandwidth * radio.coherence_time
                                       / self.chunk_bits[tab.quality])
        self._pad_fill = np.where(pad, float(self.bs_arrivals), 0.0)
        offset = np.full(N * W, np.inf)
        offset[self._cell] = -self.config.control.quality_weight * self.measure[tab.quality]
        self._offset = offset.reshape(N, W)
        self._cell_device = np.full(N * W, BS)
        self._cell_device[self._cell] = tab.device
        self._cell_quality = np.full(N * W, -1 if self.bs_quality is None else self.bs_quality)
        self._cell_quality[self._cell] = tab.quality
        self._cell_mode = np.where(pad, _BS, _SOLO).astype(np.int8)
        qmax = np.full(N, -1)
        np.maximum.at(qmax, tab.user, tab.quality)
        self._is_top = tab.quality == qmax[tab.user]
        self._block = None
        self._block_pos = 0

    def _room(self) -> int:
        """Slots left before the next request redraw (blocks never straddle one)."""
        sess = self.config.simulation.session_slots
        return sess - self.slot % sess if sess else 1 << 62

    def _draw(self, n: int):
        """Fresh ``(gains, arrivals, baseline_columns)`` for the next ``n`` slots."""
        tab, N, W = self.table, self.scenario.user_count, self._width
        fades = self._chan_rng.exponential(size=(n, tab.pair_dist2.size))
        gains = fades / tab.pair_dist2
        spectral = np.zeros((n, tab.pair_dist2.size + 1))
        np.log2(1.0 + gains / self.config.radio.noise_var, out=spectral[:, :-1])
        arrivals = spectral[:, self._pad_pair]
        arrivals *= self._pad_scale
        np.floor(arrivals, out=arrivals)
        arrivals += self._pad_fill
        arrivals = arrivals.reshape(n, N, W)
        cols = None
        if self.policy != "proposed":
            key = np.full((n, N * W), np.inf)
            if self.policy == "max-arrival":
                key[:, self._cell] = -arrivals.reshape(n, -1)[:, self._cell]
            else:
                top = self._cell[self._is_top]
                key[:, top] = -gains[:, tab.pair[self._is_top]]
            cols = key.reshape(n, N, W).argmin(axis=2)
        return gains, arrivals, cols

    def _start_slot(self):
        if self._block is None or self._block_pos >= self._block[0].shape[0]:
            self._block = None
            if self.config.simulation.session_slots and self.slot > 0 \
                    and self._room() == self.config.simulation.session_slots \
                    and self._redrawn_at != self.slot:
                self._redrawn_at = self.slot
                self._redraw_requests()

    def _take(self, n: int):
        """Channels for the next ``n`` slots; ``n`` must not cross a request redraw."""
        self._start_slot()
        parts = []
        if self._block is not None:
            k = self._block_pos
            parts.append(tuple(None if x is None else x[k:k + n] for x in self._block))
        have = parts[0][0].shape[0] if parts else 0
        if have < n:
            parts.append(self._draw(n - have))
        self._block, self._block_pos = None, 0
        if len(parts) == 1:
            return parts[0]
        return tuple(None if parts[0][i] is None else np.concatenate([p[i] for p in parts])
                     for i in range(3))

    def _redraw_requests(self):
        pop = self.config.catalog.popularity
        requests = self._req_rng.choice(pop.size, size=self.scenario.user_count, p=pop)
        self.scenario = Scenario(self.scenario.region, self.scenario.device_pos,
                                 self.scenario.device_cache, self.scenario.user_pos,
                                 requests, self.scenario.seed)
        self._build_table()

    # -- one slot --------------------------------------------------------------------

    def _candidates(self, user, gains, arrivals) -> list[Candidate]:
        tab = self.table
        lo = tab.starts[user]
        return [Candidate(int(tab.device[e]), int(tab.quality[e]),
                          float(gains[tab.pair[e]]), int(arrivals[user, e - lo]))
                for e in range(lo, lo + tab.counts[user])]

    def _context(self, backlog, gains, arrivals, users) -> SlotContext:
        cands: list[list[Candidate]] = [[] for _ in range(self.scenario.user_count)]
        for u in users:
            cands[u] = self._candidates(u, gains, arrivals)
        radio = self.config.radio
        return SlotContext(
            queues=np.asarray(backlog, dtype=float), candidates=cands,
            user_pos=self.scenario.user_pos, device_pos=self.scenario.device_pos,
            radius=radio.coverage_radius, measure=self.measure, chunk_bits=self.chunk_bits,
            control=self.config.control, bandwidth=radio.bandwidth,
            noise_var=radio.noise_var, coherence_time=radio.coherence_time,
            bs_arrivals=self.bs_arrivals, bs_quality=self.bs_quality)

    def channels(self):
        """This slot's ``(gains, arrivals, baseline_columns)``; advances the fading stream."""
        self._start_slot()
        if self._block is None:
            self._block = self._draw(min(self.config.simulation.block_slots, self._room()))
            self._block_pos = 0
        gains, arrivals, cols = self._block
        k = self._block_pos
        self._block_pos += 1
        return gains[k], arrivals[k], None if cols is None else cols[k]

    def step(self) -> SlotRecord:
        self.state, record = advance_slot(self.state, self, *self.channels())
        self.slot += 1
        return record

    def run(self, slots: int | None = None) -> MetricsReport:
        """Advance ``slots`` slots (default from the config) and aggregate."""
        return run_together([self], slots)[0]


class _Stack:
    """Padded option grids of several simulators side by side.

    Users of all simulators share one (users, width) grid, so a single
    argmin per slot serves every seed. Device ids are shifted per simulator
    so that a duplicate id always means a real collision.
    """

    def __init__(self, sims: Sequence[Simulator]):
        self.sims = sims
        self.tables = [s.table for s in sims]
        sizes = [s.scenario.user_count for s in sims]
        self.bounds = np.concatenate([[0], np.cumsum(sizes)])
        self.width = W = max(s._width for s in sims)
        U = int(self.bounds[-1])
        self.row = np.arange(U) * W
        self.offset = np.full((U, W), np.inf)
        self.device = np.full((U, W), BS)
        self.quality = np.full((U, W), -1)
        self.mode = np.full((U, W), _BS, dtype=np.int8)
        shift = 0
        for s, lo, hi in zip(sims, self.bounds[:-1], self.bounds[1:]):
            w = s._width
            self.offset[lo:hi, :w] = s._offset
            dev = s._cell_device.reshape(-1, w)
            self.device[lo:hi, :w] = np.where(dev == BS, BS, dev + shift)
            self.quality[lo:hi, :w] = s._cell_quality.reshape(-1, w)
            self.mode[lo:hi, :w] = s._cell_mode.reshape(-1, w)
            shift += s.scenario.device_pos.shape[0]
        self.device, self.quality, self.mode = (
            x.ravel() for x in (self.device, self.quality, self.mode))

    def current(self) -> bool:
        return all(s.table is t for s, t in zip(self.sims, self.tables))

    def chunk(self, takes, proposed: bool):
        n, (U, W) = takes[0][0].shape[0], self.offset.shape
        arr = np.zeros((n, U, W))
        cols = None if proposed else np.empty((n, U), dtype=np.int64)
        for (gains, a, c), lo, hi in zip(takes, self.bounds[:-1], self.bounds[1:]):
            arr[:, lo:hi, :a.shape[2]] = a
            if c is not None:
                cols[:, lo:hi] = c
        score = None
        if proposed:
            # g = (a^2 - 2*Z*a) - V*P; a and Z are integers, so the first part is exact
            score = (arr * arr, -2.0 * arr)
        return arr.reshape(n, -1), cols, score


def run_together(sims: Sequence[Simulator], slots: int | None = None) -> list[MetricsReport]:
    """Run several simulators in lockstep and report each one separately.

    All simulators must share a policy, the simulation options and the slot
    counter. Every seed keeps its own channel and request streams, so each
    report equals what running that simulator alone would give.
    """
    sims = list(sims)
    if not sims:
        return []
    lead = sims[0]
    if any(s.policy != lead.policy or s.slot != lead.slot
           or s.config.simulation != lead.config.simulation
           or s.departures != lead.departures or s.state.target != lead.state.target
           for s in sims):
        raise ValueError("simulators must share policy, options and slot counter")
    T = int(slots or lead.config.simulation.slots)
    if T < 1:
        raise ValueError("need at least one slot")
    proposed = lead.policy == "proposed"
    m, target = lead.departures, lead.state.target
    bounds = np.concatenate([[0], np.cumsum([s.scenario.user_count for s in sims])])
    U = int(bounds[-1])
    backlog = np.empty((T + 1, U), dtype=np.int64)
    virtual = np.empty((T + 1, U))
    backlog[0] = np.concatenate([s.state.backlog for s in sims])
    virtual[0] = np.concatenate([s.state.virtual for s in sims])
    level = np.empty((T, U), dtype=np.int64)
    mode = np.empty((T, U), dtype=np.int8)
    arrivals = np.empty((T, U), dtype=np.int64)
    groups = [[] for _ in sims]
    spans = list(zip(bounds[:-1], bounds[1:]))
    stack = None

    t = 0
    while t < T:
        for s in sims:
            s._start_slot()
        if stack is None or not stack.current():
            stack = _Stack(sims)
        U_W = U * stack.width
        n = min(lead.config.simulation.block_slots, max(1, 3_000_000 // U_W),
                T - t, lead._room())
        takes = [s._take(n) for s in sims]
        arr, cols_all, score = stack.chunk(takes, proposed)
        row, cell_dev, cell_q, cell_mode = stack.row, stack.device, stack.quality, stack.mode
        offset = stack.offset
        for k in range(n):
            q_now, z_now = backlog[t], virtual[t]
            if proposed:
                g = score[1][k] * z_now[:, None]
                g += score[0][k]
                g += offset
                cols = g.argmin(axis=1)
            else:
                cols = cols_all[k]
            flat = row + cols
            device = cell_dev[flat]
            level[t] = cell_q[flat]
            arrivals[t] = arr[k][flat]
            mode[t] = cell_mode[flat]
            chosen = device[device != BS].tolist()
            if len(set(chosen)) != len(chosen):
                for i, (lo, hi) in enumerate(spans):
                    ids = device[lo:hi]
                    ids = ids[ids != BS]
                    if np.unique(ids).size == ids.size:
                        continue
                    gains_i, arr_i, _ = takes[i]
                    _, level[t, lo:hi], arrivals[t, lo:hi], mode[t, lo:hi], grp = _associate(
                        q_now[lo:hi], z_now[lo:hi], sims[i], gains_i[k], arr_i[k], cols[lo:hi])
                    groups[i].extend(grp)
            np.maximum(q_now - m, 0, out=backlog[t + 1])
            backlog[t + 1] += arrivals[t]
            np.minimum(z_now + m, target, out=virtual[t + 1])
            virtual[t + 1] -= arrivals[t]
            t += 1
            for s in sims:
                s.slot += 1

    reports = []
    for i, (s, (lo, hi)) in enumerate(zip(sims, spans)):
        # contiguous copies keep reductions identical to a run on its own
        b, z = backlog[:, lo:hi].copy(), virtual[:, lo:hi].copy()
        s.state = UserQueueState(b[T].copy(), z[T].copy(), target)
        violations = int(np.count_nonzero(
            ((z[1:] + b[1:]) != target).any(axis=1) | (b[1:] < 0).any(axis=1)))
        lv = level[:, lo:hi]
        quality = np.where(lv >= 0, s.measure[np.maximum(lv, 0)], np.nan)
        reports.append(compute_metrics(
            policy=s.policy, seed=s.seed, backlog=b, quality=quality, mode=mode[:, lo:hi].copy(),
            delayed=b[:-1] < m, arrivals=arrivals[:, lo:hi].copy(), groups=groups[i],
            violations=violations, warmup_fraction=s.config.simulation.warmup_fraction,
            stride=s.config.simulation.trace_stride,
            quality_weight=s.config.control.quality_weight))
    return reports


def _associate(backlog, virtual, sim: Simulator, gains, arrivals, columns):
    """Per-user ``(device, quality, arrivals, mode, groups)`` for one slot."""
    if columns is None:
        # integer part first so exact ties stay exact; -V*P is added last
        g = arrivals * (arrivals - 2.0 * virtual[:, None])
        g += sim._offset
        columns = g.argmin(axis=1)
    flat = sim._row + columns
    device = sim._cell_device[flat]
    quality = sim._cell_quality[flat]
    got = arrivals.ravel()[flat].astype(np.int64)
    mode = sim._cell_mode[flat]

    chosen = device[device != BS].tolist()
    if len(set(chosen)) == len(chosen):
        return device, quality, got, mode, ()

    tab = sim.table
    users = sim._has
    entries = tab.starts[users] + columns[users]
    first = [Choice(int(u), int(device[u]), int(quality[u]), int(got[u]), Mode.SOLO,
                    0.0, float(gains[tab.pair[e]]))
             for u, e in zip(users, entries)]
    groups = detect_collisions(first)
    members = sorted({u for grp in groups for u in grp.members})
    ctx = sim._context(backlog, gains, arrivals, members)
    first = [ctx.choice(ch.user, Candidate(ch.device, ch.quality, ch.gain, ch.arrivals),
                        Mode.SOLO) if ch.user in members else ch for ch in first]
    if sim.policy == "proposed":
        final, resolutions = resolve_collisions(first, ctx)
        record = tuple((len(r.group.members), r.mode) for r in resolutions)
    else:
        final = resolve_collisions_baseline(first, ctx)
        record = tuple((len(grp.members), "schedule") for grp in groups)
    for ch in final:
        if ch.user in members:
            u = ch.user
            device[u], quality[u], got[u] = ch.device, ch.quality, ch.arrivals
            mode[u] = _MODE_CODE[ch.mode]
    return device, quality, got, mode, record


def advance_slot(state: UserQueueState, sim: Simulator, gains: np.ndarray,
                 arrivals: np.ndarray, columns: np.ndarray | None = None):
    """Associate every user for one slot, resolve collisions and update the queues.

    ``gains`` holds this slot's per-link channel gains and ``arrivals`` the
    chunk counts on ``sim``'s padded option grid. Baselines pass their chosen
    ``columns``; the proposed rule computes its own from ``state``. Returns
    ``(new_state, record)``.
    """
    device, quality, got, mode, groups = _associate(state.backlog, state.virtual, sim,
                                                    gains, arrivals, columns)
    delayed = state.backlog < sim.departures
    new_state = state.advance(got, sim.departures)
    return new_state, SlotRecord(sim.slot, device, quality, got, mode, delayed,
                                 new_state.backlog, new_state.consistent(), groups)


def compute_metrics(*, policy: str, seed: int, backlog: np.ndarray, quality: np.ndarray,
                    mode: np.ndarray, delayed: np.ndarray, arrivals: np.ndarray,
                    groups: Sequence[tuple[int, str]] = (), violations: int = 0,
                    warmup_fraction: float = 0.5, stride: int = 1,
                    quality_weight: float = float("nan")) -> MetricsReport:
    """Aggregate per-slot columns into time averages.

    ``backlog`` has one more row than the other arrays (the initial state).
    """
    T = quality.shape[0]
    if T < 1:
        raise ValueError("need at least one slot")
    with np.errstate(invalid="ignore"):
        with_quality = (~np.isnan(quality)).sum(axis=0)
        mean_quality = np.where(with_quality > 0,
                                np.nansum(quality, axis=0) / np.maximum(with_quality, 1),
                                np.nan)
    warm = min(int(T * warmup_fraction), T - 1)
    counts = np.bincount(mode.ravel().astype(np.int64), minlength=len(MODE_NAMES))
    rows = np.arange(0, T, stride)
    return MetricsReport(
        policy=policy, seed=seed, slots=T, quality_weight=quality_weight,
        mean_quality=mean_quality,
        delay_incidence=np.count_nonzero(delayed, axis=0) / T,
        mean_backlog=backlog[1:].mean(axis=0),
        steady_backlog=backlog[1 + warm:].mean(axis=0),
        max_backlog=int(backlog.max()),
        max_arrivals=int(arrivals.max()),
        mode_counts={name: int(c) for name, c in zip(MODE_NAMES, counts)},
        noma_groups=sum(1 for _, m in groups if m == "noma"),
        scheduled_groups=sum(1 for _, m in groups if m == "schedule"),
        invariant_violations=int(violations),
        trace_slots=rows,
        backlog_trace=backlog[rows],
        quality_trace=quality[rows],
        mode_trace=mode[rows],
        delayed_trace=delayed[rows],
    )


def run_simulation(config: RunConfig, seed: int, slots: int | None = None,
                   policy: str | None = None, **kwargs) -> MetricsReport:
    return Simulator(config, seed, policy, **kwargs).run(slots)
