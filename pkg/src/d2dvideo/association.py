"""Per-slot node association under the drift-plus-penalty rule.

Every user scores each (device, quality) option by

    g = a**2 - V * P(q) - 2 * (Q_target - Q_n) * a

where ``a`` is the number of whole chunks the link delivers in the slot,
and takes the minimum. When several users pick the same device the device
either serves a single user (the others search again or fall back to the
base station) or serves all of them with power-domain NOMA, whichever gives
the smaller summed objective.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .geometry import excluded_by_active, link_rate
from .model import ControlParams

__all__ = [
    "BS",
    "Mode",
    "Candidate",
    "Choice",
    "CollisionGroup",
    "GroupResolution",
    "SlotContext",
    "chunk_arrivals",
    "user_objective",
    "select_device",
    "detect_collisions",
    "noma_rates",
    "collision_cost_scheduling",
    "collision_cost_noma",
    "resolve_group",
    "resolve_collisions",
    "baseline_policy",
    "resolve_collisions_baseline",
]

BS = -1  # device id of the base-station fallback


class Mode(str, enum.Enum):
    SOLO = "solo"
    WINNER = "scheduled-winner"
    RESCHEDULED = "rescheduled"
    NOMA = "noma"
    BS = "bs-fallback"


@dataclass(frozen=True)
class Candidate:
    device: int
    quality: int
    gain: float
    arrivals: int


@dataclass(frozen=True)
class Choice:
    user: int
    device: int
    quality: int
    arrivals: int
    mode: Mode
    objective: float = 0.0
    gain: float = 0.0

    @property
    def d2d(self) -> bool:
        return self.device != BS


@dataclass(frozen=True)
class CollisionGroup:
    device: int
    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a collision needs at least two users")


@dataclass
class SlotContext:
    """Everything the collision resolver needs about the current slot."""

    queues: np.ndarray
    candidates: Sequence[Sequence[Candidate]]
    user_pos: np.ndarray
    device_pos: np.ndarray
    radius: float
    measure: np.ndarray
    chunk_bits: np.ndarray
    control: ControlParams
    bandwidth: float
    noise_var: float
    coherence_time: float
    bs_arrivals: int = 1
    bs_quality: int | None = 0

    def objective(self, user: int, arrivals, quality) -> float:
        return user_objective(arrivals, self.measure[quality], self.queues[user],
                              self.control.quality_weight, self.control.queue_target)

    def bs_choice(self, user: int) -> Choice:
        if self.bs_quality is None:
            # strict mode: the base station is outside the model and adds no cost
            return Choice(user, BS, -1, self.bs_arrivals, Mode.BS, 0.0)
        g = self.objective(user, self.bs_arrivals, self.bs_quality)
        return Choice(user, BS, self.bs_quality, self.bs_arrivals, Mode.BS, g)

    def choice(self, user: int, cand: Candidate | None, mode: Mode) -> Choice:
        if cand is None:
            return self.bs_choice(user)
        g = self.objective(user, cand.arrivals, cand.quality)
        return Choice(user, cand.device, cand.quality, cand.arrivals, mode, g, cand.gain)


def chunk_arrivals(rate, coherence_time, chunk_bits):
    """Whole chunks delivered in one slot; partial chunks are discarded."""
    if np.any(np.asarray(chunk_bits) <= 0):
        raise ValueError("chunk size must be positive")
    out = np.floor(np.asarray(rate, dtype=float) * coherence_time / chunk_bits)
    return int(out) if np.ndim(out) == 0 else out.astype(int)


def user_objective(arrivals, quality_measure, backlog, weight, target):
    a = np.asarray(arrivals, dtype=float)
    out = a * a - weight * np.asarray(quality_measure) - 2.0 * (target - np.asarray(backlog)) * a
    return float(out) if np.ndim(out) == 0 else out


def select_device(candidates: Sequence[Candidate], backlog: float, weight: float,
                  target: float, measure) -> Candidate | None:
    """Greedy argmin of the per-user objective; ``None`` means base-station fallback.

    Ties go to the lowest device id, then the lowest quality.
    """
    best, best_g = None, np.inf
    for c in sorted(candidates, key=lambda c: (c.device, c.quality)):
        g = user_objective(c.arrivals, measure[c.quality], backlog, weight, target)
        if g < best_g:
            best, best_g = c, g
    return best


def detect_collisions(choices: Sequence[Choice]) -> list[CollisionGroup]:
    by_device: dict[int, list[int]] = {}
    for ch in choices:
        if ch.d2d:
            by_device.setdefault(ch.device, []).append(ch.user)
    return [CollisionGroup(d, tuple(sorted(users)))
            for d, users in sorted(by_device.items()) if len(users) > 1]


def noma_rates(gains, ratios, noise_var, bandwidth) -> np.ndarray:
    """Achievable rates after SIC, users ordered strongest channel first.

    User ``l`` treats the signals of the stronger users ``l' < l`` as noise;
    the signals of weaker users are cancelled.
    """
    gains = np.asarray(gains, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if gains.size != ratios.size:
        raise ValueError("one power ratio per user is required")
    if gains.size > 3:
        raise ValueError(f"NOMA groups of {gains.size} users are not supported")
    if np.any(np.diff(gains) > 0):
        raise ValueError("gains must be sorted strongest first")
    interference = np.concatenate([[0.0], np.cumsum(ratios)[:-1]])
    sinr = gains * ratios / (gains * interference + noise_var)
    return bandwidth * np.log2(1.0 + sinr)


@dataclass(frozen=True)
class GroupResolution:
    group: CollisionGroup
    mode: str  # "schedule" or "noma"
    cost: float
    schedule_cost: float
    noma_cost: float | None
    winner: int
    choices: Mapping[int, Choice] = field(default_factory=dict)


def _reschedule(member: int, ctx: SlotContext, device: int,
                active: Mapping[int, int]) -> Choice:
    others = [ctx.user_pos[u] for u in active if u != member]
    options = [c for c in ctx.candidates[member]
               if c.device != device
               and not excluded_by_active(ctx.device_pos[c.device], others, ctx.radius)]
    cand = select_device(options, ctx.queues[member], ctx.control.quality_weight,
                         ctx.control.queue_target, ctx.measure)
    return ctx.choice(member, cand, Mode.RESCHEDULED)


def collision_cost_scheduling(group: CollisionGroup, first: Mapping[int, Choice],
                              ctx: SlotContext, active: Mapping[int, int]):
    """Best single user to keep the device, with everyone else re-associated.

    ``first`` holds the members' greedy choices and ``active`` the links
    already granted outside the group. Each unscheduled member searches on
    its own: it skips the collided device and any device inside the radius
    of the winner or of an active user. Returns ``(winner, choices, cost)``.
    """
    best = None
    for n in group.members:
        links = dict(active)
        links[n] = group.device
        picks = {n: replace(first[n], mode=Mode.WINNER)}
        cost = first[n].objective
        for m in group.members:
            if m == n:
                continue
            ch = _reschedule(m, ctx, group.device, links)
            picks[m] = ch
            cost += ch.objective
        if best is None or cost < best[2]:
            best = (n, picks, cost)
    return best


def collision_cost_noma(group: CollisionGroup, first: Mapping[int, Choice],
                        ctx: SlotContext):
    """All members served together by NOMA; ``None`` if the group is too large."""
    ratios = ctx.control.noma_power_ratios.get(len(group.members))
    if ratios is None:
        return None
    order = sorted(group.members, key=lambda u: (-first[u].gain, u))
    gains = [first[u].gain for u in order]
    rates = noma_rates(gains, ratios, ctx.noise_var, ctx.bandwidth)
    picks, cost = {}, 0.0
    for u, rate in zip(order, rates):
        q = first[u].quality
        a = chunk_arrivals(rate, ctx.coherence_time, ctx.chunk_bits[q])
        g = ctx.objective(u, a, q)
        picks[u] = Choice(u, group.device, q, a, Mode.NOMA, g, first[u].gain)
        cost += g
    return picks, cost


def resolve_group(group: CollisionGroup, first: Mapping[int, Choice], ctx: SlotContext,
                  active: Mapping[int, int]) -> GroupResolution:
    winner, sched, sched_cost = collision_cost_scheduling(group, first, ctx, active)
    noma = collision_cost_noma(group, first, ctx)
    if noma is None or noma[1] > sched_cost:
        return GroupResolution(group, "schedule", sched_cost, sched_cost,
                               None if noma is None else noma[1], winner, sched)
    return GroupResolution(group, "noma", noma[1], sched_cost, noma[1], winner, noma[0])


def resolve_collisions(choices: Sequence[Choice], ctx: SlotContext):
    """Resolve every request collision; returns ``(choices, resolutions)``.

    Groups are handled in device order. Links granted to non-colliding users
    and to earlier groups count as active for the exclusion rule.
    """
    final = {ch.user: ch for ch in choices}
    groups = detect_collisions(choices)
    collided = {u for g in groups for u in g.members}
    active = {ch.user: ch.device for ch in choices if ch.d2d and ch.user not in collided}
    resolutions = []
    for group in groups:
        res = resolve_group(group, final, ctx, active)
        final.update(res.choices)
        active.update({u: ch.device for u, ch in res.choices.items() if ch.d2d})
        resolutions.append(res)
    return [final[ch.user] for ch in choices], resolutions


def baseline_policy(kind: str, candidates: Sequence[Candidate]) -> Candidate | None:
    """Reference association rules.

    ``"max-arrival"`` takes the option with the most chunks; ``"highest-quality"``
    takes the best cached quality and, among equal qualities, the strongest
    channel. Remaining ties go to the lowest device id.
    """
    if not candidates:
        return None
    ordered = sorted(candidates, key=lambda c: (c.device, c.quality))
    if kind == "max-arrival":
        return max(ordered, key=lambda c: c.arrivals)
    if kind == "highest-quality":
        return max(ordered, key=lambda c: (c.quality, c.gain))
    raise ValueError(f"unknown baseline {kind!r}")


def resolve_collisions_baseline(choices: Sequence[Choice], ctx: SlotContext) -> list[Choice]:
    """The strongest-channel member keeps the device; the others use the base station."""
    final = {ch.user: ch for ch in choices}
    for group in detect_collisions(choices):
        winner = max(group.members, key=lambda u: (final[u].gain, -u))
        final[winner] = replace(final[winner], mode=Mode.WINNER)
        for u in group.members:
            if u != winner:
                final[u] = ctx.bs_choice(u)
    return [final[ch.user] for ch in choices]
