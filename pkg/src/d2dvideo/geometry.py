"""Spatial scenario: PPP devices, the user grid and Rayleigh links."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import ConfigError
from .placement.packing import CacheLayout

__all__ = [
    "ScenarioSpec",
    "Scenario",
    "DeviceRealization",
    "ChannelSample",
    "CandidateTable",
    "grid_positions",
    "sample_ppp",
    "sample_scenario",
    "sample_channel",
    "link_rate",
    "candidate_devices",
    "excluded_by_active",
    "candidate_table",
]


@dataclass(frozen=True)
class ScenarioSpec:
    region: tuple[float, float] = (100.0, 100.0)
    grid_shape: tuple[int, int] = (3, 3)
    spacing: float = 20.0
    device_intensity: float = 0.2
    user_positions: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not (self.region[0] > 0 and self.region[1] > 0):
            raise ConfigError("region must have positive area")
        if self.device_intensity < 0:
            raise ConfigError("device_intensity must be nonnegative")

    @property
    def area(self) -> float:
        return float(self.region[0] * self.region[1])

    def users(self) -> np.ndarray:
        if self.user_positions is not None:
            pos = np.asarray(self.user_positions, dtype=float).reshape(-1, 2)
        else:
            pos = grid_positions(self.grid_shape, self.spacing, self.region)
        w, h = self.region
        if np.any(pos < 0) or np.any(pos[:, 0] > w) or np.any(pos[:, 1] > h):
            raise ConfigError("user positions must lie inside the region")
        return pos


@dataclass(frozen=True)
class DeviceRealization:
    position: tuple[float, float]
    cached: frozenset[tuple[int, int]]


@dataclass(frozen=True)
class ChannelSample:
    distance: float
    fast_fade: float
    gain: float


def grid_positions(shape, spacing, region) -> np.ndarray:
    """Users on a ``rows x cols`` grid with the given spacing, centred in the region."""
    rows, cols = shape
    xs = (np.arange(cols) - (cols - 1) / 2) * spacing + region[0] / 2
    ys = (np.arange(rows) - (rows - 1) / 2) * spacing + region[1] / 2
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def sample_ppp(intensity: float, region, rng: np.random.Generator) -> np.ndarray:
    w, h = region
    if not (w > 0 and h > 0):
        raise ConfigError("region must have positive area")
    n = rng.poisson(intensity * w * h)
    return rng.uniform((0.0, 0.0), (w, h), size=(n, 2))


@dataclass(frozen=True)
class Scenario:
    region: tuple[float, float]
    device_pos: np.ndarray
    device_cache: np.ndarray  # bool (D, F, Q)
    user_pos: np.ndarray
    requests: np.ndarray
    seed: int

    @property
    def device_count(self) -> int:
        return int(self.device_pos.shape[0])

    @property
    def user_count(self) -> int:
        return int(self.user_pos.shape[0])

    @property
    def devices(self) -> list[DeviceRealization]:
        out = []
        for pos, cache in zip(self.device_pos, self.device_cache):
            cached = frozenset((int(i), int(q)) for i, q in zip(*np.nonzero(cache)))
            out.append(DeviceRealization((float(pos[0]), float(pos[1])), cached))
        return out

    @property
    def users(self) -> list[tuple[tuple[float, float], int]]:
        return [((float(x), float(y)), int(i)) for (x, y), i in zip(self.user_pos, self.requests)]

    def to_json(self) -> str:
        F, Q = self.device_cache.shape[1:]
        return json.dumps({
            "region": list(self.region),
            "seed": self.seed,
            "files": F,
            "levels": Q,
            "devices": [
                {"x": float(p[0]), "y": float(p[1]),
                 "cached": [[int(i), int(q)] for i, q in zip(*np.nonzero(c))]}
                for p, c in zip(self.device_pos, self.device_cache)
            ],
            "users": [{"x": float(p[0]), "y": float(p[1]), "file": int(i)}
                      for p, i in zip(self.user_pos, self.requests)],
        })

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        data = json.loads(text)
        F, Q = data["files"], data["levels"]
        devs = data["devices"]
        cache = np.zeros((len(devs), F, Q), dtype=bool)
        for d, dev in enumerate(devs):
            for i, q in dev["cached"]:
                cache[d, i, q] = True
        return cls(
            region=tuple(data["region"]),
            device_pos=np.array([[d["x"], d["y"]] for d in devs], dtype=float).reshape(-1, 2),
            device_cache=cache,
            user_pos=np.array([[u["x"], u["y"]] for u in data["users"]], dtype=float),
            requests=np.array([u["file"] for u in data["users"]], dtype=int),
            seed=int(data["seed"]),
        )


def sample_scenario(spec: ScenarioSpec, layout: CacheLayout, popularity,
                    seed: int) -> Scenario:
    """Draw devices, their caches and the users' requested files."""
    rng = np.random.default_rng(seed)
    users = spec.users()
    devices = sample_ppp(spec.device_intensity, spec.region, rng)
    cache = layout.realize_many(rng.uniform(size=devices.shape[0]))
    popularity = np.asarray(popularity, dtype=float)
    requests = rng.choice(popularity.size, size=users.shape[0], p=popularity)
    return Scenario(tuple(map(float, spec.region)), devices, cache, users, requests, int(seed))


def sample_channel(distance: float, rng: np.random.Generator) -> ChannelSample:
    if not distance > 0:
        raise ValueError("distance must be positive")
    fade = float(rng.exponential())
    return ChannelSample(float(distance), fade, fade / distance ** 2)


def link_rate(gain, noise_var, bandwidth):
    return bandwidth * np.log2(1.0 + np.asarray(gain, dtype=float) / noise_var)


def excluded_by_active(device_xy, active_xy, radius) -> bool:
    """True if a new link from ``device_xy`` would land inside an active user's radius."""
    active_xy = np.asarray(active_xy, dtype=float).reshape(-1, 2)
    if active_xy.size == 0:
        return False
    d2 = ((active_xy - np.asarray(device_xy, dtype=float)) ** 2).sum(axis=1)
    return bool(np.any(d2 <= radius * radius))


def candidate_devices(user: int, scenario: Scenario, radius: float,
                      active_links: Mapping[int, int] | None = None) -> list[tuple[int, int]]:
    """(device, quality) options for ``user``'s requested file within ``radius``.

    ``active_links`` maps already-downloading users to their devices; a device
    inside the radius of any of them (other than ``user``) is excluded, except
    the user's own current device.
    """
    active_links = dict(active_links or {})
    own = active_links.pop(user, None)
    others = np.array([scenario.user_pos[m] for m in active_links], dtype=float).reshape(-1, 2)
    d2 = ((scenario.device_pos - scenario.user_pos[user]) ** 2).sum(axis=1)
    file = int(scenario.requests[user])
    out = []
    for d in np.flatnonzero(d2 <= radius * radius):
        if d != own and excluded_by_active(scenario.device_pos[d], others, radius):
            continue
        for q in np.flatnonzero(scenario.device_cache[d, file]):
            out.append((int(d), int(q)))
    return out


@dataclass(frozen=True)
class CandidateTable:
    """Flat per-user candidate entries, grouped by user, sorted by (device, quality).

    ``pair`` indexes the distinct (user, device) links so that one fading draw
    serves every quality cached on the same device.
    """

    user: np.ndarray
    device: np.ndarray
    quality: np.ndarray
    pair: np.ndarray
    pair_dist2: np.ndarray
    starts: np.ndarray  # per user, offset of first entry
    counts: np.ndarray  # per user, number of entries

    @property
    def size(self) -> int:
        return int(self.user.size)


def candidate_table(scenario: Scenario, radius: float) -> CandidateTable:
    users, devices, quals, pairs, dist2 = [], [], [], [], []
    counts = np.zeros(scenario.user_count, dtype=int)
    n_pair = 0
    for n in range(scenario.user_count):
        for d, q in candidate_devices(n, scenario, radius):
            if not devices or users[-1] != n or devices[-1] != d:
                dist2.append(float(((scenario.device_pos[d] - scenario.user_pos[n]) ** 2).sum()))
                n_pair += 1
            users.append(n)
            devices.append(d)
            quals.append(q)
            pairs.append(n_pair - 1)
            counts[n] += 1
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    as_int = lambda xs: np.asarray(xs, dtype=int)
    return CandidateTable(as_int(users), as_int(devices), as_int(quals), as_int(pairs),
                          np.asarray(dist2, dtype=float), starts, counts)
