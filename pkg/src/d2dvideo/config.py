"""Run configuration: a TOML file with one table per parameter group.

Missing keys fall back to the bundled ``default.toml``. See the README for
the full key list.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geometry import ScenarioSpec
from .model import (Catalog, ConfigError, ControlParams, QualityProfile, RadioParams,
                    snr_db_to_noise_var)

__all__ = ["PlacementOptions", "SimulationOptions", "SweepAxes", "RunConfig",
           "default_config_dict", "load_config", "config_from_dict", "POLICIES"]

POLICIES = ("proposed", "max-arrival", "highest-quality")


@dataclass(frozen=True)
class PlacementOptions:
    storage: float = 6.0
    tolerance: float = 1e-6
    max_iter: int = 200
    quality_scale: str = "linear"
    log_base: float = 2.0


@dataclass(frozen=True)
class SimulationOptions:
    slots: int = 10_000
    seeds: tuple[int, ...] = tuple(range(20))
    policy: str = "proposed"
    warmup_fraction: float = 0.5
    trace_stride: int = 1
    bs_mode: str = "lenient"
    session_slots: int | None = None
    block_slots: int = 1024


@dataclass(frozen=True)
class SweepAxes:
    device_intensity: tuple[float, ...] = ()
    coverage_radius: tuple[float, ...] = ()
    quality_weight: tuple[float, ...] = ()
    snr_db: tuple[float, ...] = ()
    storage: tuple[float, ...] = ()
    policies: tuple[str, ...] = POLICIES
    proposed_weights: tuple[float, ...] = ()

    def axes(self) -> dict[str, tuple[float, ...]]:
        names = ("device_intensity", "coverage_radius", "quality_weight", "snr_db")
        return {n: getattr(self, n) for n in names if getattr(self, n)}


@dataclass(frozen=True)
class RunConfig:
    catalog: Catalog
    profile: QualityProfile
    radio: RadioParams
    snr_db: float
    control: ControlParams
    placement: PlacementOptions
    region: tuple[float, float]
    grid_shape: tuple[int, int]
    spacing: float
    user_positions: tuple[tuple[float, float], ...] | None
    simulation: SimulationOptions
    sweep: SweepAxes
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def scenario_spec(self) -> ScenarioSpec:
        return ScenarioSpec(self.region, self.grid_shape, self.spacing,
                            self.radio.device_intensity, self.user_positions)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_param(self, name: str, value) -> "RunConfig":
        """Copy with one swept parameter changed (re-validated)."""
        data = copy.deepcopy(self.raw)
        section, key = _PARAM_KEYS[name]
        data[section][key] = value
        return config_from_dict(data)


_PARAM_KEYS = {
    "device_intensity": ("radio", "device_intensity"),
    "coverage_radius": ("radio", "coverage_radius"),
    "quality_weight": ("control", "quality_weight"),
    "snr_db": ("radio", "snr_db"),
    "storage": ("placement", "storage"),
    "policy": ("simulation", "policy"),
    "slots": ("simulation", "slots"),
    "bs_mode": ("simulation", "bs_mode"),
}


def default_config_dict() -> dict:
    text = resources.files("d2dvideo").joinpath("data/default.toml").read_text()
    return tomllib.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return config_from_dict({})
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def _floats(values, name) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    d = _merge(default_config_dict(), data)
    try:
        cat, qual, rad, ctl = d["catalog"], d["quality"], d["radio"], d["control"]
        plc, scn, sim, swp = d["placement"], d["scenario"], d["simulation"], d["sweep"]

        catalog = Catalog(int(cat["file_count"]), float(cat["zipf_exponent"]))
        profile = QualityProfile(
            measure_db=_floats(qual["measure_db"], "measure_db"),
            chunk_bits=tuple(1000.0 * k for k in _floats(qual["chunk_kbits"], "chunk_kbits")),
            storage_size=_floats(qual["storage_size"], "storage_size"),
        )
        threshold = rad.get("rate_threshold", "bandwidth")
        radio = RadioParams(
            bandwidth=float(rad["bandwidth_hz"]),
            noise_var=snr_db_to_noise_var(float(rad["snr_db"])),
            device_intensity=float(rad["device_intensity"]),
            coverage_radius=float(rad["coverage_radius"]),
            coherence_time=float(rad["coherence_time_s"]),
            chunks_per_slot=int(rad["chunks_per_slot"]),
            rate_threshold=None if threshold == "bandwidth" else threshold,
        )
        ratios = {int(k): tuple(v) for k, v in ctl.get("noma_power_ratios", {}).items()}
        control = ControlParams(float(ctl["quality_weight"]), float(ctl["queue_target"]),
                                ratios)
        placement = PlacementOptions(
            storage=float(plc["storage"]), tolerance=float(plc["tolerance"]),
            max_iter=int(plc["max_iter"]), quality_scale=str(plc["quality_scale"]),
            log_base=math.e if plc["log_base"] == "e" else float(plc["log_base"]),
        )
        positions = scn.get("user_positions")
        simulation = SimulationOptions(
            slots=int(sim["slots"]), seeds=tuple(int(s) for s in sim["seeds"]),
            policy=str(sim["policy"]), warmup_fraction=float(sim["warmup_fraction"]),
            trace_stride=int(sim["trace_stride"]), bs_mode=str(sim["bs_mode"]),
            session_slots=int(sim["session_slots"]) if sim.get("session_slots") else None,
            block_slots=int(sim.get("block_slots", 1024)),
        )
        sweep = SweepAxes(
            device_intensity=_floats(swp.get("device_intensity", []), "device_intensity"),
            coverage_radius=_floats(swp.get("coverage_radius", []), "coverage_radius"),
            quality_weight=_floats(swp.get("quality_weight", []), "quality_weight"),
            snr_db=_floats(swp.get("snr_db", []), "snr_db"),
            storage=_floats(swp.get("storage", []), "storage"),
            policies=tuple(swp.get("policies", POLICIES)),
            proposed_weights=_floats(swp.get("proposed_weights", []), "proposed_weights"),
        )
        cfg = RunConfig(
            catalog=catalog, profile=profile, radio=radio, snr_db=float(rad["snr_db"]),
            control=control, placement=placement,
            region=tuple(_floats(scn["region"], "region")),
            grid_shape=tuple(int(v) for v in scn["grid_shape"]),
            spacing=float(scn["spacing"]),
            user_positions=tuple(tuple(map(float, p)) for p in positions) if positions else None,
            simulation=simulation, sweep=sweep, raw=d,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    sim = cfg.simulation
    if sim.slots < 1:
        raise ConfigError("simulation.slots must be >= 1")
    if not sim.seeds:
        raise ConfigError("simulation.seeds must not be empty")
    if sim.policy not in POLICIES:
        raise ConfigError(f"unknown policy {sim.policy!r}; choose from {POLICIES}")
    if sim.bs_mode not in ("lenient", "strict"):
        raise ConfigError("simulation.bs_mode must be 'lenient' or 'strict'")
    if not 0 <= sim.warmup_fraction < 1:
        raise ConfigError("simulation.warmup_fraction must lie in [0, 1)")
    if sim.trace_stride < 1 or sim.block_slots < 1:
        raise ConfigError("trace_stride and block_slots must be >= 1")
    if cfg.placement.quality_scale not in ("linear", "db"):
        raise ConfigError("placement.quality_scale must be 'linear' or 'db'")
    if not cfg.placement.log_base > 1:
        raise ConfigError("placement.log_base must exceed 1")
    bad = [p for p in cfg.sweep.policies if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown sweep policies {bad}")
    cfg.scenario_spec.users()
