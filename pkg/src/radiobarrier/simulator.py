"""Time-stepped generation of labelled multi-link RSSI traces.

Every passage is fully determined by (configs, seed): speeds, lane offsets
and per-sample noise all flow from a per-event seed derived from the dataset
seed and the event id, so datasets regenerate bit-identically and events can
be simulated in any order or in parallel.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InputDataError
from .geometry import Pose, SensorLayout, VehicleSpec
from .propagation import AntennaPattern, ChannelConfig, LinkContext, build_link_context, noiseless_rssi

FORMAT_NAME = "radiobarrier-dataset"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 0.01  # s
    speed_range: Tuple[float, float] = (5.0, 20.0)  # m/s, default for all types
    speed_overrides: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    lane_jitter: float = 0.5  # m around the road centre
    seed: int = 0
    pre_roll: float = 1.0  # s of vehicle-free samples before the passage
    post_roll: float = 1.0  # s after it

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        for lo, hi in [self.speed_range, *self.speed_overrides.values()]:
            if lo <= 0 or hi < lo:
                raise ConfigurationError("speed ranges must be positive and ordered")
        if self.lane_jitter < 0 or self.pre_roll < 0 or self.post_roll < 0:
            raise ConfigurationError("jitter and roll times must be non-negative")

    def speeds_for(self, type_name: str) -> Tuple[float, float]:
        return self.speed_overrides.get(type_name, self.speed_range)


@dataclass(frozen=True)
class RssiSampleFrame:
    t: float
    values: Tuple[float, ...]  # one dBm value per layout link, in link order


@dataclass(frozen=True)
class PassageEvent:
    event_id: int
    type_name: str
    label: str
    true_speed: float
    true_length: float
    lane_y: float
    frames: Tuple[RssiSampleFrame, ...]
    fingerprint: str

    @property
    def dt(self) -> float:
        if len(self.frames) < 2:
            return 0.0
        return self.frames[1].t - self.frames[0].t


@dataclass(frozen=True)
class Dataset:
    events: Tuple[PassageEvent, ...]
    metadata: Dict


def config_fingerprint(layout: SensorLayout, channel: ChannelConfig,
                       patterns: Mapping[int, AntennaPattern], sim: SimulationConfig) -> str:
    """Stable hash of everything that shapes a trace, for provenance checks."""
    blob = json.dumps(
        {
            "layout": {
                "nodes": [(n.id, n.role, n.position) for n in layout.nodes],
                "links": [(l.id, l.tx_id, l.rx_id, l.kind) for l in layout.links],
                "road_width": layout.road_width,
                "array_length": layout.array_length,
            },
            "channel": {
                "frequency": channel.frequency,
                "tx_power": channel.tx_power,
                "ground_reflection": channel.ground_reflection_enabled,
                "reflection_magnitude": channel.reflection_magnitude,
                "reflection_phase": channel.reflection_phase,
                "noise_sigma": channel.noise_sigma,
                "rssi_floor": channel.rssi_floor,
            },
            "patterns": {
                str(node_id): (p.kind, p.peak_gain, p.boresight_azimuth, p.downtilt,
                               p.azimuth_beamwidth, p.elevation_beamwidth)
                for node_id, p in sorted(patterns.items())
            },
            "sim": {
                "dt": sim.dt,
                "speed_range": sim.speed_range,
                "speed_overrides": {k: list(v) for k, v in sorted(sim.speed_overrides.items())},
                "lane_jitter": sim.lane_jitter,
                "pre_roll": sim.pre_roll,
                "post_roll": sim.post_roll,
            },
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _link_contexts(layout: SensorLayout, channel: ChannelConfig,
                   patterns: Mapping[int, AntennaPattern]) -> Tuple[LinkContext, ...]:
    return tuple(build_link_context(link, channel, patterns) for link in layout.links)


def baseline_rssi(layout: SensorLayout, channel: ChannelConfig,
                  patterns: Mapping[int, AntennaPattern]) -> Tuple[float, ...]:
    """Noiseless vehicle-free RSSI per link, in link order."""
    return tuple(max(ctx.clear_db, channel.rssi_floor)
                 for ctx in _link_contexts(layout, channel, patterns))


def simulate_passage(
    layout: SensorLayout,
    channel: ChannelConfig,
    patterns: Mapping[int, AntennaPattern],
    vehicle: VehicleSpec,
    speed: float,
    lane_y: float,
    seed,
    sim: SimulationConfig = SimulationConfig(),
    event_id: int = 0,
    fingerprint: str = "",
) -> PassageEvent:
    """Drive one vehicle through the array and sample every link.

    The nose starts pre_roll seconds before the first post and the run ends
    post_roll seconds after the tail clears the last post.  `seed` is
    anything numpy's default_rng accepts, including an existing generator.
    """
    if speed <= 0:
        raise ConfigurationError("speed must be positive")
    if not (0.0 < lane_y and lane_y + vehicle.width < layout.road_width):
        raise ConfigurationError(
            f"vehicle of width {vehicle.width} m at lane_y={lane_y} m does not fit the "
            f"{layout.road_width} m road"
        )

    contexts = _link_contexts(layout, channel, patterns)
    total_time = sim.pre_roll + (layout.array_length + vehicle.total_length) / speed + sim.post_roll
    n_frames = int(math.ceil(total_time / sim.dt)) + 1
    n_links = len(contexts)

    rng = np.random.default_rng(seed)
    if channel.noise_sigma > 0:
        noise = rng.normal(0.0, channel.noise_sigma, size=(n_frames, n_links))
    else:
        noise = None

    start_x = -sim.pre_roll * speed
    floor = channel.rssi_floor
    frames = []
    for i in range(n_frames):
        t = i * sim.dt
        pose = Pose(front_x=start_x + speed * t, lane_y=lane_y)
        values = []
        for j, ctx in enumerate(contexts):
            v = noiseless_rssi(ctx, vehicle, pose)
            if noise is not None:
                v += noise[i, j]
            values.append(v if v > floor else floor)
        frames.append(RssiSampleFrame(t, tuple(values)))

    return PassageEvent(
        event_id=event_id,
        type_name=vehicle.type_name,
        label=vehicle.label,
        true_speed=speed,
        true_length=vehicle.total_length,
        lane_y=lane_y,
        frames=tuple(frames),
        fingerprint=fingerprint,
    )


def _event_rng(seed: int, event_id: int) -> np.random.Generator:
    # Event id folded into the seed sequence keeps events independent of the
    # generation order and of how many other events exist.
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(event_id)]))


def _simulate_event_task(args) -> PassageEvent:
    layout, channel, patterns, vehicle, sim, seed, event_id, fingerprint = args
    rng = _event_rng(seed, event_id)
    lo, hi = sim.speeds_for(vehicle.type_name)
    speed = float(rng.uniform(lo, hi))
    margin = (layout.road_width - vehicle.width) / 2.0
    jitter_cap = min(sim.lane_jitter, max(0.0, margin - 0.05))
    jitter = float(rng.uniform(-jitter_cap, jitter_cap)) if jitter_cap > 0 else 0.0
    lane_y = margin + jitter
    return simulate_passage(
        layout, channel, patterns, vehicle, speed, lane_y, rng, sim,
        event_id=event_id, fingerprint=fingerprint,
    )


def generate_dataset(
    layout: SensorLayout,
    channel: ChannelConfig,
    patterns: Mapping[int, AntennaPattern],
    catalog: Mapping[str, VehicleSpec],
    mix: Mapping[str, int],
    sim: SimulationConfig,
    seed: Optional[int] = None,
    jobs: int = 1,
) -> Dataset:
    """Simulate `mix[type]` passages per vehicle type into one dataset.

    Results are byte-identical for any `jobs` value because every event owns
    a seed derived from (seed, event_id).
    """
    if seed is None:
        seed = sim.seed
    counts = {t: int(mix.get(t, 0)) for t in catalog}
    unknown = set(mix) - set(catalog)
    if unknown:
        raise ConfigurationError(f"mix names unknown vehicle types: {sorted(unknown)}")
    if any(c < 0 for c in counts.values()):
        raise ConfigurationError("mix counts must be non-negative")
    if sum(counts.values()) == 0:
        raise ConfigurationError("mix is empty")

    fingerprint = config_fingerprint(layout, channel, patterns, sim)
    tasks = []
    event_id = 1
    for type_name, vehicle in catalog.items():
        for _ in range(counts[type_name]):
            tasks.append((layout, channel, patterns, vehicle, sim, seed, event_id, fingerprint))
            event_id += 1

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            events = list(pool.map(_simulate_event_task, tasks, chunksize=8))
    else:
        events = [_simulate_event_task(t) for t in tasks]
    events.sort(key=lambda e: e.event_id)

    metadata = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "seed": int(seed),
        "mix": {t: counts[t] for t in catalog if counts[t] > 0},
        "fingerprint": fingerprint,
        "dt": sim.dt,
        "link_ids": [l.id for l in layout.links],
        "event_count": len(events),
    }
    return Dataset(events=tuple(events), metadata=metadata)


# ---------------------------------------------------------------------------
# Serialization: one metadata header line, then one event per line.  Floats
# are rendered with 17 significant digits so files reproduce byte-for-byte.

def _fmt(value) -> str:
    if isinstance(value, bool) or value is None or isinstance(value, int):
        return json.dumps(value)
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = sorted(value.items(), key=lambda kv: str(kv[0]))
        return "{" + ",".join(json.dumps(str(k)) + ":" + _fmt(v) for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dumps_compact(value) -> str:
    """Deterministic JSON with 17-significant-digit floats and sorted keys."""
    return _fmt(value)


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    lines = [dumps_compact(dataset.metadata)]
    for ev in dataset.events:
        lines.append(
            dumps_compact(
                {
                    "event_id": ev.event_id,
                    "type_name": ev.type_name,
                    "label": ev.label,
                    "true_speed": ev.true_speed,
                    "true_length": ev.true_length,
                    "lane_y": ev.lane_y,
                    "dt": ev.dt,
                    "fingerprint": ev.fingerprint,
                    "values": [list(f.values) for f in ev.frames],
                }
            )
        )
    path.write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"dataset file {path} does not exist")
    lines = path.read_text().splitlines()
    if not lines:
        raise InputDataError(f"{path} is empty")
    try:
        metadata = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path}: bad metadata line: {exc}") from exc
    if metadata.get("format") != FORMAT_NAME:
        raise InputDataError(f"{path} is not a {FORMAT_NAME} file")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputDataError(f"{path}:{lineno}: bad event line: {exc}") from exc
        dt = raw["dt"]
        frames = tuple(
            RssiSampleFrame(i * dt, tuple(vals)) for i, vals in enumerate(raw["values"])
        )
        events.append(
            PassageEvent(
                event_id=raw["event_id"],
                type_name=raw["type_name"],
                label=raw["label"],
                true_speed=raw["true_speed"],
                true_length=raw["true_length"],
                lane_y=raw["lane_y"],
                frames=frames,
                fingerprint=raw["fingerprint"],
            )
        )
    return Dataset(events=tuple(events), metadata=metadata)
