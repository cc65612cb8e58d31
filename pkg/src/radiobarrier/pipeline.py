"""From raw RSSI streams to detected passages, estimates and feature vectors.

Detection is threshold-with-hysteresis against a rolling per-link baseline:
a segment opens when any link falls drop_threshold below its baseline and
closes once every link has recovered to within release_threshold.  Baselines
are medians over a trailing window of vehicle-free samples and freeze while
a segment is open, so the trough itself never contaminates them.
"""
from __future__ import annotations

import csv
import statistics
from collections import deque
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, EstimationError, InputDataError
from .geometry import LABELS, SensorLayout, VehicleSpec
from .propagation import AntennaPattern, ChannelConfig
from .simulator import (
    Dataset,
    RssiSampleFrame,
    SimulationConfig,
    generate_dataset,
)


@dataclass(frozen=True)
class DetectionConfig:
    drop_threshold: float = 6.0  # dB below baseline that opens a segment
    release_threshold: float = 3.0  # dB; all links must recover to close
    min_duration: float = 0.05  # s, shorter segments are discarded
    baseline_window: float = 0.5  # s of quiet samples behind the median

    def __post_init__(self) -> None:
        if not 0 < self.release_threshold < self.drop_threshold:
            raise ConfigurationError("need 0 < release_threshold < drop_threshold")
        if self.min_duration < 0 or self.baseline_window <= 0:
            raise ConfigurationError("durations must be positive")


@dataclass(frozen=True)
class LinkWindow:
    link_id: int
    onset_t: float
    release_t: float


@dataclass(frozen=True)
class EventSegment:
    t_start: float
    t_end: float
    dt: float
    baselines: Tuple[float, ...]  # per link, layout order, frozen at onset
    traces: Tuple[Tuple[float, ...], ...]  # per link slice over [t_start, t_end]
    times: Tuple[float, ...]
    windows: Tuple[LinkWindow, ...]  # only links that crossed the drop threshold

    def window_for(self, link_id: int) -> Optional[LinkWindow]:
        for w in self.windows:
            if w.link_id == link_id:
                return w
        return None


def detect_events(
    frames: Sequence[RssiSampleFrame],
    layout: SensorLayout,
    cfg: DetectionConfig = DetectionConfig(),
) -> List[EventSegment]:
    """Segment a time-ordered uniform stream into vehicle passages."""
    if len(frames) < 2:
        raise InputDataError("stream too short to establish a baseline")
    dt = frames[1].t - frames[0].t
    if dt <= 0:
        raise InputDataError("stream must be time-ordered with positive dt")
    if cfg.min_duration < dt:
        raise ConfigurationError(
            f"min_duration {cfg.min_duration} s is below the stream dt {dt} s"
        )
    n_links = len(layout.links)
    window = max(2, int(round(cfg.baseline_window / dt)))
    if len(frames) < window:
        raise InputDataError(
            f"stream of {len(frames)} samples is shorter than the "
            f"{window}-sample baseline window"
        )

    quiet: List[deque] = [deque(maxlen=window) for _ in range(n_links)]
    segments: List[EventSegment] = []
    open_start: Optional[int] = None
    open_baselines: Optional[Tuple[float, ...]] = None

    def close(end_index: int) -> None:
        nonlocal open_start, open_baselines
        seg = _build_segment(frames, open_start, end_index, dt, open_baselines, layout, cfg)
        if seg.t_end - seg.t_start >= cfg.min_duration:
            segments.append(seg)
        open_start = None
        open_baselines = None

    for i, frame in enumerate(frames):
        if open_start is None:
            seeded = all(len(q) == window for q in quiet)
            if seeded:
                baselines = tuple(statistics.median(q) for q in quiet)
                if any(
                    frame.values[j] <= baselines[j] - cfg.drop_threshold
                    for j in range(n_links)
                ):
                    open_start = i
                    open_baselines = baselines
                    continue
            for j in range(n_links):
                quiet[j].append(frame.values[j])
        else:
            recovered = all(
                frame.values[j] >= open_baselines[j] - cfg.release_threshold
                for j in range(n_links)
            )
            if recovered:
                close(i)
                for j in range(n_links):
                    quiet[j].append(frame.values[j])
    if open_start is not None:
        close(len(frames) - 1)
    return segments


def _build_segment(frames, start, end, dt, baselines, layout, cfg) -> EventSegment:
    times = tuple(frames[i].t for i in range(start, end + 1))
    traces = tuple(
        tuple(frames[i].values[j] for i in range(start, end + 1))
        for j in range(len(layout.links))
    )
    windows = []
    for j, link in enumerate(layout.links):
        onset = None
        last_below_release = None
        for k, v in enumerate(traces[j]):
            if onset is None and v <= baselines[j] - cfg.drop_threshold:
                onset = times[k]
            if v <= baselines[j] - cfg.release_threshold:
                last_below_release = times[k]
        if onset is not None and last_below_release is not None:
            windows.append(LinkWindow(link.id, onset, last_below_release + dt))
    return EventSegment(
        t_start=times[0],
        t_end=times[-1],
        dt=dt,
        baselines=baselines,
        traces=traces,
        times=times,
        windows=tuple(windows),
    )


def estimate_speed(segment: EventSegment, layout: SensorLayout) -> float:
    """Speed from onset-time differences between direct links.

    Averages delta_x / delta_onset over all pairs of direct links with
    distinct along-road positions; releases are ignored because they carry
    the vehicle length.
    """
    direct = []
    for link in layout.direct_links:
        w = segment.window_for(link.id)
        if w is not None:
            direct.append((link.endpoints[0][0], w.onset_t))
    if len({x for x, _ in direct}) < 2:
        raise EstimationError("need onsets on at least two direct links at distinct positions")
    speeds = []
    for (xa, ta), (xb, tb) in combinations(direct, 2):
        if tb == ta:
            continue
        speeds.append(abs((xb - xa) / (tb - ta)))
    if not speeds:
        raise EstimationError("all direct-link onsets coincide; speed is unresolvable")
    return sum(speeds) / len(speeds)


def estimate_length(segment: EventSegment, speed: float, layout: SensorLayout) -> float:
    """Vehicle length from occlusion durations on direct links.

    Direct links cross the road at a single along-road position, so their
    occlusion window needs no body-width correction.
    """
    if speed <= 0:
        raise EstimationError("speed must be positive")
    durations = []
    for link in layout.direct_links:
        w = segment.window_for(link.id)
        if w is not None:
            durations.append(w.release_t - w.onset_t)
    if not durations:
        raise EstimationError("no direct-link occlusion window available")
    return speed * sum(durations) / len(durations)


def drop_magnitude(trace: Sequence[float], baseline: float) -> float:
    """Depth of the deepest dip below baseline, in dB, clamped at 0."""
    if len(trace) == 0:
        raise InputDataError("empty trace slice")
    return max(0.0, baseline - min(trace))


def event_drop_magnitude(segment: EventSegment, layout: SensorLayout,
                         links_used: str = "direct") -> float:
    """Per-event drop: largest per-link drop over the cross-street links."""
    indices = _link_indices(layout, links_used)
    return max(drop_magnitude(segment.traces[j], segment.baselines[j]) for j in indices)


def _link_indices(layout: SensorLayout, links_used: str) -> List[int]:
    if links_used == "all":
        return list(range(len(layout.links)))
    if links_used == "direct":
        return [j for j, l in enumerate(layout.links) if l.kind == "direct"]
    raise ConfigurationError(f"unknown link selection {links_used!r}")


@dataclass(frozen=True)
class FeatureConfig:
    resample_points: int = 32
    links_used: str = "all"  # 'all' | 'direct'
    include_length: bool = True
    include_rssi: bool = True

    def __post_init__(self) -> None:
        if self.resample_points < 2:
            raise ConfigurationError("resample_points must be at least 2")
        if not (self.include_length or self.include_rssi):
            raise ConfigurationError("at least one feature family must be enabled")


@dataclass(frozen=True)
class FeatureVector:
    event_id: int
    type_name: str
    label: str
    est_speed: float
    est_length: float
    drop_magnitude: float
    rssi_profile: Tuple[float, ...]


def feature_dimension(cfg: FeatureConfig, layout: SensorLayout) -> int:
    """Classifier input width implied by a feature configuration."""
    dim = 0
    if cfg.include_rssi:
        dim += cfg.resample_points * len(_link_indices(layout, cfg.links_used))
    if cfg.include_length:
        dim += 1
    return dim


def extract_features(
    segment: EventSegment,
    speed: float,
    length: float,
    cfg: FeatureConfig,
    layout: SensorLayout,
    *,
    event_id: int = 0,
    type_name: str = "",
    label: str = "",
) -> FeatureVector:
    """Resample per-link drop profiles onto a fixed grid and attach scalars.

    Each link's baseline-relative drop series is linearly interpolated onto
    resample_points equally spaced instants of [t_start, t_end] and the links
    are concatenated in id order, so the dimensionality depends only on the
    configuration, never on the segment duration.
    """
    if segment.t_end <= segment.t_start:
        raise InputDataError("degenerate zero-duration segment")
    profile: List[float] = []
    if cfg.include_rssi:
        grid = np.linspace(segment.t_start, segment.t_end, cfg.resample_points)
        times = np.asarray(segment.times)
        for j in _link_indices(layout, cfg.links_used):
            drops = np.maximum(0.0, segment.baselines[j] - np.asarray(segment.traces[j]))
            profile.extend(float(x) for x in np.interp(grid, times, drops))
    return FeatureVector(
        event_id=event_id,
        type_name=type_name,
        label=label,
        est_speed=speed,
        est_length=length,
        drop_magnitude=event_drop_magnitude(segment, layout),
        rssi_profile=tuple(profile),
    )


@dataclass(frozen=True)
class DetectionSummary:
    events_total: int = 0
    events_detected: int = 0
    segments_total: int = 0
    spurious_segments: int = 0

    @property
    def detection_rate(self) -> float:
        return self.events_detected / self.events_total if self.events_total else 0.0


def featurize_dataset(
    dataset: Dataset,
    layout: SensorLayout,
    det_cfg: DetectionConfig = DetectionConfig(),
    feat_cfg: FeatureConfig = FeatureConfig(),
) -> Tuple[List[FeatureVector], DetectionSummary]:
    records, summary = detect_dataset(dataset, layout, det_cfg)
    return featurize_records(records, layout, feat_cfg), summary


# ---------------------------------------------------------------------------
# Segment serialization: one header line, then one detected segment per line.

SEGMENTS_FORMAT = "radiobarrier-segments"


@dataclass(frozen=True)
class SegmentRecord:
    """One detected passage with the event metadata needed downstream."""

    event_id: int
    type_name: str
    label: str
    segment: EventSegment
    n_segments: int  # segments detected in the event's stream


def detect_dataset(
    dataset: Dataset,
    layout: SensorLayout,
    det_cfg: DetectionConfig = DetectionConfig(),
) -> Tuple[List[SegmentRecord], DetectionSummary]:
    """Run detection over every event of a dataset."""
    records: List[SegmentRecord] = []
    detected = 0
    segs = 0
    spurious = 0
    for event in dataset.events:
        segments = detect_events(event.frames, layout, det_cfg)
        segs += len(segments)
        if len(segments) > 1:
            spurious += len(segments) - 1
        if segments:
            detected += 1
            segment = max(segments, key=lambda s: s.t_end - s.t_start)
            records.append(
                SegmentRecord(event.event_id, event.type_name, event.label, segment, len(segments))
            )
    summary = DetectionSummary(
        events_total=len(dataset.events),
        events_detected=detected,
        segments_total=segs,
        spurious_segments=spurious,
    )
    return records, summary


def save_segments(records: Sequence[SegmentRecord], path) -> None:
    from .simulator import dumps_compact

    path = Path(path)
    lines = [dumps_compact({"format": SEGMENTS_FORMAT, "version": 1, "count": len(records)})]
    for rec in records:
        seg = rec.segment
        start_index = int(round(seg.t_start / seg.dt))
        lines.append(
            dumps_compact(
                {
                    "event_id": rec.event_id,
                    "type_name": rec.type_name,
                    "label": rec.label,
                    "n_segments": rec.n_segments,
                    "dt": seg.dt,
                    "start_index": start_index,
                    "baselines": list(seg.baselines),
                    "traces": [list(t) for t in seg.traces],
                    "windows": {
                        str(w.link_id): [w.onset_t, w.release_t] for w in seg.windows
                    },
                }
            )
        )
    path.write_text("\n".join(lines) + "\n")


def load_segments(path) -> List[SegmentRecord]:
    import json

    path = Path(path)
    if not path.exists():
        raise InputDataError(f"segments file {path} does not exist")
    lines = path.read_text().splitlines()
    if not lines:
        raise InputDataError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != SEGMENTS_FORMAT:
        raise InputDataError(f"{path} is not a {SEGMENTS_FORMAT} file")
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        raw = json.loads(line)
        dt = raw["dt"]
        i0 = raw["start_index"]
        n = len(raw["traces"][0]) if raw["traces"] else 0
        times = tuple((i0 + k) * dt for k in range(n))
        segment = EventSegment(
            t_start=times[0],
            t_end=times[-1],
            dt=dt,
            baselines=tuple(raw["baselines"]),
            traces=tuple(tuple(t) for t in raw["traces"]),
            times=times,
            windows=tuple(
                LinkWindow(int(link_id), onset, release)
                for link_id, (onset, release) in sorted(
                    raw["windows"].items(), key=lambda kv: int(kv[0])
                )
            ),
        )
        records.append(
            SegmentRecord(raw["event_id"], raw["type_name"], raw["label"], segment, raw["n_segments"])
        )
    return records


def featurize_records(
    records: Sequence[SegmentRecord],
    layout: SensorLayout,
    feat_cfg: FeatureConfig = FeatureConfig(),
) -> List[FeatureVector]:
    vectors = []
    for rec in records:
        speed = estimate_speed(rec.segment, layout)
        length = estimate_length(rec.segment, speed, layout)
        vectors.append(
            extract_features(
                rec.segment, speed, length, feat_cfg, layout,
                event_id=rec.event_id, type_name=rec.type_name, label=rec.label,
            )
        )
    return vectors


# ---------------------------------------------------------------------------
# Feature table I/O: comma-separated text with one row per event.

def save_features_csv(vectors: Sequence[FeatureVector], path) -> None:
    path = Path(path)
    dim = len(vectors[0].rssi_profile) if vectors else 0
    header = ["event_id", "type_name", "label", "est_speed", "est_length", "drop_magnitude"]
    header += [f"f_{i}" for i in range(dim)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for fv in vectors:
            row = [
                fv.event_id,
                fv.type_name,
                fv.label,
                format(fv.est_speed, ".17g"),
                format(fv.est_length, ".17g"),
                format(fv.drop_magnitude, ".17g"),
            ]
            row += [format(x, ".17g") for x in fv.rssi_profile]
            writer.writerow(row)


def load_features_csv(path) -> List[FeatureVector]:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"feature table {path} does not exist")
    vectors = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputDataError(f"{path} is empty") from None
        expected = ["event_id", "type_name", "label", "est_speed", "est_length", "drop_magnitude"]
        if header[: len(expected)] != expected:
            raise InputDataError(f"{path} is not a feature table")
        for row in reader:
            if not row:
                continue
            vectors.append(
                FeatureVector(
                    event_id=int(row[0]),
                    type_name=row[1],
                    label=row[2],
                    est_speed=float(row[3]),
                    est_length=float(row[4]),
                    drop_magnitude=float(row[5]),
                    rssi_profile=tuple(float(x) for x in row[6:]),
                )
            )
    return vectors


def feature_matrix(vectors: Sequence[FeatureVector], feature_set: str) -> np.ndarray:
    """Assemble the classifier input for one of the three feature sets."""
    if feature_set == "length":
        return np.array([[fv.est_length] for fv in vectors])
    if feature_set == "rssi":
        return np.array([fv.rssi_profile for fv in vectors])
    if feature_set == "both":
        return np.array([list(fv.rssi_profile) + [fv.est_length] for fv in vectors])
    raise ConfigurationError(f"unknown feature set {feature_set!r}")


# ---------------------------------------------------------------------------
# Ground-reflection study: per-class drop statistics with reflection on/off.

@dataclass(frozen=True)
class ClassDropStats:
    label: str
    count: int
    mean: float
    std: float
    min: float
    max: float


@dataclass(frozen=True)
class StudyResult:
    stats: Dict[str, Dict[str, ClassDropStats]]  # variant -> label -> stats
    gaps: Dict[str, float]  # variant -> mean(passenger_car) - mean(truck)
    drops: Dict[str, List[Tuple[int, str, float]]]  # variant -> (event, label, drop)


def dataset_drop_stats(
    dataset: Dataset,
    layout: SensorLayout,
    det_cfg: DetectionConfig = DetectionConfig(),
    links_used: str = "direct",
) -> Tuple[Dict[str, ClassDropStats], List[Tuple[int, str, float]]]:
    """Per-class drop magnitude statistics over the selected links."""
    drops: List[Tuple[int, str, float]] = []
    for event in dataset.events:
        segments = detect_events(event.frames, layout, det_cfg)
        if not segments:
            continue
        segment = max(segments, key=lambda s: s.t_end - s.t_start)
        drops.append((event.event_id, event.label, event_drop_magnitude(segment, layout, links_used)))
    present = {label for _, label, _ in drops}
    if not all(label in present for label in LABELS):
        raise InputDataError("drop study needs events of both labels")
    stats = {}
    for label in LABELS:
        values = [d for _, lab, d in drops if lab == label]
        stats[label] = ClassDropStats(
            label=label,
            count=len(values),
            mean=float(np.mean(values)),
            std=float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            min=float(np.min(values)),
            max=float(np.max(values)),
        )
    return stats, drops


def reflection_study(
    layout: SensorLayout,
    channel: ChannelConfig,
    patterns: Mapping[int, AntennaPattern],
    catalog: Mapping[str, VehicleSpec],
    mix: Mapping[str, int],
    sim: SimulationConfig,
    seed: int,
    det_cfg: DetectionConfig = DetectionConfig(),
    links_used: str = "direct",
) -> StudyResult:
    """Compare per-class drop magnitudes with the ground bounce on and off.

    Both variants are generated from the same seed so they differ only in
    the reflected ray.
    """
    stats: Dict[str, Dict[str, ClassDropStats]] = {}
    gaps: Dict[str, float] = {}
    drops: Dict[str, List[Tuple[int, str, float]]] = {}
    for variant, enabled in (("on", True), ("off", False)):
        chan = replace(channel, ground_reflection_enabled=enabled)
        dataset = generate_dataset(layout, chan, patterns, catalog, mix, sim, seed=seed)
        variant_stats, variant_drops = dataset_drop_stats(dataset, layout, det_cfg, links_used)
        stats[variant] = variant_stats
        drops[variant] = variant_drops
        gaps[variant] = variant_stats["passenger_car"].mean - variant_stats["truck"].mean
    return StudyResult(stats=stats, gaps=gaps, drops=drops)
