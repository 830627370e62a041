"""Network-in-the-loop replay: warp, predict, integrate, recover, score."""
from __future__ import annotations

import itertools
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from lanesim.augment import MAX_STEERING
from lanesim.control.controllers import Controller, ControllerSpec, FrameContext, build_controller
from lanesim.data import DriveLog
from lanesim.dynamics import VehicleParams, VehicleState, relative_offset, step
from lanesim.errors import ControllerError, DomainError, LanesimError
from lanesim.geometry import DEFAULT_ENVELOPE, ProjectionSpec, WarpEnvelope, compose_offset_warp
from lanesim.pose import PoseOffset


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop settings. ``dt=None`` uses the log's frame interval."""

    recovery_threshold: float = 1.0
    recovery_time: float = 6.0
    dt: float | None = None
    envelope: WarpEnvelope = DEFAULT_ENVELOPE
    params: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self):
        if not self.recovery_threshold > 0.0:
            raise DomainError("recovery_threshold must be positive")
        if not self.recovery_time > 0.0:
            raise DomainError("recovery_time must be positive")
        if self.recovery_threshold > self.envelope.max_de:
            raise DomainError("recovery_threshold exceeds the warp envelope")

    def to_dict(self) -> dict:
        return {
            "recovery_threshold": self.recovery_threshold,
            "recovery_time": self.recovery_time,
            "dt": self.dt,
            "envelope": {"max_de": self.envelope.max_de, "max_dtheta_deg": math.degrees(self.envelope.max_dtheta)},
            "vehicle": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        env = data.get("envelope", {})
        return cls(
            recovery_threshold=float(data.get("recovery_threshold", 1.0)),
            recovery_time=float(data.get("recovery_time", 6.0)),
            dt=data.get("dt"),
            envelope=WarpEnvelope(
                float(env.get("max_de", DEFAULT_ENVELOPE.max_de)),
                math.radians(float(env.get("max_dtheta_deg", math.degrees(DEFAULT_ENVELOPE.max_dtheta)))),
            ),
            params=VehicleParams.from_dict(data["vehicle"]) if "vehicle" in data else VehicleParams(),
        )


@dataclass
class SequenceResult:
    """Per-frame traces of one closed-loop replay.

    Traces hold the state *after* frame k's step (and after any reset), so
    ``abs_distance`` is 0 on recovery frames.
    """

    name: str
    label: str
    dt: float
    recoveries: int
    abs_distance: np.ndarray
    dtheta: np.ndarray
    recovered: np.ndarray
    human_poses: np.ndarray
    network_poses: np.ndarray
    predicted: np.ndarray
    recorded: np.ndarray
    recovery_time: float = 6.0

    @property
    def frames(self) -> int:
        return len(self.abs_distance)

    @property
    def driving_time(self) -> float:
        return self.frames * self.dt

    @property
    def autonomy(self) -> float:
        return autonomy(self.recoveries, self.recovery_time, self.driving_time)

    @property
    def mad_cm(self) -> float:
        return 100.0 * float(np.mean(self.abs_distance)) if self.frames else 0.0

    def unbiased_mask(self) -> np.ndarray:
        """Frames outside the ``recovery_time`` window that follows each reset."""
        keep = np.ones(self.frames, dtype=bool)
        span = int(math.ceil(self.recovery_time / self.dt))
        for k in np.flatnonzero(self.recovered):
            keep[k : k + span] = False
        return keep

    @property
    def mad_unbiased_cm(self) -> float:
        keep = self.unbiased_mask()
        return 100.0 * float(np.mean(self.abs_distance[keep])) if keep.any() else float("nan")

    def trace_rows(self):
        """Rows for the per-frame trace table."""
        for k in range(self.frames):
            h, n = self.human_poses[k], self.network_poses[k]
            yield {
                "frame": k,
                "de": float(self.abs_distance[k]),
                "dtheta": float(self.dtheta[k]),
                "delta_h": float(self.recorded[k]),
                "delta_net": float(self.predicted[k]),
                "recovery": int(self.recovered[k]),
                "human_x": float(h[0]),
                "human_y": float(h[1]),
                "human_heading": float(h[2]),
                "net_x": float(n[0]),
                "net_y": float(n[1]),
                "net_heading": float(n[2]),
            }


TRACE_COLUMNS = (
    "frame", "de", "dtheta", "delta_h", "delta_net", "recovery",
    "human_x", "human_y", "human_heading", "net_x", "net_y", "net_heading",
)


def autonomy(recoveries: int, recovery_time: float, driving_time: float) -> float:
    """Fraction of driving time not charged to interventions: ``1 - R t_r / T``."""
    if not driving_time > 0.0:
        raise DomainError(f"driving time must be positive, got {driving_time}")
    if recoveries < 0:
        raise DomainError("recovery count must be non-negative")
    return 1.0 - recoveries * recovery_time / driving_time


def run_sequence(
    log: DriveLog,
    controller: Controller,
    cfg: SimConfig = SimConfig(),
    spec: ProjectionSpec | None = None,
    label: str = "default",
    initial_offset: PoseOffset = PoseOffset(0.0, 0.0),
) -> SequenceResult:
    """Replay ``log`` with ``controller`` steering a second, virtual vehicle.

    ``spec`` is the projection the controller's images are produced in
    (defaults to the log's own). A recovery is triggered when the lateral
    offset exceeds ``recovery_threshold`` or the heading offset leaves the
    warp envelope; the network vehicle is then put back on the human pose.
    ``initial_offset`` starts the network vehicle displaced from the human.
    """
    dt = cfg.dt if cfg.dt is not None else log.dt
    n = len(log)
    human = VehicleState(log.start_pose)
    net = VehicleState(log.start_pose.moved(left=initial_offset.de, turn=initial_offset.dtheta))
    offset = relative_offset(human.pose, net.pose)
    dist = np.empty(n)
    dth = np.empty(n)
    rec = np.zeros(n, dtype=bool)
    hp = np.empty((n, 3))
    npose = np.empty((n, 3))
    pred = np.empty(n)
    recoveries = 0
    controller.reset()
    for k in range(n):
        if not (abs(offset.de) <= cfg.recovery_threshold and cfg.envelope.contains(offset)):
            raise LanesimError(f"internal: offset {offset} escaped the recovery check at frame {k}")
        image = None
        if controller.uses_image:
            frame = log.image(k)
            image = compose_offset_warp(frame.spec, offset, dst_spec=spec, envelope=cfg.envelope).apply(frame)
        v = float(log.speed[k])
        ctx = FrameContext(k, float(log.timestamps[k]), net.pose, float(log.steering[k]))
        try:
            delta = controller.predict(image, v, ctx)
        except DomainError as exc:
            raise ControllerError(f"controller failed at frame {k}: {exc}") from None
        try:
            delta = float(delta)
        except (TypeError, ValueError):
            raise ControllerError(f"controller returned {delta!r} at frame {k}") from None
        if not math.isfinite(delta):
            raise ControllerError(f"controller returned a non-finite angle at frame {k}")
        delta = min(MAX_STEERING, max(-MAX_STEERING, delta))

        human = step(human, float(log.steering[k]), v, dt, cfg.params)
        net = step(net, delta, v, dt, cfg.params)
        offset = relative_offset(human.pose, net.pose)
        if abs(offset.de) > cfg.recovery_threshold or abs(offset.dtheta) > cfg.envelope.max_dtheta:
            recoveries += 1
            rec[k] = True
            net = human
            offset = PoseOffset(0.0, 0.0)
        dist[k] = abs(offset.de)
        dth[k] = offset.dtheta
        hp[k] = human.pose.as_tuple()
        npose[k] = net.pose.as_tuple()
        pred[k] = delta
    return SequenceResult(
        name=log.name,
        label=label,
        dt=dt,
        recoveries=recoveries,
        abs_distance=dist,
        dtheta=dth,
        recovered=rec,
        human_poses=hp,
        network_poses=npose,
        predicted=pred,
        recorded=log.steering.copy(),
        recovery_time=cfg.recovery_time,
    )


@dataclass(frozen=True)
class ScenarioScore:
    label: str
    autonomy: float
    recoveries: int
    duration: float
    mad_cm: float
    mad_unbiased_cm: float
    sequences: int
    frames: int

    @property
    def flagged(self) -> bool:
        """Negative autonomy: more intervention time than driving time."""
        return self.autonomy < 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "autonomy": self.autonomy,
            "autonomy_pct": 100.0 * self.autonomy,
            "recoveries": self.recoveries,
            "duration_s": self.duration,
            "mad_cm": self.mad_cm,
            "mad_unbiased_cm": None if math.isnan(self.mad_unbiased_cm) else self.mad_unbiased_cm,
            "sequences": self.sequences,
            "frames": self.frames,
            "flagged": self.flagged,
        }


def rank_key(score) -> tuple[float, float]:
    """Sort key: higher autonomy first, then lower MAD."""
    return (-score.autonomy, score.mad_cm)


def better(a, b) -> bool:
    """True when score ``a`` ranks strictly ahead of ``b``."""
    return rank_key(a) < rank_key(b)


def _score(label: str, results: Sequence[SequenceResult], recovery_time: float) -> ScenarioScore:
    r = sum(res.recoveries for res in results)
    t = sum(res.driving_time for res in results)
    dist = np.concatenate([res.abs_distance for res in results])
    keep = np.concatenate([res.unbiased_mask() for res in results])
    return ScenarioScore(
        label=label,
        autonomy=autonomy(r, recovery_time, t),
        recoveries=r,
        duration=t,
        mad_cm=100.0 * float(np.mean(dist)),
        mad_unbiased_cm=100.0 * float(np.mean(dist[keep])) if keep.any() else float("nan"),
        sequences=len(results),
        frames=int(dist.size),
    )


@dataclass
class AutonomyReport:
    scenarios: dict
    overall: ScenarioScore | None
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    controller: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)
    sequences: list = field(default_factory=list)

    def ranked(self) -> list[ScenarioScore]:
        return sorted(self.scenarios.values(), key=lambda s: (rank_key(s), s.label))

    def to_dict(self) -> dict:
        return {
            "scenarios": {k: self.scenarios[k].to_dict() for k in sorted(self.scenarios)},
            "overall": None if self.overall is None else self.overall.to_dict(),
            "config": self.config,
            "seeds": self.seeds,
            "controller": self.controller,
            "excluded": sorted(self.excluded),
            "sequences": self.sequences,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def aggregate(
    results: Sequence[SequenceResult],
    labels: Sequence[str] | None = None,
    cfg: SimConfig = SimConfig(),
    seeds: dict | None = None,
    controller: dict | None = None,
) -> AutonomyReport:
    """Pool sequences per label (R and T summed before the autonomy formula)."""
    if not results:
        raise DomainError("aggregate needs at least one sequence result")
    labels = list(labels) if labels is not None else [r.label for r in results]
    if len(labels) != len(results):
        raise DomainError("one label per result required")
    groups: dict[str, list[SequenceResult]] = {}
    for lab, res in zip(labels, results):
        groups.setdefault(lab, []).append(res)
    scenarios, excluded, kept = {}, [], []
    for lab, group in groups.items():
        if sum(r.driving_time for r in group) <= 0.0:
            warnings.warn(f"scenario {lab!r} has zero duration and is excluded", stacklevel=2)
            excluded.append(lab)
            continue
        scenarios[lab] = _score(lab, group, cfg.recovery_time)
        kept.extend(group)
    overall = _score("all", kept, cfg.recovery_time) if kept else None
    sequences = [
        {
            "name": res.name,
            "label": lab,
            "dt": res.dt,
            "frames": res.frames,
            "recoveries": res.recoveries,
            "mad_cm": res.mad_cm,
        }
        for lab, res in zip(labels, results)
    ]
    return AutonomyReport(
        scenarios, overall, cfg.to_dict(), dict(seeds or {}), dict(controller or {}), excluded, sequences
    )


# -- calibration sweeps ------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    params: dict
    score: ScenarioScore | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "score": None if self.score is None else self.score.to_dict(),
            "error": self.error,
        }


def grid_points(grid: dict) -> list[dict]:
    """Cartesian product of a ``{field: [values]}`` grid, in key order."""
    keys = list(grid)
    for key in keys:
        if len(grid[key]) == 0:
            raise DomainError(f"grid axis {key!r} is empty")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _run_point(log, controller, cfg, spec, label, track):
    if isinstance(controller, ControllerSpec):
        ctl = build_controller(controller, track=track or log.track, projection=log.spec, params=cfg.params)
    else:
        ctl = controller()
    try:
        return run_sequence(log, ctl, cfg, spec=spec, label=label)
    finally:
        ctl.close()


def _sweep_point(point, logs, controller, cfg, labels):
    base = logs[0].spec
    spec = base.with_fields(**point)
    results = [_run_point(log, controller, cfg, spec, lab, None) for log, lab in zip(logs, labels)]
    return _score("sweep", results, cfg.recovery_time)


def sweep(
    grid: dict,
    logs: DriveLog | Sequence[DriveLog],
    controller: ControllerSpec | Callable[[], Controller],
    cfg: SimConfig = SimConfig(),
    jobs: int = 1,
) -> list[SweepRow]:
    """Score every grid point; rows ranked best first, failures last.

    Each grid point overrides fields of the logs' ProjectionSpec; frames
    are reprojected into that spec before reaching the controller, which
    keeps whatever camera model it was configured with. ``controller`` is
    a ControllerSpec (required for ``jobs > 1``) or a zero-argument factory.
    """
    if isinstance(logs, DriveLog):
        logs = [logs]
    logs = list(logs)
    labels = [log.name for log in logs]
    points = grid_points(grid)
    rows = []
    if jobs > 1 and isinstance(controller, ControllerSpec):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_point, p, logs, controller, cfg, labels) for p in points]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append((fut.result(), None))
                except (LanesimError, ValueError) as exc:
                    outcomes.append((None, f"{type(exc).__name__}: {exc}"))
    else:
        outcomes = []
        for p in points:
            try:
                outcomes.append((_sweep_point(p, logs, controller, cfg, labels), None))
            except (LanesimError, ValueError) as exc:
                outcomes.append((None, f"{type(exc).__name__}: {exc}"))
    for p, (score, err) in zip(points, outcomes):
        rows.append(SweepRow(p, score, err))
    ok = sorted((r for r in rows if r.score is not None), key=lambda r: rank_key(r.score))
    return ok + [r for r in rows if r.score is None]


def run_many(
    logs: Sequence[DriveLog],
    controller: ControllerSpec,
    cfg: SimConfig = SimConfig(),
    labels: Sequence[str] | None = None,
    spec: ProjectionSpec | None = None,
    jobs: int = 1,
) -> list[SequenceResult]:
    """Independent sequences, optionally in parallel, each with its own controller."""
    labels = list(labels) if labels is not None else [log.name for log in logs]
    args = [(log, controller, cfg, spec, lab, None) for log, lab in zip(logs, labels)]
    if jobs > 1 and len(logs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_point, *zip(*args)))
    return [_run_point(*a) for a in args]
