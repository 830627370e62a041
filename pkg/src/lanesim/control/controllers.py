"""Steering controllers evaluated by the closed-loop simulator."""
from __future__ import annotations

import math
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from lanesim.augment import ControlGains
from lanesim.control import protocol
from lanesim.control.law import control_law
from lanesim.dynamics import VehicleParams
from lanesim.errors import ControllerError, ExtrapolationError
from lanesim.geometry import CylImage, ProjectionSpec, col_to_azimuth
from lanesim.pose import Pose2D


@dataclass(frozen=True)
class FrameContext:
    """Side information the simulator passes with every frame.

    Only the oracle and replay controllers look at it; image controllers
    must not.
    """

    index: int
    timestamp: float
    network_pose: Pose2D
    recorded_angle: float


class Controller:
    """Maps a camera frame and speed to a steering-wheel angle (radians)."""

    name = "controller"
    uses_image = True

    def reset(self) -> None:
        pass

    def predict(self, image: CylImage | None, speed: float, context: FrameContext) -> float:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StraightController(Controller):
    """Always steers straight ahead."""

    name = "straight"
    uses_image = False

    def predict(self, image, speed, context):
        return 0.0


class ReplayController(Controller):
    """Replays the recorded human angle. Drift-free by construction."""

    name = "replay"
    uses_image = False

    def predict(self, image, speed, context):
        return float(context.recorded_angle)


class OracleController(Controller):
    """Applies the control law to ground-truth track errors."""

    name = "oracle"
    uses_image = False

    def __init__(self, truth, gains: ControlGains = ControlGains(), params: VehicleParams = VehicleParams()):
        self.truth = truth
        self.gains = gains
        self.params = params

    def predict(self, image, speed, context):
        try:
            q = self.truth.query(context.network_pose)
        except ExtrapolationError as exc:
            raise ControllerError(f"oracle lost the track: {exc}") from None
        return control_law(q.curvature, q.e, q.theta, speed, self.gains, self.params)


def road_mask(pixels: np.ndarray) -> np.ndarray:
    """Gray asphalt or white paint: low saturation, not green, not orange."""
    px = pixels.astype(np.float32)
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    return (np.abs(g - 0.5 * (r + b)) < 14.0) & (np.abs(r - b) < 30.0) & (g > 40.0)


MAX_CURVATURE = 0.5


#: Feedback gains of the vision follower. Much stiffer than the human-like
#: defaults: with estimated rather than true state the softer loop is
#: lightly damped and drifts through curve transitions.
VISION_GAINS = ControlGains(ke_numerator=60.0, ktheta=30.0)
#: Range (m) over which edge-point weights decay beyond the nearest row.
_WEIGHT_SCALE = 3.0


def _arc_offset(x0, y0, phi, k, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Signed offset (+ left) of points from the circle through ``(x0, y0)``
    with heading ``phi`` and curvature ``k``, and the arclength of each
    foot point. Stable as ``k -> 0``."""
    dx, dy = xs - x0, ys - y0
    c, s = math.cos(phi), math.sin(phi)
    u = c * dx + s * dy
    w = -s * dx + c * dy
    big_a = k * (u * u + w * w) - 2.0 * w
    off = -big_a / (1.0 + np.sqrt(np.maximum(1.0 + k * big_a, 0.0)))
    if abs(k) < 1e-9:
        foot = u
    else:
        foot = np.arctan2(k * u, 1.0 - k * w) / k
    return off, foot


def _road_fraction(green: np.ndarray, col: int, step: int) -> float:
    """Share of asphalt in the off-road pixel ``col`` next to a road run,
    from its green excess between the road pixel inside and the pixel
    further out. Moves the edge estimate by a sub-pixel amount."""
    w = len(green)
    inside, outside = col - step, col + step
    if not (0 <= outside < w):
        return 0.0
    span = green[outside] - green[inside]
    if span <= 1.0:
        return 0.0
    return float(np.clip((green[outside] - green[col]) / span, 0.0, 1.0))


def _fit_centerline(ex, ey, side, half):
    """Circular-arc centerline ``(a, psi, k)`` through (0, a) with heading
    ``psi``; the road half width is refined from ``half`` when both edges
    are seen. Weights favour the nearest edge points so that a curve
    starting or ending further ahead does not bend the arc at the vehicle."""
    wts = np.exp(-(ex - np.min(ex)) / _WEIGHT_SCALE)
    b0, a0 = np.polyfit(ex, ey - side * half, 1, w=np.sqrt(wts))
    both = bool(np.any(side > 0) and np.any(side < 0))

    def fun(p):
        off, _ = _arc_offset(0.0, p[0], p[1], p[2], ex, ey)
        return wts * (off - side * (p[3] if both else half))

    x0 = [a0, math.atan(b0), 0.0] + ([half] if both else [])
    return least_squares(fun, np.array(x0), method="lm", xtol=1e-6).x[:3]


class VisionController(Controller):
    """Hand-built lane follower: road-edge detection plus the control law.

    Road pixels are segmented by color in the ground rows between
    ``near`` and ``far`` meters ahead, back-projected with the *assumed*
    projection ``spec``, and a circular-arc centerline, weighted towards
    the nearest rows, is fit to the edge points in the vehicle frame.
    Edges next to pixels a warp invented (``image.valid``) are skipped.
    Because the back-projection relies on the assumed camera geometry, a
    mismatch between the true and assumed projection biases the estimate,
    which is what makes this controller useful for calibration sweeps.
    """

    name = "vision"
    uses_image = True

    def __init__(
        self,
        spec: ProjectionSpec = ProjectionSpec(),
        road_half_width: float = 2.25,
        gains: ControlGains = VISION_GAINS,
        params: VehicleParams = VehicleParams(),
        near: float = 2.5,
        far: float = 9.0,
    ):
        self.spec = spec
        self.road_half_width = road_half_width
        self.gains = gains
        self.params = params
        self.near = near
        self.far = far
        self._last = 0.0
        rows = np.arange(spec.height)
        tan_el = (spec.horizon_row - rows - 0.5) / spec.vertical_scale
        with np.errstate(divide="ignore"):
            rng = np.where(tan_el < 0.0, spec.camera_height / -tan_el, np.inf)
        self._rows = rows[(rng >= near) & (rng <= far)]
        self._ranges = rng[self._rows]

    def reset(self) -> None:
        self._last = 0.0

    def estimate(self, pixels: np.ndarray, valid: np.ndarray | None = None):
        """Centerline fit ``(lateral_offset, heading_error, curvature)`` or None.

        Edges next to pixels marked False in ``valid`` are ignored.
        """
        spec = self.spec
        if pixels.shape[:2] != spec.shape:
            raise ControllerError(f"frame shape {pixels.shape[:2]} does not match assumed {spec.shape}")
        band = pixels[self._rows].astype(float)
        mask = road_mask(band)
        # green excess separates asphalt (about 0) from grass (large)
        green = band[..., 1] - 0.5 * (band[..., 0] + band[..., 2])
        known = np.ones(mask.shape, dtype=bool) if valid is None else np.asarray(valid)[self._rows]
        w = spec.width
        centre = w / 2.0 - 0.5
        ex, ey, side = [], [], []
        for i, rho in enumerate(self._ranges):
            cols = np.flatnonzero(mask[i])
            if cols.size == 0:
                continue
            breaks = np.flatnonzero(np.diff(cols) > 1)
            starts = np.concatenate(([cols[0]], cols[breaks + 1]))
            ends = np.concatenate((cols[breaks], [cols[-1]]))
            dist = np.where(
                (starts <= centre) & (ends >= centre),
                0.0,
                np.minimum(abs(starts - centre), abs(ends - centre)),
            )
            j = int(np.argmin(dist))
            # left image side = positive azimuth = left road edge
            a, b = starts[j], ends[j]
            for col, sgn, ok in (
                (a - 0.5 - _road_fraction(green[i], a - 1, -1), 1.0, a > 0 and known[i, a - 1] and known[i, a]),
                (b + 0.5 + _road_fraction(green[i], b + 1, 1), -1.0, b < w - 1 and known[i, b] and known[i, b + 1]),
            ):
                if ok:
                    az = col_to_azimuth(spec, col)
                    ex.append(rho * math.cos(az))
                    ey.append(rho * math.sin(az))
                    side.append(sgn)
        if len(ex) < 3:
            return None
        ex, ey, side = np.array(ex), np.array(ey), np.array(side)
        half = self.road_half_width
        if np.ptp(ex) > 2.0 and len(ex) >= 6:
            a, psi, kappa = _fit_centerline(ex, ey, side, half)
        else:
            b, a = np.polyfit(ex, ey - side * half, 1)
            psi, kappa = math.atan(b), 0.0
        kappa = float(np.clip(kappa, -MAX_CURVATURE, MAX_CURVATURE))
        off, foot = _arc_offset(0.0, a, psi, kappa, np.zeros(1), np.zeros(1))
        return float(off[0]), -float(psi + kappa * foot[0]), kappa

    def predict(self, image, speed, context):
        if image is None:
            raise ControllerError("vision controller needs an image")
        est = self.estimate(np.asarray(image.pixels), image.valid)
        if est is None:
            return self._last
        lateral, heading, curvature = est
        self._last = control_law(curvature, lateral, heading, speed, self.gains, self.params)
        return self._last


class EnsembleController(Controller):
    """Mean of member predictions."""

    name = "ensemble"

    def __init__(self, members: Sequence[Controller]):
        if not members:
            raise ControllerError("ensemble needs at least one member")
        self.members = list(members)
        self.uses_image = any(m.uses_image for m in self.members)

    def reset(self):
        for m in self.members:
            m.reset()

    def predict(self, image, speed, context):
        return float(np.mean([m.predict(image, speed, context) for m in self.members]))

    def close(self):
        for m in self.members:
            m.close()


class ExternalController(Controller):
    """Controller running in a subprocess, spoken to over stdin/stdout.

    See :mod:`lanesim.control.protocol` for the wire format. A reply that
    does not arrive within ``timeout`` seconds is a :class:`ControllerError`.
    """

    name = "external"
    uses_image = True

    def __init__(
        self,
        command: Sequence[str],
        spec: ProjectionSpec = ProjectionSpec(),
        timeout: float = 1.0,
        startup_timeout: float = 10.0,
    ):
        self.command = list(command)
        self.spec = spec
        self.timeout = timeout
        self.startup_timeout = startup_timeout
        self.proc = None
        self.reader = None
        self.seq = 0

    def _start(self) -> None:
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise ControllerError(f"cannot start controller {self.command}: {exc}") from None
        self.reader = protocol.FdReader(self.proc.stdout.fileno())
        self._send(protocol.encode_hello(self.spec.to_dict()))
        msg = self.reader.read_message(self.startup_timeout)
        if not isinstance(msg, protocol.HelloAck):
            raise ControllerError(f"expected HELLO_ACK, got {msg!r}")
        if msg.version != protocol.VERSION:
            raise ControllerError(f"controller speaks protocol {msg.version}, need {protocol.VERSION}")

    def _send(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ControllerError(f"controller pipe closed: {exc}") from None

    def predict(self, image, speed, context):
        if image is None:
            raise ControllerError("external controller needs an image")
        if self.proc is None:
            self._start()
        self.seq += 1
        self._send(protocol.encode_request(self.seq, image.pixels, speed))
        msg = self.reader.read_message(self.timeout)
        if not isinstance(msg, protocol.Reply):
            raise ControllerError(f"expected REPLY, got {type(msg).__name__}")
        if msg.seq != self.seq:
            raise ControllerError(f"reply sequence {msg.seq} does not match request {self.seq}")
        return msg.angle

    def reset(self) -> None:
        pass

    def close(self) -> None:
        if self.proc is None:
            return
        proc, self.proc = self.proc, None
        try:
            proc.stdin.write(protocol.encode_bye())
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        if self.reader is not None:
            self.reader.close()
        proc.stdout.close()


CONTROLLER_KINDS = ("straight", "replay", "oracle", "vision", "ensemble", "external")


@dataclass(frozen=True)
class ControllerSpec:
    """Serializable recipe for a controller.

    ``options`` depend on ``kind``: ``command`` and ``timeout`` for
    external, ``members`` (list of specs) for ensemble, ``spec`` (assumed
    projection dict) for vision.
    """

    kind: str = "oracle"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ControllerError(f"unknown controller kind {self.kind!r}; choose from {CONTROLLER_KINDS}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "options": self.options}

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerSpec":
        return cls(data.get("kind", "oracle"), dict(data.get("options", {})))

    @classmethod
    def parse(cls, text: str) -> "ControllerSpec":
        """``oracle``, ``vision``, ``external:<command line>`` and friends."""
        kind, _, rest = text.partition(":")
        if kind == "external":
            import shlex

            if not rest:
                raise ControllerError("external controller needs a command, e.g. external:'python srv.py'")
            return cls("external", {"command": shlex.split(rest)})
        if rest:
            raise ControllerError(f"controller {kind!r} takes no argument")
        return cls(kind)


def build_controller(
    spec: ControllerSpec,
    track=None,
    projection: ProjectionSpec | None = None,
    gains: ControlGains | None = None,
    params: VehicleParams = VehicleParams(),
) -> Controller:
    """Instantiate a controller. ``track`` (TrackSpec dict or GroundTruth) is
    needed by the oracle; ``projection`` is the default assumed camera.
    ``gains`` default to the human-like gains for the oracle and to
    :data:`VISION_GAINS` for the vision follower; a ``gains`` option
    (dict of ControlGains fields) overrides both."""
    opts = spec.options
    projection = projection or ProjectionSpec()
    if "gains" in opts:
        gains = ControlGains(**opts["gains"])
    if spec.kind == "straight":
        return StraightController()
    if spec.kind == "replay":
        return ReplayController()
    if spec.kind == "oracle":
        from lanesim.synthworld.track import GroundTruth, TrackSpec

        if track is None:
            raise ControllerError("oracle controller needs the log's ground-truth track")
        if isinstance(track, dict):
            track = GroundTruth(TrackSpec.from_dict(track))
        return OracleController(track, gains or ControlGains(), params)
    if spec.kind == "vision":
        assumed = ProjectionSpec.from_dict(opts["spec"]) if "spec" in opts else projection
        half = opts.get("road_half_width")
        if half is None and isinstance(track, dict):
            half = track.get("lane_width", 3.5) / 2.0 + track.get("shoulder", 0.5)
        return VisionController(assumed, half or 2.25, gains or VISION_GAINS, params)
    if spec.kind == "ensemble":
        members = [build_controller(ControllerSpec.from_dict(m), track, projection, gains, params) for m in opts.get("members", [])]
        return EnsembleController(members)
    command = opts.get("command")
    if not command:
        raise ControllerError("external controller needs a command")
    if isinstance(command, str):
        import shlex

        command = shlex.split(command)
    return ExternalController(command, projection, float(opts.get("timeout", 1.0)))


def python_command(module: str, *args: str) -> list[str]:
    """Command line running ``module`` with the current interpreter."""
    return [sys.executable, "-m", module, *args]
