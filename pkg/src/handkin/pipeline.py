"""Sensor frames to hand joint states, and the reverse simulation path.

Estimation per finger: raw counts -> calibrated glove joints -> glove FK tip
pose -> alignment into the palm frame -> hand IK seeded with the previous
frame's solution. Simulation runs the chain backwards from a hand posture to
raw counts, optionally injecting quantization, noise, miscalibration and slip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .calibration import Alignment, SensorCalibration, align_spaces, apply_calibration
from .exceptions import (
    MissingJointError,
    ModelValidationError,
    ParseError,
    UnknownChannelError,
    Unreachable,
)
from .ik import ESTIMATION_IK_CONFIG, IkConfig, IkResult, circle_intersections, solve_ik
from .kinematics import KinematicModel, chain, finger_of_tip, forward_kinematics
from .transform import Transform

FORMAT = "handkin/v1"
_STD_R, _STD_S, _STD_B = (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class SensorFrame:
    timestamp: float
    channels: dict

    def to_dict(self) -> dict:
        return {"t": self.timestamp, "channels": dict(self.channels)}


@dataclass(frozen=True)
class NoiseConfig:
    """Error sources injected by :func:`simulate_glove`.

    ``calibration_offset`` maps channel -> radians added before the reading
    is converted to counts. ``slip`` displaces the glove base relative to the
    alignment the estimator believes in.
    """

    adc_bits: int | None = None
    calibration_offset: dict = field(default_factory=dict)
    slip: Transform = Transform()
    sensor_noise_sd: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        bits = self.adc_bits
        if bits is not None and (isinstance(bits, bool) or not isinstance(bits, int) or not 1 <= bits <= 16):
            raise ModelValidationError("adc_bits must be an integer in [1, 16] or None", "adc_bits")
        if not (math.isfinite(self.sensor_noise_sd) and self.sensor_noise_sd >= 0):
            raise ModelValidationError("sensor_noise_sd must be >= 0", "sensor_noise_sd")

    def with_seed(self, seed: int) -> NoiseConfig:
        return NoiseConfig(self.adc_bits, self.calibration_offset, self.slip, self.sensor_noise_sd, int(seed))

    def to_dict(self) -> dict:
        return {
            "adc_bits": self.adc_bits,
            "calibration_offset": dict(self.calibration_offset),
            "slip": self.slip.to_dict("quat"),
            "sensor_noise_sd": self.sensor_noise_sd,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> NoiseConfig:
        allowed = {"adc_bits", "calibration_offset", "slip", "sensor_noise_sd", "rng_seed"}
        if not isinstance(doc, dict) or set(doc) - allowed:
            raise ParseError(f"noise config accepts only {sorted(allowed)}")
        kwargs = dict(doc)
        if "slip" in kwargs:
            try:
                kwargs["slip"] = Transform.from_dict(kwargs["slip"])
            except ValueError as exc:
                raise ParseError(f"noise.slip: {exc}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class PipelineState:
    """IK warm-start seed and the last frame's per-finger diagnostics."""

    seed: dict
    diagnostics: dict = field(default_factory=dict)


# -- glove geometry helpers ---------------------------------------------------

@dataclass(frozen=True)
class _GloveFinger:
    finger: str
    joints: tuple  # revolute joint names, root to tip
    base: Transform
    rod1: float
    rod2: float
    tip_offset: Transform
    standard: bool


def _glove_finger(glove: KinematicModel, finger: str) -> _GloveFinger:
    tip = f"{finger}tip"
    path = chain(glove, glove.root_link, tip)
    rev = [j for j in path if j.is_revolute]
    names = tuple(j.name for j in rev)
    standard = (
        len(path) == 6
        and len(rev) == 5
        and not path[5].is_revolute
        and [j.axis for j in rev] == [_STD_R, _STD_S, _STD_B, _STD_B, _STD_B]
        and path[1].origin == Transform()
        and path[2].origin == Transform()
        and path[3].origin.rotation == (1.0, 0.0, 0.0, 0.0)
        and path[3].origin.translation[1:] == (0.0, 0.0)
        and path[4].origin.rotation == (1.0, 0.0, 0.0, 0.0)
        and path[4].origin.translation[1:] == (0.0, 0.0)
    )
    if standard:
        return _GloveFinger(finger, names, path[0].origin, path[3].origin.translation[0],
                            path[4].origin.translation[0], path[5].origin, True)
    return _GloveFinger(finger, names, Transform(), 0.0, 0.0, Transform(), False)


def glove_inverse(glove: KinematicModel, finger: str, tip_pose: Transform, tolerance: float = 1e-6) -> dict:
    """Glove joint angles that place ``<finger>tip`` at ``tip_pose``.

    For the standard R/S/B/F/T layout R and S follow from the direction of
    the T joint axis, then B and F from a circle intersection in the linkage
    plane (keeping F >= 0) and T from the remaining pitch. Poses off the
    linkage plane or out of reach are projected onto the reachable set;
    if that moves the tip by more than ``tolerance`` meters,
    :class:`Unreachable` is raised. Non-standard layouts use :func:`solve_ik`.
    """
    gf = _glove_finger(glove, finger)
    if not gf.standard:
        return _glove_inverse_numeric(glove, gf, tip_pose, tolerance)

    t_pose = tip_pose @ gf.tip_offset.inverse()
    local = gf.base.inverse() @ t_pose
    yx, yy, yz = local.rotate((0.0, 1.0, 0.0))
    s = math.asin(max(-1.0, min(1.0, -yx)))
    r = math.atan2(yz, yy)
    cr, sr, cs, ss = math.cos(r), math.sin(r), math.cos(s), math.sin(s)
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    Rz = np.array([[cs, -ss, 0.0], [ss, cs, 0.0], [0.0, 0.0, 1.0]])
    M = Rx @ Rz
    px, py, pz = M.T @ np.array(local.translation)
    residual = abs(py)
    u, v = px, -pz
    d = math.hypot(u, v)
    lo, hi = abs(gf.rod1 - gf.rod2), gf.rod1 + gf.rod2
    if d > hi or d < lo:
        target = min(max(d, lo), hi)
        residual += abs(d - target)
        scale = target / d if d > 0 else 0.0
        u, v = (u * scale, v * scale) if d > 0 else (target, 0.0)
    if residual > tolerance:
        raise Unreachable(
            f"finger {finger!r}: tip pose misses the glove linkage by {residual:.3g} m",
            finger=finger,
            residual=residual,
        )
    branches = []
    for ex, ev in circle_intersections((0.0, 0.0), gf.rod1, (u, v), gf.rod2, tol=1e-9):
        b = math.atan2(ev, ex)
        f = math.atan2(math.sin(math.atan2(v - ev, u - ex) - b), math.cos(math.atan2(v - ev, u - ex) - b))
        branches.append((b, f))
    b, f = max(branches, key=lambda bf: bf[1])
    f = max(f, 0.0)
    Rp = (M.T @ local.rotation_matrix())
    pitch = math.atan2(Rp[0, 2], Rp[0, 0])
    t = math.atan2(math.sin(pitch - b - f), math.cos(pitch - b - f))
    angles = dict(zip(gf.joints, (r, s, b, f, t)))
    for name, value in angles.items():
        jlo, jhi = glove.limits(name)
        if value < jlo - 1e-9 or value > jhi + 1e-9:
            raise Unreachable(
                f"finger {finger!r}: glove joint {name} = {value:.4g} rad outside [{jlo:.4g}, {jhi:.4g}]",
                finger=finger,
                residual=0.0,
            )
        angles[name] = min(max(value, jlo), jhi)
    return angles


def _glove_inverse_numeric(glove, gf, tip_pose, tolerance):
    tip = f"{gf.finger}tip"
    cfg = IkConfig(max_iterations=500, position_tolerance=min(tolerance, 1e-6), orientation_tolerance=1e-6)
    res = solve_ik(glove, tip, tip_pose, glove.zero_state(), cfg)
    if res.position_residual > tolerance:
        raise Unreachable(
            f"finger {gf.finger!r}: glove IK residual {res.position_residual:.3g} m",
            finger=gf.finger,
            residual=res.position_residual,
        )
    return {n: res.joints[n] for n in gf.joints}


def _quantize(raw: float, lo: int, hi: int, bits: int | None) -> int:
    span = hi - lo
    if bits is not None and span > (1 << bits) - 1:
        levels = (1 << bits) - 1
        step = span / levels
        raw = lo + round((raw - lo) / step) * step
    return int(min(max(round(raw), lo), hi))


def simulate_glove(
    hand_q: Mapping[str, float],
    hand: KinematicModel,
    glove: KinematicModel,
    alignment: Alignment,
    calib: SensorCalibration,
    noise: NoiseConfig | None = None,
    fingers: Sequence[str] | None = None,
    timestamp: float = 0.0,
) -> SensorFrame:
    """Synthetic glove reading for a known hand posture.

    Order of corruption per channel: calibration offset and Gaussian noise
    (radians), conversion to counts through the inverse calibration,
    quantization to ``adc_bits`` over the channel's raw range. Random draws
    depend only on ``noise.rng_seed``.

    Raises
    ------
    Unreachable
        A fingertip cannot be placed by the glove linkage; carries the finger
        name and residual.
    """
    noise = noise or NoiseConfig()
    angles = glove_angles(hand_q, hand, glove, alignment, noise.slip, fingers)
    return encode_frame(angles, calib, noise, timestamp)


def glove_angles(
    hand_q: Mapping[str, float],
    hand: KinematicModel,
    glove: KinematicModel,
    alignment: Alignment,
    slip: Transform = Transform(),
    fingers: Sequence[str] | None = None,
) -> dict:
    """Noise-free glove joint angles for a hand posture, with the glove
    mount displaced by ``slip`` from where ``alignment`` places it."""
    if fingers is None:
        fingers = [finger_of_tip(t) for t in hand.end_effectors if t in glove.end_effectors]
    inv_mount = (alignment.glove_to_hand @ slip).inverse()
    slip_tol = math.dist(slip.translation, (0.0, 0.0, 0.0)) + 0.2 * slip.rotation_angle()
    angles = {}
    for finger in fingers:
        tip_hand = forward_kinematics(hand, hand_q, f"{finger}tip")
        angles.update(glove_inverse(glove, finger, inv_mount @ tip_hand, tolerance=1e-6 + slip_tol))
    return angles


def encode_frame(angles: Mapping[str, float], calib: SensorCalibration, noise: NoiseConfig,
                 timestamp: float = 0.0) -> SensorFrame:
    """Corrupt glove angles per ``noise`` (slip excepted) and convert to counts."""
    rng = np.random.default_rng(noise.rng_seed)
    draws = rng.standard_normal(len(angles))
    channels = {}
    for k, name in enumerate(sorted(angles)):
        if name not in calib.anchors:
            raise UnknownChannelError(f"no calibration for channel {name!r}")
        a = angles[name] + noise.calibration_offset.get(name, 0.0) + noise.sensor_noise_sd * draws[k]
        lo, hi = calib.raw_range(name)
        channels[name] = _quantize(calib.to_raw(name, a), lo, hi, noise.adc_bits)
    return SensorFrame(float(timestamp), {n: channels[n] for n in angles})


# -- estimation -------------------------------------------------------------------

@dataclass(frozen=True)
class Pipeline:
    """Bundles the models and calibrations used to estimate hand postures."""

    glove: KinematicModel
    hand: KinematicModel
    calibration: SensorCalibration
    alignment: Alignment = Alignment()
    ik_config: IkConfig = ESTIMATION_IK_CONFIG
    _channels: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        channels = {}
        for tip in self.hand.end_effectors:
            if tip in self.glove.end_effectors:
                path = chain(self.glove, self.glove.root_link, tip)
                channels[finger_of_tip(tip)] = [j.name for j in path if j.is_revolute]
        object.__setattr__(self, "_channels", channels)

    @property
    def fingers(self) -> list[str]:
        return list(self._channels)

    def glove_channels(self, finger: str) -> list[str]:
        return list(self._channels[finger])

    def initial_state(self) -> PipelineState:
        return PipelineState(self.hand.clamp(self.hand.zero_state()))

    def tip_targets(self, frame: SensorFrame, alignment: Alignment | None = None) -> dict:
        """Hand-space fingertip targets for every finger present in ``frame``."""
        alignment = alignment or self.alignment
        glove_q = apply_calibration(frame, self.calibration)
        targets = {}
        for finger in self.fingers:
            names = self.glove_channels(finger)
            present = [n in glove_q for n in names]
            if not any(present):
                continue
            if not all(present):
                missing = names[present.index(False)]
                raise MissingJointError(f"frame lacks channel {missing!r} for finger {finger!r}")
            compiled = self.glove.compiled(self.glove.root_link, f"{finger}tip")
            R, p = compiled.pose(compiled.vector(glove_q))
            m = np.eye(4)
            m[:3, :3], m[:3, 3] = R, p
            tip = Transform.from_matrix(m)
            targets[finger] = alignment.glove_to_hand @ tip
        return targets

    def estimate_frame(self, frame: SensorFrame, state: PipelineState | None = None):
        """Returns ``(hand joint state, diagnostics, new state)``."""
        state = state or self.initial_state()
        q = dict(state.seed)
        diagnostics = {}
        for finger, target in self.tip_targets(frame).items():
            res: IkResult = solve_ik(self.hand, f"{finger}tip", target, q, self.ik_config)
            q = res.joints
            diagnostics[finger] = {
                "converged": res.converged,
                "pos_residual": res.position_residual,
                "ori_residual": res.orientation_residual,
                "iters": res.iterations_used,
            }
        return q, diagnostics, PipelineState(q, diagnostics)

    def process_stream(self, frames: Iterable[SensorFrame], state: PipelineState | None = None) -> list:
        state = state or self.initial_state()
        out = []
        last_t = -math.inf
        channel_set = None
        for i, frame in enumerate(frames):
            if not isinstance(frame, SensorFrame):
                raise StreamError(f"frame {i}: not a SensorFrame", index=i)
            if frame.timestamp < last_t:
                raise StreamError(f"frame {i}: timestamp {frame.timestamp} goes backwards", index=i)
            keys = frozenset(frame.channels)
            if channel_set is not None and keys != channel_set:
                raise StreamError(f"frame {i}: channel set differs from the first frame", index=i)
            channel_set, last_t = keys, frame.timestamp
            try:
                q, diag, state = self.estimate_frame(frame, state)
            except (UnknownChannelError, MissingJointError) as exc:
                raise StreamError(f"frame {i}: {exc}", index=i) from exc
            out.append((frame.timestamp, q, diag))
        return out

    def calibrate_alignment(self, frame: SensorFrame, hand_q: Mapping[str, float], finger: str = "index") -> Alignment:
        """Alignment from one frame recorded at a known hand posture."""
        glove_q = apply_calibration(frame, self.calibration)
        glove_tip = forward_kinematics(self.glove, glove_q, f"{finger}tip")
        hand_tip = forward_kinematics(self.hand, hand_q, f"{finger}tip")
        return align_spaces(glove_tip, hand_tip)


def estimate_frame(frame, calib, glove, alignment, hand, cfg=None, state=None):
    """Functional form of :meth:`Pipeline.estimate_frame`."""
    return Pipeline(glove, hand, calib, alignment, cfg or ESTIMATION_IK_CONFIG).estimate_frame(frame, state)


def process_stream(frames, calib, glove, alignment, hand, cfg=None, state=None):
    """Functional form of :meth:`Pipeline.process_stream`."""
    return Pipeline(glove, hand, calib, alignment, cfg or ESTIMATION_IK_CONFIG).process_stream(frames, state)


# -- stream files -------------------------------------------------------------------

class StreamError(ParseError):
    """A stream record is malformed. ``index`` is the 0-based frame index and
    ``line`` the 1-based line number in the file, when known."""

    def __init__(self, message, index=None, line=None):
        super().__init__(message)
        self.index = index
        self.line = line


def _header() -> str:
    return json.dumps({"format": FORMAT})


def dumps_frames(frames: Iterable[SensorFrame], extra: Sequence[dict] | None = None) -> str:
    lines = [_header()]
    for i, f in enumerate(frames):
        rec = f.to_dict()
        if extra is not None and extra[i]:
            rec.update(extra[i])
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def loads_frames(text: str) -> list[SensorFrame]:
    """Parse a sensor stream. An empty file is an empty stream."""
    frames = []
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        return frames
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamError(f"line {lineno}: invalid JSON ({exc.msg})", index=len(frames), line=lineno) from None
        if lineno == 1:
            if rec != {"format": FORMAT}:
                raise StreamError(f"line 1: expected header {{\"format\": \"{FORMAT}\"}}", line=1)
            continue
        frames.append(_frame_from_record(rec, lineno, len(frames)))
    return frames


def _frame_from_record(rec, lineno, index) -> SensorFrame:
    if not isinstance(rec, dict) or not {"t", "channels"} <= set(rec) or set(rec) - {"t", "channels", "trial"}:
        raise StreamError(f"line {lineno}: record must be {{t, channels}}", index=index, line=lineno)
    t, ch = rec["t"], rec["channels"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise StreamError(f"line {lineno}: t must be a number", index=index, line=lineno)
    if not isinstance(ch, dict) or not all(isinstance(v, int) and not isinstance(v, bool) for v in ch.values()):
        raise StreamError(f"line {lineno}: channels must map names to integer counts", index=index, line=lineno)
    return SensorFrame(float(t), dict(ch))


def dumps_estimates(results: Iterable) -> str:
    lines = [_header()]
    for t, q, diag in results:
        rec = {
            "t": t,
            "joints": q,
            "diagnostics": {
                f: {"converged": d["converged"], "pos_residual": d["pos_residual"], "iters": d["iters"]}
                for f, d in diag.items()
            },
        }
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def loads_estimates(text: str) -> list[dict]:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        return []
    if json.loads(lines[0]) != {"format": FORMAT}:
        raise StreamError("line 1: missing stream header", line=1)
    return [json.loads(l) for l in lines[1:]]
