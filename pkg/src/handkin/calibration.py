"""Raw sensor counts to joint angles, and glove-to-hand alignment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exceptions import ModelValidationError, ParseError, UnknownChannelError
from .kinematics import KinematicModel
from .transform import Transform


@dataclass(frozen=True)
class SensorCalibration:
    """Piecewise-linear raw-to-radian maps, one per channel.

    ``anchors[channel]`` is a tuple of ``(raw, angle)`` pairs sorted by raw
    count; angles must be monotone (either direction). Readings outside the
    anchor range clamp to the end anchors' angles.
    """

    anchors: dict
    _tables: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        clean = {}
        for channel, pairs in self.anchors.items():
            pairs = sorted((int(r), float(a)) for r, a in pairs)
            if len(pairs) < 2:
                raise ModelValidationError(f"channel {channel!r}: need at least 2 anchors", channel)
            raws = [r for r, _ in pairs]
            if len(set(raws)) != len(raws):
                raise ModelValidationError(f"channel {channel!r}: duplicate raw anchor values", channel)
            angles = np.array([a for _, a in pairs])
            if not np.all(np.isfinite(angles)):
                raise ModelValidationError(f"channel {channel!r}: anchor angles must be finite", channel)
            steps = np.diff(angles)
            if not (np.all(steps >= 0) or np.all(steps <= 0)):
                raise ModelValidationError(f"channel {channel!r}: anchor angles are not monotone", channel)
            clean[channel] = tuple(pairs)
        object.__setattr__(self, "anchors", clean)
        tables = {c: (np.array([r for r, _ in p], dtype=float), np.array([a for _, a in p])) for c, p in clean.items()}
        object.__setattr__(self, "_tables", tables)

    @property
    def channels(self) -> list[str]:
        return list(self.anchors)

    def _arrays(self, channel):
        try:
            return self._tables[channel]
        except KeyError:
            raise UnknownChannelError(f"no calibration for channel {channel!r}") from None

    def to_angle(self, channel: str, raw: float) -> float:
        raws, angles = self._arrays(channel)
        return float(np.interp(raw, raws, angles))

    def raw_range(self, channel: str) -> tuple[int, int]:
        raws, _ = self._arrays(channel)
        return int(raws[0]), int(raws[-1])

    def angle_range(self, channel: str) -> tuple[float, float]:
        _, angles = self._arrays(channel)
        return float(angles.min()), float(angles.max())

    def to_raw(self, channel: str, angle: float) -> float:
        """Continuous inverse of the map; the angle is clamped to the anchor range.

        Requires strictly monotone anchor angles.
        """
        raws, angles = self._arrays(channel)
        steps = np.diff(angles)
        if np.all(steps > 0):
            return float(np.interp(angle, angles, raws))
        if np.all(steps < 0):
            return float(np.interp(angle, angles[::-1], raws[::-1]))
        raise ModelValidationError(f"channel {channel!r}: calibration is not invertible (flat segment)", channel)

    def to_dict(self) -> dict:
        return {c: [{"raw": r, "angle_rad": a} for r, a in pairs] for c, pairs in self.anchors.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> SensorCalibration:
        if not isinstance(doc, dict):
            raise ParseError("calibration document must map channel -> anchor array")
        anchors = {}
        for channel, arr in doc.items():
            if not isinstance(arr, list):
                raise ParseError(f"channel {channel!r}: anchors must be an array")
            pairs = []
            for i, a in enumerate(arr):
                if not isinstance(a, dict) or set(a) != {"raw", "angle_rad"}:
                    raise ParseError(f"channel {channel!r}: anchor #{i} must be {{raw, angle_rad}}")
                if isinstance(a["raw"], bool) or not isinstance(a["raw"], int):
                    raise ParseError(f"channel {channel!r}: anchor #{i} raw must be an integer")
                pairs.append((a["raw"], a["angle_rad"]))
            anchors[channel] = pairs
        return cls(anchors)

    @classmethod
    def loads(cls, text: str) -> SensorCalibration:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed calibration file: {exc}") from None


def apply_calibration(frame, calib: SensorCalibration) -> dict:
    """Calibrated joint angles (radians) for every channel of ``frame``.

    ``frame`` is a :class:`~handkin.pipeline.SensorFrame` or a plain mapping
    of channel name to raw count.
    """
    channels: Mapping[str, int] = getattr(frame, "channels", frame)
    return {ch: calib.to_angle(ch, raw) for ch, raw in channels.items()}


# encoder-style resolution so count rounding stays far below solver tolerances
DEFAULT_RAW_MAX = 2**31 - 1


def linear_calibration(model: KinematicModel, raw_max: int = DEFAULT_RAW_MAX, joints=None) -> SensorCalibration:
    """Two-anchor map per revolute joint spanning its limits over ``[0, raw_max]``."""
    anchors = {}
    for j in model.revolute_joints:
        if joints is not None and j.name not in joints:
            continue
        lo, hi = j.limits
        anchors[j.name] = [(0, lo), (raw_max, hi)]
    return SensorCalibration(anchors)


@dataclass(frozen=True)
class Alignment:
    """Pose of the glove base frame expressed in the hand palm frame."""

    glove_to_hand: Transform = Transform()

    def glove_to_hand_pose(self, pose: Transform) -> Transform:
        return self.glove_to_hand @ pose

    def hand_to_glove_pose(self, pose: Transform) -> Transform:
        return self.glove_to_hand.inverse() @ pose

    def to_dict(self) -> dict:
        return self.glove_to_hand.to_dict("quat")

    @classmethod
    def from_dict(cls, doc: dict) -> Alignment:
        if not isinstance(doc, dict) or set(doc) != {"xyz", "quat"}:
            raise ParseError("alignment must be {xyz, quat}")
        try:
            return cls(Transform.from_dict(doc))
        except ValueError as exc:
            raise ParseError(f"alignment: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> Alignment:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed alignment file: {exc}") from None


def align_spaces(glove_tip_world: Transform, hand_tip_world: Transform) -> Alignment:
    """Alignment that maps the glove tip pose onto the hand tip pose.

    Both poses come from FK at one shared calibration posture, the glove's in
    its base frame and the hand's in its palm frame.
    """
    return Alignment(hand_tip_world @ glove_tip_world.inverse())


def alignment_residual(alignment: Alignment, glove_tip: Transform, hand_tip: Transform) -> float:
    mapped = alignment.glove_to_hand @ glove_tip
    return math.dist(mapped.translation, hand_tip.translation)
