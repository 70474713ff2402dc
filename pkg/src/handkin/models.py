"""Concrete glove and hand models built from compact geometry configs.

Frame conventions (right hand, palm frame): ``x`` points distally along the
fingers, ``z`` dorsally (out of the back of the hand), ``y = z × x`` toward
the thumb side. Flexion is a positive rotation about the local ``y`` axis,
which curls a finger toward the palm; abduction is about the local ``z``.

The glove exoskeleton per finger is ``R`` (about the finger's long axis),
``S`` (spread), ``B`` (bend), then rod 1 to ``F``, rod 2 to ``T`` and a fixed
mount offset to the fingertip. The thumb is not modelled on either side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .exceptions import ModelValidationError, ParseError
from .kinematics import FIXED, REVOLUTE, JointSpec, KinematicModel, model_from_dict
from .transform import Transform

FINGERS = ("index", "middle", "ring", "pinky")
RESERVED_FINGERS = ("thumb",)
HAND_JOINTS = ("mcp_abduction", "mcp_flexion", "pip", "dip")
GLOVE_JOINTS = ("R", "S", "B", "F", "T")

DEFAULT_HAND_LIMITS = {
    "mcp_abduction": (-0.35, 0.35),
    "mcp_flexion": (-0.1, 1.6),
    "pip": (0.0, 1.9),
    "dip": (0.0, 1.4),
}

# Engineering defaults; the glove's real rod lengths are not published.
DEFAULT_ROD1 = 0.060
DEFAULT_ROD2 = 0.050
DEFAULT_TIP_OFFSET = 0.015
DEFAULT_BASE_HEIGHT = 0.008
DEFAULT_GLOVE_LIMITS = {
    "R": (-0.5, 0.5),
    "S": (-0.6, 0.6),
    "B": (-1.2, 2.0),
    "F": (0.0, 3.0),
    "T": (-1.4, 1.6),
}
# pose of the glove base frame in the palm frame for the default fit
DEFAULT_GLOVE_MOUNT = Transform.from_translation((0.05, 0.0, 0.03))

DEFAULT_HAND_LENGTH = 0.172  # wrist to index fingertip, meters


def hand_joint_name(finger: str, joint: str) -> str:
    return f"{finger}_{joint}"


def glove_joint_name(finger: str, joint: str) -> str:
    return f"{finger}_{joint}"


def tip_name(finger: str) -> str:
    return f"{finger}tip"


@dataclass(frozen=True)
class FingerDimensions:
    """Segment lengths, anchors and joint limits of one finger.

    ``dip_to_tip`` is applied after the distal segment, so the tip sits at
    ``distal_length`` along the distal frame followed by this offset.
    """

    proximal_length: float
    middle_length: float
    distal_length: float
    palm_to_mcp: Transform
    dip_to_tip: Transform = field(default_factory=Transform)
    limits: dict = field(default_factory=lambda: dict(DEFAULT_HAND_LIMITS))

    def __post_init__(self):
        for key in ("proximal_length", "middle_length", "distal_length"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ModelValidationError(f"{key} must be a positive length, got {v!r}", key)
        limits = dict(self.limits)
        if set(limits) != set(HAND_JOINTS):
            raise ModelValidationError(f"limits must name exactly {list(HAND_JOINTS)}", "limits")
        for key, (lo, hi) in limits.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ModelValidationError(f"limits.{key} must be finite with lower <= upper", key)
        for key in ("pip", "dip"):
            if limits[key][0] < 0:
                raise ModelValidationError(f"limits.{key} lower bound must be >= 0", key)
        object.__setattr__(self, "limits", {k: (float(lo), float(hi)) for k, (lo, hi) in limits.items()})

    @property
    def length(self) -> float:
        return self.proximal_length + self.middle_length + self.distal_length

    def scaled(self, factor: float) -> FingerDimensions:
        return replace(
            self,
            proximal_length=self.proximal_length * factor,
            middle_length=self.middle_length * factor,
            distal_length=self.distal_length * factor,
            palm_to_mcp=_scale_transform(self.palm_to_mcp, factor),
            dip_to_tip=_scale_transform(self.dip_to_tip, factor),
        )


def _scale_transform(t: Transform, factor: float) -> Transform:
    return Transform(t.rotation, tuple(c * factor for c in t.translation))


@dataclass(frozen=True)
class HandDimensions:
    """Per-user hand measurements (an HMCT-style configuration)."""

    fingers: dict
    name: str = "hand"

    def __post_init__(self):
        if not self.fingers:
            raise ModelValidationError("hand needs at least one finger", "fingers")
        for finger, dims in self.fingers.items():
            _check_finger_name(finger)
            if not isinstance(dims, FingerDimensions):
                raise ModelValidationError(f"fingers.{finger} must be FingerDimensions", finger)
        ordered = {f: self.fingers[f] for f in FINGERS if f in self.fingers}
        object.__setattr__(self, "fingers", ordered)

    @property
    def hand_length(self) -> float:
        """Wrist (palm origin) to index fingertip, straight finger."""
        d = self.fingers.get("index") or next(iter(self.fingers.values()))
        return math.hypot(*d.palm_to_mcp.translation[:2]) + d.length

    def scaled(self, factor: float) -> HandDimensions:
        return replace(self, fingers={f: d.scaled(factor) for f, d in self.fingers.items()})


def _check_finger_name(finger):
    if finger in RESERVED_FINGERS:
        raise ModelValidationError(f"finger name {finger!r} is reserved; the thumb chain is not modelled", finger)
    if finger not in FINGERS:
        raise ModelValidationError(f"unknown finger {finger!r}; expected one of {list(FINGERS)}", finger)


def default_hand_dimensions() -> HandDimensions:
    """Average adult right hand, 17.2 cm from wrist to index fingertip."""
    spec = {
        #         mcp xyz                   yaw    prox    mid     distal
        "index": ((0.094, 0.025, 0.0), 0.05, 0.0398, 0.0224, 0.0158),
        "middle": ((0.092, 0.005, 0.0), 0.0, 0.0446, 0.0263, 0.0171),
        "ring": ((0.086, -0.013, 0.0), -0.05, 0.0413, 0.0257, 0.0167),
        "pinky": ((0.077, -0.030, 0.0), -0.12, 0.0327, 0.0182, 0.0160),
    }
    fingers = {}
    for finger, (xyz, yaw, l1, l2, l3) in spec.items():
        fingers[finger] = FingerDimensions(l1, l2, l3, Transform.from_rpy((0.0, 0.0, yaw), xyz))
    dims = HandDimensions(fingers, name="default_right_hand")
    return dims.scaled(DEFAULT_HAND_LENGTH / dims.hand_length)


def hand_of_length(length: float, base: HandDimensions | None = None) -> HandDimensions:
    """Proportionally scale ``base`` to the given wrist-to-index-tip length."""
    base = base or default_hand_dimensions()
    return base.scaled(length / base.hand_length)


def build_hand_model(dims: HandDimensions) -> KinematicModel:
    joints = []
    tips = []
    for finger, d in dims.fingers.items():
        knuckle = f"{finger}_knuckle"
        proximal = f"{finger}_proximal"
        middle = f"{finger}_middle"
        distal = f"{finger}_distal"
        tip = tip_name(finger)
        lim = d.limits
        joints += [
            JointSpec(hand_joint_name(finger, "mcp_abduction"), REVOLUTE, "palm", knuckle,
                      d.palm_to_mcp, (0.0, 0.0, 1.0), lim["mcp_abduction"]),
            JointSpec(hand_joint_name(finger, "mcp_flexion"), REVOLUTE, knuckle, proximal,
                      Transform(), (0.0, 1.0, 0.0), lim["mcp_flexion"]),
            JointSpec(hand_joint_name(finger, "pip"), REVOLUTE, proximal, middle,
                      Transform.from_translation((d.proximal_length, 0.0, 0.0)), (0.0, 1.0, 0.0), lim["pip"]),
            JointSpec(hand_joint_name(finger, "dip"), REVOLUTE, middle, distal,
                      Transform.from_translation((d.middle_length, 0.0, 0.0)), (0.0, 1.0, 0.0), lim["dip"]),
            JointSpec(hand_joint_name(finger, "tip_fixed"), FIXED, distal, tip,
                      Transform.from_translation((d.distal_length, 0.0, 0.0)) @ d.dip_to_tip),
        ]
        tips.append(tip)
    return KinematicModel(dims.name, "palm", tuple(joints), tuple(tips))


@dataclass(frozen=True)
class FingerGlove:
    """Exoskeleton linkage over one finger.

    ``base`` is the pose of the coincident R/S/B joint frame in the glove
    root frame. F and T rotate about the B axis direction.
    """

    base: Transform
    rod1_length: float = DEFAULT_ROD1
    rod2_length: float = DEFAULT_ROD2
    tip_offset: Transform = field(
        default_factory=lambda: Transform.from_translation((0.0, 0.0, -DEFAULT_TIP_OFFSET))
    )
    r_axis: tuple = (1.0, 0.0, 0.0)
    s_axis: tuple = (0.0, 0.0, 1.0)
    b_axis: tuple = (0.0, 1.0, 0.0)
    limits: dict = field(default_factory=lambda: dict(DEFAULT_GLOVE_LIMITS))

    def __post_init__(self):
        for key in ("rod1_length", "rod2_length"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ModelValidationError(f"{key} must be a positive length, got {v!r}", key)
        for key in ("r_axis", "s_axis", "b_axis"):
            axis = tuple(float(a) for a in getattr(self, key))
            if len(axis) != 3 or abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > 1e-9:
                raise ModelValidationError(f"{key} must be a unit 3-vector", key)
            object.__setattr__(self, key, axis)
        limits = dict(self.limits)
        if set(limits) != set(GLOVE_JOINTS):
            raise ModelValidationError(f"limits must name exactly {list(GLOVE_JOINTS)}", "limits")
        for key, (lo, hi) in limits.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ModelValidationError(f"limits.{key} must be finite with lower <= upper", key)
        object.__setattr__(self, "limits", {k: (float(lo), float(hi)) for k, (lo, hi) in limits.items()})

    @property
    def standard_axes(self) -> bool:
        return (self.r_axis, self.s_axis, self.b_axis) == ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0))


@dataclass(frozen=True)
class GloveGeometry:
    fingers: dict
    name: str = "glove"

    def __post_init__(self):
        if not self.fingers:
            raise ModelValidationError("glove needs at least one finger", "fingers")
        for finger, g in self.fingers.items():
            _check_finger_name(finger)
            if not isinstance(g, FingerGlove):
                raise ModelValidationError(f"fingers.{finger} must be FingerGlove", finger)
        object.__setattr__(self, "fingers", {f: self.fingers[f] for f in FINGERS if f in self.fingers})


def fit_glove_geometry(
    dims: HandDimensions,
    mount: Transform = DEFAULT_GLOVE_MOUNT,
    base_height: float = DEFAULT_BASE_HEIGHT,
    **finger_kwargs,
) -> GloveGeometry:
    """Glove whose spread axes run through the wearer's MCP abduction axes.

    ``mount`` is the pose of the glove root in the palm frame. Each finger's
    R/S/B base sits ``base_height`` dorsal of its MCP.
    """
    inv = mount.inverse()
    fingers = {}
    for finger, d in dims.fingers.items():
        base = inv @ d.palm_to_mcp @ Transform.from_translation((0.0, 0.0, base_height))
        fingers[finger] = FingerGlove(base=base, **finger_kwargs)
    return GloveGeometry(fingers, name=f"glove_for_{dims.name}")


def default_glove_geometry() -> GloveGeometry:
    return fit_glove_geometry(default_hand_dimensions())


def build_glove_model(geom: GloveGeometry) -> KinematicModel:
    joints = []
    tips = []
    for finger, g in geom.fingers.items():
        n = {j: glove_joint_name(finger, j) for j in GLOVE_JOINTS}
        r_link, s_link = f"{finger}_R_link", f"{finger}_S_link"
        rod1, rod2, t_link = f"{finger}_rod1", f"{finger}_rod2", f"{finger}_T_link"
        tip = tip_name(finger)
        lim = g.limits
        joints += [
            JointSpec(n["R"], REVOLUTE, "palm", r_link, g.base, g.r_axis, lim["R"]),
            JointSpec(n["S"], REVOLUTE, r_link, s_link, Transform(), g.s_axis, lim["S"]),
            JointSpec(n["B"], REVOLUTE, s_link, rod1, Transform(), g.b_axis, lim["B"]),
            JointSpec(n["F"], REVOLUTE, rod1, rod2,
                      Transform.from_translation((g.rod1_length, 0.0, 0.0)), g.b_axis, lim["F"]),
            JointSpec(n["T"], REVOLUTE, rod2, t_link,
                      Transform.from_translation((g.rod2_length, 0.0, 0.0)), g.b_axis, lim["T"]),
            JointSpec(f"{finger}_tip_mount", FIXED, t_link, tip, g.tip_offset),
        ]
        tips.append(tip)
    return KinematicModel(geom.name, "palm", tuple(joints), tuple(tips))


# -- config documents ---------------------------------------------------------

HAND_KIND = "hand_dimensions"
GLOVE_KIND = "glove_geometry"

_HAND_FINGER_KEYS = {"proximal_length", "middle_length", "distal_length", "palm_to_mcp", "dip_to_tip", "limits"}
_GLOVE_FINGER_KEYS = {"base", "rod1_length", "rod2_length", "tip_offset", "r_axis", "s_axis", "b_axis", "limits"}


def _limits_doc(limits):
    return {k: [lo, hi] for k, (lo, hi) in limits.items()}


def _parse_limits(doc, keys, where):
    if not isinstance(doc, dict) or set(doc) != set(keys):
        raise ParseError(f"{where}.limits must give exactly {list(keys)}")
    out = {}
    for k, v in doc.items():
        if not isinstance(v, list) or len(v) != 2:
            raise ParseError(f"{where}.limits.{k} must be [lower, upper]")
        out[k] = (float(v[0]), float(v[1]))
    return out


def _parse_transform(doc, where):
    try:
        return Transform.from_dict(doc)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _check_keys(doc, allowed, where, required=()):
    if not isinstance(doc, dict):
        raise ParseError(f"{where} must be an object")
    extra = set(doc) - set(allowed)
    if extra:
        raise ParseError(f"{where}: unknown field(s) {sorted(extra)}")
    missing = set(required) - set(doc)
    if missing:
        raise ParseError(f"{where}: missing field(s) {sorted(missing)}")


def hand_dimensions_to_dict(dims: HandDimensions) -> dict:
    fingers = {}
    for finger, d in dims.fingers.items():
        fingers[finger] = {
            "proximal_length": d.proximal_length,
            "middle_length": d.middle_length,
            "distal_length": d.distal_length,
            "palm_to_mcp": d.palm_to_mcp.to_dict(),
            "dip_to_tip": d.dip_to_tip.to_dict(),
            "limits": _limits_doc(d.limits),
        }
    return {"kind": HAND_KIND, "name": dims.name, "hand_length_m": round(dims.hand_length, 6), "fingers": fingers}


def hand_dimensions_from_dict(doc: dict) -> HandDimensions:
    _check_keys(doc, {"kind", "name", "hand_length_m", "fingers"}, "hand config", ("kind", "fingers"))
    if doc["kind"] != HAND_KIND:
        raise ParseError(f"hand config kind must be {HAND_KIND!r}")
    if not isinstance(doc["fingers"], dict):
        raise ParseError("hand config: fingers must be an object")
    fingers = {}
    for finger, fd in doc["fingers"].items():
        where = f"fingers.{finger}"
        _check_keys(fd, _HAND_FINGER_KEYS, where, ("proximal_length", "middle_length", "distal_length", "palm_to_mcp"))
        limits = _parse_limits(fd["limits"], HAND_JOINTS, where) if "limits" in fd else dict(DEFAULT_HAND_LIMITS)
        _check_finger_name(finger)
        fingers[finger] = FingerDimensions(
            fd["proximal_length"],
            fd["middle_length"],
            fd["distal_length"],
            _parse_transform(fd["palm_to_mcp"], f"{where}.palm_to_mcp"),
            _parse_transform(fd.get("dip_to_tip", {}), f"{where}.dip_to_tip"),
            limits,
        )
    return HandDimensions(fingers, name=doc.get("name", "hand"))


def glove_geometry_to_dict(geom: GloveGeometry) -> dict:
    fingers = {}
    for finger, g in geom.fingers.items():
        fingers[finger] = {
            "base": g.base.to_dict(),
            "rod1_length": g.rod1_length,
            "rod2_length": g.rod2_length,
            "tip_offset": g.tip_offset.to_dict(),
            "r_axis": list(g.r_axis),
            "s_axis": list(g.s_axis),
            "b_axis": list(g.b_axis),
            "limits": _limits_doc(g.limits),
        }
    return {"kind": GLOVE_KIND, "name": geom.name, "fingers": fingers}


def glove_geometry_from_dict(doc: dict) -> GloveGeometry:
    _check_keys(doc, {"kind", "name", "fingers"}, "glove config", ("kind", "fingers"))
    if doc["kind"] != GLOVE_KIND:
        raise ParseError(f"glove config kind must be {GLOVE_KIND!r}")
    if not isinstance(doc["fingers"], dict):
        raise ParseError("glove config: fingers must be an object")
    fingers = {}
    for finger, fd in doc["fingers"].items():
        where = f"fingers.{finger}"
        _check_keys(fd, _GLOVE_FINGER_KEYS, where, ("base", "rod1_length", "rod2_length"))
        _check_finger_name(finger)
        kwargs = {
            "base": _parse_transform(fd["base"], f"{where}.base"),
            "rod1_length": fd["rod1_length"],
            "rod2_length": fd["rod2_length"],
        }
        if "tip_offset" in fd:
            kwargs["tip_offset"] = _parse_transform(fd["tip_offset"], f"{where}.tip_offset")
        for key in ("r_axis", "s_axis", "b_axis"):
            if key in fd:
                kwargs[key] = tuple(fd[key])
        if "limits" in fd:
            kwargs["limits"] = _parse_limits(fd["limits"], GLOVE_JOINTS, where)
        fingers[finger] = FingerGlove(**kwargs)
    return GloveGeometry(fingers, name=doc.get("name", "glove"))


def model_from_document(doc: dict) -> KinematicModel:
    """Accept a full model document or a hand/glove geometry config."""
    if isinstance(doc, dict) and doc.get("kind") == HAND_KIND:
        return build_hand_model(hand_dimensions_from_dict(doc))
    if isinstance(doc, dict) and doc.get("kind") == GLOVE_KIND:
        return build_glove_model(glove_geometry_from_dict(doc))
    return model_from_dict(doc)


def load_any_model(text: str) -> KinematicModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed document: {exc}") from None
    return model_from_document(doc)
