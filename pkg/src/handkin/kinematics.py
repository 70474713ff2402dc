"""Kinematic trees: joint and model types, model documents, FK and Jacobians.

A joint's child frame is ``parent ∘ origin ∘ rotation(axis, q)``; fixed joints
contribute ``origin`` only. All angles are radians, all lengths meters.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exceptions import (
    MissingJointError,
    ModelValidationError,
    ParseError,
    UnknownLinkError,
)
from .transform import Transform, rot_axis_angle_matrix

REVOLUTE = "revolute"
FIXED = "fixed"

AXIS_TOL = 1e-9

# "<finger name>tip"; an optional underscore before "tip" is tolerated.
_TIP_RE = re.compile(r"^(?P<finger>[A-Za-z][A-Za-z0-9_]*?)_?tip$")

JointStateMap = dict  # joint name -> angle in radians


def finger_of_tip(link: str) -> str:
    """Finger name encoded in an end-effector link name."""
    m = _TIP_RE.match(link)
    if m is None:
        raise ValueError(f"{link!r} does not follow the '<finger>tip' convention")
    return m.group("finger")


@dataclass(frozen=True)
class JointSpec:
    """One joint of a kinematic tree.

    ``axis`` and ``limits`` are required for revolute joints and must be
    ``None`` for fixed joints.
    """

    name: str
    kind: str
    parent_link: str
    child_link: str
    origin: Transform = field(default_factory=Transform)
    axis: tuple | None = None
    limits: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ModelValidationError("joint name must be a non-empty string", self.name)
        if self.kind not in (REVOLUTE, FIXED):
            raise ModelValidationError(
                f"joint {self.name!r}: kind must be 'revolute' or 'fixed', got {self.kind!r}",
                self.name,
            )
        if not isinstance(self.origin, Transform):
            raise ModelValidationError(f"joint {self.name!r}: origin must be a Transform", self.name)
        if self.kind == FIXED:
            if self.axis is not None or self.limits is not None:
                raise ModelValidationError(
                    f"joint {self.name!r}: fixed joints take no axis or limits", self.name
                )
            return
        if self.axis is None or self.limits is None:
            raise ModelValidationError(
                f"joint {self.name!r}: revolute joints need an axis and limits", self.name
            )
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3 or not all(math.isfinite(a) for a in axis):
            raise ModelValidationError(f"joint {self.name!r}: axis must be 3 finite numbers", self.name)
        if abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > AXIS_TOL:
            raise ModelValidationError(f"joint {self.name!r}: non-unit axis {axis}", self.name)
        lo, hi = (float(v) for v in self.limits)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ModelValidationError(f"joint {self.name!r}: limits must be finite", self.name)
        if lo > hi:
            raise ModelValidationError(
                f"joint {self.name!r}: inverted limits lower={lo} > upper={hi}", self.name
            )
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "limits", (lo, hi))

    @property
    def is_revolute(self) -> bool:
        return self.kind == REVOLUTE

    def transform(self, q: float = 0.0) -> Transform:
        if self.kind == FIXED:
            return self.origin
        return self.origin @ Transform.from_axis_angle(self.axis, q)


@dataclass(frozen=True)
class KinematicModel:
    """Named tree of links connected by joints.

    Construction validates the tree: a single root, no cycles, no orphan
    links, unique names, and end effectors that are leaf links named
    ``"<finger>tip"``.
    """

    name: str
    root_link: str
    joints: tuple
    end_effectors: tuple
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "end_effectors", tuple(self.end_effectors))
        object.__setattr__(self, "_index", _validate(self))

    @property
    def links(self) -> list[str]:
        return list(self._index["links"])

    @property
    def revolute_joints(self) -> list[JointSpec]:
        return [j for j in self.joints if j.is_revolute]

    @property
    def revolute_names(self) -> list[str]:
        return [j.name for j in self.joints if j.is_revolute]

    def joint(self, name: str) -> JointSpec:
        try:
            return self._index["joints"][name]
        except KeyError:
            raise KeyError(f"unknown joint {name!r}") from None

    def limits(self, name: str) -> tuple[float, float]:
        return self.joint(name).limits

    def parent_joint(self, link: str) -> JointSpec | None:
        self._check_link(link)
        return self._index["parent_joint"].get(link)

    def has_link(self, link: str) -> bool:
        return link in self._index["links"]

    def _check_link(self, link):
        if link not in self._index["links"]:
            raise UnknownLinkError(f"unknown link {link!r} in model {self.name!r}")

    def zero_state(self) -> dict:
        return {j.name: 0.0 for j in self.joints if j.is_revolute}

    def clamp(self, q: Mapping[str, float]) -> dict:
        """Copy of ``q`` with every known revolute joint clipped to its limits."""
        out = dict(q)
        for name, value in q.items():
            j = self._index["joints"].get(name)
            if j is not None and j.is_revolute:
                lo, hi = j.limits
                out[name] = min(max(float(value), lo), hi)
        return out

    def within_limits(self, q: Mapping[str, float], tol: float = 0.0) -> bool:
        for name, value in q.items():
            lo, hi = self.joint(name).limits
            if value < lo - tol or value > hi + tol:
                return False
        return True

    def compiled(self, from_link: str, to_link: str) -> "CompiledChain":
        key = (from_link, to_link)
        cache = self._index["compiled"]
        if key not in cache:
            cache[key] = CompiledChain(chain(self, from_link, to_link))
        return cache[key]


def _validate(model: KinematicModel) -> dict:
    if not isinstance(model.name, str) or not model.name:
        raise ModelValidationError("model name must be a non-empty string", model.name)
    root = model.root_link
    if not isinstance(root, str) or not root:
        raise ModelValidationError("missing root link", "root_link")

    joints = {}
    parent_joint = {}
    children = {}
    for j in model.joints:
        if not isinstance(j, JointSpec):
            raise ModelValidationError("joints must be JointSpec instances")
        if j.name in joints:
            raise ModelValidationError(f"duplicate joint name {j.name!r}", j.name)
        joints[j.name] = j
        if j.parent_link == j.child_link:
            raise ModelValidationError(
                f"cycle: joint {j.name!r} connects link {j.child_link!r} to itself", j.name
            )
        if j.child_link in parent_joint:
            raise ModelValidationError(
                f"duplicate link {j.child_link!r}: child of both "
                f"{parent_joint[j.child_link].name!r} and {j.name!r}",
                j.name,
            )
        parent_joint[j.child_link] = j
        children.setdefault(j.parent_link, []).append(j)

    if root in parent_joint:
        raise ModelValidationError(
            f"cycle: root link {root!r} is the child of joint {parent_joint[root].name!r}",
            parent_joint[root].name,
        )
    links = {root} | set(parent_joint) | set(children)
    overlap = set(joints) & links
    if overlap:
        name = sorted(overlap)[0]
        raise ModelValidationError(f"name {name!r} used for both a joint and a link", name)

    # walk from the root; anything unreached is an orphan or part of a cycle
    seen = {root}
    order = []
    stack = [root]
    while stack:
        link = stack.pop()
        for j in children.get(link, ()):
            if j.child_link not in seen:
                seen.add(j.child_link)
                order.append(j)
                stack.append(j.child_link)
    if model.joints and root not in children:
        raise ModelValidationError(f"missing root: no joint has parent {root!r}", root)
    unreached = [j for j in model.joints if j.parent_link not in seen]
    if unreached:
        j = unreached[0]
        # a chain of parents that never reaches the root is either a loop or detached
        link, hops = j.parent_link, 0
        while link in parent_joint and hops <= len(joints):
            link = parent_joint[link].parent_link
            hops += 1
        kind = "cycle" if hops > len(joints) else "orphan link"
        raise ModelValidationError(
            f"{kind}: joint {j.name!r} (parent {j.parent_link!r}) is not connected to root {root!r}",
            j.name,
        )

    seen_ee = set()
    for ee in model.end_effectors:
        if not isinstance(ee, str) or _TIP_RE.match(ee) is None:
            raise ModelValidationError(
                f"end effector {ee!r} does not follow the '<finger>tip' naming convention", ee
            )
        if ee in seen_ee:
            raise ModelValidationError(f"duplicate end effector {ee!r}", ee)
        seen_ee.add(ee)
        if ee not in links:
            raise ModelValidationError(f"end effector {ee!r} is not a link of the model", ee)
        if ee in children:
            raise ModelValidationError(f"end effector {ee!r} is not a leaf link", ee)

    return {
        "joints": joints,
        "parent_joint": parent_joint,
        "links": links,
        "compiled": {},
    }


# -- documents ------------------------------------------------------------

_MODEL_KEYS = {"name", "root_link", "joints", "end_effectors"}
_JOINT_KEYS = {"name", "kind", "parent", "child", "origin", "axis", "limits"}


def model_from_dict(doc: dict) -> KinematicModel:
    """Build a model from a decoded model document (see :func:`load_model`)."""
    if not isinstance(doc, dict):
        raise ParseError("model document must be an object")
    extra = set(doc) - _MODEL_KEYS
    if extra:
        raise ParseError(f"unknown model field(s): {sorted(extra)}")
    missing = {"name", "root_link", "joints"} - set(doc)
    if missing:
        raise ParseError(f"missing model field(s): {sorted(missing)}")
    if not isinstance(doc["joints"], list):
        raise ParseError("'joints' must be an array")
    joints = [_joint_from_dict(j, i) for i, j in enumerate(doc["joints"])]
    ees = doc.get("end_effectors", [])
    if not isinstance(ees, list):
        raise ParseError("'end_effectors' must be an array")
    return KinematicModel(doc["name"], doc["root_link"], tuple(joints), tuple(ees))


def _joint_from_dict(doc, index) -> JointSpec:
    if not isinstance(doc, dict):
        raise ParseError(f"joint #{index} must be an object")
    label = doc.get("name", f"#{index}")
    extra = set(doc) - _JOINT_KEYS
    if extra:
        raise ParseError(f"joint {label!r}: unknown field(s) {sorted(extra)}")
    for key in ("name", "kind", "parent", "child"):
        if key not in doc:
            raise ParseError(f"joint {label!r}: missing field {key!r}")
        if not isinstance(doc[key], str):
            raise ParseError(f"joint {label!r}: field {key!r} must be a string")
    try:
        origin = Transform.from_dict(doc.get("origin", {}))
    except ValueError as exc:
        raise ParseError(f"joint {label!r}: origin: {exc}") from None
    axis = doc.get("axis")
    limits = doc.get("limits")
    if axis is not None:
        if not isinstance(axis, list) or len(axis) != 3 or not all(_is_number(a) for a in axis):
            raise ParseError(f"joint {label!r}: axis must be [x, y, z]")
    if limits is not None:
        if not isinstance(limits, dict) or set(limits) != {"lower", "upper"}:
            raise ParseError(f"joint {label!r}: limits must be {{lower, upper}}")
        if not all(_is_number(v) for v in limits.values()):
            raise ParseError(f"joint {label!r}: limits must be numbers")
        limits = (limits["lower"], limits["upper"])
    return JointSpec(
        doc["name"],
        doc["kind"],
        doc["parent"],
        doc["child"],
        origin,
        tuple(axis) if axis is not None else None,
        limits,
    )


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def model_to_dict(model: KinematicModel) -> dict:
    joints = []
    for j in model.joints:
        d = {
            "name": j.name,
            "kind": j.kind,
            "parent": j.parent_link,
            "child": j.child_link,
            "origin": j.origin.to_dict("rpy"),
        }
        if j.is_revolute:
            d["axis"] = list(j.axis)
            d["limits"] = {"lower": j.limits[0], "upper": j.limits[1]}
        joints.append(d)
    return {
        "name": model.name,
        "root_link": model.root_link,
        "joints": joints,
        "end_effectors": list(model.end_effectors),
    }


def load_model(text: str) -> KinematicModel:
    """Parse and validate a JSON model document.

    Raises
    ------
    ParseError
        Malformed JSON or a structurally wrong document.
    ModelValidationError
        The document parses but describes an invalid tree.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed model document: {exc}") from None
    return model_from_dict(doc)


def serialize_model(model: KinematicModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def models_close(a: KinematicModel, b: KinematicModel, atol: float = 1e-12) -> bool:
    """Field-for-field equality with joint origins compared to ``atol``."""
    if (a.name, a.root_link, a.end_effectors) != (b.name, b.root_link, b.end_effectors):
        return False
    if len(a.joints) != len(b.joints):
        return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.kind, ja.parent_link, ja.child_link, ja.axis, ja.limits) != (
            jb.name, jb.kind, jb.parent_link, jb.child_link, jb.axis, jb.limits
        ):
            return False
        if not ja.origin.isclose(jb.origin, atol):
            return False
    return True


# -- kinematics -----------------------------------------------------------

def chain(model: KinematicModel, from_link: str, to_link: str) -> list[JointSpec]:
    """Joints on the path ``from_link -> to_link`` in parent-to-child order."""
    model._check_link(from_link)
    model._check_link(to_link)
    path = []
    link = to_link
    parents = model._index["parent_joint"]
    while link != from_link:
        j = parents.get(link)
        if j is None:
            raise UnknownLinkError(
                f"link {to_link!r} is not reachable from {from_link!r} in model {model.name!r}"
            )
        path.append(j)
        link = j.parent_link
    path.reverse()
    return path


def _value(q, name):
    try:
        return float(q[name])
    except KeyError:
        raise MissingJointError(f"missing joint value for {name!r}") from None


def forward_kinematics(model: KinematicModel, q: Mapping[str, float], target_link: str) -> Transform:
    """Pose of ``target_link`` in the root frame at configuration ``q``."""
    pose = Transform()
    for j in chain(model, model.root_link, target_link):
        if j.is_revolute:
            pose = pose @ j.origin @ Transform.from_axis_angle(j.axis, _value(q, j.name))
        else:
            pose = pose @ j.origin
    return pose


def all_tip_poses(model: KinematicModel, q: Mapping[str, float]) -> dict[str, Transform]:
    missing = [n for n in model.revolute_names if n not in q]
    if missing:
        raise MissingJointError(f"missing joint value for {missing[0]!r}")
    return {ee: forward_kinematics(model, q, ee) for ee in model.end_effectors}


def geometric_jacobian(model: KinematicModel, q: Mapping[str, float], target_link: str) -> np.ndarray:
    """6 x n Jacobian of ``target_link`` in the root frame.

    Rows are linear velocity (m/rad) then angular velocity (rad/rad);
    columns follow the chain's revolute joints from root to tip.
    """
    cc = model.compiled(model.root_link, target_link)
    return cc.jacobian(cc.vector(q))


class CompiledChain:
    """Array form of a serial chain used by the iterative solver.

    Works with rotation matrices rather than :class:`Transform` objects to
    keep the inner loop cheap.
    """

    def __init__(self, joints):
        self.joints = list(joints)
        self.revolute = [j for j in self.joints if j.is_revolute]
        self.names = [j.name for j in self.revolute]
        self.lower = np.array([j.limits[0] for j in self.revolute], dtype=float)
        self.upper = np.array([j.limits[1] for j in self.revolute], dtype=float)
        # consecutive fixed origins folded into the next step
        self._steps = []
        R = np.eye(3)
        p = np.zeros(3)
        for j in self.joints:
            Ro = j.origin.rotation_matrix()
            po = np.array(j.origin.translation)
            p = p + R @ po
            R = R @ Ro
            if j.is_revolute:
                self._steps.append((R, p, np.array(j.axis)))
                R = np.eye(3)
                p = np.zeros(3)
        self._tail = (R, p)

    @property
    def dof(self) -> int:
        return len(self.revolute)

    def vector(self, q: Mapping[str, float]) -> np.ndarray:
        return np.array([_value(q, n) for n in self.names], dtype=float)

    def frames(self, qv):
        """World axes and origins of every revolute joint, plus the tip pose."""
        R = np.eye(3)
        p = np.zeros(3)
        axes = np.empty((self.dof, 3))
        origins = np.empty((self.dof, 3))
        for i, (Ro, po, axis) in enumerate(self._steps):
            p = p + R @ po
            R = R @ Ro
            axes[i] = R @ axis
            origins[i] = p
            R = R @ rot_axis_angle_matrix(axis, qv[i])
        Rt, pt = self._tail
        return axes, origins, R @ Rt, p + R @ pt

    def pose(self, qv):
        _, _, R, p = self.frames(qv)
        return R, p

    def jacobian(self, qv) -> np.ndarray:
        axes, origins, _, p_tip = self.frames(qv)
        J = np.empty((6, self.dof))
        J[:3] = np.cross(axes, p_tip - origins).T
        J[3:] = axes.T
        return J
