"""Rigid transforms stored as a unit quaternion plus a translation.

Quaternions are scalar-first, ``(w, x, y, z)``. Composition follows the usual
frame convention: ``a @ b`` expresses frame ``b`` (given in ``a``) in the
parent frame of ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def _qrotate(q, v):
    # v' = v + 2w (u x v) + 2 u x (u x v), u = vector part
    w, x, y, z = q
    vx, vy, vz = v
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    dx = y * cz - z * cy
    dy = z * cx - x * cz
    dz = x * cy - y * cx
    return (
        vx + 2.0 * (w * cx + dx),
        vy + 2.0 * (w * cy + dy),
        vz + 2.0 * (w * cz + dz),
    )


def _normalized(q):
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("quaternion must have finite non-zero norm")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


@dataclass(frozen=True)
class Transform:
    """Rigid pose: unit quaternion ``rotation`` and ``translation`` in meters.

    Instances are immutable. The quaternion is normalized on construction,
    so every composition result stays on the unit sphere.
    """

    rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = tuple(float(c) for c in self.rotation)
        t = tuple(float(c) for c in self.translation)
        if len(q) != 4 or len(t) != 3:
            raise ValueError("rotation needs 4 components and translation 3")
        if not all(math.isfinite(c) for c in t):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", _normalized(q))
        object.__setattr__(self, "translation", t)

    # -- constructors -----------------------------------------------------

    @classmethod
    def identity(cls) -> Transform:
        return cls()

    @classmethod
    def from_translation(cls, xyz) -> Transform:
        return cls((1.0, 0.0, 0.0, 0.0), tuple(xyz))

    @classmethod
    def from_axis_angle(cls, axis, angle: float, xyz=(0.0, 0.0, 0.0)) -> Transform:
        ax = np.asarray(axis, dtype=float)
        n = np.linalg.norm(ax)
        if n == 0.0:
            raise ValueError("rotation axis must be non-zero")
        ax = ax / n
        h = 0.5 * angle
        s = math.sin(h)
        return cls((math.cos(h), ax[0] * s, ax[1] * s, ax[2] * s), tuple(xyz))

    @classmethod
    def from_rpy(cls, rpy, xyz=(0.0, 0.0, 0.0)) -> Transform:
        """Fixed-axis roll-pitch-yaw, ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
        x, y, z, w = Rotation.from_euler("xyz", list(rpy)).as_quat()
        return cls((w, x, y, z), tuple(xyz))

    @classmethod
    def from_matrix(cls, matrix) -> Transform:
        m = np.asarray(matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        x, y, z, w = Rotation.from_matrix(m[:3, :3]).as_quat()
        return cls((w, x, y, z), tuple(m[:3, 3]))

    # -- algebra ----------------------------------------------------------

    def compose(self, other: Transform) -> Transform:
        t = _qrotate(self.rotation, other.translation)
        a = self.translation
        return Transform(
            _qmul(self.rotation, other.rotation),
            (a[0] + t[0], a[1] + t[1], a[2] + t[2]),
        )

    __matmul__ = compose

    def inverse(self) -> Transform:
        w, x, y, z = self.rotation
        conj = (w, -x, -y, -z)
        t = _qrotate(conj, self.translation)
        return Transform(conj, (-t[0], -t[1], -t[2]))

    def apply(self, point) -> np.ndarray:
        """Map a point given in this frame into the parent frame."""
        r = _qrotate(self.rotation, tuple(float(c) for c in point))
        a = self.translation
        return np.array([a[0] + r[0], a[1] + r[1], a[2] + r[2]])

    def rotate(self, vector) -> np.ndarray:
        return np.array(_qrotate(self.rotation, tuple(float(c) for c in vector)))

    # -- views ------------------------------------------------------------

    @property
    def quat(self) -> np.ndarray:
        return np.array(self.rotation)

    @property
    def xyz(self) -> np.ndarray:
        return np.array(self.translation)

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def rpy(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w]).as_euler("xyz")

    def rotation_angle(self) -> float:
        """Angle (radians, in [0, pi]) of the rotation part."""
        w, x, y, z = self.rotation
        return 2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w))

    def rotvec(self) -> np.ndarray:
        """Rotation part as an axis-angle vector with angle in [0, pi]."""
        w, x, y, z = self.rotation
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        s = math.sqrt(x * x + y * y + z * z)
        if s < 1e-15:
            return np.array([2.0 * x, 2.0 * y, 2.0 * z])
        angle = 2.0 * math.atan2(s, w)
        return np.array([x, y, z]) * (angle / s)

    def distance(self, other: Transform) -> tuple[float, float]:
        """``(translation distance, rotation angle)`` between two poses."""
        d = math.dist(self.translation, other.translation)
        return d, self.inverse().compose(other).rotation_angle()

    def isclose(self, other: Transform, atol: float = 1e-9) -> bool:
        d, a = self.distance(other)
        return d <= atol and a <= atol

    def __repr__(self):
        q = ", ".join(f"{c:.6g}" for c in self.rotation)
        t = ", ".join(f"{c:.6g}" for c in self.translation)
        return f"Transform(rotation=({q}), translation=({t}))"

    # -- serialization ----------------------------------------------------

    def to_dict(self, rotation: str = "rpy") -> dict:
        if rotation == "rpy":
            return {"xyz": list(self.translation), "rpy": [float(a) for a in self.rpy()]}
        if rotation == "quat":
            return {"xyz": list(self.translation), "quat": list(self.rotation)}
        raise ValueError(f"unknown rotation encoding {rotation!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> Transform:
        """Parse ``{xyz, rpy}``, ``{xyz, quat}`` or ``{xyz, axis_angle}``.

        ``quat`` is scalar-first. ``axis_angle`` is ``[x, y, z, angle]``.
        Unknown keys raise ``ValueError``.
        """
        if not isinstance(doc, dict):
            raise ValueError("transform must be an object")
        extra = set(doc) - {"xyz", "rpy", "quat", "axis_angle"}
        if extra:
            raise ValueError(f"unknown transform field(s): {sorted(extra)}")
        rot_keys = [k for k in ("rpy", "quat", "axis_angle") if k in doc]
        if len(rot_keys) > 1:
            raise ValueError("give at most one of rpy, quat, axis_angle")
        xyz = _vector(doc.get("xyz", [0.0, 0.0, 0.0]), 3, "xyz")
        if not rot_keys:
            return cls.from_translation(xyz)
        key = rot_keys[0]
        if key == "rpy":
            return cls.from_rpy(_vector(doc["rpy"], 3, "rpy"), xyz)
        if key == "quat":
            return cls(_vector(doc["quat"], 4, "quat"), xyz)
        aa = _vector(doc["axis_angle"], 4, "axis_angle")
        return cls.from_axis_angle(aa[:3], aa[3], xyz)


def _vector(value, n, name):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ValueError(f"{name} must be a list of {n} numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{name} must contain numbers")
        out.append(float(v))
    return out


def rot_axis_angle_matrix(axis, angle) -> np.ndarray:
    """Rodrigues rotation matrix for a unit ``axis``."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )
