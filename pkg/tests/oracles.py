"""Independent reference implementations used only by the tests.

None of these import handkin internals beyond plain data access, so a bug in
the library cannot cancel out against the same bug here.
"""

import math

import numpy as np
from scipy import integrate


def rotation_matrix(axis, angle):
    """Rotation about a unit axis, from the matrix exponential of its cross matrix."""
    from scipy.linalg import expm

    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return expm(K * angle)


def homogeneous(R=None, p=(0.0, 0.0, 0.0)):
    H = np.eye(4)
    if R is not None:
        H[:3, :3] = R
    H[:3, 3] = p
    return H


def quat_matrix(q):
    """Rotation matrix of a scalar-first unit quaternion, written out longhand."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def joint_matrix(joint, q):
    """4x4 of one joint: origin, then rotation about the axis for revolute joints."""
    H = homogeneous(quat_matrix(joint.origin.rotation), joint.origin.translation)
    if joint.kind == "revolute":
        H = H @ homogeneous(rotation_matrix(joint.axis, q))
    return H


def brute_force_fk(joints, q):
    """Sequential product of homogeneous matrices along an ordered joint list."""
    H = np.eye(4)
    for j in joints:
        H = H @ joint_matrix(j, q.get(j.name, 0.0))
    return H


def rotation_angle_between(Ra, Rb):
    """Angle of the relative rotation; atan2 keeps precision near zero."""
    D = Ra.T @ Rb
    s = np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / 2.0
    c = (np.trace(D) - 1.0) / 2.0
    return math.atan2(s, c)


def finite_difference_jacobian(pose_fn, qv, step=1e-6):
    """Central differences of position and orientation (via small rotation vectors)."""
    n = len(qv)
    J = np.zeros((6, n))
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = step
        Hp, Hm = pose_fn(qv + dq), pose_fn(qv - dq)
        J[:3, i] = (Hp[:3, 3] - Hm[:3, 3]) / (2 * step)
        dR = Hp[:3, :3] @ Hm[:3, :3].T
        w = np.array([dR[2, 1] - dR[1, 2], dR[0, 2] - dR[2, 0], dR[1, 0] - dR[0, 1]]) / 2.0
        J[3:, i] = w / (2 * step)
    return J


def dense_lookup(anchors, raw, resolution=1):
    """Piecewise-linear map evaluated by tabulating every count and indexing.

    ``anchors`` are (raw, angle) pairs; out-of-range raws clamp to the ends.
    """
    anchors = sorted(anchors)
    lo, hi = anchors[0][0], anchors[-1][0]
    table = {}
    for (r0, a0), (r1, a1) in zip(anchors, anchors[1:]):
        for r in range(r0, r1 + 1, resolution):
            table[r] = a0 + (a1 - a0) * (r - r0) / (r1 - r0)
    r = min(max(raw, lo), hi)
    return table[r]


def student_t_density(x, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def two_sided_p_by_quadrature(t, df):
    """2 * integral of the t density from |t| to infinity."""
    tail, _ = integrate.quad(student_t_density, abs(t), np.inf, args=(df,), epsabs=1e-13, epsrel=1e-12)
    return 2 * tail


def spreadsheet_metrics(rows):
    """Recompute per-participant means of |estimate - expected| row by row.

    ``rows`` are dicts with participant, estimator, bent, target and the
    three estimates; every number is handled one cell at a time, the way a
    spreadsheet column would be.
    """
    cells = {}
    for r in rows:
        expected = {j: (r["target"] if j == r["bent"] else 0.0) for j in ("MCP", "PIP", "DIP")}
        phi = {j: abs(r[j] - expected[j]) for j in ("MCP", "PIP", "DIP")}
        phi["bentjoint"] = abs(r[r["bent"]] - r["target"])
        key = (r["estimator"], r["participant"])
        bucket = cells.setdefault(key, {m: [] for m in ("bentjoint", "MCP", "PIP", "DIP")})
        for m, v in phi.items():
            bucket[m].append(v)
    return {k: {m: sum(v) / len(v) for m, v in b.items()} for k, b in cells.items()}


def planar_two_link(l1, l2, x, y):
    """Elbow-down 2R inverse via the law of cosines (theta2 >= 0)."""
    c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    t2 = math.acos(max(-1.0, min(1.0, c2)))
    t1 = math.atan2(y, x) - math.atan2(l2 * math.sin(t2), l1 + l2 * math.cos(t2))
    return t1, t2
