"""Inverse kinematics.

Two solvers live here:

* :func:`solve_ik` -- damped least squares on any serial chain of a
  :class:`~handkin.kinematics.KinematicModel`. Unreachable targets are not an
  error; the best configuration found is returned with ``converged=False``.
* :func:`analytic_finger_ik` -- closed-form solution for one finger of the
  hand model. The PIP joint sits on the intersection of two circles (about the
  MCP and about the DIP); of the two intersections only the one with
  non-negative PIP flexion is kept, which makes the solution unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from .exceptions import MissingJointError, ModelValidationError, Unreachable
from .kinematics import KinematicModel
from .transform import Transform

REACH_TOL = 1e-9
PIP_ROUNDING = 1e-12
LIMIT_TOL = 1e-9
# weighted pose error (m) under which limit-pinned joints are frozen per step
REFINE_BELOW = 1e-3
# stagnation handling: iterations without a relative improvement of
# STALL_RTOL trigger backtracking, and after STALL_STOP the solver gives up
STALL_RTOL = 1e-9
STALL_BACKTRACK = 3
STALL_STOP = 25
BACKTRACK_HALVINGS = 10


@dataclass(frozen=True)
class IkConfig:
    max_iterations: int = 200
    position_tolerance: float = 1e-5
    orientation_tolerance: float = 1e-3
    damping_lambda: float = 1e-3
    max_step: float = 0.2
    orientation_weight: float = 0.02

    def __post_init__(self):
        if isinstance(self.max_iterations, bool) or int(self.max_iterations) != self.max_iterations:
            raise ModelValidationError("max_iterations must be an integer", "max_iterations")
        if self.max_iterations < 1:
            raise ModelValidationError("max_iterations must be >= 1", "max_iterations")
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ModelValidationError(f"{f.name} must be strictly positive", f.name)

    @classmethod
    def from_dict(cls, doc: dict) -> IkConfig:
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ModelValidationError(f"unknown IK config field(s): {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Tolerances for the estimation pipeline. The tip-pose to joint map is
# singular at a straight PIP, so a 1e-5 m tip tolerance can still leave
# centiradian joint error; lighter damping keeps convergence fast there.
ESTIMATION_IK_CONFIG = IkConfig(position_tolerance=1e-9, orientation_tolerance=1e-8, damping_lambda=1e-6)


@dataclass
class IkResult:
    """Outcome of :func:`solve_ik`.

    ``joints`` is the seed map with the chain's joints replaced by the best
    configuration found. ``error_history`` holds the best-so-far weighted
    task-error norm after each iteration (first entry: the seed).
    """

    joints: dict
    converged: bool
    position_residual: float
    orientation_residual: float
    iterations_used: int
    error_history: list = field(default_factory=list, repr=False)


def _rotvec(R: np.ndarray) -> np.ndarray:
    # matrix log via the quaternion (Shepperd's method), angle in [0, pi]
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    n = math.sqrt(x * x + y * y + z * z)
    if n < 1e-15:
        return np.array([2.0 * x, 2.0 * y, 2.0 * z])
    return np.array([x, y, z]) * (2.0 * math.atan2(n, w) / n)


def pose_error(R, p, R_target, p_target) -> np.ndarray:
    """World-frame 6-vector ``[p_target - p, rotvec(R_target R^T)]``."""
    e = np.empty(6)
    e[:3] = p_target - p
    e[3:] = _rotvec(R_target @ R.T)
    return e


def _damped_step(J, e, lam2):
    A = J.T @ J + lam2 * np.eye(J.shape[1])
    try:
        return np.linalg.solve(A, J.T @ e)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(J, e, rcond=None)[0]


def solve_ik(
    model: KinematicModel,
    tip_link: str,
    target: Transform,
    seed: Mapping[str, float],
    cfg: IkConfig | None = None,
) -> IkResult:
    """Damped least-squares IK for the chain ``root -> tip_link``.

    Each iteration applies ``dq = (J^T J + lambda^2 I)^-1 J^T e`` (identical to
    ``J^T (J J^T + lambda^2 I)^-1 e``), where ``e`` is the pose error with its
    angular rows scaled by ``orientation_weight``. Once the weighted error is
    below ``REFINE_BELOW``, joints resting on a limit that the step would
    push further out are held fixed for that iteration.
    Steps are clipped to ``+-max_step`` per joint and the configuration to
    the joint limits. After ``STALL_BACKTRACK`` iterations without progress,
    a step that raises the weighted error is retried along the unclipped
    direction, scaled to ``max_step`` and halved up to
    ``BACKTRACK_HALVINGS`` times; after ``STALL_STOP`` such iterations the
    solver stops early and reports the best iterate.
    """
    cfg = cfg or IkConfig()
    cc = model.compiled(model.root_link, tip_link)
    try:
        q = cc.vector(seed)
    except MissingJointError as exc:
        raise MissingJointError(f"seed: {exc}") from None
    q = np.clip(q, cc.lower, cc.upper)
    R_t = target.rotation_matrix()
    p_t = np.array(target.translation)
    w = cfg.orientation_weight
    lam2 = cfg.damping_lambda ** 2
    n = cc.dof

    def evaluate(qv):
        axes, origins, R, p = cc.frames(qv)
        e = pose_error(R, p, R_t, p_t)
        return e, axes, origins, p

    e, axes, origins, p = evaluate(q)
    best_q = q
    best_e = e
    best_norm = math.sqrt(e[:3] @ e[:3] + (w * w) * (e[3:] @ e[3:]))
    current = best_norm
    history = [best_norm]
    iterations = 0

    def done(err):
        return (
            math.sqrt(err[:3] @ err[:3]) <= cfg.position_tolerance
            and math.sqrt(err[3:] @ err[3:]) <= cfg.orientation_tolerance
        )

    stall = 0
    while n and not done(best_e) and iterations < cfg.max_iterations:
        iterations += 1
        J = np.empty((6, n))
        J[:3] = np.cross(axes, p - origins).T
        J[3:] = w * axes.T
        ew = e.copy()
        ew[3:] *= w
        dq = _damped_step(J, ew, lam2)
        # near the target, joints pinned at a limit and pushed outward are
        # frozen and the step re-solved, so the free joints get a full step
        pinned = ((q <= cc.lower) & (dq < 0)) | ((q >= cc.upper) & (dq > 0))
        if best_norm < REFINE_BELOW and pinned.any() and not pinned.all():
            free = ~pinned
            dq = np.zeros(n)
            dq[free] = _damped_step(J[:, free], ew, lam2)
        step = np.clip(dq, -cfg.max_step, cfg.max_step)
        # after a few iterations without progress, try the unclipped direction
        # scaled to max_step and halved: per-component clipping can turn a
        # near-singular step away from descent and the iterate then bounces
        tries = BACKTRACK_HALVINGS + 1 if stall >= STALL_BACKTRACK else 1
        largest = np.abs(dq).max()
        direction = dq * (cfg.max_step / largest) if largest > cfg.max_step else dq
        for k in range(tries):
            q_new = np.clip(q + step, cc.lower, cc.upper)
            e_new, axes_new, origins_new, p_new = evaluate(q_new)
            norm = math.sqrt(e_new[:3] @ e_new[:3] + (w * w) * (e_new[3:] @ e_new[3:]))
            if norm <= current:
                break
            step = direction * 0.5 ** k
        stall = 0 if norm < best_norm * (1.0 - STALL_RTOL) else stall + 1
        q, e, axes, origins, p, current = q_new, e_new, axes_new, origins_new, p_new, norm
        if norm < best_norm:
            best_q, best_e, best_norm = q, e, norm
        history.append(best_norm)
        if stall >= STALL_STOP:
            break

    joints = dict(seed)
    for name, value in zip(cc.names, best_q):
        joints[name] = float(value)
    return IkResult(
        joints=joints,
        converged=done(best_e),
        position_residual=float(math.sqrt(best_e[:3] @ best_e[:3])),
        orientation_residual=float(math.sqrt(best_e[3:] @ best_e[3:])),
        iterations_used=iterations,
        error_history=history,
    )


# -- analytic finger solver -------------------------------------------------

@dataclass(frozen=True)
class FingerAngles:
    mcp_abduction: float
    mcp_flexion: float
    pip_flexion: float
    dip_flexion: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mcp_abduction, self.mcp_flexion, self.pip_flexion, self.dip_flexion])

    def to_joint_state(self, finger: str) -> dict:
        return {
            f"{finger}_mcp_abduction": self.mcp_abduction,
            f"{finger}_mcp_flexion": self.mcp_flexion,
            f"{finger}_pip": self.pip_flexion,
            f"{finger}_dip": self.dip_flexion,
        }

    @classmethod
    def from_joint_state(cls, q: Mapping[str, float], finger: str) -> FingerAngles:
        return cls(
            q[f"{finger}_mcp_abduction"],
            q[f"{finger}_mcp_flexion"],
            q[f"{finger}_pip"],
            q[f"{finger}_dip"],
        )


def _wrap(a):
    return math.atan2(math.sin(a), math.cos(a))


def circle_intersections(center0, r0, center1, r1, tol=REACH_TOL):
    """Intersection points of two coplanar circles (2-D).

    Returns two points (identical when the circles are tangent within
    ``tol``). Raises :class:`Unreachable` when the circles do not meet.
    """
    c0 = np.asarray(center0, dtype=float)
    c1 = np.asarray(center1, dtype=float)
    delta = c1 - c0
    d = math.hypot(delta[0], delta[1])
    if d > r0 + r1 + tol:
        raise Unreachable(f"centers {d:.6g} m apart exceed radius sum {r0 + r1:.6g} m", residual=d - r0 - r1)
    if d < abs(r0 - r1) - tol:
        raise Unreachable(
            f"centers {d:.6g} m apart are closer than |r0 - r1| = {abs(r0 - r1):.6g} m",
            residual=abs(r0 - r1) - d,
        )
    if d == 0.0:
        raise Unreachable("concentric circles have no isolated intersection", residual=0.0)
    a = (d * d + r0 * r0 - r1 * r1) / (2.0 * d)
    h = math.sqrt(max(r0 * r0 - a * a, 0.0))
    ex = delta / d
    mid = c0 + a * ex
    perp = np.array([-ex[1], ex[0]])
    return mid + h * perp, mid - h * perp


def pip_candidates(dims, tip_pose_in_palm: Transform):
    """Both circle-intersection branches for one finger.

    Returns ``(abduction, [(mcp_flexion, pip_flexion), ...], dip_pitch)`` with
    the branches in the order produced by :func:`circle_intersections`;
    ``dip_pitch`` is the summed flexion of the distal frame.
    """
    l1 = dims.proximal_length
    l2 = dims.middle_length
    dip_to_tip = Transform.from_translation((dims.distal_length, 0.0, 0.0)) @ dims.dip_to_tip
    dip_pose = tip_pose_in_palm @ dip_to_tip.inverse()
    local = dims.palm_to_mcp.inverse() @ dip_pose
    dx, dy, dz = local.translation

    if math.hypot(dx, dy) > 1e-6:
        a = math.atan2(dy, dx)
        # the flexion plane contains the abduction axis; take the half-plane
        # that keeps |abduction| < pi/2
        if a > math.pi / 2:
            a -= math.pi
        elif a < -math.pi / 2:
            a += math.pi
    else:
        y_axis = local.rotate((0.0, 1.0, 0.0))
        a = math.atan2(-y_axis[0], y_axis[1])

    ca, sa = math.cos(a), math.sin(a)
    # flexion plane coordinates: u distal, v palmar
    u = ca * dx + sa * dy
    v = -dz
    points = circle_intersections((0.0, 0.0), l1, (u, v), l2)
    branches = []
    for px, pv in points:
        t1 = math.atan2(pv, px)
        t2 = _wrap(math.atan2(v - pv, u - px) - t1)
        branches.append((t1, t2))

    R = local.rotation_matrix()
    # undo abduction, then read the pitch of a pure Ry rotation
    Rp = np.array([[ca, sa, 0.0], [-sa, ca, 0.0], [0.0, 0.0, 1.0]]) @ R
    pitch = math.atan2(Rp[0, 2], Rp[0, 0])
    return a, branches, pitch


def analytic_finger_ik(dims, tip_pose_in_palm: Transform) -> FingerAngles:
    """Closed-form joint angles of one finger from its tip pose.

    Parameters
    ----------
    dims
        A :class:`~handkin.models.FingerDimensions`.
    tip_pose_in_palm
        Fingertip pose in the palm (model root) frame.

    Raises
    ------
    Unreachable
        The DIP cannot be reached by the proximal and middle segments, or
        the unique non-negative-PIP solution violates a joint limit.
    """
    a, branches, pitch = pip_candidates(dims, tip_pose_in_palm)
    valid = [(t1, t2) for t1, t2 in branches if t2 >= -PIP_ROUNDING]
    if not valid:
        raise Unreachable("no circle intersection gives non-negative PIP flexion")
    # tangency yields two coincident branches; either one is the solution
    t1, t2 = max(valid, key=lambda b: b[1])
    t2 = max(t2, 0.0)
    t3 = _wrap(pitch - t1 - t2)
    values = {"mcp_abduction": a, "mcp_flexion": t1, "pip": t2, "dip": t3}
    for key, value in values.items():
        lo, hi = dims.limits[key]
        if value < lo - LIMIT_TOL or value > hi + LIMIT_TOL:
            raise Unreachable(f"{key} = {value:.6g} rad is outside limits [{lo:.6g}, {hi:.6g}]")
        values[key] = min(max(value, lo), hi)
    return FingerAngles(values["mcp_abduction"], values["mcp_flexion"], values["pip"], values["dip"])
